//! Replicated simulation sweeps over a grid of nominal levels, comparing
//! DACS against conformal selection.
//!
//! `replicates.csv` and `summary.csv` depend only on the configuration and
//! seed. Wall times go to a separate `timings.csv`.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::data::build_score_state;
use crate::error::{DacsError, Result};
use crate::harness::eval::{baseline_cdf_normalize, baseline_diversities, fdp_and_power, MeanSe};
use crate::harness::sim::{simulate, SimSetting, SimSpec};
use crate::metrics::{markowitz_gamma_hint, rbf_similarity, Bandwidth, DiversityMetric};
use crate::par::{try_map_indexed, Parallelism};
use crate::pipeline::{diversity_of, run_cs_on_state, run_dacs_on_state, DacsConfig, Mode};
use crate::qp::PgdConfig;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GammaRule {
    Fixed(f64),
    /// γ = 2/λ_max(Σ) per replicate.
    Hint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SweepMetric {
    Underrep,
    Sharpe,
    Markowitz(GammaRule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub spec: SimSpec,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub metric: SweepMetric,
    pub mode: Mode,
    pub seed: u64,
    /// Policy across replicates; each replicate runs sequentially inside.
    pub parallelism: Parallelism,
    /// Rounding draws per time for the baseline-CDF normalization of
    /// similarity metrics; 0 skips it.
    pub baseline_draws: usize,
    pub pgd: PgdConfig,
}

impl SweepConfig {
    /// Exact mode for underrepresentation settings, relaxed mode (L = 50,
    /// Q = 10) otherwise.
    pub fn new(setting: SimSetting, n: usize, m: usize, reps: usize, alphas: Vec<f64>) -> Self {
        let (metric, mode) = match setting {
            SimSetting::Underrep(_) => (SweepMetric::Underrep, Mode::ExactUnderrep { grid: None }),
            SimSetting::Similarity(_) => (SweepMetric::Markowitz(GammaRule::Hint), Mode::relaxed(50, 10)),
        };
        SweepConfig {
            spec: SimSpec::new(setting, n, m),
            reps,
            alphas,
            metric,
            mode,
            seed: 0,
            parallelism: Parallelism::default(),
            baseline_draws: 0,
            pgd: PgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub setting: String,
    pub alpha: f64,
    pub rep: usize,
    pub method: &'static str,
    pub size: usize,
    pub fdp: f64,
    pub power: f64,
    pub diversity: f64,
    pub nonempty: bool,
    pub tau_bh: usize,
    pub tau_stop: usize,
    pub subset_of_cs: bool,
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub setting: String,
    pub alpha: f64,
    pub method: &'static str,
    pub reps: usize,
    pub fdr: f64,
    pub fdr_se: f64,
    pub power: f64,
    pub power_se: f64,
    pub size: f64,
    pub size_se: f64,
    pub nonempty_frac: f64,
    pub diversity_nonempty: f64,
    pub diversity_nonempty_se: f64,
    pub normalized: Option<f64>,
    pub normalized_se: Option<f64>,
    pub subset_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub rep: usize,
    pub alpha: f64,
    pub method: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub replicates: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
    pub timings: Vec<TimingRow>,
}

impl SweepReport {
    pub fn rows<'a>(&'a self, alpha: f64, method: &'a str) -> impl Iterator<Item = &'a ReplicateRow> + 'a {
        self.replicates.iter().filter(move |r| r.alpha == alpha && r.method == method)
    }

    pub fn summary_for(&self, alpha: f64, method: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.alpha == alpha && r.method == method)
    }
}

fn replicate(cfg: &SweepConfig, rep: usize) -> Result<(Vec<ReplicateRow>, Vec<TimingRow>)> {
    let rep_seed = seed::mix(cfg.seed, &[seed::TAG_REPLICATE, rep as u64]);
    let data = simulate(&cfg.spec, rep_seed)?;
    let state = build_score_state(&data.calib, &data.test, None)?;
    let metric = match (cfg.metric, cfg.spec.setting) {
        (SweepMetric::Underrep, SimSetting::Underrep(_)) => DiversityMetric::Underrep { categories: cfg.spec.categories().unwrap() },
        (SweepMetric::Underrep, _) => return Err(DacsError::InvalidParameter("underrepresentation needs a categorical setting".into())),
        (similarity, _) => {
            let sigma = rbf_similarity(&data.pooled_x, Bandwidth::Auto)?;
            match similarity {
                SweepMetric::Sharpe => DiversityMetric::Sharpe { sigma },
                SweepMetric::Markowitz(rule) => {
                    let gamma = match rule {
                        GammaRule::Fixed(g) => g,
                        GammaRule::Hint => markowitz_gamma_hint(&sigma),
                    };
                    DiversityMetric::Markowitz { sigma, gamma }
                }
                SweepMetric::Underrep => unreachable!(),
            }
        }
    };
    let setting = cfg.spec.setting.to_string();
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let clock = Instant::now();
        let cs = run_cs_on_state(&state, alpha);
        times.push(TimingRow { rep, alpha, method: "cs", seconds: clock.elapsed().as_secs_f64() });

        let clock = Instant::now();
        let mut dc = DacsConfig::new(alpha, metric.clone(), cfg.mode.clone());
        dc.seed = seed::mix(rep_seed, &[a as u64]);
        dc.parallelism = Parallelism::Sequential;
        dc.pgd = cfg.pgd;
        let dacs = run_dacs_on_state(&state, &dc)?;
        times.push(TimingRow { rep, alpha, method: "dacs", seconds: clock.elapsed().as_secs_f64() });

        let baseline = if cfg.baseline_draws > 0 && metric.sigma().is_some() && cs.diagnostics.tau_bh > 0 {
            Some(baseline_diversities(&state, &metric, alpha, cs.diagnostics.tau_bh, cfg.baseline_draws, dc.seed, &cfg.pgd)?)
        } else {
            None
        };
        for (method, res) in [("dacs", &dacs), ("cs", &cs)] {
            let (fdp, power) = fdp_and_power(&res.selected, &data.test_y);
            let diversity = diversity_of(&metric, &state, &res.selected);
            rows.push(ReplicateRow {
                setting: setting.clone(),
                alpha,
                rep,
                method,
                size: res.selected.len(),
                fdp,
                power,
                diversity,
                nonempty: !res.selected.is_empty(),
                tau_bh: res.diagnostics.tau_bh,
                tau_stop: res.tau_star,
                subset_of_cs: res.selected.iter().all(|j| cs.selected.binary_search(j).is_ok()),
                normalized: baseline.as_ref().map(|b| baseline_cdf_normalize(diversity, b)),
            });
        }
    }
    Ok((rows, times))
}

fn summarize(cfg: &SweepConfig, rows: &[ReplicateRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &alpha in &cfg.alphas {
        for method in ["dacs", "cs"] {
            let sel: Vec<&ReplicateRow> = rows.iter().filter(|r| r.alpha == alpha && r.method == method).collect();
            let col = |f: &dyn Fn(&ReplicateRow) -> f64| MeanSe::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let fdr = col(&|r| r.fdp);
            let power = col(&|r| r.power);
            let size = col(&|r| r.size as f64);
            let nonempty: Vec<f64> = sel.iter().filter(|r| r.nonempty).map(|r| r.diversity).collect();
            let div = MeanSe::of(&nonempty);
            let normalized: Option<Vec<f64>> = sel.iter().map(|r| r.normalized).collect();
            let norm = normalized.filter(|v| !v.is_empty()).map(|v| MeanSe::of(&v));
            out.push(SummaryRow {
                setting: cfg.spec.setting.to_string(),
                alpha,
                method,
                reps: sel.len(),
                fdr: fdr.mean,
                fdr_se: fdr.se,
                power: power.mean,
                power_se: power.se,
                size: size.mean,
                size_se: size.se,
                nonempty_frac: nonempty.len() as f64 / sel.len().max(1) as f64,
                diversity_nonempty: div.mean,
                diversity_nonempty_se: div.se,
                normalized: norm.map(|s| s.mean),
                normalized_se: norm.map(|s| s.se),
                subset_violations: sel.iter().filter(|r| !r.subset_of_cs).count(),
            });
        }
    }
    out
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.reps == 0 || cfg.alphas.is_empty() {
        return Err(DacsError::InvalidParameter("need at least one replicate and one alpha".into()));
    }
    if let Some(a) = cfg.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(DacsError::InvalidParameter(format!("alpha must lie in (0, 1), got {a}")));
    }
    let per_rep = try_map_indexed(cfg.parallelism, cfg.reps, |rep| replicate(cfg, rep))?;
    let mut replicates = Vec::new();
    let mut timings = Vec::new();
    for (rows, times) in per_rep {
        replicates.extend(rows);
        timings.extend(times);
    }
    let summary = summarize(cfg, &replicates);
    Ok(SweepReport { replicates, summary, timings })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `replicates.csv`, `summary.csv` and `timings.csv` into `dir`.
pub fn write_report(report: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("replicates.csv"), &report.replicates)?;
    write_csv(&dir.join("summary.csv"), &report.summary)?;
    write_csv(&dir.join("timings.csv"), &report.timings)?;
    Ok(())
}
