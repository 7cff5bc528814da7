//! End-to-end selection: scores, BH stopping time, rewards, Snell envelope,
//! optimal stopping time and the final e-value optimization.

use std::time::Instant;

use serde::Serialize;

use crate::conformal::{bh_stopping_time, cs_selection, e_values_at, EValueVector};
use crate::data::{build_score_state, CalibrationSample, ScoreState, TestSample};
use crate::error::{DacsError, Result};
use crate::metrics::DiversityMetric;
use crate::par::Parallelism;
use crate::qp::PgdConfig;
use crate::relaxed::{randomized_round, relaxed_reward_table, solve_at_time, McSettings, RelaxedContext, RelaxedSolution};
use crate::seed;
use crate::stopping::{build_grid, optimal_stopping_time, snell_auto, RewardTable, SnellTable};
use crate::underrep::{greedy_underrep_select, underrep_reward_table, CategoryCounts};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Mode {
    /// Closed-form rewards for the underrepresentation index. `grid` = Some(Q)
    /// coarsens the time grid to about Q points.
    ExactUnderrep { grid: Option<usize> },
    RelaxedMc { mc_draws: usize, grid: usize, rounding_draws: usize, warm_start: bool },
}

impl Mode {
    pub fn relaxed(mc_draws: usize, grid: usize) -> Self {
        Mode::RelaxedMc { mc_draws, grid, rounding_draws: 50, warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DacsConfig {
    pub alpha: f64,
    pub metric: DiversityMetric,
    pub mode: Mode,
    pub seed: u64,
    /// Break ties among finite scores with seeded jitter instead of failing.
    pub jitter: bool,
    pub parallelism: Parallelism,
    /// Keep reward and Snell tables in the diagnostics.
    pub keep_tables: bool,
    pub pgd: PgdConfig,
}

impl DacsConfig {
    pub fn new(alpha: f64, metric: DiversityMetric, mode: Mode) -> Self {
        DacsConfig {
            alpha,
            metric,
            mode,
            seed: 0,
            jitter: false,
            parallelism: Parallelism::default(),
            keep_tables: false,
            pgd: PgdConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DacsError::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.metric.validate()?;
        match (&self.mode, &self.metric) {
            (Mode::ExactUnderrep { grid }, DiversityMetric::Underrep { .. }) => {
                if matches!(grid, Some(q) if *q < 2) {
                    return Err(DacsError::InvalidParameter("grid size must be at least 2".into()));
                }
            }
            (Mode::ExactUnderrep { .. }, _) => {
                return Err(DacsError::InvalidParameter("exact mode supports only the underrepresentation index".into()))
            }
            (Mode::RelaxedMc { .. }, DiversityMetric::Underrep { .. }) => return Err(DacsError::UnsupportedRelaxation),
            (Mode::RelaxedMc { mc_draws, grid, rounding_draws, .. }, _) => {
                if *mc_draws == 0 || *rounding_draws == 0 || *grid < 2 {
                    return Err(DacsError::InvalidParameter("need mc_draws ≥ 1, rounding_draws ≥ 1, grid ≥ 2".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub scores_s: f64,
    pub rewards_s: f64,
    pub snell_s: f64,
    pub final_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub cs_set: Vec<usize>,
    pub tau_bh: usize,
    pub diversity: f64,
    pub grid: Vec<usize>,
    pub rewards: Option<RewardTable>,
    pub snell: Option<SnellTable>,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Sorted test indices.
    pub selected: Vec<usize>,
    pub tau_star: usize,
    pub e_values: EValueVector,
    pub chi: Option<RelaxedSolution>,
    pub diagnostics: Diagnostics,
}

impl SelectionResult {
    /// Equality ignoring wall times.
    pub fn same_outcome(&self, other: &SelectionResult) -> bool {
        let strip = |r: &SelectionResult| {
            let mut r = r.clone();
            r.diagnostics.timings = Timings::default();
            r
        };
        strip(self) == strip(other)
    }
}

/// φ of a set of test indices.
pub fn diversity_of(metric: &DiversityMetric, state: &ScoreState, selected: &[usize]) -> f64 {
    match metric {
        DiversityMetric::Underrep { .. } => {
            let z: Vec<_> = selected.iter().map(|&j| state.sorted_z()[state.test_rank(j) - 1].clone()).collect();
            let idx: Vec<usize> = (0..selected.len()).collect();
            metric.eval_set(&idx, &z)
        }
        _ => {
            let pooled: Vec<usize> = selected.iter().map(|&j| state.n() + j).collect();
            metric.eval_set(&pooled, &[])
        }
    }
}

pub fn run_dacs(calib: &[CalibrationSample], test: &[TestSample], config: &DacsConfig) -> Result<SelectionResult> {
    config.validate()?;
    let start = Instant::now();
    let state = build_score_state(calib, test, config.jitter.then_some(config.seed))?;
    let mut out = run_dacs_on_state(&state, config)?;
    out.diagnostics.timings.scores_s = start.elapsed().as_secs_f64() - out.diagnostics.timings.rewards_s
        - out.diagnostics.timings.snell_s
        - out.diagnostics.timings.final_s;
    Ok(out)
}

pub fn run_dacs_on_state(state: &ScoreState, config: &DacsConfig) -> Result<SelectionResult> {
    config.validate()?;
    let alpha = config.alpha;
    let tau_bh = bh_stopping_time(state, alpha);
    let mut diag = Diagnostics { tau_bh, diversity: config.metric.empty_value(), ..Diagnostics::default() };
    if tau_bh == 0 {
        return Ok(SelectionResult { selected: Vec::new(), tau_star: 0, e_values: e_values_at(state, 0), chi: None, diagnostics: diag });
    }
    diag.cs_set = e_values_at(state, tau_bh).positive();

    let clock = Instant::now();
    let (rewards, ctx_draws) = match (&config.mode, &config.metric) {
        (Mode::ExactUnderrep { grid }, DiversityMetric::Underrep { categories }) => {
            let grid = grid.map_or_else(|| (1..=tau_bh).collect(), |q| build_grid(tau_bh, q));
            let counts = CategoryCounts::from_state(state, *categories)?;
            (underrep_reward_table(state, &counts, alpha, tau_bh, &grid, config.parallelism)?, None)
        }
        (Mode::RelaxedMc { mc_draws, grid, rounding_draws, warm_start }, metric) => {
            let grid = build_grid(tau_bh, *grid);
            let ctx = RelaxedContext::new(state, metric, alpha, *rounding_draws, config.pgd)?;
            let mc = McSettings { draws: *mc_draws, warm_start: *warm_start, seed: config.seed };
            (relaxed_reward_table(state, &ctx, tau_bh, &grid, mc, config.parallelism)?, Some(*rounding_draws))
        }
        _ => unreachable!("rejected by validate"),
    };
    diag.timings.rewards_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let snell = snell_auto(&rewards)?;
    let tau_star = optimal_stopping_time(&rewards, &snell, state.calib_above_all())?;
    diag.timings.snell_s = clock.elapsed().as_secs_f64();
    diag.grid = rewards.grid.clone();

    let clock = Instant::now();
    let e_values = e_values_at(state, tau_star);
    let (selected, chi) = match &config.metric {
        DiversityMetric::Underrep { categories } => (greedy_underrep_select(state, tau_star, alpha, *categories)?, None),
        metric => {
            debug_assert!(ctx_draws.is_some());
            let sol = solve_at_time(state, metric, alpha, tau_star, &config.pgd.with_tol(1e-10))?;
            let mut rng = seed::rng(config.seed, &[seed::TAG_FINAL]);
            (randomized_round(&sol.chi, &mut rng), Some(sol))
        }
    };
    diag.timings.final_s = clock.elapsed().as_secs_f64();
    diag.diversity = diversity_of(&config.metric, state, &selected);
    if config.keep_tables {
        diag.rewards = Some(rewards);
        diag.snell = Some(snell);
    }
    Ok(SelectionResult { selected, tau_star, e_values, chi, diagnostics: diag })
}

/// The conformal selection baseline wrapped as a [`SelectionResult`].
pub fn run_cs(calib: &[CalibrationSample], test: &[TestSample], alpha: f64) -> Result<SelectionResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DacsError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let state = build_score_state(calib, test, None)?;
    Ok(run_cs_on_state(&state, alpha))
}

pub fn run_cs_on_state(state: &ScoreState, alpha: f64) -> SelectionResult {
    let tau_bh = bh_stopping_time(state, alpha);
    let selected = cs_selection(state, alpha);
    SelectionResult {
        e_values: e_values_at(state, tau_bh),
        tau_star: tau_bh,
        chi: None,
        diagnostics: Diagnostics { cs_set: selected.clone(), tau_bh, ..Diagnostics::default() },
        selected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::is_self_consistent;
    use crate::data::fixtures;
    use crate::data::Diversification;
    use crate::metrics::SimilarityMatrix;
    use crate::underrep::underrep_opt_value;

    fn underrep_config(alpha: f64) -> DacsConfig {
        DacsConfig::new(alpha, DiversityMetric::Underrep { categories: 2 }, Mode::ExactUnderrep { grid: None })
    }

    #[test]
    fn fixture_exact_run() {
        let (calib, test) = fixtures::small();
        let res = run_dacs(&calib, &test, &underrep_config(0.6)).unwrap();
        assert_eq!(res.diagnostics.tau_bh, 6);
        assert!(!res.selected.is_empty());
        assert!(res.tau_star >= 1 && res.tau_star <= 6);
        assert!(is_self_consistent(&res.selected, &res.e_values, 0.6, 4));
        let state = build_score_state(&calib, &test, None).unwrap();
        let counts = CategoryCounts::from_state(&state, 2).unwrap();
        let o = underrep_opt_value(res.tau_star, state.calib_above(res.tau_star), counts.test_at(res.tau_star), 0.6, 4, 4);
        assert_eq!(res.diagnostics.diversity, o);
        assert!(res.selected.iter().all(|j| res.diagnostics.cs_set.contains(j)));
    }

    #[test]
    fn small_alpha_selects_nothing() {
        let (calib, test) = fixtures::small();
        let res = run_dacs(&calib, &test, &underrep_config(0.5)).unwrap();
        assert_eq!((res.selected.len(), res.tau_star, res.diagnostics.tau_bh), (0, 0, 0));
    }

    #[test]
    fn huge_gamma_selects_nothing() {
        let calib: Vec<CalibrationSample> = (0..10)
            .map(|i| CalibrationSample { z: Diversification::Category(0), mu_hat: i as f64 * 0.1 - 0.5, y: if i % 3 == 0 { -1.0 } else { 1.0 } })
            .collect();
        let test: Vec<TestSample> = (0..5).map(|j| TestSample { z: Diversification::Category(0), mu_hat: 3.0 + j as f64 }).collect();
        let sigma = SimilarityMatrix::new(15, (0..225).map(|k| if k / 15 == k % 15 { 1.0 } else { 0.0 }).collect()).unwrap();
        let cfg = DacsConfig::new(0.5, DiversityMetric::Markowitz { sigma, gamma: 1e6 }, Mode::relaxed(3, 4));
        let res = run_dacs(&calib, &test, &cfg).unwrap();
        assert!(res.diagnostics.tau_bh > 0);
        assert!(res.selected.is_empty());
    }

    #[test]
    fn config_rejects_mismatches() {
        let cfg = DacsConfig::new(0.2, DiversityMetric::Underrep { categories: 2 }, Mode::relaxed(5, 5));
        assert_eq!(cfg.validate().unwrap_err(), DacsError::UnsupportedRelaxation);
        assert!(underrep_config(1.0).validate().is_err());
    }

    #[test]
    fn cs_wrapper_matches_selection() {
        let (calib, test) = fixtures::small();
        let res = run_cs(&calib, &test, 0.6).unwrap();
        assert_eq!(res.selected, vec![0, 1, 2, 3]);
        assert_eq!(res.tau_star, 6);
    }
}
