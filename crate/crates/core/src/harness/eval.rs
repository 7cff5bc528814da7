//! FDP, power, summaries with standard errors and baseline-CDF normalization.

use serde::Serialize;

use crate::data::ScoreState;
use crate::error::Result;
use crate::metrics::DiversityMetric;
use crate::numeric::mean_se;
use crate::pipeline::diversity_of;
use crate::qp::PgdConfig;
use crate::relaxed::{randomized_round, solve_at_time};
use crate::seed;

/// (FDP, power) of a selection given true test responses; y > 0 is a
/// high-quality unit.
pub fn fdp_and_power(selected: &[usize], truth_y: &[f64]) -> (f64, f64) {
    let false_sel = selected.iter().filter(|&&i| truth_y[i] <= 0.0).count();
    let true_sel = selected.len() - false_sel;
    let positives = truth_y.iter().filter(|&&y| y > 0.0).count();
    (false_sel as f64 / selected.len().max(1) as f64, true_sel as f64 / positives.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanSe { mean: f64::NAN, se: f64::NAN, count: 0 };
        }
        let (mean, se) = mean_se(xs);
        MeanSe { mean, se, count: xs.len() }
    }
}

/// Right-continuous empirical CDF of `baseline` at `value`.
pub fn baseline_cdf_normalize(value: f64, baseline: &[f64]) -> f64 {
    if baseline.is_empty() {
        return f64::NAN;
    }
    baseline.iter().filter(|&&b| b <= value).count() as f64 / baseline.len() as f64
}

/// Diversities of `draws` Bernoulli roundings of the relaxed solution at
/// every t ≤ τ_BH, in (t, draw) order.
pub fn baseline_diversities(state: &ScoreState, metric: &DiversityMetric, alpha: f64, tau_bh: usize, draws: usize, master: u64, pgd: &PgdConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(tau_bh * draws);
    for t in 1..=tau_bh {
        let sol = solve_at_time(state, metric, alpha, t, pgd)?;
        for d in 0..draws {
            let mut rng = seed::rng(master, &[seed::TAG_BASELINE, t as u64, d as u64]);
            out.push(diversity_of(metric, state, &randomized_round(&sol.chi, &mut rng)));
        }
    }
    Ok(out)
}
