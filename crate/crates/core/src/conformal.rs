//! Conformal p-values, the BH stopping time, stopping-time e-values and the
//! plain conformal selection baseline.

use serde::Serialize;

use crate::data::{ExtReal, ScoreState};
use crate::numeric::le_tol;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EValueVector {
    pub t: usize,
    /// One entry per test unit, either 0 or (n+1)/denom.
    pub values: Vec<f64>,
    /// 1 + n − N_t.
    pub denom: usize,
}

impl EValueVector {
    pub fn positive(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect()
    }

    /// The common nonzero value (n+1)/(1+n−N_t).
    pub fn level(&self, n: usize) -> f64 {
        (n + 1) as f64 / self.denom as f64
    }
}

/// p_i = (1 + #{j : V̂_i ≥ V_j}) / (n+1).
pub fn conformal_p_values(state: &ScoreState) -> Vec<f64> {
    let n = state.n();
    // calibration points at or below each sorted position equal n − N_t
    state
        .test_ranks()
        .iter()
        .map(|&r| (1 + n - state.calib_above(r)) as f64 / (n + 1) as f64)
        .collect()
}

/// Whether the FDP estimate at time t is at most α:
/// m (1 + #calib ≤ t) ≤ α (n+1) max(1, #test ≤ t).
pub fn bh_criterion(n: usize, m: usize, calib_le: usize, test_le: usize, alpha: f64) -> bool {
    le_tol((m * (1 + calib_le)) as f64, alpha * (n + 1) as f64 * test_le.max(1) as f64)
}

pub fn bh_stopping_time(state: &ScoreState, alpha: f64) -> usize {
    let (n, m) = (state.n(), state.m());
    (1..=n + m)
        .rev()
        .find(|&t| {
            let calib_le = n - state.calib_above(t);
            bh_criterion(n, m, calib_le, t - calib_le, alpha)
        })
        .unwrap_or(0)
}

pub fn e_values_at(state: &ScoreState, t: usize) -> EValueVector {
    let n = state.n();
    let denom = 1 + n - state.calib_above(t);
    let level = (n + 1) as f64 / denom as f64;
    let values = state.test_ranks().iter().map(|&r| if r <= t { level } else { 0.0 }).collect();
    EValueVector { t, values, denom }
}

/// e_i ≥ m/(α|R|) for every i in R, with relative slack.
pub fn is_self_consistent(set: &[usize], e: &EValueVector, alpha: f64, m: usize) -> bool {
    if set.is_empty() {
        return true;
    }
    let threshold = m as f64 / (alpha * set.len() as f64);
    set.iter().all(|&i| le_tol(threshold, e.values[i]))
}

/// Benjamini–Hochberg on arbitrary p-values. Returns rejected indices, sorted.
pub fn bh_on_p_values(p: &[f64], alpha: f64) -> Vec<usize> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let k = (1..=m).rev().find(|&k| le_tol(p[order[k - 1]] * m as f64, alpha * k as f64)).unwrap_or(0);
    let mut out: Vec<usize> = order[..k].to_vec();
    out.sort_unstable();
    out
}

/// Conformal selection: eBH at τ_BH, equivalently BH on the conformal p-values.
pub fn cs_selection(state: &ScoreState, alpha: f64) -> Vec<usize> {
    let tau = bh_stopping_time(state, alpha);
    if tau == 0 {
        return Vec::new();
    }
    e_values_at(state, tau).positive()
}

/// The score W_(t) at sorted position t (1-based).
pub fn score_at(state: &ScoreState, t: usize) -> ExtReal {
    state.sorted_scores()[t - 1].value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_score_state, fixtures, CalibrationSample, Diversification, TestSample};

    fn fixture() -> ScoreState {
        let (c, t) = fixtures::small();
        build_score_state(&c, &t, None).unwrap()
    }

    #[test]
    fn p_values_fixture() {
        let p = conformal_p_values(&fixture());
        assert_eq!(p[0], 1.0 / 5.0);
        assert_eq!(p[3], 3.0 / 5.0);
    }

    #[test]
    fn p_values_all_infinite_calibration() {
        let c: Vec<_> = (0..3).map(|i| CalibrationSample { z: Diversification::Category(0), mu_hat: i as f64, y: 1.0 }).collect();
        let t: Vec<_> = (0..2).map(|i| TestSample { z: Diversification::Category(0), mu_hat: i as f64 }).collect();
        let st = build_score_state(&c, &t, None).unwrap();
        assert_eq!(conformal_p_values(&st), vec![0.25, 0.25]);
    }

    #[test]
    fn bh_time_fixture() {
        let st = fixture();
        assert_eq!(bh_stopping_time(&st, 0.6), 6);
        assert_eq!(bh_stopping_time(&st, 0.5), 0);
    }

    #[test]
    fn bh_time_all_test_prefix() {
        // all test scores below all calibration scores
        let c: Vec<_> = (0..5).map(|i| CalibrationSample { z: Diversification::Category(0), mu_hat: -10.0 - i as f64, y: -1.0 }).collect();
        let t: Vec<_> = (0..3).map(|i| TestSample { z: Diversification::Category(0), mu_hat: i as f64 }).collect();
        let st = build_score_state(&c, &t, None).unwrap();
        // at t = m the criterion is m/(n+1)/m = 1/6
        assert_eq!(bh_stopping_time(&st, 1.0 / 6.0), 3);
        assert_eq!(bh_stopping_time(&st, 0.16), 0);
    }

    #[test]
    fn e_values_fixture() {
        let st = fixture();
        let e6 = e_values_at(&st, 6);
        assert_eq!(e6.denom, 3);
        assert!(e6.values.iter().all(|&v| v == 5.0 / 3.0));
        let e1 = e_values_at(&st, 1);
        assert_eq!(e1.values, vec![5.0, 0.0, 0.0, 0.0]);
        // no test rank is exactly 2 but test 0 is; use a state where the first point is calibration
        assert_eq!(e_values_at(&st, 1).positive(), vec![0]);
    }

    #[test]
    fn self_consistency_fixture() {
        let st = fixture();
        let e = e_values_at(&st, 6);
        assert!(is_self_consistent(&[0, 1, 2, 3], &e, 0.6, 4));
        assert!(is_self_consistent(&[], &e, 0.6, 4));
        assert!(!is_self_consistent(&[0], &e, 0.6, 4));
    }

    #[test]
    fn cs_fixture() {
        let st = fixture();
        assert_eq!(cs_selection(&st, 0.6), vec![0, 1, 2, 3]);
        assert!(cs_selection(&st, 0.5).is_empty());
    }

    #[test]
    fn cs_empty_when_test_scores_dominate() {
        let c: Vec<_> = (0..6).map(|i| CalibrationSample { z: Diversification::Category(0), mu_hat: 100.0 + i as f64, y: -1.0 }).collect();
        let t: Vec<_> = (0..3).map(|i| TestSample { z: Diversification::Category(0), mu_hat: 0.001 * i as f64 }).collect();
        let st = build_score_state(&c, &t, None).unwrap();
        assert!(conformal_p_values(&st).iter().all(|&p| p == 1.0));
        assert!(cs_selection(&st, 0.3).is_empty());
    }
}
