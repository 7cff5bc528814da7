//! Samples, the clipped score, and the sorted joint score state.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DacsError, Result};
use crate::seed;

/// Extended real used for scores: either finite or +∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Ordering::Less,
            (ExtReal::PosInf, ExtReal::Finite(_)) => Ordering::Greater,
            (ExtReal::PosInf, ExtReal::PosInf) => Ordering::Equal,
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

/// What we diversify over: a category label in `0..C` or a real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diversification {
    Category(usize),
    Vector(Vec<f64>),
}

impl Diversification {
    pub fn category(&self) -> Option<usize> {
        match self {
            Diversification::Category(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub z: Diversification,
    pub mu_hat: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSample {
    pub z: Diversification,
    pub mu_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Origin {
    Calibration(usize),
    Test(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub value: ExtReal,
    pub origin: Origin,
}

/// V(x, y) = +∞ if y > 0, else −μ̂(x). A missing response is imputed as 0.
pub fn clipped_score(y: Option<f64>, mu_hat: f64) -> ExtReal {
    match y {
        Some(y) if y > 0.0 => ExtReal::PosInf,
        _ => ExtReal::Finite(-mu_hat),
    }
}

/// Joint calibration/test scores in sorted order, with everything the
/// filtration reveals. Positions are 1-based in the accessors (`t` in 1..=n+m)
/// and 0-based in the raw vectors.
#[derive(Debug, Clone)]
pub struct ScoreState {
    n: usize,
    m: usize,
    sorted: Vec<Score>,
    membership: Vec<bool>,
    sorted_z: Vec<Diversification>,
    calib_above: Vec<usize>,
    test_rank: Vec<usize>,
    jitter: f64,
}

impl ScoreState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.n + self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sorted_scores(&self) -> &[Score] {
        &self.sorted
    }

    /// B_1..B_{n+m}; `true` marks a calibration point.
    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn sorted_z(&self) -> &[Diversification] {
        &self.sorted_z
    }

    /// N_t for t = 0..=n+m.
    pub fn calib_above_all(&self) -> &[usize] {
        &self.calib_above
    }

    pub fn calib_above(&self, t: usize) -> usize {
        self.calib_above[t]
    }

    /// Number of test points among the first t sorted positions.
    pub fn test_below(&self, t: usize) -> usize {
        t - (self.n - self.calib_above[t])
    }

    /// 1-based rank of test unit `i` in the joint order.
    pub fn test_rank(&self, i: usize) -> usize {
        self.test_rank[i]
    }

    pub fn test_ranks(&self) -> &[usize] {
        &self.test_rank
    }

    /// Index into the pooled (calibration then test) ordering for sorted
    /// position `pos` (0-based). This is the row of a pooled similarity matrix.
    pub fn pooled_index(&self, pos: usize) -> usize {
        match self.sorted[pos].origin {
            Origin::Calibration(i) => i,
            Origin::Test(j) => self.n + j,
        }
    }

    /// Test units with rank ≤ t, in rank order.
    pub fn tests_up_to(&self, t: usize) -> Vec<usize> {
        self.sorted[..t]
            .iter()
            .filter_map(|s| match s.origin {
                Origin::Test(j) => Some(j),
                _ => None,
            })
            .collect()
    }

    /// Magnitude of the jitter that was added (0 when disabled).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

/// Sorts the pooled scores. With `jitter_seed` set, finite scores receive
/// seeded uniform noise of size 1e-9 times their range before sorting.
pub fn build_score_state(
    calib: &[CalibrationSample],
    test: &[TestSample],
    jitter_seed: Option<u64>,
) -> Result<ScoreState> {
    if test.is_empty() {
        return Err(DacsError::EmptyTestSet);
    }
    let (n, m) = (calib.len(), test.len());
    for (i, c) in calib.iter().enumerate() {
        if !c.mu_hat.is_finite() || c.y.is_nan() {
            return Err(DacsError::NonFinite(format!("calibration row {i}")));
        }
    }
    for (j, t) in test.iter().enumerate() {
        if !t.mu_hat.is_finite() {
            return Err(DacsError::NonFinite(format!("test row {j}")));
        }
    }

    let mut scores: Vec<Score> = calib
        .iter()
        .enumerate()
        .map(|(i, c)| Score { value: clipped_score(Some(c.y), c.mu_hat), origin: Origin::Calibration(i) })
        .chain(test.iter().enumerate().map(|(j, t)| Score {
            value: clipped_score(None, t.mu_hat),
            origin: Origin::Test(j),
        }))
        .collect();

    let mut jitter = 0.0;
    if let Some(seed) = jitter_seed {
        let finite: Vec<f64> = scores.iter().filter(|s| s.value.is_finite()).map(|s| s.value.as_f64()).collect();
        let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        jitter = 1e-9 * range;
        let mut rng = seed::rng(seed, &[seed::TAG_JITTER]);
        for s in scores.iter_mut() {
            if let ExtReal::Finite(v) = s.value {
                s.value = ExtReal::Finite(v + rng.random_range(-jitter..jitter));
            }
        }
    }

    // pooled index is the tiebreak, so +∞ calibration scores keep input order
    let pooled = |o: &Origin| match *o {
        Origin::Calibration(i) => i,
        Origin::Test(j) => n + j,
    };
    scores.sort_by(|a, b| a.value.cmp(&b.value).then_with(|| pooled(&a.origin).cmp(&pooled(&b.origin))));

    for w in scores.windows(2) {
        if let (ExtReal::Finite(a), ExtReal::Finite(b)) = (w[0].value, w[1].value) {
            if a == b {
                return Err(DacsError::DuplicateFiniteScore(a));
            }
        }
    }

    let membership: Vec<bool> = scores.iter().map(|s| matches!(s.origin, Origin::Calibration(_))).collect();
    let sorted_z = scores
        .iter()
        .map(|s| match s.origin {
            Origin::Calibration(i) => calib[i].z.clone(),
            Origin::Test(j) => test[j].z.clone(),
        })
        .collect();
    let mut calib_above = vec![0usize; n + m + 1];
    for t in (0..n + m).rev() {
        calib_above[t] = calib_above[t + 1] + membership[t] as usize;
    }
    let mut test_rank = vec![0usize; m];
    for (pos, s) in scores.iter().enumerate() {
        if let Origin::Test(j) = s.origin {
            test_rank[j] = pos + 1;
        }
    }

    Ok(ScoreState { n, m, sorted: scores, membership, sorted_z, calib_above, test_rank, jitter })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Calibration scores (0.9, ∞, 0.3, ∞) and test scores (0.1, 0.5, 0.7, 1.2);
    /// test categories alternate 0, 1.
    pub fn small() -> (Vec<CalibrationSample>, Vec<TestSample>) {
        let calib = vec![
            CalibrationSample { z: Diversification::Category(0), mu_hat: -0.9, y: -1.0 },
            CalibrationSample { z: Diversification::Category(1), mu_hat: 0.2, y: 1.0 },
            CalibrationSample { z: Diversification::Category(1), mu_hat: -0.3, y: -0.5 },
            CalibrationSample { z: Diversification::Category(1), mu_hat: 0.8, y: 2.0 },
        ];
        let test = [0.1, 0.5, 0.7, 1.2]
            .iter()
            .enumerate()
            .map(|(j, v)| TestSample { z: Diversification::Category(j % 2), mu_hat: -v })
            .collect();
        (calib, test)
    }
}
