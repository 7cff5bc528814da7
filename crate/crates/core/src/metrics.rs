//! Diversity metrics on sets and on relaxed vectors, and similarity matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::data::Diversification;
use crate::error::{DacsError, Result};
use crate::numeric::quad_form;

const PD_TOL: f64 = 1e-10;

/// Symmetric positive-definite similarity matrix, dense row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    dim: usize,
    entries: Vec<f64>,
    /// Ridge added to the diagonal during construction, if any.
    ridge: f64,
}

fn eigen_range(dim: usize, entries: &[f64]) -> (f64, f64) {
    if dim == 0 {
        return (1.0, 1.0);
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, entries));
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

impl SimilarityMatrix {
    /// Validates symmetry, positive diagonal and λ_min > 1e-10.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        Self::check_shape(dim, &entries)?;
        let (lo, _) = eigen_range(dim, &entries);
        if lo <= PD_TOL {
            return Err(DacsError::InvalidSimilarity(format!("smallest eigenvalue {lo:e} is not positive")));
        }
        Ok(SimilarityMatrix { dim, entries, ridge: 0.0 })
    }

    /// Like `new`, but adds λI with λ = max(0, 1e-8 − λ_min) when the matrix is
    /// not safely positive definite.
    pub fn with_ridge(dim: usize, mut entries: Vec<f64>) -> Result<Self> {
        Self::check_shape(dim, &entries)?;
        let (lo, _) = eigen_range(dim, &entries);
        let mut ridge = 0.0;
        if lo <= PD_TOL {
            ridge = (1e-8 - lo).max(0.0);
            for i in 0..dim {
                entries[i * dim + i] += ridge;
            }
        }
        Ok(SimilarityMatrix { dim, entries, ridge })
    }

    fn check_shape(dim: usize, entries: &[f64]) -> Result<()> {
        if entries.len() != dim * dim {
            return Err(DacsError::InvalidSimilarity(format!("expected {} entries, got {}", dim * dim, entries.len())));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(DacsError::InvalidSimilarity("non-finite entry".into()));
        }
        for i in 0..dim {
            if entries[i * dim + i] <= 0.0 {
                return Err(DacsError::InvalidSimilarity(format!("diagonal entry {i} is not positive")));
            }
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(DacsError::InvalidSimilarity(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Dense principal submatrix on `idx` (row-major, side `idx.len()`).
    pub fn submatrix(&self, idx: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            let row = &self.entries[i * self.dim..(i + 1) * self.dim];
            out.extend(idx.iter().map(|&j| row[j]));
        }
        out
    }

    pub fn max_eigenvalue(&self) -> f64 {
        eigen_range(self.dim, &self.entries).1
    }
}

/// 2/λ_max(Σ), a reasonable scale for the Markowitz penalty. Never applied
/// implicitly.
pub fn markowitz_gamma_hint(sigma: &SimilarityMatrix) -> f64 {
    2.0 / sigma.max_eigenvalue()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DiversityMetric {
    Underrep { categories: usize },
    /// Σ is indexed by pooled position: calibration rows first, then test rows.
    Sharpe { sigma: SimilarityMatrix },
    Markowitz { sigma: SimilarityMatrix, gamma: f64 },
}

impl DiversityMetric {
    pub fn validate(&self) -> Result<()> {
        match self {
            DiversityMetric::Underrep { categories } if *categories < 2 => {
                Err(DacsError::InvalidParameter("need at least two categories".into()))
            }
            DiversityMetric::Markowitz { gamma, .. } if !(*gamma > 0.0 && gamma.is_finite()) => {
                Err(DacsError::InvalidParameter("gamma must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn sigma(&self) -> Option<&SimilarityMatrix> {
        match self {
            DiversityMetric::Sharpe { sigma } | DiversityMetric::Markowitz { sigma, .. } => Some(sigma),
            DiversityMetric::Underrep { .. } => None,
        }
    }

    /// Value on the empty set.
    pub fn empty_value(&self) -> f64 {
        match self {
            DiversityMetric::Underrep { categories } => -1.0 / *categories as f64,
            _ => 0.0,
        }
    }

    /// φ on a set. For the underrepresentation index `z` supplies the labels
    /// (indexed by the same indices as `set`); for the similarity metrics the
    /// indices address rows of Σ and `z` is ignored.
    pub fn eval_set(&self, set: &[usize], z: &[Diversification]) -> f64 {
        if set.is_empty() {
            return self.empty_value();
        }
        match self {
            DiversityMetric::Underrep { categories } => {
                let mut counts = vec![0usize; *categories];
                for &i in set {
                    counts[z[i].category().expect("categorical label")] += 1;
                }
                *counts.iter().min().unwrap() as f64 / set.len() as f64
            }
            DiversityMetric::Sharpe { sigma } => sharpe_of_set(sigma, set),
            DiversityMetric::Markowitz { sigma, gamma } => set.len() as f64 - 0.5 * gamma * set_mass(sigma, set),
        }
    }

    /// φ extended to [0,1]^p; `sigma_sub` is the p×p matrix for the coordinates.
    pub fn eval_relaxed(&self, chi: &[f64], sigma_sub: &[f64]) -> Result<f64> {
        match self {
            DiversityMetric::Underrep { .. } => Err(DacsError::UnsupportedRelaxation),
            DiversityMetric::Sharpe { .. } => Ok(sharpe_relaxed(chi, sigma_sub)),
            DiversityMetric::Markowitz { gamma, .. } => Ok(markowitz_relaxed(chi, sigma_sub, *gamma)),
        }
    }
}

fn set_mass(sigma: &SimilarityMatrix, set: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &i in set {
        for &j in set {
            acc += sigma.get(i, j);
        }
    }
    acc
}

fn sharpe_of_set(sigma: &SimilarityMatrix, set: &[usize]) -> f64 {
    set.len() as f64 / set_mass(sigma, set).sqrt()
}

pub fn sharpe_relaxed(chi: &[f64], sigma: &[f64]) -> f64 {
    let s: f64 = chi.iter().sum();
    if s == 0.0 {
        return 0.0;
    }
    s / quad_form(sigma, chi).sqrt()
}

pub fn markowitz_relaxed(chi: &[f64], sigma: &[f64], gamma: f64) -> f64 {
    chi.iter().sum::<f64>() - 0.5 * gamma * quad_form(sigma, chi)
}

/// E[φ(ξ)] for ξ_i ~ Bern(χ_i) under the Markowitz objective, in closed form.
pub fn expected_rounded_markowitz(chi: &[f64], sigma: &[f64], gamma: f64) -> f64 {
    let p = chi.len();
    let mut diag_lin = 0.0;
    let mut diag_sq = 0.0;
    for i in 0..p {
        let d = sigma[i * p + i];
        diag_lin += d * chi[i];
        diag_sq += d * chi[i] * chi[i];
    }
    chi.iter().sum::<f64>() - 0.5 * gamma * (quad_form(sigma, chi) + diag_lin - diag_sq)
}

/// Sharpe ratio of the set {i : mask_i} under the dense p×p `sigma`.
pub fn sharpe_of_mask(mask: &[bool], sigma: &[f64]) -> f64 {
    let p = mask.len();
    let mut k = 0usize;
    let mut mass = 0.0;
    for i in 0..p {
        if !mask[i] {
            continue;
        }
        k += 1;
        let row = &sigma[i * p..(i + 1) * p];
        for j in 0..p {
            if mask[j] {
                mass += row[j];
            }
        }
    }
    if k == 0 {
        0.0
    } else {
        k as f64 / mass.sqrt()
    }
}

/// Monte Carlo estimate of E[Sharpe(ξ)] for ξ_i ~ Bern(χ_i).
pub fn expected_rounded_sharpe_mc<R: Rng>(chi: &[f64], sigma: &[f64], n_draws: usize, rng: &mut R) -> f64 {
    assert!(n_draws >= 1);
    let mut mask = vec![false; chi.len()];
    let mut acc = 0.0;
    for _ in 0..n_draws {
        for (b, &c) in mask.iter_mut().zip(chi) {
            *b = bernoulli(c, rng);
        }
        acc += sharpe_of_mask(&mask, sigma);
    }
    acc / n_draws as f64
}

/// Bernoulli draw that is deterministic at 0 and 1.
#[inline]
pub fn bernoulli<R: Rng>(p: f64, rng: &mut R) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance.
    Auto,
    Fixed(f64),
}

/// exp(−‖z_i − z_j‖² / (2σ²)); ridge-regularised if nearly singular.
pub fn rbf_similarity(z: &[Vec<f64>], bandwidth: Bandwidth) -> Result<SimilarityMatrix> {
    let d = z.len();
    let mut sq = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..i {
            let v: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            sq[i * d + j] = v;
            sq[j * d + i] = v;
        }
    }
    let bw = match bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => b,
        Bandwidth::Fixed(_) => return Err(DacsError::InvalidParameter("bandwidth must be positive".into())),
        Bandwidth::Auto => {
            let mut dists: Vec<f64> = (0..d).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| sq[i * d + j].sqrt()).collect();
            if dists.is_empty() {
                1.0
            } else {
                dists.sort_by(f64::total_cmp);
                let k = dists.len();
                let med = if k % 2 == 1 { dists[k / 2] } else { 0.5 * (dists[k / 2 - 1] + dists[k / 2]) };
                if med <= 0.0 {
                    return Err(DacsError::DegenerateBandwidth);
                }
                med
            }
        }
    };
    let scale = 1.0 / (2.0 * bw * bw);
    let entries = sq.iter().map(|&v| (-v * scale).exp()).collect();
    SimilarityMatrix::with_ridge(d, entries)
}

/// Tanimoto coefficients |a ∧ b| / |a ∨ b|; ridge-regularised if needed.
pub fn tanimoto_similarity(fps: &[Vec<bool>]) -> Result<SimilarityMatrix> {
    let d = fps.len();
    if let Some(w) = fps.windows(2).find(|w| w[0].len() != w[1].len()) {
        return Err(DacsError::InvalidParameter(format!("fingerprint lengths differ ({} vs {})", w[0].len(), w[1].len())));
    }
    if let Some(i) = fps.iter().position(|f| !f.iter().any(|&b| b)) {
        return Err(DacsError::AllZeroFingerprint(i));
    }
    let mut entries = vec![0.0; d * d];
    for i in 0..d {
        entries[i * d + i] = 1.0;
        for j in 0..i {
            let (mut inter, mut uni) = (0usize, 0usize);
            for (&a, &b) in fps[i].iter().zip(&fps[j]) {
                inter += (a && b) as usize;
                uni += (a || b) as usize;
            }
            let v = inter as f64 / uni as f64;
            entries[i * d + j] = v;
            entries[j * d + i] = v;
        }
    }
    SimilarityMatrix::with_ridge(d, entries)
}
