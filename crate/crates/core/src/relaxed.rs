//! Relaxed e-value programs for the Sharpe and Markowitz objectives, relaxed
//! optimal values, coupled Monte Carlo along warm-start diagonals, and
//! randomized rounding.

use rand::Rng;
use serde::Serialize;

use crate::data::ScoreState;
use crate::error::{DacsError, Result};
use crate::metrics::{expected_rounded_markowitz, expected_rounded_sharpe_mc, markowitz_relaxed, sharpe_relaxed, DiversityMetric, SimilarityMatrix};
use crate::numeric::{mat_vec, quad_form};
use crate::par::{try_map_indexed, Parallelism};
use crate::qp::{feasibility_check, pgd_minimize, project_capped_simplex, project_rsc, PgdConfig};
use crate::seed;
use crate::stopping::{sample_membership, support_range, CellTable, RewardTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RelaxedKind {
    Sharpe,
    Markowitz { gamma: f64 },
}

impl RelaxedKind {
    pub fn from_metric(metric: &DiversityMetric) -> Result<Self> {
        match metric {
            DiversityMetric::Sharpe { .. } => Ok(RelaxedKind::Sharpe),
            DiversityMetric::Markowitz { gamma, .. } => Ok(RelaxedKind::Markowitz { gamma: *gamma }),
            DiversityMetric::Underrep { .. } => Err(DacsError::UnsupportedRelaxation),
        }
    }
}

/// Program over the active coordinates only (those with a positive e-value):
/// maximise φ(χ) subject to 0 ≤ χ ≤ 1 and χ_i ≤ κ·1ᵀχ with κ = αβ/m.
#[derive(Debug, Clone)]
pub struct RelaxedProgram<'a> {
    pub kind: RelaxedKind,
    /// The common positive e-value.
    pub beta: f64,
    /// Similarity among active coordinates, row-major d×d.
    pub sigma: &'a [f64],
    pub dim: usize,
    pub alpha: f64,
    pub m: usize,
}

impl RelaxedProgram<'_> {
    pub fn kappa(&self) -> f64 {
        self.alpha * self.beta / self.m as f64
    }

    pub fn is_feasible(&self) -> bool {
        feasibility_check(self.beta, self.dim, self.alpha, self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedSolution {
    pub chi: Vec<f64>,
    /// Solver output before the Sharpe max-norm rescaling; used for warm starts.
    #[serde(skip)]
    pub raw: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub converged: bool,
}

impl RelaxedSolution {
    fn zero(d: usize, feasible: bool) -> Self {
        RelaxedSolution { chi: vec![0.0; d], raw: vec![0.0; d], objective: 0.0, iterations: 0, feasible, converged: true }
    }
}

pub fn solve_relaxed(prog: &RelaxedProgram, warm: Option<&[f64]>, cfg: &PgdConfig) -> Result<RelaxedSolution> {
    let d = prog.dim;
    if d == 0 || !prog.is_feasible() {
        return Ok(RelaxedSolution::zero(d, d == 0));
    }
    let kappa = prog.kappa();
    let sigma = prog.sigma;
    match prog.kind {
        RelaxedKind::Markowitz { gamma } => {
            let x0 = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; d]);
            let out = pgd_minimize(
                |x| 0.5 * gamma * quad_form(sigma, x) - x.iter().sum::<f64>(),
                |x, g| {
                    mat_vec(sigma, x, g);
                    g.iter_mut().for_each(|v| *v = gamma * *v - 1.0);
                },
                |y| project_rsc(y, kappa),
                &x0,
                cfg,
            )?;
            let chi: Vec<f64> = out.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            Ok(RelaxedSolution {
                objective: markowitz_relaxed(&chi, sigma, gamma),
                chi,
                raw: out.x,
                iterations: out.iterations,
                feasible: true,
                converged: out.converged,
            })
        }
        RelaxedKind::Sharpe => {
            // min ½ xᵀΣx on {0 ≤ x ≤ min(κ, 1), Σx = 1}, then rescale by the max entry
            let cap = vec![kappa.min(1.0); d];
            let proj = |y: &[f64]| project_capped_simplex(y, &cap, 1.0).expect("feasible by the check above");
            let x0 = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![1.0 / d as f64; d]);
            let out = pgd_minimize(
                |x| 0.5 * quad_form(sigma, x),
                |x, g| mat_vec(sigma, x, g),
                proj,
                &x0,
                cfg,
            )?;
            let top = out.x.iter().cloned().fold(0.0, f64::max);
            let chi: Vec<f64> = if top > 0.0 { out.x.iter().map(|v| (v / top).clamp(0.0, 1.0)).collect() } else { vec![0.0; d] };
            Ok(RelaxedSolution {
                objective: sharpe_relaxed(&chi, sigma),
                chi,
                raw: out.x,
                iterations: out.iterations,
                feasible: true,
                converged: out.converged,
            })
        }
    }
}

/// Independent Bernoulli(χ_i) rounding; returns the indices drawn as 1.
pub fn randomized_round<R: Rng>(chi: &[f64], rng: &mut R) -> Vec<usize> {
    chi.iter().enumerate().filter(|(_, &c)| crate::metrics::bernoulli(c, rng)).map(|(i, _)| i).collect()
}

/// One coupling step from B(t+1, s) to B(t, s+1). Returns the new vector and
/// the flipped coordinate, if any.
pub fn couple_down_tracked<R: Rng>(b_next: &[bool], rng: &mut R) -> Result<(Vec<bool>, Option<usize>)> {
    let t = b_next.len().checked_sub(1).ok_or(DacsError::NoFlippableOne)?;
    let mut b = b_next[..t].to_vec();
    if b_next[t] {
        return Ok((b, None));
    }
    let ones: Vec<usize> = (0..t).filter(|&i| b[i]).collect();
    if ones.is_empty() {
        return Err(DacsError::NoFlippableOne);
    }
    let j = ones[rng.random_range(0..ones.len())];
    b[j] = false;
    Ok((b, Some(j)))
}

pub fn couple_down<R: Rng>(b_next: &[bool], rng: &mut R) -> Result<Vec<bool>> {
    couple_down_tracked(b_next, rng).map(|(b, _)| b)
}

/// Cells of one warm-start diagonal t + s = c, from the largest grid time down.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoupledPath {
    pub diagonal: usize,
    pub cells: Vec<(usize, usize)>,
}

/// Covers every grid cell exactly once. Along t + s = c the supports are
/// contiguous in t (t ∈ [max(1, c−n), min(τ, c−N_τ)]), so one path per
/// diagonal suffices even when supports are ragged.
pub fn warm_start_schedule(tau_bh: usize, n_tau: usize, n: usize, grid: &[usize]) -> Vec<CoupledPath> {
    let mut paths = Vec::new();
    for c in n..=tau_bh + n_tau {
        let t_lo = c.saturating_sub(n).max(1);
        let t_hi = tau_bh.min(c - n_tau);
        if t_lo > t_hi {
            continue;
        }
        let cells: Vec<(usize, usize)> = grid.iter().rev().filter(|&&t| t >= t_lo && t <= t_hi).map(|&t| (t, c - t)).collect();
        if !cells.is_empty() {
            debug_assert!(cells.iter().all(|&(t, s)| support_range(t, tau_bh, n_tau, n).contains(s)));
            paths.push(CoupledPath { diagonal: c, cells });
        }
    }
    paths
}

/// Shared data for relaxed optimal values inside the stopping problem.
#[derive(Debug, Clone)]
pub struct RelaxedContext<'a> {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub kind: RelaxedKind,
    pub sigma: &'a SimilarityMatrix,
    /// Pooled similarity row of each sorted position.
    pub pooled: Vec<usize>,
    pub rounding_draws: usize,
    pub pgd: PgdConfig,
}

impl<'a> RelaxedContext<'a> {
    pub fn new(state: &ScoreState, metric: &'a DiversityMetric, alpha: f64, rounding_draws: usize, pgd: PgdConfig) -> Result<Self> {
        let kind = RelaxedKind::from_metric(metric)?;
        let sigma = metric.sigma().expect("relaxable metric carries Σ");
        if sigma.dim() != state.len() {
            return Err(DacsError::InvalidParameter(format!("Σ has side {}, expected n + m = {}", sigma.dim(), state.len())));
        }
        Ok(RelaxedContext {
            n: state.n(),
            m: state.m(),
            alpha,
            kind,
            sigma,
            pooled: (0..state.len()).map(|p| state.pooled_index(p)).collect(),
            rounding_draws: rounding_draws.max(1),
            pgd,
        })
    }

    /// Ô_t(b) for membership `b` over the first t positions, and the raw
    /// solver output scattered to positions (for warm starts).
    pub fn cell_value<R: Rng>(&self, b: &[bool], warm: Option<&[f64]>, rng: &mut R) -> Result<(f64, Vec<f64>)> {
        let t = b.len();
        let active: Vec<usize> = (0..t).filter(|&i| !b[i]).collect();
        let ones = t - active.len();
        let beta = (self.n + 1) as f64 / (1 + ones) as f64;
        let mut raw_pos = vec![0.0; t];
        if active.is_empty() {
            return Ok((0.0, raw_pos));
        }
        let idx: Vec<usize> = active.iter().map(|&p| self.pooled[p]).collect();
        let sub = self.sigma.submatrix(&idx);
        let prog = RelaxedProgram { kind: self.kind, beta, sigma: &sub, dim: active.len(), alpha: self.alpha, m: self.m };
        let warm_active: Option<Vec<f64>> = warm.map(|w| active.iter().map(|&p| w[p]).collect());
        let sol = solve_relaxed(&prog, warm_active.as_deref(), &self.pgd)?;
        for (k, &p) in active.iter().enumerate() {
            raw_pos[p] = sol.raw[k];
        }
        let value = match self.kind {
            RelaxedKind::Markowitz { gamma } => expected_rounded_markowitz(&sol.chi, &sub, gamma),
            RelaxedKind::Sharpe => expected_rounded_sharpe_mc(&sol.chi, &sub, self.rounding_draws, rng),
        };
        Ok((value, raw_pos))
    }
}

/// Ô_t(b) without warm start.
pub fn relaxed_opt_value<R: Rng>(ctx: &RelaxedContext, b: &[bool], rng: &mut R) -> Result<f64> {
    ctx.cell_value(b, None, rng).map(|(v, _)| v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub draws: usize,
    pub warm_start: bool,
    pub seed: u64,
}

/// Relaxed Monte Carlo rewards on `grid`.
///
/// With warm starts, draw ℓ of diagonal c samples a membership vector at the
/// top cell and couples it down through every intermediate time; each solve
/// starts from the previous cell's solution with the swapped coordinate
/// carried over. Sums over ℓ are taken in index order, so the table does not
/// depend on the execution policy.
pub fn relaxed_reward_table(
    state: &ScoreState,
    ctx: &RelaxedContext,
    tau_bh: usize,
    grid: &[usize],
    mc: McSettings,
    policy: Parallelism,
) -> Result<RewardTable> {
    let n = state.n();
    let n_tau = state.calib_above(tau_bh);
    let draws = mc.draws.max(1);
    let mut table = CellTable::from_fn(tau_bh, n_tau, n, grid, |_, _| 0.0);
    let row_of = |t: usize| grid.binary_search(&t).expect("grid time");

    if mc.warm_start {
        let paths = warm_start_schedule(tau_bh, n_tau, n, grid);
        let jobs = paths.len() * draws;
        let results = try_map_indexed(policy, jobs, |job| {
            let (path, l) = (&paths[job / draws], job % draws);
            let mut rng = seed::rng(mc.seed, &[seed::TAG_DIAGONAL, path.diagonal as u64, l as u64]);
            let mut out = Vec::with_capacity(path.cells.len());
            let (t0, s0) = path.cells[0];
            let mut b = sample_membership(t0, n - s0, &mut rng);
            let mut warm: Option<Vec<f64>> = None;
            let mut t_cur = t0;
            for &(t, s) in &path.cells {
                while t_cur > t {
                    let (nb, flipped) = couple_down_tracked(&b, &mut rng)?;
                    if let Some(w) = warm.as_mut() {
                        let last = w[t_cur - 1];
                        w.truncate(t_cur - 1);
                        if let Some(j) = flipped {
                            w[j] = last;
                        }
                    }
                    b = nb;
                    t_cur -= 1;
                }
                let mut rr = seed::rng(mc.seed, &[seed::TAG_ROUND, t as u64, s as u64, l as u64]);
                let (v, raw) = ctx.cell_value(&b, warm.as_deref(), &mut rr)?;
                warm = Some(raw);
                out.push(v);
            }
            Ok::<_, DacsError>(out)
        })?;
        for (p, path) in paths.iter().enumerate() {
            for l in 0..draws {
                for (k, &(t, s)) in path.cells.iter().enumerate() {
                    let r = row_of(t);
                    table.values[r][s - table.lo[r]] += results[p * draws + l][k];
                }
            }
        }
    } else {
        let cells: Vec<(usize, usize)> = grid
            .iter()
            .flat_map(|&t| {
                let sr = support_range(t, tau_bh, n_tau, n);
                (sr.lo..=sr.hi).map(move |s| (t, s))
            })
            .collect();
        let jobs = cells.len() * draws;
        let results = try_map_indexed(policy, jobs, |job| {
            let ((t, s), l) = (cells[job / draws], job % draws);
            let mut rng = seed::rng(mc.seed, &[seed::TAG_CELL, t as u64, s as u64, l as u64]);
            let b = sample_membership(t, n - s, &mut rng);
            let mut rr = seed::rng(mc.seed, &[seed::TAG_ROUND, t as u64, s as u64, l as u64]);
            ctx.cell_value(&b, None, &mut rr).map(|(v, _)| v)
        })?;
        for (c, &(t, s)) in cells.iter().enumerate() {
            let r = row_of(t);
            for l in 0..draws {
                table.values[r][s - table.lo[r]] += results[c * draws + l];
            }
        }
    }
    for row in table.values.iter_mut() {
        row.iter_mut().for_each(|v| *v /= draws as f64);
    }
    Ok(table)
}

/// Solves the relaxed program on the realised e-values at time t, over the
/// test units. Returns χ as a length-m vector (zero outside rank ≤ t).
pub fn solve_at_time(state: &ScoreState, metric: &DiversityMetric, alpha: f64, t: usize, cfg: &PgdConfig) -> Result<RelaxedSolution> {
    let kind = RelaxedKind::from_metric(metric)?;
    let sigma = metric.sigma().expect("relaxable metric carries Σ");
    let (n, m) = (state.n(), state.m());
    let active = state.tests_up_to(t);
    let beta = (n + 1) as f64 / (1 + n - state.calib_above(t)) as f64;
    let idx: Vec<usize> = active.iter().map(|&j| n + j).collect();
    let sub = sigma.submatrix(&idx);
    let prog = RelaxedProgram { kind, beta, sigma: &sub, dim: active.len(), alpha, m };
    let sol = solve_relaxed(&prog, None, cfg)?;
    let mut chi = vec![0.0; m];
    let mut raw = vec![0.0; m];
    for (k, &j) in active.iter().enumerate() {
        chi[j] = sol.chi[k];
        raw[j] = sol.raw[k];
    }
    Ok(RelaxedSolution { chi, raw, ..sol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn couple_down_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(couple_down(&[true, false, true, true], &mut rng).unwrap(), vec![true, false, true]);
        let mut seen = [0usize; 2];
        for _ in 0..2000 {
            let b = couple_down(&[true, false, true, false], &mut rng).unwrap();
            match b.as_slice() {
                [false, false, true] => seen[0] += 1,
                [true, false, false] => seen[1] += 1,
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(seen[0] > 850 && seen[1] > 850);
        assert_eq!(couple_down(&[false, false], &mut rng).unwrap_err(), DacsError::NoFlippableOne);
    }

    #[test]
    fn rounding_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(randomized_round(&[0.0; 5], &mut rng).is_empty());
        assert_eq!(randomized_round(&[1.0, 0.0, 1.0], &mut rng), vec![0, 2]);
    }

    #[test]
    fn schedule_covers_fixture_once() {
        let grid: Vec<usize> = (1..=6).collect();
        let paths = warm_start_schedule(6, 2, 4, &grid);
        let mut cells: Vec<(usize, usize)> = paths.iter().flat_map(|p| p.cells.clone()).collect();
        let total: usize = grid.iter().map(|&t| support_range(t, 6, 2, 4).len()).sum();
        assert_eq!(cells.len(), total);
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), total);
        assert_eq!(warm_start_schedule(1, 3, 4, &[1]), vec![CoupledPath { diagonal: 4, cells: vec![(1, 3)] }]);
    }

    #[test]
    fn zero_evalues_give_zero() {
        let sigma = [1.0];
        let prog = RelaxedProgram { kind: RelaxedKind::Markowitz { gamma: 1.0 }, beta: 5.0, sigma: &sigma[..0], dim: 0, alpha: 0.5, m: 4 };
        let sol = solve_relaxed(&prog, None, &PgdConfig::default()).unwrap();
        assert!(sol.chi.is_empty());
    }

    #[test]
    fn markowitz_small_gamma_selects_all() {
        let eye = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let prog = RelaxedProgram { kind: RelaxedKind::Markowitz { gamma: 1e-3 }, beta: 5.0 / 3.0, sigma: &eye, dim: 4, alpha: 0.6, m: 4 };
        let sol = solve_relaxed(&prog, None, &PgdConfig::default()).unwrap();
        assert!(sol.chi.iter().all(|&v| (v - 1.0).abs() < 1e-9), "{:?}", sol.chi);
    }
}
