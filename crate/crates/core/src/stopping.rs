//! Conditional supports, reward/Snell tables, the Snell envelope on a unit or
//! coarse grid, and extraction of the optimal stopping time.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::error::{DacsError, Result};
use crate::numeric::hypergeom_pmf;
use crate::seed;

/// Ω_t = [max(N_τ, n − t), min(n, τ − t + N_τ)].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SupportRange {
    pub lo: usize,
    pub hi: usize,
}

impl SupportRange {
    pub fn len(&self) -> usize {
        self.hi + 1 - self.lo
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: usize) -> bool {
        (self.lo..=self.hi).contains(&s)
    }
}

pub fn support_range(t: usize, tau_bh: usize, n_tau: usize, n: usize) -> SupportRange {
    debug_assert!(t >= 1 && t <= tau_bh);
    SupportRange { lo: n_tau.max(n.saturating_sub(t)), hi: n.min(tau_bh - t + n_tau) }
}

/// Values indexed by (t, s) for grid times t and s ∈ Ω_t, stored densely per
/// row with offset lo_t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTable {
    pub tau_bh: usize,
    pub n_tau: usize,
    pub n: usize,
    pub grid: Vec<usize>,
    pub lo: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

pub type RewardTable = CellTable;
pub type SnellTable = CellTable;

impl CellTable {
    /// Builds a table by evaluating `f(t, s)` on every cell.
    pub fn from_fn(tau_bh: usize, n_tau: usize, n: usize, grid: &[usize], mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut lo = Vec::with_capacity(grid.len());
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid {
            let sr = support_range(t, tau_bh, n_tau, n);
            lo.push(sr.lo);
            values.push((sr.lo..=sr.hi).map(|s| f(t, s)).collect());
        }
        CellTable { tau_bh, n_tau, n, grid: grid.to_vec(), lo, values }
    }

    /// Assembles a table from precomputed rows aligned with `grid`.
    pub fn from_rows(tau_bh: usize, n_tau: usize, n: usize, grid: &[usize], rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut lo = Vec::with_capacity(grid.len());
        for (&t, row) in grid.iter().zip(&rows) {
            let sr = support_range(t, tau_bh, n_tau, n);
            if row.len() != sr.len() {
                return Err(DacsError::MissingCell { t, s: sr.lo + row.len().min(sr.len()) });
            }
            lo.push(sr.lo);
        }
        if rows.len() != grid.len() {
            return Err(DacsError::InvalidParameter("row count differs from grid".into()));
        }
        Ok(CellTable { tau_bh, n_tau, n, grid: grid.to_vec(), lo, values: rows })
    }

    fn row_of(&self, t: usize) -> Option<usize> {
        self.grid.binary_search(&t).ok()
    }

    pub fn get(&self, t: usize, s: usize) -> Option<f64> {
        let r = self.row_of(t)?;
        s.checked_sub(self.lo[r]).and_then(|i| self.values[r].get(i)).copied()
    }

    pub fn cells(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    fn is_unit_grid(&self) -> bool {
        self.grid.len() == self.tau_bh && self.grid.iter().enumerate().all(|(i, &t)| t == i + 1)
    }
}

/// E_1 = R_1; E_t(s) = max(R_t(s), ((t−n+s)/t) E_{t−1}(s) + ((n−s)/t) E_{t−1}(s+1)).
pub fn snell_envelope(rewards: &RewardTable) -> Result<SnellTable> {
    if !rewards.is_unit_grid() {
        return Err(DacsError::InvalidParameter("fine Snell envelope needs the full grid 1..τ_BH".into()));
    }
    let n = rewards.n;
    let mut out = rewards.clone();
    for r in 1..rewards.grid.len() {
        let t = rewards.grid[r];
        let (prev_lo, prev) = (out.lo[r - 1], out.values[r - 1].clone());
        let prev_get = |s: usize| s.checked_sub(prev_lo).and_then(|i| prev.get(i)).copied();
        for (i, e) in out.values[r].iter_mut().enumerate() {
            let s = rewards.lo[r] + i;
            let w_stay = (t + s - n) as f64 / t as f64;
            let w_move = (n - s) as f64 / t as f64;
            let mut cont = 0.0;
            if w_stay > 0.0 {
                cont += w_stay * prev_get(s).ok_or(DacsError::MissingCell { t: t - 1, s })?;
            }
            if w_move > 0.0 {
                cont += w_move * prev_get(s + 1).ok_or(DacsError::MissingCell { t: t - 1, s: s + 1 })?;
            }
            *e = e.max(cont);
        }
    }
    Ok(out)
}

/// Snell envelope on an arbitrary increasing grid starting at 1: continuation
/// values mix the previous grid row with hypergeometric weights.
pub fn coarse_snell(rewards: &RewardTable) -> Result<SnellTable> {
    if rewards.grid.first() != Some(&1) || rewards.grid.last() != Some(&rewards.tau_bh) {
        return Err(DacsError::InvalidParameter("grid must start at 1 and end at τ_BH".into()));
    }
    let n = rewards.n;
    let mut out = rewards.clone();
    for r in 1..rewards.grid.len() {
        let (t, t_prev) = (rewards.grid[r], rewards.grid[r - 1]);
        let gap = t - t_prev;
        let (prev_lo, prev) = (out.lo[r - 1], out.values[r - 1].clone());
        for (i, e) in out.values[r].iter_mut().enumerate() {
            let s = rewards.lo[r] + i;
            // calibration points among positions t_prev+1..t: j ~ Hypergeom(t, n − s, gap)
            let pmf = hypergeom_pmf(t, n - s, gap);
            let mut cont = 0.0;
            for (k, e_prev) in prev.iter().enumerate() {
                let s_prev = prev_lo + k;
                if s_prev < s {
                    continue;
                }
                let w = pmf.get(s_prev - s).copied().unwrap_or(0.0);
                if w > 0.0 {
                    cont += w * e_prev;
                }
            }
            *e = e.max(cont);
        }
    }
    Ok(out)
}

/// Snell envelope on whatever grid the table carries.
pub fn snell_auto(rewards: &RewardTable) -> Result<SnellTable> {
    if rewards.is_unit_grid() {
        snell_envelope(rewards)
    } else {
        coarse_snell(rewards)
    }
}

/// τ* = max{t in grid : R_t(N_t) ≥ E_t(N_t)}; `observed_n[t]` is N_t.
pub fn optimal_stopping_time(rewards: &RewardTable, snell: &SnellTable, observed_n: &[usize]) -> Result<usize> {
    for &t in rewards.grid.iter().rev() {
        let s = observed_n[t];
        let r = rewards.get(t, s).ok_or(DacsError::MissingCell { t, s })?;
        let e = snell.get(t, s).ok_or(DacsError::MissingCell { t, s })?;
        if r >= e {
            return Ok(t);
        }
    }
    Err(DacsError::MissingCell { t: 1, s: observed_n.get(1).copied().unwrap_or(0) })
}

/// Evenly spaced integer grid on [1, τ_BH] with both endpoints; the full grid
/// when τ_BH ≤ target.
pub fn build_grid(tau_bh: usize, target_q: usize) -> Vec<usize> {
    assert!(target_q >= 2, "grid needs at least two points");
    if tau_bh <= target_q {
        return (1..=tau_bh).collect();
    }
    let span = (tau_bh - 1) as f64;
    let mut grid: Vec<usize> = (0..target_q)
        .map(|q| 1 + (q as f64 * span / (target_q - 1) as f64).round() as usize)
        .collect();
    grid.dedup();
    grid
}

/// Uniform draw from B(t, s): length-t binary vector with n − s ones.
pub fn sample_membership<R: Rng>(t: usize, ones: usize, rng: &mut R) -> Vec<bool> {
    let mut b = vec![false; t];
    for i in sample(rng, t, ones).into_iter() {
        b[i] = true;
    }
    b
}

/// Monte Carlo reward: mean of `opt_value(b)` over L uniform draws from B(t, s),
/// draw ℓ seeded by (master, t, s, ℓ).
pub fn mc_reward(t: usize, s: usize, n: usize, draws: usize, master: u64, opt_value: impl Fn(&[bool]) -> f64) -> f64 {
    assert!(draws >= 1);
    let ones = n - s;
    let mut acc = 0.0;
    for l in 0..draws {
        let mut rng = seed::rng(master, &[seed::TAG_CELL, t as u64, s as u64, l as u64]);
        acc += opt_value(&sample_membership(t, ones, &mut rng));
    }
    acc / draws as f64
}

/// Writes `t,s,R,E` rows for debugging.
pub fn write_tables_csv(rewards: &RewardTable, snell: &SnellTable, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,s,R,E")?;
    for (r, &t) in rewards.grid.iter().enumerate() {
        for (i, v) in rewards.values[r].iter().enumerate() {
            let s = rewards.lo[r] + i;
            writeln!(f, "{t},{s},{v},{}", snell.values[r][i])?;
        }
    }
    Ok(())
}
