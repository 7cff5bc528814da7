//! Exact path for the underrepresentation index: closed-form optimal values,
//! rewards through the survival function of the minimum of a multivariate
//! hypergeometric draw, and the greedy final selection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::ScoreState;
use crate::error::{DacsError, Result};
use crate::numeric::{ceil_tol, le_tol, LnFactorial};
use crate::par::{map_indexed, Parallelism};
use crate::stopping::{support_range, CellTable, RewardTable};

/// Per-time category counts over the first t sorted positions, all points and
/// test points only.
#[derive(Debug, Clone)]
pub struct CategoryCounts {
    c: usize,
    all: Vec<usize>,
    test: Vec<usize>,
}

impl CategoryCounts {
    pub fn from_state(state: &ScoreState, categories: usize) -> Result<Self> {
        let len = state.len();
        let c = categories;
        let mut all = vec![0usize; (len + 1) * c];
        let mut test = vec![0usize; (len + 1) * c];
        for (pos, z) in state.sorted_z().iter().enumerate() {
            let cat = z
                .category()
                .filter(|&k| k < c)
                .ok_or_else(|| DacsError::InvalidParameter(format!("position {pos}: label is not a category below {c}")))?;
            let (prev, cur) = (pos * c, (pos + 1) * c);
            for k in 0..c {
                all[cur + k] = all[prev + k];
                test[cur + k] = test[prev + k];
            }
            all[cur + cat] += 1;
            if !state.membership()[pos] {
                test[cur + cat] += 1;
            }
        }
        Ok(CategoryCounts { c, all, test })
    }

    pub fn categories(&self) -> usize {
        self.c
    }

    /// N_t^c for every c.
    pub fn all_at(&self, t: usize) -> &[usize] {
        &self.all[t * self.c..(t + 1) * self.c]
    }

    /// Test-only counts at time t.
    pub fn test_at(&self, t: usize) -> &[usize] {
        &self.test[t * self.c..(t + 1) * self.c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetParams {
    /// K_t = ⌈m(1+n−s)/(α(n+1))⌉, the minimum selection size.
    pub k: usize,
    /// ρ_t = (αt(n+1) − m)/(α(n+1) + m).
    pub rho: f64,
}

pub fn budget_params(t: usize, s: usize, alpha: f64, n: usize, m: usize) -> BudgetParams {
    let np1 = (n + 1) as f64;
    BudgetParams {
        k: ceil_tol((m * (1 + n - s)) as f64 / (alpha * np1)).max(1),
        rho: (alpha * t as f64 * np1 - m as f64) / (alpha * np1 + m as f64),
    }
}

/// n − s > ρ_t, evaluated as m(1+n−s) > α(n+1)(t−n+s) to avoid rounding in ρ.
pub fn budget_infeasible(t: usize, s: usize, alpha: f64, n: usize, m: usize) -> bool {
    let below = (t + s).saturating_sub(n);
    !le_tol((m * (1 + n - s)) as f64, alpha * (n + 1) as f64 * below as f64)
}

/// O_t for the underrepresentation index given test counts per category below t.
pub fn underrep_opt_value(t: usize, s: usize, test_counts: &[usize], alpha: f64, n: usize, m: usize) -> f64 {
    let c = test_counts.len();
    if budget_infeasible(t, s, alpha, n, m) {
        return -1.0 / c as f64;
    }
    let k = budget_params(t, s, alpha, n, m).k;
    let min = *test_counts.iter().min().unwrap();
    if c * min >= k {
        1.0 / c as f64
    } else {
        min as f64 / k as f64
    }
}

const LN_DENOM_FLOOR: f64 = -11.512925464970229; // ln 1e-5
const S_FLOOR: f64 = 1e-13;

/// S(ν) = P(min_c H_c ≥ ν) for H ~ MultiHypergeom(draws; pops), ν = 0..=nu_max.
/// Entries past min_c pops are zero.
pub fn min_survival_fft(pops: &[usize], draws: usize, nu_max: usize) -> Vec<f64> {
    let total: usize = pops.iter().sum();
    assert!(draws <= total, "more draws than population");
    let lf = LnFactorial::new(total.max(1));
    let mut planner = FftPlanner::new();
    survival_batch(pops, &[draws], &[nu_max], &lf, &mut planner).pop().unwrap()
}

/// Survival functions for several draw counts over the same populations.
///
/// Uses P(min H ≥ ν) = P(ΣM = k | M ≥ ν) · Π_c P(M_c ≥ ν) / P(ΣM = k) with
/// M_c ~ Bin(N_c, p) independent. The identity holds for every p, so draw
/// counts are grouped and each group gets p near k/total, keeping the
/// denominator away from zero; the conditional law of the sum comes from an
/// FFT convolution of truncated binomials.
fn survival_batch(
    pops: &[usize],
    ks: &[usize],
    nu_max: &[usize],
    lf: &LnFactorial,
    planner: &mut FftPlanner<f64>,
) -> Vec<Vec<f64>> {
    let total: usize = pops.iter().sum();
    let min_pop = pops.iter().copied().min().unwrap_or(0);
    let mut out: Vec<Vec<f64>> = ks
        .iter()
        .zip(nu_max)
        .map(|(_, &nu)| {
            let mut v = vec![0.0; nu + 1];
            v[0] = 1.0;
            v
        })
        .collect();

    // degenerate draw counts need no transform
    let mut interior: Vec<usize> = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let cap = nu_max[i].min(min_pop);
        if cap == 0 || k == 0 {
            continue;
        }
        if k == total {
            out[i][1..=cap].iter_mut().for_each(|v| *v = 1.0);
            continue;
        }
        interior.push(i);
    }
    if interior.is_empty() {
        return out;
    }
    interior.sort_by_key(|&i| ks[i]);

    let len = total + 1;
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut scratch = vec![Complex::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];

    let mut start = 0;
    while start < interior.len() {
        // grow the group while both extremes keep a usable denominator
        let k_lo = ks[interior[start]];
        let mut end = start + 1;
        while end < interior.len() {
            let k_hi = ks[interior[end]];
            let p = (k_lo + k_hi) as f64 / (2 * total) as f64;
            if lf.ln_binom_pmf(total, p, k_lo) < LN_DENOM_FLOOR || lf.ln_binom_pmf(total, p, k_hi) < LN_DENOM_FLOOR {
                break;
            }
            end += 1;
        }
        let group = &interior[start..end];
        let k_hi = ks[*group.last().unwrap()];
        let p = (k_lo + k_hi) as f64 / (2 * total) as f64;
        let nu_top = group.iter().map(|&i| nu_max[i].min(min_pop)).max().unwrap();

        // per-category binomial weights relative to their maximum, and suffix sums
        let mut weights: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(pops.len());
        for &nc in pops {
            let lp: Vec<f64> = (0..=nc).map(|w| lf.ln_binom_pmf(nc, p, w)).collect();
            let lmax = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = lp.iter().map(|v| (v - lmax).exp()).collect();
            let mut tail = vec![0.0; nc + 2];
            for j in (0..=nc).rev() {
                tail[j] = tail[j + 1] + w[j];
            }
            weights.push((lmax, w, tail));
        }
        let ln_den: Vec<f64> = group.iter().map(|&i| lf.ln_binom_pmf(total, p, ks[i])).collect();

        let mut acc = vec![Complex::new(0.0, 0.0); len];
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for nu in 1..=nu_top {
            let mut ln_tail = 0.0;
            let mut underflow = false;
            acc.iter_mut().for_each(|v| *v = Complex::new(1.0, 0.0));
            for (c, &nc) in pops.iter().enumerate() {
                let (lmax, w, tail) = &weights[c];
                let z = tail[nu];
                if z < 1e-290 {
                    underflow = true;
                    break;
                }
                ln_tail += lmax + z.ln();
                buf.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
                for j in nu..=nc {
                    buf[j] = Complex::new(w[j] / z, 0.0);
                }
                fwd.process_with_scratch(&mut buf, &mut scratch);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a *= b;
                }
            }
            if underflow {
                // tails this thin give survival far below the floor
                break;
            }
            inv.process_with_scratch(&mut acc, &mut scratch);
            let scale = 1.0 / len as f64;
            for (gi, &i) in group.iter().enumerate() {
                if nu > nu_max[i].min(min_pop) {
                    continue;
                }
                let conv = (acc[ks[i]].re * scale).max(0.0);
                let mut v = conv * (ln_tail - ln_den[gi]).exp();
                v = v.clamp(0.0, 1.0);
                if v < S_FLOOR {
                    v = 0.0;
                }
                out[i][nu] = v;
            }
        }
        start = end;
    }
    out
}

/// R from a survival function: E[O_t] given feasibility.
///
/// With J = ⌈K/C⌉, O = 1/C on {min ≥ J} and min/K below it, so
/// E[O] = S(J)/C + Σ_{ν=1}^{J−1} (S(ν) − S(J))/K.
fn reward_from_survival(surv: &[f64], k_budget: usize, c: usize) -> f64 {
    let j = k_budget.div_ceil(c);
    let s_at = |nu: usize| surv.get(nu).copied().unwrap_or(0.0);
    let s_j = s_at(j);
    let mut acc = 0.0;
    for nu in 1..j {
        acc += s_at(nu) - s_j;
    }
    s_j / c as f64 + acc / k_budget as f64
}

/// R_t(s) = E_exch[O_t | N_t = s] for one cell.
pub fn underrep_reward(t: usize, s: usize, counts: &CategoryCounts, alpha: f64, n: usize, m: usize) -> f64 {
    let c = counts.categories();
    if budget_infeasible(t, s, alpha, n, m) {
        return -1.0 / c as f64;
    }
    let k_budget = budget_params(t, s, alpha, n, m).k;
    let pops = counts.all_at(t);
    let draws = t + s - n;
    let surv = min_survival_fft(pops, draws, k_budget.div_ceil(c));
    reward_from_survival(&surv, k_budget, c)
}

/// Rewards on every cell of `grid`, one FFT batch per time.
pub fn underrep_reward_table(
    state: &ScoreState,
    counts: &CategoryCounts,
    alpha: f64,
    tau_bh: usize,
    grid: &[usize],
    policy: Parallelism,
) -> Result<RewardTable> {
    let (n, m) = (state.n(), state.m());
    let n_tau = state.calib_above(tau_bh);
    let c = counts.categories();
    let lf = LnFactorial::new(tau_bh.max(1));
    let rows = map_indexed(policy, grid.len(), |r| {
        let t = grid[r];
        let sr = support_range(t, tau_bh, n_tau, n);
        let pops = counts.all_at(t);
        let mut row = vec![-1.0 / c as f64; sr.len()];
        let mut cells = Vec::new();
        let mut draws = Vec::new();
        let mut nus = Vec::new();
        let mut budgets = Vec::new();
        for s in sr.lo..=sr.hi {
            if budget_infeasible(t, s, alpha, n, m) {
                continue;
            }
            let k_budget = budget_params(t, s, alpha, n, m).k;
            cells.push(s - sr.lo);
            draws.push(t + s - n);
            nus.push(k_budget.div_ceil(c));
            budgets.push(k_budget);
        }
        if !cells.is_empty() {
            let mut planner = FftPlanner::new();
            let surv = survival_batch(pops, &draws, &nus, &lf, &mut planner);
            for (i, cell) in cells.iter().enumerate() {
                row[*cell] = reward_from_survival(&surv[i], budgets[i], c);
            }
        }
        row
    });
    CellTable::from_rows(tau_bh, n_tau, n, grid, rows)
}

/// Greedy maximiser of the underrepresentation index among sets that are
/// self-consistent for the time-τ e-values. Returns sorted test indices.
///
/// Within a category, candidates with the lowest scores are taken first.
pub fn greedy_underrep_select(state: &ScoreState, tau: usize, alpha: f64, categories: usize) -> Result<Vec<usize>> {
    if tau == 0 {
        return Ok(Vec::new());
    }
    let (n, m) = (state.n(), state.m());
    let s = state.calib_above(tau);
    if budget_infeasible(tau, s, alpha, n, m) {
        return Ok(Vec::new());
    }
    let k_budget = budget_params(tau, s, alpha, n, m).k;
    let c = categories;

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (pos, z) in state.sorted_z()[..tau].iter().enumerate() {
        if state.membership()[pos] {
            continue;
        }
        let cat = z.category().filter(|&k| k < c).ok_or_else(|| DacsError::InvalidParameter(format!("position {pos}: bad category")))?;
        if let crate::data::Origin::Test(j) = state.sorted_scores()[pos].origin {
            groups[cat].push(j);
        }
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by_key(|&k| (groups[k].len(), k));
    let size = |i: usize| groups[order[i]].len();

    let mut take = vec![0usize; c];
    if c * size(0) >= k_budget {
        take.iter_mut().for_each(|v| *v = size(0));
    } else {
        let mut chosen = 0usize;
        let mut i = 0usize;
        while i < c && (c - i) * size(i) < k_budget - chosen {
            take[i] = size(i);
            chosen += size(i);
            i += 1;
        }
        if i < c {
            let floor = size(i - 1);
            let mut extra = k_budget - chosen - (c - i) * floor;
            for j in i..c {
                let add = extra.min(size(j) - floor);
                take[j] = floor + add;
                extra -= add;
            }
        }
    }
    let mut out: Vec<usize> = (0..c).flat_map(|i| groups[order[i]][..take[i]].iter().copied()).collect();
    out.sort_unstable();
    Ok(out)
}
