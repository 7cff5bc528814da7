//! Brute-force references for small instances. Slow by construction; used by
//! the test suites and the `validate` subcommand.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::conformal::{e_values_at, is_self_consistent};
use crate::data::ScoreState;
use crate::metrics::DiversityMetric;
use crate::stopping::{support_range, CellTable, RewardTable, SnellTable};

/// Largest underrepresentation index over all self-consistent subsets of the
/// time-τ e-values (including ∅).
pub fn exhaustive_underrep(state: &ScoreState, tau: usize, alpha: f64, categories: usize) -> f64 {
    let metric = DiversityMetric::Underrep { categories };
    let empty = metric.empty_value();
    if tau == 0 {
        return empty;
    }
    let e = e_values_at(state, tau);
    let cand = e.positive();
    let z: Vec<_> = (0..state.m()).map(|j| state.sorted_z()[state.test_rank(j) - 1].clone()).collect();
    let mut best = empty;
    for mask in 1u64..(1u64 << cand.len()) {
        let set: Vec<usize> = (0..cand.len()).filter(|&k| mask >> k & 1 == 1).map(|k| cand[k]).collect();
        if is_self_consistent(&set, &e, alpha, state.m()) {
            best = best.max(metric.eval_set(&set, &z));
        }
    }
    best
}

/// Snell envelope by recursion over revealed suffixes of the membership
/// vector; transition probabilities come from counting arrangements of the
/// unrevealed prefix rather than from a formula.
pub fn brute_force_snell(rewards: &RewardTable) -> SnellTable {
    let (tau, n_tau, n) = (rewards.tau_bh, rewards.n_tau, rewards.n);
    assert!(tau <= 20, "brute force is exponential in τ");
    let mut memo: HashMap<(usize, u32), f64> = HashMap::new();
    CellTable::from_fn(tau, n_tau, n, &rewards.grid, |t, s| {
        // any suffix with s − N_τ ones over positions t+1..τ
        let suffix = (1u32 << (s - n_tau)) - 1;
        value(rewards, t, suffix, &mut memo)
    })
}

fn value(rewards: &RewardTable, t: usize, suffix: u32, memo: &mut HashMap<(usize, u32), f64>) -> f64 {
    if let Some(&v) = memo.get(&(t, suffix)) {
        return v;
    }
    let s = rewards.n_tau + suffix.count_ones() as usize;
    let r = rewards.get(t, s).expect("cell in support");
    let v = if t == 1 {
        r
    } else {
        // count arrangements of the first t positions by the bit at position t
        let ones = rewards.n - s;
        let (mut with_one, mut with_zero) = (0u64, 0u64);
        for arrangement in 0u32..(1u32 << t) {
            if arrangement.count_ones() as usize != ones {
                continue;
            }
            if arrangement >> (t - 1) & 1 == 1 {
                with_one += 1;
            } else {
                with_zero += 1;
            }
        }
        let total = (with_one + with_zero) as f64;
        let mut cont = 0.0;
        if with_zero > 0 {
            cont += with_zero as f64 / total * value(rewards, t - 1, suffix << 1, memo);
        }
        if with_one > 0 {
            cont += with_one as f64 / total * value(rewards, t - 1, (suffix << 1) | 1, memo);
        }
        r.max(cont)
    };
    memo.insert((t, suffix), v);
    v
}

/// S(ν) = P(min_c H_c ≥ ν) by enumerating every count vector, with exact
/// integer binomials.
pub fn mvh_min_survival(pops: &[usize], draws: usize, nu_max: usize) -> Vec<f64> {
    let total: usize = pops.iter().sum();
    let denom = binom_u128(total, draws) as f64;
    let mut surv = vec![0.0; nu_max + 1];
    let mut counts = vec![0usize; pops.len()];
    fn rec(c: usize, left: usize, pops: &[usize], counts: &mut Vec<usize>, surv: &mut [f64], denom: f64) {
        if c == pops.len() {
            if left == 0 {
                let w: f64 = counts.iter().zip(pops).map(|(&k, &p)| binom_u128(p, k) as f64).product::<f64>() / denom;
                let mn = *counts.iter().min().unwrap();
                for (nu, v) in surv.iter_mut().enumerate() {
                    if mn >= nu {
                        *v += w;
                    }
                }
            }
            return;
        }
        for k in 0..=pops[c].min(left) {
            counts[c] = k;
            rec(c + 1, left - k, pops, counts, surv, denom);
        }
    }
    rec(0, draws, pops, &mut counts, &mut surv, denom);
    surv
}

pub fn binom_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Projection onto {0 ≤ x ≤ cap, Σx = total} by bisection on the shift.
pub fn bisect_capped_simplex(y: &[f64], cap: &[f64], total: f64) -> Vec<f64> {
    let eval = |mu: f64| -> f64 { y.iter().zip(cap).map(|(&v, &c)| (v - mu).clamp(0.0, c)).sum() };
    let mut lo = y.iter().zip(cap).map(|(&v, &c)| v - c).fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    y.iter().zip(cap).map(|(&v, &c)| (v - mu).clamp(0.0, c)).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Projection onto the RSC set by a dense grid over s = 1ᵀx, refined by
/// golden-section search, with the per-slice capped-simplex projection.
pub fn grid_project_rsc(y: &[f64], kappa: f64) -> Vec<f64> {
    let d = y.len();
    let slice = |s: f64| -> Option<Vec<f64>> {
        let c = (kappa * s).min(1.0);
        if c * (d as f64) < s * (1.0 - 1e-14) {
            return None;
        }
        Some(bisect_capped_simplex(y, &vec![c; d], s))
    };
    let cost = |s: f64| slice(s).map_or(f64::INFINITY, |x| dist2(&x, y));
    let s_max = d as f64;
    let steps = 4000;
    let mut best_s = 0.0;
    let mut best = dist2(&vec![0.0; d], y);
    for i in 1..=steps {
        let s = s_max * i as f64 / steps as f64;
        let c = cost(s);
        if c < best {
            best = c;
            best_s = s;
        }
    }
    let h = s_max / steps as f64;
    let (mut a, mut b) = ((best_s - h).max(0.0), (best_s + h).min(s_max));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if cost(x1) <= cost(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let s = 0.5 * (a + b);
    match slice(s) {
        Some(x) if dist2(&x, y) <= best => x,
        _ if best_s == 0.0 => vec![0.0; d],
        _ => slice(best_s).unwrap(),
    }
}

/// A linear constraint aᵀx ≤ b (or = b when active).
#[derive(Debug, Clone)]
pub struct LinCon {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Minimises ½xᵀQx + cᵀx subject to `eq` and `ineq` by enumerating faces.
/// `options[i]` lists the sets of inequalities that may be active together
/// for coordinate i; the product of these choices is enumerated, each face
/// solved through its KKT system, and the best feasible point kept.
pub fn qp_face_enumeration(q: &[f64], c: &[f64], eq: &[LinCon], ineq: &[LinCon], options: &[Vec<Vec<usize>>]) -> Option<(Vec<f64>, f64)> {
    let p = c.len();
    let objective = |x: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..p {
            acc += c[i] * x[i];
            for j in 0..p {
                acc += 0.5 * x[i] * q[i * p + j] * x[j];
            }
        }
        acc
    };
    let feasible = |x: &[f64]| -> bool {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
        eq.iter().all(|k| (dot(&k.a) - k.b).abs() <= 1e-9) && ineq.iter().all(|k| dot(&k.a) <= k.b + 1e-9)
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut choice = vec![0usize; p];
    loop {
        let mut rows: Vec<&LinCon> = eq.iter().collect();
        for i in 0..p {
            for &k in &options[i][choice[i]] {
                rows.push(&ineq[k]);
            }
        }
        if rows.len() <= p {
            let r = rows.len();
            let mut kkt = DMatrix::<f64>::zeros(p + r, p + r);
            let mut rhs = DVector::<f64>::zeros(p + r);
            for i in 0..p {
                for j in 0..p {
                    kkt[(i, j)] = q[i * p + j];
                }
                rhs[i] = -c[i];
            }
            for (k, row) in rows.iter().enumerate() {
                for j in 0..p {
                    kkt[(p + k, j)] = row.a[j];
                    kkt[(j, p + k)] = row.a[j];
                }
                rhs[p + k] = row.b;
            }
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let x: Vec<f64> = sol.iter().take(p).copied().collect();
                if x.iter().all(|v| v.is_finite()) && feasible(&x) {
                    let f = objective(&x);
                    if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                        best = Some((x, f));
                    }
                }
            }
        }
        // odometer over the option product
        let mut i = 0;
        loop {
            if i == p {
                return best;
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn unit(p: usize, i: usize, scale: f64) -> Vec<f64> {
    let mut a = vec![0.0; p];
    a[i] = scale;
    a
}

/// Optimum of max 1ᵀχ − (γ/2)χᵀΣχ over the RSC set, returned as (χ, value).
pub fn markowitz_oracle(sigma: &[f64], gamma: f64, kappa: f64) -> (Vec<f64>, f64) {
    let p = (sigma.len() as f64).sqrt() as usize;
    let q: Vec<f64> = sigma.iter().map(|v| gamma * v).collect();
    let c = vec![-1.0; p];
    let mut ineq = Vec::new();
    let mut options = Vec::new();
    for i in 0..p {
        let base = ineq.len();
        ineq.push(LinCon { a: unit(p, i, -1.0), b: 0.0 });
        ineq.push(LinCon { a: unit(p, i, 1.0), b: 1.0 });
        let mut a = vec![-kappa; p];
        a[i] += 1.0;
        ineq.push(LinCon { a, b: 0.0 });
        options.push(vec![vec![], vec![base], vec![base + 1], vec![base + 2], vec![base + 1, base + 2]]);
    }
    let (x, f) = qp_face_enumeration(&q, &c, &[], &ineq, &options).expect("χ = 0 is feasible");
    (x, -f)
}

/// Optimum of min ½xᵀΣx over {0 ≤ x ≤ cap, 1ᵀx = 1}; None if infeasible.
pub fn sharpe_qp_oracle(sigma: &[f64], cap: f64) -> Option<(Vec<f64>, f64)> {
    let p = (sigma.len() as f64).sqrt() as usize;
    let eq = [LinCon { a: vec![1.0; p], b: 1.0 }];
    let mut ineq = Vec::new();
    let mut options = Vec::new();
    for i in 0..p {
        let base = ineq.len();
        ineq.push(LinCon { a: unit(p, i, -1.0), b: 0.0 });
        ineq.push(LinCon { a: unit(p, i, 1.0), b: cap });
        options.push(vec![vec![], vec![base], vec![base + 1]]);
    }
    qp_face_enumeration(sigma, &vec![0.0; p], &eq, &ineq, &options)
}

/// Minimiser of ½xᵀQx + cᵀx over [0,1]^p.
pub fn box_qp_oracle(q: &[f64], c: &[f64]) -> (Vec<f64>, f64) {
    let p = c.len();
    let mut ineq = Vec::new();
    let mut options = Vec::new();
    for i in 0..p {
        let base = ineq.len();
        ineq.push(LinCon { a: unit(p, i, -1.0), b: 0.0 });
        ineq.push(LinCon { a: unit(p, i, 1.0), b: 1.0 });
        options.push(vec![vec![], vec![base], vec![base + 1]]);
    }
    qp_face_enumeration(q, c, &[], &ineq, &options).expect("box is nonempty")
}

/// E[f(ξ)] for independent ξ_i ~ Bern(χ_i), by summing over all 2^p outcomes.
pub fn exhaustive_rounding_expectation(chi: &[f64], f: impl Fn(&[bool]) -> f64) -> f64 {
    let p = chi.len();
    let mut mask = vec![false; p];
    let mut acc = 0.0;
    for bits in 0u32..(1u32 << p) {
        let mut w = 1.0;
        for i in 0..p {
            mask[i] = bits >> i & 1 == 1;
            w *= if mask[i] { chi[i] } else { 1.0 - chi[i] };
        }
        if w > 0.0 {
            acc += w * f(&mask);
        }
    }
    acc
}

/// Maximum violation of the RSC constraints.
pub fn rsc_violation(x: &[f64], kappa: f64) -> f64 {
    let s: f64 = x.iter().sum();
    x.iter().map(|&v| (-v).max(v - 1.0).max(v - kappa * s)).fold(0.0, f64::max)
}

/// Fine Snell envelope cells in support, by t, for every valid (t, s).
pub fn all_cells(tau_bh: usize, n_tau: usize, n: usize) -> Vec<(usize, usize)> {
    (1..=tau_bh)
        .flat_map(|t| {
            let sr = support_range(t, tau_bh, n_tau, n);
            (sr.lo..=sr.hi).map(move |s| (t, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stopping::snell_envelope;

    #[test]
    fn binomials() {
        assert_eq!(binom_u128(10, 3), 120);
        assert_eq!(binom_u128(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn survival_tiny() {
        let s = mvh_min_survival(&[3, 2], 3, 2);
        assert!((s[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn brute_snell_matches_on_fixture_shape() {
        let rewards = CellTable::from_fn(6, 2, 4, &[1, 2, 3, 4, 5, 6], |t, s| ((t * 7 + s * 3) % 5) as f64 / 5.0);
        let fine = snell_envelope(&rewards).unwrap();
        let brute = brute_force_snell(&rewards);
        for (a, b) in fine.values.iter().flatten().zip(brute.values.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn box_qp_interior() {
        let (x, _) = box_qp_oracle(&[2.0, 0.0, 0.0, 2.0], &[-1.0, -1.0]);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rsc_grid_special_cases() {
        let x = grid_project_rsc(&[2.0, -1.0, 0.5], 1.0);
        assert!(dist2(&x, &[1.0, 0.0, 0.5]) < 1e-12);
    }
}
