//! Accelerated projected gradient descent with adaptive restarts, and the two
//! projections it is used with: the capped simplex and the relaxed
//! self-consistency polytope {0 ≤ x ≤ 1, x_i ≤ κ·1ᵀx}.

use serde::{Deserialize, Serialize};

use crate::error::{DacsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub max_iters: usize,
    /// Relative objective change that counts as stalled.
    pub tol: f64,
    /// Consecutive stalled iterations required to stop.
    pub patience: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub restart: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig { max_iters: 20_000, tol: 1e-9, patience: 5, initial_step: 1.0, shrink: 0.5, restart: true }
    }
}

impl PgdConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Objective at every accepted iterate, starting with x0.
    pub trace: Vec<f64>,
    /// Iterations at which a restart fired.
    pub restart_at: Vec<usize>,
}

/// Minimises f over a convex set given its Euclidean projection.
///
/// A restart discards the candidate and resets momentum when the gradient
/// test `(y − x⁺)ᵀ(x − x⁻) > 0` fires or the objective would increase; the next
/// step is then a plain projected-gradient step from the current iterate.
pub fn pgd_minimize<F, G, P>(f: F, grad: G, proj: P, x0: &[f64], cfg: &PgdConfig) -> Result<PgdOutcome>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64]) -> Vec<f64>,
{
    if !(cfg.tol > 0.0 && cfg.shrink > 0.0 && cfg.shrink < 1.0 && cfg.initial_step > 0.0) {
        return Err(DacsError::InvalidParameter("bad PGD configuration".into()));
    }
    let d = x0.len();
    let mut x = proj(x0);
    let mut fx = f(&x);
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut momentum = false;
    let mut theta = 1.0f64;
    let mut step = cfg.initial_step;
    let mut g = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut stalled = 0;
    let mut out = PgdOutcome {
        x: Vec::new(),
        objective: fx,
        iterations: 0,
        restarts: 0,
        converged: false,
        trace: vec![fx],
        restart_at: Vec::new(),
    };
    if d == 0 {
        out.x = x;
        out.converged = true;
        return Ok(out);
    }

    for it in 1..=cfg.max_iters {
        out.iterations = it;
        grad(&y, &mut g);
        let fy = if momentum { f(&y) } else { fx };
        let (x_new, f_new) = loop {
            for i in 0..d {
                z[i] = y[i] - step * g[i];
            }
            let cand = proj(&z);
            let f_cand = f(&cand);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..d {
                let diff = cand[i] - y[i];
                lin += g[i] * diff;
                sq += diff * diff;
            }
            let bound = fy + lin + sq / (2.0 * step);
            if f_cand <= bound + 1e-15 * bound.abs().max(1.0) || step < 1e-30 {
                break (cand, f_cand);
            }
            step *= cfg.shrink;
        };
        if !f_new.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            return Err(DacsError::SolverDiverged(it));
        }

        if cfg.restart && momentum {
            let mut test = 0.0;
            for i in 0..d {
                test += (y[i] - x_new[i]) * (x[i] - x_prev[i]);
            }
            if test > 0.0 || f_new > fx {
                y.copy_from_slice(&x);
                theta = 1.0;
                momentum = false;
                out.restarts += 1;
                out.restart_at.push(it);
                continue;
            }
        }

        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        x_prev = std::mem::replace(&mut x, x_new);
        fx = f_new;
        out.trace.push(fx);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        theta = theta_next;
        for i in 0..d {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        momentum = beta > 0.0;

        if rel < cfg.tol {
            stalled += 1;
            if stalled >= cfg.patience {
                out.converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    out.objective = fx;
    out.x = x;
    Ok(out)
}

/// Euclidean projection onto {0 ≤ x ≤ cap, Σx = total} by a sweep over the
/// breakpoints of μ ↦ Σ clip(y_i − μ, 0, cap_i).
pub fn project_capped_simplex(y: &[f64], cap: &[f64], total: f64) -> Result<Vec<f64>> {
    let d = y.len();
    assert_eq!(cap.len(), d);
    let cap_sum: f64 = cap.iter().sum();
    if cap_sum < total * (1.0 - 1e-12) || total < 0.0 {
        return Err(DacsError::Infeasible { cap_sum, total });
    }
    if total >= cap_sum {
        return Ok(cap.to_vec());
    }
    // events: at y_i − cap_i coordinate i leaves its cap, at y_i it hits zero
    let mut events: Vec<(f64, usize, bool)> = Vec::with_capacity(2 * d);
    for i in 0..d {
        events.push((y[i] - cap[i], i, true));
        events.push((y[i], i, false));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.2.cmp(&a.2)));
    // g(μ) = capped_sum + free_y − free·μ on the current open interval
    let mut capped_sum = cap_sum;
    let mut free_y = 0.0;
    let mut free = 0usize;
    let mut mu = f64::NEG_INFINITY;
    let mut found = false;
    for &(at, i, leaves_cap) in &events {
        let g_at = capped_sum + free_y - free as f64 * at;
        if g_at <= total {
            mu = if free > 0 { (capped_sum + free_y - total) / free as f64 } else { at };
            found = true;
            break;
        }
        if leaves_cap {
            capped_sum -= cap[i];
            free_y += y[i];
            free += 1;
        } else {
            free_y -= y[i];
            free -= 1;
        }
    }
    if !found {
        // total == 0 and every coordinate reached zero
        mu = events.last().map(|e| e.0).unwrap_or(0.0);
    }
    Ok(y.iter().zip(cap).map(|(&v, &c)| (v - mu).clamp(0.0, c)).collect())
}

/// Nonzero e-value level β with `count` nonzero entries admits a nonzero RSC
/// vector iff β ≥ m/(α·count).
pub fn feasibility_check(beta: f64, count: usize, alpha: f64, m: usize) -> bool {
    count > 0 && crate::numeric::le_tol(m as f64 / (alpha * count as f64), beta)
}

struct Sorted {
    ys: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Candidate {
    Zero,
    /// Zeros below `l`, free middle `l..=k`, cap `c` above `k`; shift `mu`.
    Pattern { l: usize, k: usize, mu: f64, cap: f64 },
    /// Top `h` coordinates at `value`, the rest zero.
    Top { h: usize, value: f64 },
}

/// Euclidean projection onto {0 ≤ x ≤ 1, x_i ≤ κ·1ᵀx}.
pub fn project_rsc(y: &[f64], kappa: f64) -> Vec<f64> {
    let d = y.len();
    assert!(kappa > 0.0);
    if kappa >= 1.0 {
        return y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    }
    if kappa < 1.0 / d as f64 {
        return vec![0.0; d];
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut p1 = vec![0.0; d + 1];
    let mut p2 = vec![0.0; d + 1];
    for j in 0..d {
        p1[j + 1] = p1[j] + ys[j];
        p2[j + 1] = p2[j] + ys[j] * ys[j];
    }
    let sorted = Sorted { ys, p1, p2 };

    let mut best = (sorted.p2[d], Candidate::Zero);
    let mut consider = |q: f64, c: Candidate| {
        if q < best.0 {
            best = (q, c);
        }
    };
    sweep(&sorted, kappa, false, &mut consider);
    sweep(&sorted, kappa, true, &mut consider);

    // binary vertices in the upper range: top j set to 1
    let inv = 1.0 / kappa;
    for j in (inv.ceil() as usize).max(1)..=d {
        let hi_sq = sorted.p2[d] - sorted.p2[d - j];
        let hi_sum = sorted.p1[d] - sorted.p1[d - j];
        let q = sorted.p2[d - j] + hi_sq - 2.0 * hi_sum + j as f64;
        consider(q, Candidate::Top { h: j, value: 1.0 });
    }
    // κh = 1: top h move together at κs for any s in the lower range
    let h = inv.round() as usize;
    if h >= 1 && h <= d && (kappa * h as f64 - 1.0).abs() <= 1e-12 {
        let hi_sum = sorted.p1[d] - sorted.p1[d - h];
        let hi_sq = sorted.p2[d] - sorted.p2[d - h];
        let v = (hi_sum / h as f64).clamp(0.0, 1.0);
        let q = sorted.p2[d - h] + hi_sq - 2.0 * v * hi_sum + h as f64 * v * v;
        consider(q, Candidate::Top { h, value: v });
    }

    let mut xs = vec![0.0; d];
    match best.1 {
        Candidate::Zero => {}
        Candidate::Pattern { l, k, mu, cap } => {
            for j in l..=k {
                xs[j] = (sorted.ys[j] - mu).clamp(0.0, cap);
            }
            for v in xs.iter_mut().skip(k + 1) {
                *v = cap;
            }
        }
        Candidate::Top { h, value } => {
            for v in xs.iter_mut().skip(d - h) {
                *v = value;
            }
        }
    }
    let mut out = vec![0.0; d];
    for (j, &i) in order.iter().enumerate() {
        out[i] = xs[j];
    }
    out
}

/// Interval sweep over patterns (zeros, free middle l..=k, capped top).
/// Lower range s ∈ [0, 1/κ] has cap κs; upper range s ∈ [1/κ, d] has cap 1.
fn sweep(st: &Sorted, kappa: f64, upper: bool, consider: &mut impl FnMut(f64, Candidate)) {
    let d = st.ys.len();
    let inv = 1.0 / kappa;
    let (s_lo, s_hi) = if upper { (inv, d as f64) } else { (0.0, inv) };
    let ys = &st.ys;
    let mut r = 0usize;
    for l in 0..d {
        // middle values lie in [μ, μ + cap] with cap ≤ 1
        if r < l {
            r = l;
        }
        while r + 1 < d && ys[r + 1] <= ys[l] + 1.0 + 1e-12 {
            r += 1;
        }
        for k in l..=r {
            let w = (k - l + 1) as f64;
            let h = (d - 1 - k) as f64;
            let a = st.p1[k + 1] - st.p1[l];
            let u = st.p1[d] - st.p1[k + 1];
            let u2 = st.p2[d] - st.p2[k + 1];
            // μ(s) = a0 + a1 s, cap(s) = c0 + c1 s
            let (a0, a1, c0, c1) = if upper {
                ((a + h) / w, -1.0 / w, 1.0, 0.0)
            } else {
                (a / w, (kappa * h - 1.0) / w, 0.0, kappa)
            };
            let mut lo = s_lo;
            let mut hi = s_hi;
            let mut ok = true;
            // p + q s ≥ r  (or ≤ when !ge)
            let mut bound = |p: f64, q: f64, rhs: f64, ge: bool| {
                let slack = 1e-12 * (p.abs() + rhs.abs() + 1.0);
                if q.abs() < 1e-300 {
                    if (ge && p < rhs - slack) || (!ge && p > rhs + slack) {
                        ok = false;
                    }
                    return;
                }
                let s = (rhs - p) / q;
                if ge == (q > 0.0) {
                    lo = lo.max(s);
                } else {
                    hi = hi.min(s);
                }
            };
            if l > 0 {
                bound(a0, a1, ys[l - 1], true);
            }
            bound(a0, a1, ys[l], false);
            bound(a0 + c0, a1 + c1, ys[k], true);
            if k + 1 < d {
                bound(a0 + c0, a1 + c1, ys[k + 1], false);
            }
            if !ok || lo > hi + 1e-12 * hi.abs().max(1.0) {
                continue;
            }
            let s_star = if upper {
                a + h
            } else {
                let c = kappa * h - 1.0;
                let den = h * kappa * kappa + c * c / w;
                if den > 0.0 {
                    (kappa * u - c * a / w) / den
                } else {
                    lo
                }
            };
            let s = s_star.clamp(lo, hi.max(lo));
            let mu = a0 + a1 * s;
            let cap = c0 + c1 * s;
            let q = st.p2[l] + h * cap * cap - 2.0 * cap * u + u2 + w * mu * mu;
            consider(q, Candidate::Pattern { l, k, mu, cap });
        }
    }
}
