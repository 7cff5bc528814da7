//! Small numeric helpers shared across modules: tolerant comparisons,
//! log-factorials and distribution pmfs.

/// Relative slack for boundary comparisons such as `e >= m / (alpha |R|)`.
pub const REL_TOL: f64 = 1e-12;

/// `a <= b` up to relative slack.
#[inline]
pub fn le_tol(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * a.abs().max(b.abs())
}

/// Ceiling that snaps to a nearby integer first, so that `12 / 3.0000000000000004`
/// yields 4 rather than 5.
pub fn ceil_tol(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Table of ln(k!) built with compensated summation.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=max {
            let y = (k as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        LnFactorial { table }
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.table[k]
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        if k > n {
            f64::NEG_INFINITY
        } else {
            self.table[n] - self.table[k] - self.table[n - k]
        }
    }

    /// ln P(Bin(n, p) = k) for 0 < p < 1.
    #[inline]
    pub fn ln_binom_pmf(&self, n: usize, p: f64, k: usize) -> f64 {
        self.ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
    }
}

/// PMF of Hypergeom(population `total`, `successes`, `draws`) over the number of
/// successes drawn, indexed from 0. Built by the ratio recurrence from the mode
/// and normalised, which keeps relative error near machine precision.
pub fn hypergeom_pmf(total: usize, successes: usize, draws: usize) -> Vec<f64> {
    assert!(successes <= total && draws <= total);
    let mut out = vec![0.0; draws.min(successes) + 1];
    if draws == 1 {
        out[0] = (total - successes) as f64 / total as f64;
        if successes > 0 {
            out[1] = successes as f64 / total as f64;
        }
        return out;
    }
    let failures = total - successes;
    let lo = draws.saturating_sub(failures);
    let hi = draws.min(successes);
    if lo == hi {
        out[lo] = 1.0;
        return out;
    }
    let mode = ((((draws + 1) * (successes + 1)) as f64 / (total + 2) as f64).floor() as usize).clamp(lo, hi);
    out[mode] = 1.0;
    // p(j+1)/p(j) = (S-j)(g-j) / ((j+1)(T-S-g+j+1))
    for j in mode..hi {
        let num = ((successes - j) * (draws - j)) as f64;
        let den = ((j + 1) * (failures + j + 1 - draws)) as f64;
        out[j + 1] = out[j] * num / den;
    }
    for j in (lo..mode).rev() {
        let num = ((j + 1) * (failures + j + 1 - draws)) as f64;
        let den = ((successes - j) * (draws - j)) as f64;
        out[j] = out[j + 1] * num / den;
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

/// Dense symmetric quadratic form xᵀ A x for row-major `a` of side `x.len()`.
#[inline]
pub fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        if x[i] == 0.0 {
            continue;
        }
        let row = &a[i * d..(i + 1) * d];
        let mut r = 0.0;
        for j in 0..d {
            r += row[j] * x[j];
        }
        acc += x[i] * r;
    }
    acc
}

#[inline]
pub fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        let mut r = 0.0;
        for j in 0..d {
            r += row[j] * x[j];
        }
        out[i] = r;
    }
}

/// Mean and standard error (sd / sqrt(n), sample sd with n-1).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_snaps_float_noise() {
        assert_eq!(ceil_tol(12.0 / 3.0000000000000004), 4);
        assert_eq!(ceil_tol(8.0 / 3.0), 3);
        assert_eq!(ceil_tol(4.0), 4);
    }

    #[test]
    fn hypergeom_matches_direct_counts() {
        let lf = LnFactorial::new(60);
        for &(t, s, g) in &[(10, 4, 3), (20, 15, 7), (12, 0, 5), (9, 9, 4), (30, 11, 30)] {
            let pmf = hypergeom_pmf(t, s, g);
            for (j, p) in pmf.iter().enumerate() {
                let direct = if j > s || g - j > t - s {
                    0.0
                } else {
                    (lf.ln_choose(s, j) + lf.ln_choose(t - s, g - j) - lf.ln_choose(t, g)).exp()
                };
                assert!((p - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300, "{t} {s} {g} {j}");
            }
        }
    }

    #[test]
    fn mean_se_textbook() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.6666666666666667f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
