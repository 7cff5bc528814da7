//! Quick randomized self-check of the fast engines against the oracles in
//! [`crate::oracle`]. Backs the `validate` subcommand of the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conformal::{e_values_at, is_self_consistent};
use crate::data::{build_score_state, CalibrationSample, Diversification, TestSample};
use crate::metrics::DiversityMetric;
use crate::oracle;
use crate::pipeline::diversity_of;
use crate::qp::{project_capped_simplex, project_rsc, PgdConfig};
use crate::relaxed::{solve_relaxed, RelaxedKind, RelaxedProgram};
use crate::stopping::{optimal_stopping_time, sample_membership, snell_envelope, CellTable};
use crate::underrep::{greedy_underrep_select, min_survival_fft};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub worst_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &'static str, cases: usize, worst_error: f64, tolerance: f64) -> Self {
        Check { name, cases, worst_error, tolerance, passed: worst_error <= tolerance }
    }
}

fn random_categorical(rng: &mut ChaCha8Rng, c: usize) -> (Vec<CalibrationSample>, Vec<TestSample>) {
    let n = rng.random_range(1..=12);
    let m = rng.random_range(1..=8);
    let calib = (0..n)
        .map(|_| CalibrationSample {
            z: Diversification::Category(rng.random_range(0..c)),
            mu_hat: rng.random_range(-2.0..2.0),
            y: if rng.random_bool(0.4) { rng.random_range(0.1..1.0) } else { -rng.random_range(0.0..1.0) },
        })
        .collect();
    let test = (0..m).map(|_| TestSample { z: Diversification::Category(rng.random_range(0..c)), mu_hat: rng.random_range(-1.0..3.0) }).collect();
    (calib, test)
}

fn greedy(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut misses = 0usize;
    for _ in 0..cases {
        let c = rng.random_range(2..=3);
        let (calib, test) = random_categorical(rng, c);
        let state = build_score_state(&calib, &test, None)?;
        let alpha = rng.random_range(0.1..0.9);
        let t = rng.random_range(1..=state.len());
        let sel = greedy_underrep_select(&state, t, alpha, c)?;
        let value = diversity_of(&DiversityMetric::Underrep { categories: c }, &state, &sel);
        let ok = value == oracle::exhaustive_underrep(&state, t, alpha, c) && is_self_consistent(&sel, &e_values_at(&state, t), alpha, state.m());
        misses += (!ok) as usize;
    }
    Ok(Check::new("greedy vs exhaustive (mismatches)", cases, misses as f64, 0.0))
}

fn snell(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let tau = rng.random_range(1..=10);
        let n_tau = rng.random_range(0..=3);
        let ones = rng.random_range(0..=tau);
        let grid: Vec<usize> = (1..=tau).collect();
        let table = CellTable::from_fn(tau, n_tau, ones + n_tau, &grid, |_, _| rng.random_range(-1.0..1.0));
        let fast = snell_envelope(&table)?;
        let brute = oracle::brute_force_snell(&table);
        for (a, b) in fast.values.iter().flatten().zip(brute.values.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        let b = sample_membership(tau, ones, rng);
        let mut observed = vec![n_tau; tau + 1];
        for t in (0..tau).rev() {
            observed[t] = observed[t + 1] + b[t] as usize;
        }
        if optimal_stopping_time(&table, &fast, &observed)? != optimal_stopping_time(&table, &brute, &observed)? {
            worst = f64::INFINITY;
        }
    }
    Ok(Check::new("snell envelope vs brute force", cases, worst, 1e-10))
}

fn fft(rng: &mut ChaCha8Rng, cases: usize) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = rng.random_range(2..=4);
        let pops: Vec<usize> = (0..c).map(|_| rng.random_range(1..=30)).collect();
        let draws = rng.random_range(0..=pops.iter().sum::<usize>());
        let nu_max = pops.iter().min().unwrap() + 1;
        let got = min_survival_fft(&pops, draws, nu_max);
        for (a, b) in got.iter().zip(oracle::mvh_min_survival(&pops, draws, nu_max)) {
            worst = worst.max((a - b).abs());
        }
    }
    Check::new("fft survival vs enumeration", cases, worst, 1e-9)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn projections(rng: &mut ChaCha8Rng, cases: usize) -> Result<Vec<Check>> {
    let (mut rsc, mut simplex) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let d = rng.random_range(1..=6);
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
        let kappa = rng.random_range(1.0 / d as f64..=1.0);
        rsc = rsc.max(dist(&project_rsc(&y, kappa), &oracle::grid_project_rsc(&y, kappa)));
        let cap: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
        let total = rng.random_range(0.0..cap.iter().sum::<f64>());
        simplex = simplex.max(dist(&project_capped_simplex(&y, &cap, total)?, &oracle::bisect_capped_simplex(&y, &cap, total)));
    }
    Ok(vec![Check::new("rsc projection vs grid search", cases, rsc, 1e-6), Check::new("capped simplex projection vs bisection", cases, simplex, 1e-6)])
}

fn relaxed(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let cfg = PgdConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let p = rng.random_range(1..=5);
        let pts: Vec<[f64; 2]> = (0..p).map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]).collect();
        let mut sigma = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                let d2 = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
                sigma[i * p + j] = (-d2 / 2.0).exp() + if i == j { 0.05 } else { 0.0 };
            }
        }
        let (alpha, m) = (0.3, 10);
        let kappa = rng.random_range(1.0 / p as f64..=1.0);
        let gamma = rng.random_range(0.1..2.0);
        for kind in [RelaxedKind::Markowitz { gamma }, RelaxedKind::Sharpe] {
            let prog = RelaxedProgram { kind, beta: kappa * m as f64 / alpha, sigma: &sigma, dim: p, alpha, m };
            let got = solve_relaxed(&prog, None, &cfg)?.objective;
            let want = match kind {
                RelaxedKind::Markowitz { gamma } => oracle::markowitz_oracle(&sigma, gamma, kappa).1,
                RelaxedKind::Sharpe => oracle::sharpe_qp_oracle(&sigma, kappa.min(1.0)).map_or(0.0, |(_, f)| 1.0 / (2.0 * f).sqrt()),
            };
            worst = worst.max((got - want).abs());
        }
    }
    Ok(Check::new("relaxed programs vs face enumeration", 2 * cases, worst, 1e-5))
}

/// Runs every check with `cases` random instances each.
pub fn run_validation(seed: u64, cases: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![greedy(&mut rng, cases)?, snell(&mut rng, cases)?, fft(&mut rng, cases)];
    out.extend(projections(&mut rng, cases)?);
    out.push(relaxed(&mut rng, cases)?);
    Ok(out)
}
