mod common;

use std::time::Instant;

use dacs::numeric::quad_form;
use dacs::oracle::{box_qp_oracle, rsc_violation};
use dacs::qp::{pgd_minimize, project_capped_simplex, project_rsc, PgdConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn pair(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-1.0f64..2.0, d), prop::collection::vec(-1.0f64..2.0, d))
}

fn rsc_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..9).prop_flat_map(|d| (pair(d), 0.0f64..=1.0)).prop_map(|((y, y2), u)| {
        let d = y.len() as f64;
        // κ spans [1/d, 1.2] so both special cases and the general sweep occur
        let kappa = 1.0 / d + u * (1.2 - 1.0 / d);
        (y, y2, kappa)
    })
}

fn simplex_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
    (1usize..9)
        .prop_flat_map(|d| (pair(d), prop::collection::vec(0.05f64..1.0, d), 0.0f64..=1.0))
        .prop_map(|((y, y2), cap, u)| {
            let total = u * cap.iter().sum::<f64>();
            (y, y2, cap, total)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rsc_projection_is_idempotent_and_nonexpansive((y, y2, kappa) in rsc_case()) {
        let p = project_rsc(&y, kappa);
        let p2 = project_rsc(&y2, kappa);
        prop_assert!(rsc_violation(&p, kappa) <= 1e-12);
        prop_assert!(dist(&project_rsc(&p, kappa), &p) <= 1e-9);
        prop_assert!(dist(&p, &p2) <= dist(&y, &y2) + 1e-9);
    }

    #[test]
    fn capped_simplex_projection_is_idempotent_and_nonexpansive((y, y2, cap, total) in simplex_case()) {
        let p = project_capped_simplex(&y, &cap, total).unwrap();
        let p2 = project_capped_simplex(&y2, &cap, total).unwrap();
        prop_assert!((p.iter().sum::<f64>() - total).abs() <= 1e-9);
        prop_assert!(p.iter().zip(&cap).all(|(x, c)| *x >= 0.0 && *x <= *c));
        prop_assert!(dist(&project_capped_simplex(&p, &cap, total).unwrap(), &p) <= 1e-9);
        prop_assert!(dist(&p, &p2) <= dist(&y, &y2) + 1e-9);
    }
}

#[test]
fn rsc_projection_beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for _ in 0..40 {
        let d = rng.random_range(2..=6);
        let kappa = rng.random_range(1.0 / d as f64..1.0);
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..1.5)).collect();
        let best = dist(&project_rsc(&y, kappa), &y);
        let mut tried = 0;
        while tried < 10_000 {
            // feasible by construction: a capped vector mixed toward a constant one
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let w = rng.random::<f64>();
            let level = rng.random::<f64>();
            let x: Vec<f64> = u.iter().map(|v| (1.0 - w) * v + w * level).collect();
            if rsc_violation(&x, kappa) > 0.0 {
                continue;
            }
            assert!(best <= dist(&x, &y) + 1e-9, "feasible point closer than the projection");
            tried += 1;
        }
    }
}

#[test]
fn rsc_projection_scales_quadratically() {
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let mut time = |d: usize| {
        let ys: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| rng.random_range(-0.5..1.5)).collect()).collect();
        let kappa = 4.0 / d as f64;
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let clock = Instant::now();
            for y in &ys {
                std::hint::black_box(project_rsc(y, kappa));
            }
            best = best.min(clock.elapsed().as_secs_f64());
        }
        best
    };
    let (small, large) = (time(400), time(800));
    assert!(large <= 8.0 * small, "d=400: {small:.4}s, d=800: {large:.4}s");
}

fn ill_conditioned(rng: &mut ChaCha8Rng, p: usize) -> (Vec<f64>, Vec<f64>) {
    // Q = V diag(λ) Vᵀ with λ from 1e-3 to 1e2 via a random Householder V
    let v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let h = |i: usize, j: usize| (i == j) as u8 as f64 - 2.0 * v[i] * v[j] / vv;
    let lambda: Vec<f64> = (0..p).map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / (p - 1) as f64)).collect();
    let mut q = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            q[i * p + j] = (0..p).map(|k| h(i, k) * lambda[k] * h(j, k)).sum();
        }
    }
    let c: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
    (q, c)
}

#[test]
fn pgd_restarts_and_matches_box_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut restarted = 0;
    for _ in 0..20 {
        let p = rng.random_range(3..=6);
        let (q, c) = ill_conditioned(&mut rng, p);
        let f = |x: &[f64]| 0.5 * quad_form(&q, x) + x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let grad = |x: &[f64], g: &mut [f64]| {
            for i in 0..p {
                g[i] = (0..p).map(|j| q[i * p + j] * x[j]).sum::<f64>() + c[i];
            }
        };
        let clip = |x: &[f64]| x.iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<_>>();
        let cfg = PgdConfig { tol: 1e-14, ..PgdConfig::default() };
        let out = pgd_minimize(f, grad, clip, &vec![0.5; p], &cfg).unwrap();
        let (_, best) = box_qp_oracle(&q, &c);
        assert!(out.objective - best <= 1e-6 * (1.0 + best.abs()), "pgd {} oracle {best}", out.objective);
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "objective rose: {} -> {}", w[0], w[1]);
        }
        restarted += (out.restarts > 0) as usize;
    }
    assert!(restarted > 0, "no restart on any ill-conditioned problem");
}
