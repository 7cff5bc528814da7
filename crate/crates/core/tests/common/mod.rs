#![allow(dead_code)]

use dacs::data::{CalibrationSample, Diversification, TestSample};
use dacs::metrics::SimilarityMatrix;
use rand::Rng;

/// Random categorical instance. Calibration μ̂ values sit on a 1/64 grid,
/// drawn without replacement, and test values are offset by half a step, so
/// finite scores never tie.
pub fn categorical<R: Rng>(rng: &mut R, n: usize, m: usize, c: usize) -> (Vec<CalibrationSample>, Vec<TestSample>) {
    let mut pool: Vec<i32> = (-256..256).collect();
    let mut draw = |rng: &mut R| pool.swap_remove(rng.random_range(0..pool.len())) as f64 / 64.0;
    let calib = (0..n)
        .map(|_| CalibrationSample {
            z: Diversification::Category(rng.random_range(0..c)),
            mu_hat: draw(rng),
            y: if rng.random_bool(0.4) { rng.random_range(0.1..1.0) } else { -rng.random_range(0.0..1.0) },
        })
        .collect();
    let test = (0..m).map(|_| TestSample { z: Diversification::Category(rng.random_range(0..c)), mu_hat: draw(rng) + 1.0 + 1.0 / 128.0 }).collect();
    (calib, test)
}

/// RBF Gram matrix of random points in the plane plus a small ridge.
pub fn random_pd<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    let pts: Vec<[f64; 2]> = (0..p).map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]).collect();
    let mut s = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let d2 = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
            s[i * p + j] = (-d2 / 2.0).exp() + if i == j { 0.05 } else { 0.0 };
        }
    }
    s
}

pub fn similarity<R: Rng>(rng: &mut R, p: usize) -> SimilarityMatrix {
    SimilarityMatrix::new(p, random_pd(rng, p)).unwrap()
}

/// Vector-valued instance with z in the plane.
pub fn continuous<R: Rng>(rng: &mut R, n: usize, m: usize) -> (Vec<CalibrationSample>, Vec<TestSample>) {
    let (calib, test) = categorical(rng, n, m, 2);
    let vec_z = |rng: &mut R| Diversification::Vector(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
    (
        calib.into_iter().map(|c| CalibrationSample { z: vec_z(rng), ..c }).collect(),
        test.into_iter().map(|t| TestSample { z: vec_z(rng), ..t }).collect(),
    )
}

pub fn pooled_z(calib: &[CalibrationSample], test: &[TestSample]) -> Vec<Vec<f64>> {
    calib
        .iter()
        .map(|c| &c.z)
        .chain(test.iter().map(|t| &t.z))
        .map(|z| match z {
            Diversification::Vector(v) => v.clone(),
            Diversification::Category(_) => panic!("categorical z"),
        })
        .collect()
}
