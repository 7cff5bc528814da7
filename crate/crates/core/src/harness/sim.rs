//! Synthetic data generators: hierarchical Gaussian mixtures for the
//! underrepresentation index (u1–u6) and continuous-covariate settings for the
//! similarity metrics (s1–s4).

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::Serialize;

use crate::data::{CalibrationSample, Diversification, TestSample};
use crate::error::{DacsError, Result};
use crate::harness::ols::QuadraticOls;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SimSetting {
    /// Hierarchical mixture settings 1..=6 with a categorical Z.
    Underrep(u8),
    /// Continuous settings 1..=4 with Z = X.
    Similarity(u8),
}

impl FromStr for SimSetting {
    type Err = DacsError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DacsError::UnknownSetting(s.to_string());
        let (kind, num) = s.split_at(s.len().min(1));
        let k: u8 = num.parse().map_err(|_| bad())?;
        match kind {
            "u" if (1..=6).contains(&k) => Ok(SimSetting::Underrep(k)),
            "s" if (1..=4).contains(&k) => Ok(SimSetting::Similarity(k)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SimSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimSetting::Underrep(k) => write!(f, "u{k}"),
            SimSetting::Similarity(k) => write!(f, "s{k}"),
        }
    }
}

/// Parameters of one hierarchical mixture.
#[derive(Debug, Clone)]
pub struct MixtureParams {
    pub pi: Vec<f64>,
    pub pi_sub: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub regression: fn(f64) -> f64,
}

impl MixtureParams {
    pub fn categories(&self) -> usize {
        self.pi.len()
    }
}

pub fn mixture_params(k: u8) -> Result<MixtureParams> {
    let third = 1.0 / 3.0;
    let p = match k {
        1 => MixtureParams {
            pi: vec![third; 3],
            pi_sub: vec![vec![0.8, 0.05, 0.15], vec![0.2, 0.6, 0.2], vec![0.2, 0.2, 0.6]],
            mu: vec![-0.5, 1.5, 2.0],
            regression: |x| x,
        },
        2 | 5 => MixtureParams {
            pi: if k == 2 { vec![0.5, 0.5] } else { vec![0.7, 0.3] },
            pi_sub: vec![vec![0.8, 0.05, 0.15], vec![0.15, 0.75, 0.1]],
            mu: vec![0.0, -2.0, 1.5],
            regression: |x| x * x - 1.0,
        },
        3 => MixtureParams {
            pi: vec![0.5, 0.5],
            pi_sub: vec![vec![0.05, 0.85, 0.1], vec![0.4, 0.2, 0.4]],
            mu: vec![0.0, -std::f64::consts::PI, 0.7],
            regression: |x| 2.0 * x.cos(),
        },
        4 => MixtureParams {
            pi: vec![0.25; 4],
            pi_sub: vec![
                vec![0.2, 0.0, 0.0, 0.0, 0.8],
                vec![0.0, 0.22, 0.35, 0.43, 0.0],
                vec![0.15, 0.35, 0.15, 0.1, 0.25],
                vec![0.2, 0.05, 0.05, 0.05, 0.65],
            ],
            mu: vec![-2.0, -1.0, 0.0, 1.5, 3.0],
            regression: |x| if x > 0.0 { 1.5 } else { -1.5 },
        },
        6 => MixtureParams {
            pi: vec![third; 3],
            pi_sub: vec![vec![1.0, 0.0, 0.0], vec![0.2, 0.2, 0.6], vec![0.2, 0.6, 0.2]],
            mu: vec![-0.75, 0.5, 1.2],
            regression: |x| x * x * x + x,
        },
        _ => return Err(DacsError::UnknownSetting(format!("u{k}"))),
    };
    Ok(p)
}

const S1_MEANS: [[f64; 3]; 5] = [[1.0, -1.0, 1.0], [0.75, 4.0, 2.0], [-2.0, -1.5, 1.0], [1.5, 2.0, 1.5], [-5.0, 3.0, 2.0]];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSpec {
    pub setting: SimSetting,
    pub n: usize,
    pub m: usize,
    pub train: usize,
}

impl SimSpec {
    pub fn new(setting: SimSetting, n: usize, m: usize) -> Self {
        SimSpec { setting, n, m, train: 1000 }
    }

    /// Number of categories for underrepresentation settings.
    pub fn categories(&self) -> Option<usize> {
        match self.setting {
            SimSetting::Underrep(k) => mixture_params(k).ok().map(|p| p.categories()),
            SimSetting::Similarity(_) => None,
        }
    }
}

/// One simulated replicate. Test responses are kept only as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub calib: Vec<CalibrationSample>,
    pub test: Vec<TestSample>,
    pub test_y: Vec<f64>,
    /// Covariates of calibration then test rows (pooled order); these double
    /// as the diversification vectors in the similarity settings.
    pub pooled_x: Vec<Vec<f64>>,
}

type PreparedMixture = (MixtureParams, WeightedIndex<f64>, Vec<WeightedIndex<f64>>);

struct Draw {
    z: Diversification,
    x: Vec<f64>,
    y: f64,
}

fn draw_one<R: Rng>(setting: SimSetting, mix: Option<&PreparedMixture>, rng: &mut R) -> Draw {
    let g = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    match setting {
        SimSetting::Underrep(_) => {
            let (p, top, subs) = mix.expect("mixture prepared");
            let c = top.sample(rng);
            let sub = subs[c].sample(rng);
            let x = p.mu[sub] + g(rng);
            let y = (p.regression)(x) + g(rng);
            Draw { z: Diversification::Category(c), x: vec![x], y }
        }
        SimSetting::Similarity(k) => {
            let x: Vec<f64> = if k == 1 {
                let comp = rng.random_range(0..S1_MEANS.len());
                let half = Normal::new(0.0, 0.5).unwrap();
                S1_MEANS[comp].iter().map(|&mu| mu + half.sample(rng)).collect()
            } else {
                (0..5).map(|_| g(rng)).collect()
            };
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            let mean = match k {
                1 => x[0] * x[1] + x[2],
                2 => norm2 - 3.5,
                3 => 2.0 * x[0].cos(),
                _ => 3.5 - norm2,
            };
            let y = mean + g(rng);
            Draw { z: Diversification::Vector(x.clone()), x, y }
        }
    }
}

/// Draws training, calibration and test sets and fits the least-squares
/// predictor on the training set.
pub fn simulate(spec: &SimSpec, replicate_seed: u64) -> Result<SimData> {
    let mix = match spec.setting {
        SimSetting::Underrep(k) => {
            let p = mixture_params(k)?;
            let top = WeightedIndex::new(&p.pi).map_err(|e| DacsError::InvalidParameter(e.to_string()))?;
            let subs = p
                .pi_sub
                .iter()
                .map(|w| WeightedIndex::new(w).map_err(|e| DacsError::InvalidParameter(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            Some((p, top, subs))
        }
        SimSetting::Similarity(k) if (1..=4).contains(&k) => None,
        SimSetting::Similarity(k) => return Err(DacsError::UnknownSetting(format!("s{k}"))),
    };
    if spec.m == 0 {
        return Err(DacsError::EmptyTestSet);
    }
    let mut rng = seed::rng(replicate_seed, &[]);
    let mut sample = |count: usize| -> Vec<Draw> { (0..count).map(|_| draw_one(spec.setting, mix.as_ref(), &mut rng)).collect() };
    let train = sample(spec.train);
    let calib = sample(spec.n);
    let test = sample(spec.m);

    let fit = QuadraticOls::fit(&train.iter().map(|d| d.x.clone()).collect::<Vec<_>>(), &train.iter().map(|d| d.y).collect::<Vec<_>>())?;
    let pooled_x = calib.iter().chain(&test).map(|d| d.x.clone()).collect();
    Ok(SimData {
        calib: calib.into_iter().map(|d| CalibrationSample { mu_hat: fit.predict(&d.x), z: d.z, y: d.y }).collect(),
        test_y: test.iter().map(|d| d.y).collect(),
        test: test.into_iter().map(|d| TestSample { mu_hat: fit.predict(&d.x), z: d.z }).collect(),
        pooled_x,
    })
}
