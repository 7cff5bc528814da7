use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dacs::conformal::bh_stopping_time;
use dacs::data::build_score_state;
use dacs::harness::sim::{simulate, SimSetting, SimSpec};
use dacs::metrics::{markowitz_gamma_hint, rbf_similarity, Bandwidth, DiversityMetric};
use dacs::par::Parallelism;
use dacs::qp::PgdConfig;
use dacs::relaxed::{relaxed_reward_table, McSettings, RelaxedContext};
use dacs::stopping::build_grid;
use dacs::underrep::{underrep_reward_table, CategoryCounts};

const POLICIES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn underrep(c: &mut Criterion) {
    let d = simulate(&SimSpec::new(SimSetting::Underrep(1), 300, 200), 1).unwrap();
    let st = build_score_state(&d.calib, &d.test, None).unwrap();
    let alpha = 0.5;
    let tau = bh_stopping_time(&st, alpha);
    let counts = CategoryCounts::from_state(&st, 3).unwrap();
    let grid: Vec<usize> = (1..=tau).collect();
    let mut g = c.benchmark_group("underrep_reward_table");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_with_input(BenchmarkId::new(name, tau), &policy, |b, &p| {
            b.iter(|| black_box(underrep_reward_table(&st, &counts, alpha, tau, &grid, p).unwrap()))
        });
    }
    g.finish();
}

fn relaxed(c: &mut Criterion) {
    let d = simulate(&SimSpec::new(SimSetting::Similarity(2), 60, 30), 2).unwrap();
    let st = build_score_state(&d.calib, &d.test, None).unwrap();
    let sigma = rbf_similarity(&d.pooled_x, Bandwidth::Auto).unwrap();
    let gamma = markowitz_gamma_hint(&sigma);
    let metric = DiversityMetric::Markowitz { sigma, gamma };
    let alpha = 0.3;
    let tau = bh_stopping_time(&st, alpha).max(1);
    let grid = build_grid(tau, 10);
    let ctx = RelaxedContext::new(&st, &metric, alpha, 50, PgdConfig::default()).unwrap();
    let mc = McSettings { draws: 50, warm_start: true, seed: 3 };
    let mut g = c.benchmark_group("relaxed_reward_table");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_with_input(BenchmarkId::new(name, tau), &policy, |b, &p| {
            b.iter(|| black_box(relaxed_reward_table(&st, &ctx, tau, &grid, mc, p).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, underrep, relaxed);
criterion_main!(benches);
