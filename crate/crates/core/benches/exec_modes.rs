//! Sequential versus rayon execution on the three parallel hot paths:
//! Monte-Carlo success estimation, optimizer restarts and the bound suite.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hyptest::harness::generators::Generator;
use hyptest::harness::{run_bound_suite, SuiteConfig};
use hyptest::optimizer::max_hellinger_softmax;
use hyptest::tester::estimate_success;
use hyptest::{Constraint, EnergyConstraint, Execution, OptimizerConfig, OracleSpec, Query, Seed, SoftmaxQuery};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn success(c: &mut Criterion) {
    let (a, m) = Generator::Gaussian.instance(50, 3, Seed(1)).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let spec = OracleSpec::new(a.clone(), a.add_scaled(&m, 0.1).unwrap(), Constraint::Energy(e)).unwrap();
    let q = Query::Softmax(SoftmaxQuery::new(vec![0.6, 0.0, 0.8], &e).unwrap());
    let mut group = c.benchmark_group("estimate_success");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_success(&spec, &q, 100, 2000, Seed(2), exec).unwrap())
        });
    }
    group.finish();
}

fn optimizer(c: &mut Criterion) {
    let (a, m) = Generator::Gaussian.instance(50, 4, Seed(3)).unwrap();
    let b = a.add_scaled(&m, 0.2).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let mut group = c.benchmark_group("max_hellinger_softmax");
    for (name, exec) in MODES {
        let cfg = OptimizerConfig { restarts: 32, exec, ..OptimizerConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| max_hellinger_softmax(black_box(&a), &b, &e, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bound_suite(c: &mut Criterion) {
    let mut group = c.benchmark_group("bound_suite");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SuiteConfig { instances: 2000, model_instances: 100, exec, ..SuiteConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_bound_suite(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, success, optimizer, bound_suite);
criterion_main!(benches);
