use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use smoothzo::exec::Exec;
use smoothzo::problems::{generate_instance, localization_problem, quadratic, GenerateSpec, Loss};
use smoothzo::smoothing::Estimator;
use smoothzo::{Problem, RngStream, SmoothingConfig};

fn bench_problem(c: &mut Criterion, label: &str, problem: &Problem, x: &[f64], delta: f64) {
    let cfg = SmoothingConfig::new(delta, problem.dim()).unwrap();
    let mut group = c.benchmark_group(format!("estimate/{label}"));
    for batch in [256u64, 4096, 65_536] {
        group.throughput(Throughput::Elements(batch));
        for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
            let est = Estimator::new(cfg).with_exec(exec);
            group.bench_with_input(BenchmarkId::new(name, batch), &batch, |b, &batch| {
                let mut rng = RngStream::new(0, 0);
                b.iter(|| black_box(est.estimate(problem, black_box(x), batch, &mut rng).unwrap()))
            });
        }
    }
    group.finish();
}

fn estimator(c: &mut Criterion) {
    let instance = generate_instance(&GenerateSpec::standard(Loss::Pow5, 0)).unwrap();
    let loc = localization_problem(&instance).unwrap();
    let x0 = vec![0.1; loc.dim()];
    bench_problem(c, "localization-pow5", &loc, &x0, 1e-4);

    let q = quadratic(100);
    let x = vec![0.5; 100];
    bench_problem(c, "quadratic-d100", &q.problem, &x, 0.01);
}

criterion_group!(benches, estimator);
criterion_main!(benches);
