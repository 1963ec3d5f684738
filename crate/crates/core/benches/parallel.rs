use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mlpipe::featsel::multisurf;
use mlpipe::hpo::{default_space, fixed_params, optimize, Budget, Problem};
use mlpipe::learners::{fit, Algorithm, HyperValue, LearnerSpec};
use mlpipe::par;
use mlpipe::simulate::{simulate, SimConfig};
use mlpipe::Matrix;

fn data(n: usize) -> (Matrix, Vec<u8>, Vec<mlpipe::FeatureKind>, Vec<String>) {
    let sim = simulate(&SimConfig { n_instances: n, ..SimConfig::default() }).unwrap();
    let d = sim.dataset;
    let x = d.values.to_complete().unwrap();
    (x, d.class_labels.clone(), d.kinds(), d.feature_names())
}

fn modes(c: &mut Criterion, name: &str, mut run: impl FnMut()) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new(name, "parallel"), |b| b.iter(&mut run));
    g.bench_function(BenchmarkId::new(name, "sequential"), |b| b.iter(|| par::sequential(&mut run)));
    g.finish();
}

fn bench_multisurf(c: &mut Criterion) {
    let (x, y, kinds, _) = data(800);
    modes(c, "multisurf", || {
        std::hint::black_box(multisurf(&x, &y, &kinds, 2000, 1));
    });
}

fn bench_forest(c: &mut Criterion) {
    let (x, y, kinds, names) = data(1600);
    let spec = LearnerSpec::new(Algorithm::RF, 7).with("n_estimators", HyperValue::Int(50));
    modes(c, "random_forest_fit", || {
        std::hint::black_box(fit(&spec, &x, &y, &kinds, &names).unwrap());
    });
}

fn bench_hpo(c: &mut Criterion) {
    let (x, y, kinds, names) = data(800);
    let problem = Problem { algorithm: Algorithm::DT, x: &x, y: &y, kinds: &kinds, names: &names, groups: None };
    let space = default_space(Algorithm::DT);
    let fixed = fixed_params(Algorithm::DT);
    modes(c, "hpo_decision_tree", || {
        let budget = Budget { trials: 8, inner_k: 3, seed: 3 };
        std::hint::black_box(optimize(&problem, &space, &fixed, budget, None).unwrap());
    });
}

criterion_group!(benches, bench_multisurf, bench_forest, bench_hpo);
criterion_main!(benches);
