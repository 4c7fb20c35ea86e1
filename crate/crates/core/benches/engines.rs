use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mstruct::mideals::classify_projection;
use mstruct::normcore::{search_lower_bound, MapProblem, SearchStop};
use mstruct::opspace::{OpSpace, SpaceMap, StandardKind};
use mstruct::{CMatrix, Config};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn modes() -> [(&'static str, Config); 2] {
    [
        ("parallel", Config { parallel: true, ..Config::default() }),
        ("sequential", Config { parallel: false, ..Config::default() }),
    ]
}

fn search(c: &mut Criterion) {
    mstruct::par::init_threads_from_env();
    let x = Arc::new(OpSpace::standard(StandardKind::Full(2, 2)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = SpaceMap::endo(x, CMatrix::random_gaussian(4, 4, &mut rng)).unwrap();
    let problem = MapProblem::from_map(&m);
    let mut group = c.benchmark_group("multistart_search");
    group.sample_size(10);
    for (name, cfg) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| search_lower_bound(&problem, cfg, &[], SearchStop::never()).unwrap())
        });
    }
    group.finish();
}

fn classify(c: &mut Criterion) {
    let x = Arc::new(OpSpace::standard(StandardKind::Column(3)).unwrap());
    let p = SpaceMap::endo(x, CMatrix::diag_real(&[1.0, 0.0, 0.0])).unwrap();
    let mut group = c.benchmark_group("classify_projection");
    group.sample_size(10);
    for (name, cfg) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| classify_projection(&p, cfg, &[]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, search, classify);
criterion_main!(benches);
