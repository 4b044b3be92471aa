use birkhoff_core::flow::Flow;
use birkhoff_core::measure::{stream_id, GaussianSampler};
use birkhoff_core::norms::l4_quartic;
use birkhoff_core::testutil::random_state;
use birkhoff_core::{IntegratorConfig, Model, ModelParams};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn quartic(c: &mut Criterion) {
    let mut g = c.benchmark_group("l4_quartic");
    for n in [8, 32, 128] {
        let u = random_state(n, 1, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| b.iter(|| l4_quartic(black_box(u))));
    }
    g.finish();
}

fn vector_field(c: &mut Criterion) {
    let mut g = c.benchmark_group("vector_field");
    for n in [4, 16, 32] {
        let model = Model::new(ModelParams::new(0.95, 1, n, 1.0).unwrap()).unwrap();
        let u = random_state(n, 2, 1.0);
        g.bench_with_input(BenchmarkId::new("table", n), &u, |b, u| {
            b.iter(|| model.vector_field(black_box(u)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("naive", n), &u, |b, u| {
            b.iter(|| model.vector_field_naive(black_box(u)).unwrap())
        });
    }
    g.finish();
}

fn flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("flow_t1");
    g.sample_size(20);
    for n in [4, 16] {
        let model = Model::new(ModelParams::new(1.0, 1, n, 1.0).unwrap()).unwrap();
        let flow = Flow::new(&model, IntegratorConfig::default()).unwrap();
        let u = random_state(n, 3, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| b.iter(|| flow.evolve(black_box(u), 1.0).unwrap()));
    }
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let p = ModelParams::new(1.0, 1, 32, 1.0).unwrap();
    let s = GaussianSampler::new(&p, 0, stream_id("bench"));
    let mut i = 0u64;
    c.bench_function("gaussian_draw_n32", |b| {
        b.iter(|| {
            i += 1;
            s.draw(black_box(i))
        })
    });
}

criterion_group!(benches, quartic, vector_field, flow, sampler);
criterion_main!(benches);
