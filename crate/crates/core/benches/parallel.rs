//! Parallel against sequential execution of the per-vertex kernels, one full
//! step, and a sweep over time steps.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flatflow::exec;
use flatflow::geometry::{compute_curvature, estimate_ubc_radius, shapes};
use flatflow::mm_step::{step, Reference, StepConfig};

fn modes<T>(c: &mut Criterion, group: &str, size: usize, mut f: impl FnMut() -> T) {
    let mut g = c.benchmark_group(group);
    g.sample_size(20);
    g.bench_function(BenchmarkId::new("parallel", size), |b| b.iter(|| black_box(f())));
    g.bench_function(BenchmarkId::new("sequential", size), |b| {
        b.iter(|| exec::sequential(|| black_box(f())))
    });
    g.finish();
}

fn kernels(c: &mut Criterion) {
    for subdiv in [3, 4] {
        let s = shapes::ellipsoid(1.2, 1.0, 0.8, subdiv).unwrap();
        let n = s.n_vertices();
        let curv = compute_curvature(&s).unwrap();
        modes(c, "curvature", n, || compute_curvature(&s).unwrap());
        modes(c, "ubc", n, || estimate_ubc_radius(&s, &curv));
        let r = Reference::new(s.clone()).unwrap();
        let x: Vec<f64> = s.vertices().iter().map(|p| p.x * p.y).collect();
        modes(c, "matvec", n, || r.solver.stiffness().mul_vec(&x));
    }
}

fn full_step(c: &mut Criterion) {
    let r2 = Reference::new(shapes::ellipse(1.2, 0.8, 1024).unwrap()).unwrap();
    modes(c, "step_2d", 1024, || step(&r2, &StepConfig { h: 1e-5, ..Default::default() }).unwrap());
    let r3 = Reference::new(shapes::ellipsoid(1.2, 1.0, 0.8, 4).unwrap()).unwrap();
    let n = r3.n();
    modes(c, "step_3d", n, || step(&r3, &StepConfig { h: 1e-5, ..Default::default() }).unwrap());
}

fn h_sweep(c: &mut Criterion) {
    let r = Reference::new(shapes::ellipse(1.2, 0.8, 512).unwrap()).unwrap();
    let hs: Vec<f64> = (0..8).map(|i| 1e-4 / 2f64.powi(i)).collect();
    modes(c, "h_sweep", hs.len(), || {
        exec::map_slice(&hs, |&h| step(&r, &StepConfig { h, ..Default::default() }).unwrap().distance)
    });
}

criterion_group!(benches, kernels, full_step, h_sweep);
criterion_main!(benches);
