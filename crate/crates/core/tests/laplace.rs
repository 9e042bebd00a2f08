use std::f64::consts::PI;

use flatflow::geometry::{compute_curvature, shapes, DiscreteSurface, Point};
use flatflow::laplace::Hm1Solver;
use flatflow::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solver(s: &DiscreteSurface) -> Hm1Solver {
    Hm1Solver::assemble(s, &compute_curvature(s).unwrap()).unwrap()
}

fn angles(s: &DiscreteSurface) -> Vec<f64> {
    s.vertices().iter().map(|p| p.y.atan2(p.x)).collect()
}

fn cos_mode(s: &DiscreteSurface, k: f64) -> Vec<f64> {
    angles(s).iter().map(|t| (k * t).cos()).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn random_zero_mean(h: &Hm1Solver, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f: Vec<f64> = (0..h.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
    h.remove_means(&f)
}

#[test]
fn circle_stiffness_spectrum() {
    let s = shapes::circle(1.0, 256).unwrap();
    let h = solver(&s);
    for k in 1..=8 {
        let f = cos_mode(&s, k as f64);
        let kf = h.stiffness().mul_vec(&f);
        let rq = h.stiffness().quadratic_form(&f) / h.inner(&f, &f);
        assert!((rq / (k * k) as f64 - 1.0).abs() <= 1e-3, "k={k} rq={rq}");
        // cos kθ is an eigenvector, not only a good Rayleigh quotient
        let mf: Vec<f64> = f.iter().zip(h.mass()).map(|(a, m)| rq * a * m).collect();
        assert!(rel_err(&kf, &mf) <= 1e-10);
    }
}

#[test]
fn stiffness_kills_constants() {
    for s in [shapes::circle(1.0, 256).unwrap(), shapes::sphere(1.0, 3).unwrap()] {
        let h = solver(&s);
        let kc = h.stiffness().mul_vec(&vec![3.0; h.n()]);
        assert!(kc.iter().all(|v| v.abs() <= 1e-10));
    }
}

#[test]
fn stiffness_is_symmetric_and_mass_positive() {
    for s in [shapes::ellipse(1.3, 0.7, 200).unwrap(), shapes::ellipsoid(1.2, 1.0, 0.8, 3).unwrap()] {
        let h = solver(&s);
        assert!(h.stiffness().asymmetry() <= 1e-14);
        assert!(h.mass().iter().all(|&m| m > 0.0));
    }
}

#[test]
fn mass_total_matches_measure_to_discretization_order() {
    let s = shapes::circle(1.0, 256).unwrap();
    let total: f64 = solver(&s).mass().iter().sum();
    assert!((total / s.measure().perimeter - 1.0).abs() <= 1e-4);
    // area weights carry the exact measure
    let exact: f64 = solver(&s).area_weights().iter().sum();
    assert!((exact / s.measure().perimeter - 1.0).abs() <= 1e-12);

    let s = shapes::sphere(1.0, 4).unwrap();
    let h = solver(&s);
    let total: f64 = h.mass().iter().sum();
    assert!((total / s.measure().perimeter - 1.0).abs() <= 1e-3);
    let exact: f64 = h.area_weights().iter().sum();
    assert!((exact / s.measure().perimeter - 1.0).abs() <= 1e-10);
}

#[test]
fn sphere_first_eigenvalue() {
    let s = shapes::sphere(1.0, 4).unwrap();
    let h = solver(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut f = random_zero_mean(&h, &mut rng);
    for _ in 0..60 {
        f = h.solve_poisson(&f).unwrap().into_inner();
        let n = h.l2_norm(&f);
        f.iter_mut().for_each(|v| *v /= n);
    }
    let lambda = h.stiffness().quadratic_form(&f) / h.inner(&f, &f);
    assert!((lambda - 2.0).abs() <= 0.1, "{lambda}");
}

#[test]
fn laplacian_of_constant_vanishes() {
    let h = solver(&shapes::sphere(1.0, 3).unwrap());
    let lap = h.apply_laplacian(&vec![1.5; h.n()]).unwrap();
    assert!(lap.max_abs() <= 1e-10);
}

#[test]
fn circle_laplacian_eigenfunction() {
    let s = shapes::circle(1.0, 256).unwrap();
    let h = solver(&s);
    let f = cos_mode(&s, 3.0);
    let lap = h.apply_laplacian(&f).unwrap();
    let expect: Vec<f64> = f.iter().map(|v| -9.0 * v).collect();
    assert!(rel_err(&lap, &expect) <= 1e-2);
    let means = h.component_means(&lap);
    assert!(means[0].abs() <= 1e-12);
}

#[test]
fn sphere_laplacian_of_height() {
    let s = shapes::sphere(1.0, 4).unwrap();
    let h = solver(&s);
    let z: Vec<f64> = s.vertices().iter().map(|p| p.z).collect();
    let lap = h.apply_laplacian(&z).unwrap();
    let expect: Vec<f64> = z.iter().map(|v| -2.0 * v).collect();
    assert!(rel_err(&lap, &expect) <= 0.05, "{}", rel_err(&lap, &expect));
}

#[test]
fn poisson_of_zero_is_zero() {
    let h = solver(&shapes::circle(1.0, 64).unwrap());
    assert!(h.solve_poisson(&vec![0.0; 64]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn circle_poisson_inverts_modes() {
    let s = shapes::circle(1.0, 256).unwrap();
    let h = solver(&s);
    for k in 1..=6 {
        let xi = cos_mode(&s, k as f64);
        let f = h.solve_poisson(&xi).unwrap();
        let expect: Vec<f64> = xi.iter().map(|v| v / (k * k) as f64).collect();
        assert!(rel_err(&f, &expect) <= 1e-3, "k={k}");
    }
}

#[test]
fn poisson_rejects_incompatible_density() {
    let h = solver(&shapes::circle(1.0, 64).unwrap());
    let err = h.solve_poisson(&vec![1.0; 64]).unwrap_err();
    assert!(matches!(err, Error::Compatibility { component: 0, .. }), "{err}");
    assert!(h.hm1_norm(&vec![1.0; 64]).is_err());
}

#[test]
fn compatibility_is_checked_per_component() {
    let a = shapes::circle(1.0, 64).unwrap();
    let s = a.union(&a.translate(Point::new(3.0, 0.0, 0.0))).unwrap();
    let h = solver(&s);
    // zero total mean, but each component has a nonzero mean
    let xi: Vec<f64> = s.component_id().iter().map(|&c| if c == 0 { 1.0 } else { -1.0 }).collect();
    assert!(matches!(h.solve_poisson(&xi), Err(Error::Compatibility { .. })));
    let ok = h.remove_means(&xi);
    assert!(h.solve_poisson(&ok).is_ok());
}

#[test]
fn poisson_residual_and_zero_mean() {
    let s = shapes::ellipsoid(1.2, 1.0, 0.8, 3).unwrap();
    let h = solver(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xi = random_zero_mean(&h, &mut rng);
    let f = h.solve_poisson(&xi).unwrap();
    let kf = h.stiffness().mul_vec(&f);
    let mxi: Vec<f64> = xi.iter().zip(h.mass()).map(|(a, m)| a * m).collect();
    assert!(rel_err(&kf, &mxi) <= 1e-10);
    assert!(h.component_means(&f)[0].abs() <= 1e-12);
}

#[test]
fn hm1_of_circle_mode() {
    let s = shapes::circle(1.0, 256).unwrap();
    let h = solver(&s);
    let xi = cos_mode(&s, 2.0);
    let d = h.hm1_norm(&xi).unwrap();
    assert!((d - PI.sqrt() / 2.0).abs() <= 1e-3, "{d}");
    assert_eq!(h.hm1_norm(&vec![0.0; 256]).unwrap(), 0.0);
    let tripled: Vec<f64> = xi.iter().map(|v| 3.0 * v).collect();
    assert!((h.hm1_norm(&tripled).unwrap() / (3.0 * d) - 1.0).abs() <= 1e-12);
}

#[test]
fn norm_suite_of_circle_modes() {
    let s = shapes::circle(1.0, 512).unwrap();
    let h = solver(&s);
    let rp = PI.sqrt();
    for k in 1..=4 {
        let kf = k as f64;
        let n = h.norm_suite(&cos_mode(&s, kf)).unwrap();
        let hm1 = n.hm1.unwrap();
        assert!((n.l2 / rp - 1.0).abs() <= 1e-3);
        assert!((n.h1_semi / (kf * rp) - 1.0).abs() <= 1e-3);
        assert!((hm1 * kf / rp - 1.0).abs() <= 1e-3);
        // equality case of the interpolation inequality
        assert!((n.l2 * n.l2 / (n.h1_semi * hm1) - 1.0).abs() <= 1e-6);
    }
    let z = h.norm_suite(&vec![0.0; 512]).unwrap();
    assert_eq!((z.l2, z.h1_semi, z.hm1), (0.0, 0.0, Some(0.0)));
    let c = h.norm_suite(&vec![1.0; 512]).unwrap();
    assert!(c.hm1.is_none());
}

#[test]
fn interpolation_on_random_sphere_fields() {
    let h = solver(&shapes::sphere(1.0, 3).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let f = random_zero_mean(&h, &mut rng);
        let n = h.norm_suite(&f).unwrap();
        assert!(n.l2 * n.l2 <= n.h1_semi * n.hm1.unwrap() + 1e-10);
    }
}

#[test]
fn duality_is_attained_by_the_poisson_solution() {
    let s = shapes::ellipse(1.3, 0.8, 300).unwrap();
    let h = solver(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xi = random_zero_mean(&h, &mut rng);
    let d = h.hm1_norm(&xi).unwrap();
    let f = h.solve_poisson(&xi).unwrap();
    let g: Vec<f64> = f.iter().map(|v| v / h.h1_seminorm(&f)).collect();
    assert!((h.inner(&g, &xi) - d).abs() <= 1e-6 * d);
    // no other unit test field does better
    for _ in 0..50 {
        let t = random_zero_mean(&h, &mut rng);
        let t: Vec<f64> = t.iter().map(|v| v / h.h1_seminorm(&t)).collect();
        assert!(h.inner(&t, &xi) <= d + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_self_adjoint(seed in any::<u64>(), curve in any::<bool>()) {
        let s = if curve { shapes::ellipse(1.2, 0.9, 128).unwrap() } else { shapes::ellipsoid(1.1, 1.0, 0.9, 2).unwrap() };
        let h = solver(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..h.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..h.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = h.inner(&f, &h.apply_laplacian(&g).unwrap());
        let b = h.inner(&g, &h.apply_laplacian(&f).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn poisson_inverts_laplacian(seed in any::<u64>(), curve in any::<bool>()) {
        let s = if curve { shapes::perturbed_circle(1.0, 3, 0.1, 150).unwrap() } else { shapes::sphere(1.0, 2).unwrap() };
        let h = solver(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_zero_mean(&h, &mut rng);
        let lap = h.apply_laplacian(&f).unwrap();
        let neg: Vec<f64> = lap.iter().map(|v| -v).collect();
        let back = h.solve_poisson(&neg).unwrap();
        prop_assert!(rel_err(&back, &f) <= 1e-9);
    }

    #[test]
    fn interpolation_inequality(seed in any::<u64>(), curve in any::<bool>()) {
        let s = if curve { shapes::circle(1.0, 200).unwrap() } else { shapes::sphere(1.0, 2).unwrap() };
        let h = solver(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_zero_mean(&h, &mut rng);
        let n = h.norm_suite(&f).unwrap();
        prop_assert!(n.l2 * n.l2 <= n.h1_semi * n.hm1.unwrap() + 1e-10);
    }
}
