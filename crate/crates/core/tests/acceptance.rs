//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line.

use std::f64::consts::PI;
use std::time::Instant;

use flatflow::exec;
use flatflow::flow::{run, self_convergence, write_csv, FlowConfig, FlowOutcome, RunSummary};
use flatflow::geometry::{compute_curvature, shapes, CurvatureData, DiscreteSurface, ShapeSpec};
use flatflow::laplace::Hm1Solver;
use flatflow::mm_step::{step, Reference, StepConfig};
use flatflow::normal_graph::{graph_surface, mean_curvature_of_graph, xi_from_height};
use flatflow::oracles::{
    circle_mode_amplitudes, linear_rate, sphere_mode_amplitude, verification_table,
    write_rate_report, RoundShape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn cfg(shape: ShapeSpec, h: f64, n: usize) -> FlowConfig {
    FlowConfig::new(shape, StepConfig { h, ..Default::default() }, n)
}

fn ok_if(pass: bool, detail: String) -> Check {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let (mt, my) = (t.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let den: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    num / den
}

fn max_displacement(a: &DiscreteSurface, b: &DiscreteSurface) -> f64 {
    a.vertices()
        .iter()
        .zip(b.vertices())
        .fold(0.0f64, |m, (p, q)| m.max((p - q).norm()))
}

struct Runs {
    circle: FlowOutcome,
    sphere: FlowOutcome,
    /// `(h, d₁/h, constraint margin)` for the ellipse seed
    ellipse: Vec<(f64, f64, f64)>,
}

fn base_runs() -> Result<Runs, String> {
    let circle = cfg(ShapeSpec::PerturbedCircle { radius: 1.0, mode: 2, amplitude: 0.05, n: 512 }, 1e-5, 2000);
    let sphere = cfg(
        ShapeSpec::PerturbedSphere { radius: 1.0, degree: 2, order: 0, amplitude: 0.02, subdiv: 4 },
        1e-5,
        500,
    );
    let (circle, sphere) = std::thread::scope(|s| {
        let c = s.spawn(|| run(&circle));
        let sp = s.spawn(|| run(&sphere));
        (c.join().unwrap(), sp.join().unwrap())
    });
    let r = Reference::new(shapes::ellipse(1.2, 0.8, 256).unwrap()).map_err(|e| e.to_string())?;
    let ellipse = [1e-4, 5e-5, 2.5e-5]
        .iter()
        .map(|&h| {
            let res = step(&r, &StepConfig { h, ..Default::default() }).map_err(|e| e.to_string())?;
            Ok((h, res.distance / h, res.constraint_margin))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Runs {
        circle: circle.map_err(|e| e.to_string())?,
        sphere: sphere.map_err(|e| e.to_string())?,
        ellipse,
    })
}

fn volume_conservation(r: &Runs) -> Check {
    let c = RunSummary::from_rows(&r.circle.rows);
    let s = RunSummary::from_rows(&r.sphere.rows);
    ok_if(
        r.circle.completed() && r.sphere.completed() && c.max_volume_drift <= 1e-5 && s.max_volume_drift <= 1e-4,
        format!("2D drift {:.2e} (<= 1e-5), 3D drift {:.2e} (<= 1e-4)", c.max_volume_drift, s.max_volume_drift),
    )
}

fn perimeter_dissipation(r: &Runs) -> Check {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, o) in [("2D", &r.circle), ("3D", &r.sphere)] {
        let s = RunSummary::from_rows(&o.rows);
        // every seed here is far from stationary, so each step must strictly decrease
        let strict = o.rows.windows(2).all(|w| w[1].perimeter < w[0].perimeter);
        let ledger = s.dissipation <= s.perimeter_drop + 1e-8;
        pass &= strict && ledger;
        detail.push(format!(
            "{name}: strict={strict}, dissipation {:.6e} <= drop {:.6e}",
            s.dissipation, s.perimeter_drop
        ));
    }
    ok_if(pass, detail.join("; "))
}

fn linear_step_distance(r: &Runs) -> Check {
    let v: Vec<f64> = r.ellipse.iter().map(|e| e.1).collect();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(0.0, f64::max);
    ok_if(hi / lo <= 1.5, format!("d1/h = {v:.4?}, spread factor {:.3} (<= 1.5)", hi / lo))
}

fn constraint_inactivity(r: &Runs) -> Check {
    let c = RunSummary::from_rows(&r.circle.rows).max_constraint_margin;
    let s = RunSummary::from_rows(&r.sphere.rows).max_constraint_margin;
    let e = r.ellipse.iter().map(|e| e.2).fold(0.0, f64::max);
    let worst = c.max(s).max(e);
    ok_if(worst <= 0.5, format!("max margin 2D {c:.2e}, 3D {s:.2e}, ellipse {e:.2e} (<= 0.5)"))
}

fn spectral_decay() -> Check {
    let circle = RoundShape::Circle { radius: 1.0 };
    let sphere = RoundShape::Sphere { radius: 1.0 };
    // the rate formulas are used only after the discrete scheme confirms them
    let table = verification_table(&[(circle, 2, 1e-2, 512), (circle, 3, 1e-2, 512), (sphere, 2, 2e-2, 4)])
        .map_err(|e| e.to_string())?;
    let report = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("rate_verification.json");
    let file = std::fs::File::create(&report).map_err(|e| e.to_string())?;
    write_rate_report(&table, file).map_err(|e| e.to_string())?;
    if let Some(bad) = table.iter().find(|row| row.relative_error > 2e-2) {
        return Err(format!("rate verification failed: {bad:?}"));
    }

    let cases: Vec<(&str, ShapeSpec, f64, f64)> = vec![
        (
            "k=2",
            ShapeSpec::PerturbedCircle { radius: 1.0, mode: 2, amplitude: 1e-3, n: 256 },
            linear_rate(circle, 2),
            0.15,
        ),
        (
            "k=3",
            ShapeSpec::PerturbedCircle { radius: 1.0, mode: 3, amplitude: 1e-3, n: 256 },
            linear_rate(circle, 3),
            0.15,
        ),
        (
            "l=2",
            ShapeSpec::PerturbedSphere { radius: 1.0, degree: 2, order: 0, amplitude: 1e-3, subdiv: 4 },
            linear_rate(sphere, 2),
            0.20,
        ),
    ];
    let fitted = exec::map_slice(&cases, |(name, shape, rate, tol)| -> Result<(String, bool), String> {
        let h = 1e-2 / rate.abs();
        let n = 300;
        let mut c = cfg(shape.clone(), h, n);
        c.snapshot_every = 30;
        let o = run(&c).map_err(|e| e.to_string())?;
        if !o.completed() {
            return Err(format!("{name}: {:?}", o.status));
        }
        let mut t = Vec::new();
        let mut a = Vec::new();
        for (k, s) in &o.snapshots {
            t.push(*k as f64 * h);
            a.push(match shape {
                ShapeSpec::PerturbedSphere { .. } => sphere_mode_amplitude(s, 2, 0, 4),
                ShapeSpec::PerturbedCircle { mode, .. } => {
                    circle_mode_amplitudes(s, *mode as usize).map(|m| m[*mode as usize][0])
                }
                _ => unreachable!(),
            }
            .map_err(|e| e.to_string())?);
        }
        let got = log_slope(&t, &a);
        let rel = (got / rate - 1.0).abs();
        Ok((format!("{name} {got:.2} vs {rate} ({:.1}%)", 100.0 * rel), rel <= *tol))
    });
    let mut pass = true;
    let mut detail = Vec::new();
    for f in fitted {
        let (d, p) = f?;
        pass &= p;
        detail.push(d);
    }
    detail.push(format!("report {}", report.display()));
    ok_if(pass, detail.join("; "))
}

fn stationarity() -> Check {
    let c = run(&cfg(ShapeSpec::Circle { radius: 1.0, n: 256 }, 1e-4, 100)).map_err(|e| e.to_string())?;
    let s = run(&cfg(ShapeSpec::Sphere { radius: 1.0, subdiv: 3 }, 1e-4, 100)).map_err(|e| e.to_string())?;
    let dc = max_displacement(&c.snapshots[0].1, &c.final_surface);
    let ds = max_displacement(&s.snapshots[0].1, &s.final_surface);
    ok_if(
        c.completed() && s.completed() && dc <= 1e-6 && ds <= 1e-4,
        format!("circle drift {dc:.2e} (<= 1e-6), sphere drift {ds:.2e} (<= 1e-4)"),
    )
}

fn solver(s: &DiscreteSurface) -> Hm1Solver {
    Hm1Solver::assemble(s, &compute_curvature(s).unwrap()).unwrap()
}

fn hm1_metric() -> Check {
    let s = shapes::circle(1.0, 512).unwrap();
    let h = solver(&s);
    let mut worst: f64 = 0.0;
    for k in 1..=6 {
        let f: Vec<f64> = s.vertices().iter().map(|p| (k as f64 * p.y.atan2(p.x)).cos()).collect();
        let d = h.hm1_norm(&f).map_err(|e| e.to_string())?;
        worst = worst.max((d * k as f64 / PI.sqrt() - 1.0).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for surface in [s, shapes::sphere(1.0, 3).unwrap()] {
        let h = solver(&surface);
        for _ in 0..100 {
            let f: Vec<f64> = (0..h.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = h.norm_suite(&h.remove_means(&f)).map_err(|e| e.to_string())?;
            if n.l2 * n.l2 > n.h1_semi * n.hm1.unwrap() + 1e-10 {
                violations += 1;
            }
        }
    }
    ok_if(
        worst <= 1e-3 && violations == 0,
        format!("hm1(cos k) worst rel err {worst:.2e} (<= 1e-3), interpolation violations {violations}/200"),
    )
}

struct Setup {
    s: DiscreteSurface,
    c: CurvatureData,
    h: Hm1Solver,
}

fn setup(s: DiscreteSurface) -> Setup {
    let c = compute_curvature(&s).unwrap();
    let h = Hm1Solver::assemble(&s, &c).unwrap();
    Setup { s, c, h }
}

fn xi_volume_identity() -> Check {
    let u = setup(shapes::sphere(1.0, 4).unwrap());
    let v0 = u.s.measure().volumes[0];
    let integral = |psi: &[f64]| -> Result<(f64, f64), String> {
        let xi = xi_from_height(&u.c, psi);
        let g = graph_surface(&u.s, &u.c, psi).map_err(|e| e.to_string())?;
        Ok((u.h.component_integrals(&xi).iter().sum(), g.measure().volumes[0] - v0))
    };
    let mut worst: f64 = 0.0;
    for eps in [0.01, 0.05, 0.1] {
        let (a, dv) = integral(&vec![eps; u.s.n_vertices()])?;
        worst = worst.max((a / dv - 1.0).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut random_ok = true;
    for _ in 0..10 {
        let (a1, a2): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let psi: Vec<f64> =
            u.s.vertices().iter().map(|p| 0.1 * (a1 * p.x * p.y + a2 * (2.0 * p.x).cos())).collect();
        let (a, dv) = integral(&psi)?;
        random_ok &= (a - dv).abs() <= 1e-4 * v0 + 1e-2 * dv.abs();
    }
    ok_if(
        worst <= 1e-6 && random_ok,
        format!("concentric worst rel err {worst:.2e} (<= 1e-6), random smooth fields within mesh tolerance: {random_ok}"),
    )
}

fn curvature_expansion() -> Check {
    let u = setup(shapes::sphere(1.0, 4).unwrap());
    let n = u.s.n_vertices();
    let mut worst: f64 = 0.0;
    for eps in [0.01, 0.05, 0.1] {
        let g = mean_curvature_of_graph(&u.s, &u.c, &u.h, &vec![eps; n]).map_err(|e| e.to_string())?;
        for v in g.h_graph.iter() {
            worst = worst.max((v - 2.0 / (1.0 + eps)).abs());
        }
    }
    let zero = mean_curvature_of_graph(&u.s, &u.c, &u.h, &vec![0.0; n]).map_err(|e| e.to_string())?;
    let r0_zero = zero.r0.iter().all(|&r| r == 0.0);

    let phi: Vec<f64> =
        u.s.vertices().iter().map(|p| (2.0 * p.x).sin() * p.y + 0.3 * p.z * p.z - 0.2 * p.x).collect();
    let r0 = |s: f64| -> Result<Vec<f64>, String> {
        let psi: Vec<f64> = phi.iter().map(|v| s * v).collect();
        Ok(mean_curvature_of_graph(&u.s, &u.c, &u.h, &psi).map_err(|e| e.to_string())?.r0.into_inner())
    };
    let t = 1e-4;
    let (rp, rm) = (r0(t)?, r0(-t)?);
    let d: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * t)).collect();
    let mut devs = Vec::new();
    for s in [0.04, 0.02, 0.01] {
        let e: Vec<f64> = r0(s)?.iter().zip(&d).map(|(a, b)| a - s * b).collect();
        devs.push(u.h.l2_norm(&e));
    }
    let ratios = [devs[0] / devs[1], devs[1] / devs[2]];
    let smooth = ratios.iter().all(|r| (r - 4.0).abs() <= 1.2);
    ok_if(
        worst <= 2e-2 && r0_zero && smooth,
        format!("H_graph worst abs err {worst:.2e} (mesh tol 2e-2), R0(0)=0: {r0_zero}, halving ratios {ratios:.2?} (4 ± 30%)"),
    )
}

fn self_convergence_order() -> Check {
    let c = cfg(ShapeSpec::PerturbedCircle { radius: 1.0, mode: 3, amplitude: 0.05, n: 256 }, 1e-4, 1);
    let t = self_convergence(&c, &[1e-4, 5e-5, 2.5e-5], 1e-3).map_err(|e| e.to_string())?;
    let order = t.order.unwrap_or(f64::NAN);
    ok_if(order >= 0.8, format!("errors {:?}, observed order {order:.3} (>= 0.8)", t.errors))
}

fn determinism() -> Check {
    let c = cfg(ShapeSpec::PerturbedCircle { radius: 1.0, mode: 3, amplitude: 0.05, n: 256 }, 1e-5, 50);
    let csv = |o: FlowOutcome| {
        let mut b = Vec::new();
        write_csv(&o.rows, &mut b).unwrap();
        b
    };
    let a = csv(run(&c).map_err(|e| e.to_string())?);
    let b = csv(run(&c).map_err(|e| e.to_string())?);
    let s = csv(exec::sequential(|| run(&c)).map_err(|e| e.to_string())?);
    ok_if(
        a == b && a == s,
        format!("{} bytes; repeat identical: {}, sequential identical: {}", a.len(), a == b, a == s),
    )
}

fn main() {
    let start = Instant::now();
    let runs = base_runs();

    let shared = |f: fn(&Runs) -> Check| -> Check {
        match &runs {
            Ok(r) => f(r),
            Err(e) => Err(format!("base runs failed: {e}")),
        }
    };
    let results: Vec<(&str, Check)> = vec![
        ("volume conservation", shared(volume_conservation)),
        ("perimeter dissipation", shared(perimeter_dissipation)),
        ("linear step distance", shared(linear_step_distance)),
        ("constraint inactivity", shared(constraint_inactivity)),
        ("spectral decay oracle", spectral_decay()),
        ("stationarity", stationarity()),
        ("H^-1 metric oracle", hm1_metric()),
        ("xi/volume identity", xi_volume_identity()),
        ("mean-curvature expansion", curvature_expansion()),
        ("self-convergence", self_convergence_order()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("criterion {:>2} {name:<26} PASS  {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name:<26} FAIL  {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
