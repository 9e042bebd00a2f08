//! Analytic seed shapes and the shape descriptor used by configs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::io;
use super::surface::{DiscreteSurface, Point};
use crate::error::{Error, Result};

/// What to build. Sizes are lengths; `n` is the vertex count of a curve and
/// `subdiv` the number of icosahedron refinements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Circle { radius: f64, n: usize },
    Ellipse { a: f64, b: f64, n: usize },
    PerturbedCircle { radius: f64, mode: u32, amplitude: f64, n: usize },
    Sphere { radius: f64, subdiv: u32 },
    PerturbedSphere { radius: f64, degree: u32, order: i32, amplitude: f64, subdiv: u32 },
    Ellipsoid { a: f64, b: f64, c: f64, subdiv: u32 },
    File { path: PathBuf },
}

pub fn build_shape(spec: &ShapeSpec) -> Result<DiscreteSurface> {
    validate(spec)?;
    match *spec {
        ShapeSpec::Circle { radius, n } => circle(radius, n),
        ShapeSpec::Ellipse { a, b, n } => ellipse(a, b, n),
        ShapeSpec::PerturbedCircle { radius, mode, amplitude, n } => {
            perturbed_circle(radius, mode, amplitude, n)
        }
        ShapeSpec::Sphere { radius, subdiv } => sphere(radius, subdiv),
        ShapeSpec::PerturbedSphere { radius, degree, order, amplitude, subdiv } => {
            perturbed_sphere(radius, degree, order, amplitude, subdiv)
        }
        ShapeSpec::Ellipsoid { a, b, c, subdiv } => ellipsoid(a, b, c, subdiv),
        ShapeSpec::File { ref path } => io::load_surface(path),
    }
}

fn validate(spec: &ShapeSpec) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidShape(m));
    let pos = |name: &str, v: f64| -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!("{name} must be positive, got {v}")))
        }
    };
    let count = |n: usize| -> Result<()> {
        if n >= 8 {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!("n must be at least 8, got {n}")))
        }
    };
    let level = |s: u32| -> Result<()> {
        if (1..=8).contains(&s) {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!("subdiv must be in 1..=8, got {s}")))
        }
    };
    match *spec {
        ShapeSpec::Circle { radius, n } => {
            pos("radius", radius)?;
            count(n)
        }
        ShapeSpec::Ellipse { a, b, n } => {
            pos("a", a)?;
            pos("b", b)?;
            count(n)
        }
        ShapeSpec::PerturbedCircle { radius, amplitude, n, .. } => {
            pos("radius", radius)?;
            count(n)?;
            if !(amplitude.abs() < radius) {
                return bad(format!("|amplitude| must be below the radius, got {amplitude}"));
            }
            Ok(())
        }
        ShapeSpec::Sphere { radius, subdiv } => {
            pos("radius", radius)?;
            level(subdiv)
        }
        ShapeSpec::PerturbedSphere { radius, degree, order, amplitude, subdiv } => {
            pos("radius", radius)?;
            level(subdiv)?;
            if order.unsigned_abs() > degree {
                return bad(format!("|order| must not exceed degree, got l={degree}, m={order}"));
            }
            if !(amplitude.abs() < radius) {
                return bad(format!("|amplitude| must be below the radius, got {amplitude}"));
            }
            Ok(())
        }
        ShapeSpec::Ellipsoid { a, b, c, subdiv } => {
            pos("a", a)?;
            pos("b", b)?;
            pos("c", c)?;
            level(subdiv)
        }
        ShapeSpec::File { .. } => Ok(()),
    }
}

pub fn circle(radius: f64, n: usize) -> Result<DiscreteSurface> {
    let pts = (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    DiscreteSurface::from_curves(vec![pts])
}

/// Ellipse with semi-axes `a` (x) and `b` (y), sampled uniformly in arc
/// length starting at `(a, 0)`.
pub fn ellipse(a: f64, b: f64, n: usize) -> Result<DiscreteSurface> {
    let pts = sample_uniform_arclength(n, |t| [a * t.cos(), b * t.sin()], |t| {
        [-a * t.sin(), b * t.cos()]
    });
    DiscreteSurface::from_curves(vec![pts])
}

/// `r(θ) = R + a cos(kθ)`, sampled uniformly in arc length.
pub fn perturbed_circle(radius: f64, mode: u32, amplitude: f64, n: usize) -> Result<DiscreteSurface> {
    let k = mode as f64;
    let r = move |t: f64| radius + amplitude * (k * t).cos();
    let dr = move |t: f64| -amplitude * k * (k * t).sin();
    let pts = sample_uniform_arclength(
        n,
        |t| [r(t) * t.cos(), r(t) * t.sin()],
        |t| [dr(t) * t.cos() - r(t) * t.sin(), dr(t) * t.sin() + r(t) * t.cos()],
    );
    DiscreteSurface::from_curves(vec![pts])
}

pub fn sphere(radius: f64, subdiv: u32) -> Result<DiscreteSurface> {
    let (dirs, tris) = unit_icosphere(subdiv);
    DiscreteSurface::from_triangles(dirs.iter().map(|d| (radius * d).into()).collect(), tris)
}

/// `r = R + a Y_lm`, with `Y_lm = P_l^|m|(cos θ) cos(mφ)` for `m ≥ 0` and
/// `sin(|m|φ)` for `m < 0` (no normalization, no Condon-Shortley phase).
pub fn perturbed_sphere(
    radius: f64,
    degree: u32,
    order: i32,
    amplitude: f64,
    subdiv: u32,
) -> Result<DiscreteSurface> {
    let (dirs, tris) = unit_icosphere(subdiv);
    let verts = dirs
        .iter()
        .map(|d| (d * (radius + amplitude * real_harmonic(degree, order, d))).into())
        .collect();
    DiscreteSurface::from_triangles(verts, tris)
}

pub fn ellipsoid(a: f64, b: f64, c: f64, subdiv: u32) -> Result<DiscreteSurface> {
    let (dirs, tris) = unit_icosphere(subdiv);
    let verts = dirs.iter().map(|d| [a * d.x, b * d.y, c * d.z]).collect();
    DiscreteSurface::from_triangles(verts, tris)
}

/// Real spherical harmonic in the convention of [`perturbed_sphere`],
/// evaluated at unit direction `d`.
pub fn real_harmonic(l: u32, m: i32, d: &Point) -> f64 {
    let ma = m.unsigned_abs();
    let x = d.z.clamp(-1.0, 1.0);
    let phi = d.y.atan2(d.x);
    let p = assoc_legendre(l, ma, x);
    if m >= 0 {
        p * (ma as f64 * phi).cos()
    } else {
        p * (ma as f64 * phi).sin()
    }
}

/// `P_l^m(x)` without the Condon-Shortley phase.
pub fn assoc_legendre(l: u32, m: u32, x: f64) -> f64 {
    if m > l {
        return 0.0;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= (2 * i + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut p = 0.0;
    for ll in (m + 2)..=l {
        p = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = p;
    }
    p
}

/// Unit icosphere: `10·4^s + 2` vertices.
pub fn unit_icosphere(subdiv: u32) -> (Vec<Point>, Vec<[usize; 3]>) {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Point> = [
        [-1.0, g, 0.0],
        [1.0, g, 0.0],
        [-1.0, -g, 0.0],
        [1.0, -g, 0.0],
        [0.0, -1.0, g],
        [0.0, 1.0, g],
        [0.0, -1.0, -g],
        [0.0, 1.0, -g],
        [g, 0.0, -1.0],
        [g, 0.0, 1.0],
        [-g, 0.0, -1.0],
        [-g, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut nf = Vec::with_capacity(4 * f.len());
        for t in &f {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    v.push((v[a] + v[b]).normalize());
                    v.len() - 1
                });
            }
            nf.push([t[0], m[0], m[2]]);
            nf.push([t[1], m[1], m[0]]);
            nf.push([t[2], m[2], m[1]]);
            nf.push([m[0], m[1], m[2]]);
        }
        f = nf;
    }
    (v, f)
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn speed(dg: &impl Fn(f64) -> [f64; 2], t: f64) -> f64 {
    let d = dg(t);
    d[0].hypot(d[1])
}

fn gauss_length(dg: &impl Fn(f64) -> [f64; 2], a: f64, b: f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, w)| w * speed(dg, c + r * x))
        .sum::<f64>()
        * r
}

/// Sample a closed `2π`-periodic parametric curve at `n` points equally
/// spaced in arc length, the first at parameter 0.
pub fn sample_uniform_arclength(
    n: usize,
    g: impl Fn(f64) -> [f64; 2],
    dg: impl Fn(f64) -> [f64; 2],
) -> Vec<[f64; 2]> {
    let panels = (16 * n).max(256);
    let dt = 2.0 * PI / panels as f64;
    let mut cum = vec![0.0; panels + 1];
    for k in 0..panels {
        cum[k + 1] = cum[k] + gauss_length(&dg, k as f64 * dt, (k + 1) as f64 * dt);
    }
    let total = cum[panels];
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for j in 0..n {
        let s = total * j as f64 / n as f64;
        while k + 1 < panels && cum[k + 1] <= s {
            k += 1;
        }
        let t0 = k as f64 * dt;
        let mut t = t0 + dt * (s - cum[k]) / (cum[k + 1] - cum[k]);
        for _ in 0..8 {
            let f = cum[k] + gauss_length(&dg, t0, t) - s;
            t -= f / speed(&dg, t);
        }
        out.push(g(t));
    }
    out
}
