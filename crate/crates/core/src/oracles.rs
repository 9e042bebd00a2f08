//! Independent references for round shapes: linearized decay rates, exact
//! propagation of small Fourier perturbations, the stationarity residual, and
//! mode-amplitude measurement of discrete shapes.
//!
//! Linearizing `V = Δ_Γ H` about a sphere of radius `R` in `d` dimensions with
//! normal height `u` gives `H ≈ (d-1)/R - Δu - (d-1)u/R²`, hence
//! `u_t = -Δ²u - (d-1)/R² Δu`. On a circle the Fourier mode `k` has
//! `-Δ = k²/R²`, on the sphere degree `l` has `-Δ = l(l+1)/R²`, which yields
//! the rates in [`linear_rate`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::shapes::{self, real_harmonic};
use crate::geometry::{DiscreteSurface, Point};
use crate::mm_step::{step, Reference, StepConfig};
use crate::normal_graph::height_between;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundShape {
    Circle { radius: f64 },
    Sphere { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSpectrum {
    pub shape: RoundShape,
    pub mode: u32,
    pub rate: f64,
}

/// Decay rate of mode `k` (circle) or degree `l` (sphere) under the
/// linearized flow: `-(k⁴ - k²)/R⁴` and `-λ(λ - 2)/R⁴` with `λ = l(l+1)`.
pub fn linear_rate(shape: RoundShape, mode: u32) -> f64 {
    let m = mode as f64;
    match shape {
        RoundShape::Circle { radius } => (m * m - m.powi(4)) / radius.powi(4),
        RoundShape::Sphere { radius } => {
            let lam = m * (m + 1.0);
            lam * (2.0 - lam) / radius.powi(4)
        }
    }
}

pub fn spectrum(shape: RoundShape, max_mode: u32) -> Vec<LinearSpectrum> {
    (0..=max_mode)
        .map(|mode| LinearSpectrum {
            shape,
            mode,
            rate: linear_rate(shape, mode),
        })
        .collect()
}

/// `û_k(t) = û_k(0) exp(rate_k t)` for cosine/sine coefficient pairs indexed by `k`.
pub fn spectral_reference_curve(coeffs: &[[f64; 2]], radius: f64, t: f64) -> Vec<[f64; 2]> {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let g = (linear_rate(RoundShape::Circle { radius }, k as u32) * t).exp();
            [c[0] * g, c[1] * g]
        })
        .collect()
}

/// `‖Δ_Γ H‖_{L²}`, zero on constant-mean-curvature shapes.
pub fn stationarity_check(surface: &DiscreteSurface) -> Result<f64> {
    let r = Reference::new(surface.clone())?;
    let lap = r.solver.apply_laplacian(&r.curvature.mean)?;
    Ok(r.solver.l2_norm(&lap))
}

/// Area (2D) or volume (3D) centroid of all components together.
pub fn centroid(surface: &DiscreteSurface) -> Point {
    let v = surface.vertices();
    let mut acc = Point::zeros();
    let mut vol = 0.0;
    match surface.triangles() {
        Some(tris) => {
            for t in tris {
                let w = v[t[0]].dot(&v[t[1]].cross(&v[t[2]])) / 6.0;
                acc += w * (v[t[0]] + v[t[1]] + v[t[2]]) / 4.0;
                vol += w;
            }
        }
        None => {
            for (a, b) in surface.edges() {
                let w = 0.5 * (v[a].x * v[b].y - v[a].y * v[b].x);
                acc += w * (v[a] + v[b]) / 3.0;
                vol += w;
            }
        }
    }
    acc / vol
}

/// Rays used to sample a curve when measuring Fourier modes.
pub const MODE_SAMPLES: usize = 1024;

/// Cosine/sine coefficients `k = 0..=kmax` of the height of a single closed
/// curve over the equal-area circle centred at its centroid.
pub fn circle_mode_amplitudes(surface: &DiscreteSurface, kmax: usize) -> Result<Vec<[f64; 2]>> {
    if !surface.is_curve() || surface.n_components() != 1 {
        return Err(Error::InvalidShape("mode amplitudes need a single closed curve".into()));
    }
    let area = surface.measure().volumes[0];
    let r = (area / PI).sqrt();
    let c = centroid(surface);
    let reference = shapes::circle(r, MODE_SAMPLES)?.translate(c);
    let normals: Vec<Point> = reference.vertices().iter().map(|p| (p - c) / r).collect();
    let curv = round_curvature(&reference, normals, 1.0 / r);
    let psi = height_between(&reference, &curv, surface, 0.5 * r)?;
    let n = psi.len() as f64;
    Ok((0..=kmax)
        .map(|k| {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, p) in psi.iter().enumerate() {
                let th = 2.0 * PI * (j * k) as f64 / n;
                a += p * th.cos();
                b += p * th.sin();
            }
            let s = if k == 0 { 1.0 / n } else { 2.0 / n };
            [a * s, b * s]
        })
        .collect())
}

/// Projection of the height over the equal-volume icosphere (centred at the
/// centroid) onto the real harmonic `Y_lm` of [`shapes::perturbed_sphere`].
pub fn sphere_mode_amplitude(surface: &DiscreteSurface, l: u32, m: i32, subdiv: u32) -> Result<f64> {
    if surface.is_curve() || surface.n_components() != 1 {
        return Err(Error::InvalidShape("sphere modes need a single closed mesh".into()));
    }
    let vol = surface.measure().volumes[0];
    let r = (3.0 * vol / (4.0 * PI)).cbrt();
    let c = centroid(surface);
    let reference = shapes::sphere(r, subdiv)?.translate(c);
    let normals: Vec<Point> = reference.vertices().iter().map(|p| (p - c) / r).collect();
    let curv = round_curvature(&reference, normals.clone(), 1.0 / r);
    let psi = height_between(&reference, &curv, surface, 0.5 * r)?;
    let w = reference.area_weights();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..psi.len() {
        let y = real_harmonic(l, m, &normals[i]);
        num += w[i] * psi[i] * y;
        den += w[i] * y * y;
    }
    Ok(num / den)
}

/// Exact curvature data of a round reference (used only to cast rays).
fn round_curvature(s: &DiscreteSurface, normal: Vec<Point>, k: f64) -> crate::geometry::CurvatureData {
    let n = s.n_vertices();
    let planar = s.is_curve();
    crate::geometry::CurvatureData {
        principal: vec![if planar { [k, 0.0] } else { [k, k] }; n],
        mean: vec![if planar { k } else { 2.0 * k }; n],
        gaussian: vec![if planar { 0.0 } else { k * k }; n],
        principal_dirs: normal
            .iter()
            .map(|nv| {
                let (a, b) = crate::geometry::curvature::tangent_frame(nv);
                [a, b]
            })
            .collect(),
        shape_operator: vec![nalgebra::Matrix3::zeros(); n],
        normal,
    }
}

type ModeProbe = Box<dyn Fn(&DiscreteSurface) -> Result<f64>>;

/// Result of checking a linear rate against the discrete scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateVerification {
    pub shape: RoundShape,
    pub mode: u32,
    pub h: f64,
    pub resolution: usize,
    pub amplitudes: Vec<f64>,
    /// One-step implicit-Euler rate `(1 - a₀/a₁)/h` at each amplitude.
    pub rates: Vec<f64>,
    /// Richardson extrapolation of `rates` to zero amplitude.
    pub extrapolated: f64,
    pub formula: f64,
    pub relative_error: f64,
}

/// Measure the decay rate of one mode by a single step of the full nonlinear
/// scheme at three amplitudes `a, a/2, a/4`, and extrapolate to `a → 0`.
/// `resolution` is `n` for circles and the subdivision level for spheres.
pub fn verify_linear_rate(shape: RoundShape, mode: u32, amplitude: f64, resolution: usize) -> Result<RateVerification> {
    if mode < 2 {
        return Err(Error::InvalidShape("rate verification needs a decaying mode (k, l >= 2)".into()));
    }
    let radius = match shape {
        RoundShape::Circle { radius } | RoundShape::Sphere { radius } => radius,
    };
    // one step moves the mode by about 10% of its amplitude
    let h = 0.1 * radius.powi(4) / (mode as f64).powi(4);
    let amplitudes = vec![amplitude, amplitude / 2.0, amplitude / 4.0];
    let rates = exec::map_slice(&amplitudes, |&a| -> Result<f64> {
        let (seed, measure): (DiscreteSurface, ModeProbe) = match shape {
            RoundShape::Circle { radius } => (
                shapes::perturbed_circle(radius, mode, a, resolution)?,
                Box::new(move |s| {
                    let c = circle_mode_amplitudes(s, mode as usize)?;
                    Ok(c[mode as usize][0])
                }),
            ),
            RoundShape::Sphere { radius } => (
                shapes::perturbed_sphere(radius, mode, 0, a, resolution as u32)?,
                Box::new(move |s| sphere_mode_amplitude(s, mode, 0, resolution as u32)),
            ),
        };
        let a0 = measure(&seed)?;
        let reference = Reference::new(seed)?;
        let res = step(&reference, &StepConfig { h, ..Default::default() })?;
        if !res.converged {
            return Err(Error::NotConverged("rate verification step".into()));
        }
        let a1 = measure(&res.graph)?;
        Ok((1.0 - a0 / a1) / h)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    // remove O(a) then O(a²) deviations
    let r1 = 2.0 * rates[1] - rates[0];
    let r2 = 2.0 * rates[2] - rates[1];
    let extrapolated = (4.0 * r2 - r1) / 3.0;
    let formula = linear_rate(shape, mode);
    Ok(RateVerification {
        shape,
        mode,
        h,
        resolution,
        amplitudes,
        rates,
        extrapolated,
        formula,
        relative_error: ((extrapolated - formula) / formula).abs(),
    })
}

/// Runs [`verify_linear_rate`] for each `(shape, mode, amplitude, resolution)`.
pub fn verification_table(cases: &[(RoundShape, u32, f64, usize)]) -> Result<Vec<RateVerification>> {
    cases
        .iter()
        .map(|&(shape, mode, a, res)| verify_linear_rate(shape, mode, a, res))
        .collect()
}

/// The verification table as pretty-printed JSON.
pub fn write_rate_report<W: std::io::Write>(table: &[RateVerification], w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, table)?;
    Ok(())
}
