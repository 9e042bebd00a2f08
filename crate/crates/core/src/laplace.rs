//! Discrete Laplace-Beltrami operator, zero-mean Poisson solves and the
//! geometric H⁻¹ norm.
//!
//! The stiffness `K` is the cotangent matrix on meshes and the P1 second
//! difference with a fourth-order correction `K + K D K / 12` on curves. The
//! lumped mass uses the volume-gradient weights `m_i = ∂V/∂ψ_i` along the
//! fitted normals, so that `Σ m_i ξ_i` is the discrete first variation of the
//! enclosed volume. Pure-Neumann solves pin one vertex per component and
//! shift the result to zero weighted mean.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CurvatureData, DiscreteSurface};
use crate::sparse::{Cholesky, CsrMatrix};

/// Default relative compatibility tolerance for Poisson right-hand sides.
pub const COMPAT_TOL: f64 = 1e-8;

/// One scalar per vertex.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SurfaceField(pub Vec<f64>);

impl SurfaceField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for SurfaceField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for SurfaceField {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for SurfaceField {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSuite {
    pub l2: f64,
    pub h1_semi: f64,
    /// Present only when the field passes the compatibility check.
    pub hm1: Option<f64>,
}

#[derive(Debug)]
pub struct Hm1Solver {
    stiffness: CsrMatrix,
    mass: Vec<f64>,
    area: Vec<f64>,
    component_id: Vec<usize>,
    n_components: usize,
    pinned: Vec<usize>,
    factor: Cholesky,
    compat_tol: f64,
}

impl Hm1Solver {
    pub fn assemble(surface: &DiscreteSurface, curv: &CurvatureData) -> Result<Self> {
        let area = surface.area_weights();
        let mass = surface.volume_weights(&curv.normal);
        if let Some(i) = mass.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::Degenerate(format!(
                "vertex {i} has non-positive volume weight {:e}",
                mass[i]
            )));
        }
        let stiffness = if surface.is_curve() {
            let k = curve_stiffness(surface);
            let corr = k.sandwich_diag(&area);
            k.add_scaled(&corr, 1.0 / 12.0)
        } else {
            cotangent_stiffness(surface)
        };
        let component_id = surface.component_id().to_vec();
        let n_components = surface.n_components();
        let pinned: Vec<usize> = surface.component_vertices().iter().map(|c| c[0]).collect();
        let factor = Cholesky::factor(&pin(&stiffness, &pinned))?;
        Ok(Self {
            stiffness,
            mass,
            area,
            component_id,
            n_components,
            pinned,
            factor,
            compat_tol: COMPAT_TOL,
        })
    }

    pub fn with_compat_tol(mut self, tol: f64) -> Self {
        self.compat_tol = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Lumped mass (volume-gradient weights).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Lumped surface-measure weights (barycentric area / half edge lengths).
    pub fn area_weights(&self) -> &[f64] {
        &self.area
    }

    pub fn component_id(&self) -> &[usize] {
        &self.component_id
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() == self.n() {
            Ok(())
        } else {
            Err(Error::FieldLength {
                expected: self.n(),
                got: f.len(),
            })
        }
    }

    /// `∫ f g` with the lumped mass.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.mass.iter().zip(f).zip(g).map(|((m, a), b)| m * a * b).sum()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }

    /// Per-component `∫ f` with the lumped mass.
    pub fn component_integrals(&self, f: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_components];
        for (i, (&m, &v)) in self.mass.iter().zip(f).enumerate() {
            s[self.component_id[i]] += m * v;
        }
        s
    }

    /// Per-component total mass.
    pub fn component_mass(&self) -> Vec<f64> {
        self.component_integrals(&vec![1.0; self.n()])
    }

    /// Per-component weighted means.
    pub fn component_means(&self, f: &[f64]) -> Vec<f64> {
        self.component_integrals(f)
            .iter()
            .zip(self.component_mass())
            .map(|(s, m)| s / m)
            .collect()
    }

    /// Subtract the per-component weighted mean.
    pub fn remove_means(&self, f: &[f64]) -> Vec<f64> {
        let mu = self.component_means(f);
        f.iter()
            .enumerate()
            .map(|(i, v)| v - mu[self.component_id[i]])
            .collect()
    }

    /// Check the per-component compatibility condition.
    pub fn check_compatible(&self, xi: &[f64]) -> Result<()> {
        let rms = (self.inner(xi, xi) / self.mass.iter().sum::<f64>()).sqrt();
        let tol = self.compat_tol * rms;
        for (c, mean) in self.component_means(xi).into_iter().enumerate() {
            if !(mean.abs() <= tol) {
                return Err(Error::Compatibility { component: c, mean, tol });
            }
        }
        Ok(())
    }

    /// `Δf ≈ -M⁻¹ K f`.
    pub fn apply_laplacian(&self, f: &[f64]) -> Result<SurfaceField> {
        self.check_len(f)?;
        let kf = self.stiffness.mul_vec(f);
        Ok(kf.iter().zip(&self.mass).map(|(k, m)| -k / m).collect::<Vec<_>>().into())
    }

    /// Zero-mean `f` with `K f = M ξ`, i.e. `-Δf = ξ`.
    pub fn solve_poisson(&self, xi: &[f64]) -> Result<SurfaceField> {
        self.check_len(xi)?;
        self.check_compatible(xi)?;
        Ok(self.solve_projected(xi).into())
    }

    /// Solve after projecting `ξ` onto the compatible subspace; no check.
    fn solve_projected(&self, xi: &[f64]) -> Vec<f64> {
        let xi0 = self.remove_means(xi);
        let mut rhs: Vec<f64> = xi0.iter().zip(&self.mass).map(|(x, m)| x * m).collect();
        for &p in &self.pinned {
            rhs[p] = 0.0;
        }
        let f = self.factor.solve(&rhs);
        self.remove_means(&f)
    }

    /// `‖ξ‖_{H⁻¹} = (∫ f ξ)^{1/2}` with `f = solve_poisson(ξ)`.
    pub fn hm1_norm(&self, xi: &[f64]) -> Result<f64> {
        let f = self.solve_poisson(xi)?;
        Ok(self.stiffness.quadratic_form(&f).max(0.0).sqrt())
    }

    pub fn h1_seminorm(&self, f: &[f64]) -> f64 {
        self.stiffness.quadratic_form(f).max(0.0).sqrt()
    }

    pub fn norm_suite(&self, f: &[f64]) -> Result<NormSuite> {
        self.check_len(f)?;
        let hm1 = match self.check_compatible(f) {
            Ok(()) => Some(self.stiffness.quadratic_form(&self.solve_projected(f)).max(0.0).sqrt()),
            Err(_) => None,
        };
        Ok(NormSuite {
            l2: self.l2_norm(f),
            h1_semi: self.h1_seminorm(f),
            hm1,
        })
    }
}

/// Replace pinned rows and columns by the identity.
fn pin(k: &CsrMatrix, pinned: &[usize]) -> CsrMatrix {
    let mut is_pinned = vec![false; k.dim()];
    for &p in pinned {
        is_pinned[p] = true;
    }
    let mut trip: Vec<(usize, usize, f64)> = k
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| !is_pinned[i] && !is_pinned[j])
        .collect();
    trip.extend(pinned.iter().map(|&p| (p, p, 1.0)));
    CsrMatrix::from_triplets(k.dim(), trip)
}

fn curve_stiffness(s: &DiscreteSurface) -> CsrMatrix {
    let mut trip = Vec::with_capacity(4 * s.n_vertices());
    for (a, b) in s.edges() {
        let w = 1.0 / (s.vertex(b) - s.vertex(a)).norm();
        trip.extend([(a, a, w), (b, b, w), (a, b, -w), (b, a, -w)]);
    }
    CsrMatrix::from_triplets(s.n_vertices(), trip)
}

fn cotangent_stiffness(s: &DiscreteSurface) -> CsrMatrix {
    let v = s.vertices();
    let tris = s.triangles().unwrap_or(&[]);
    let mut trip = Vec::with_capacity(12 * tris.len());
    for t in tris {
        for k in 0..3 {
            let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let (u, w) = (v[b] - v[a], v[c] - v[a]);
            let cot = u.dot(&w) / u.cross(&w).norm();
            let w = 0.5 * cot;
            trip.extend([(b, b, w), (c, c, w), (b, c, -w), (c, b, -w)]);
        }
    }
    CsrMatrix::from_triplets(s.n_vertices(), trip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compute_curvature, shapes};

    fn solver(s: &DiscreteSurface) -> Hm1Solver {
        Hm1Solver::assemble(s, &compute_curvature(s).unwrap()).unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let s = shapes::sphere(1.0, 2).unwrap();
        let h = solver(&s);
        let k1 = h.stiffness().mul_vec(&vec![1.0; s.n_vertices()]);
        assert!(k1.iter().all(|v| v.abs() < 1e-12));
        assert!(h.stiffness().asymmetry() < 1e-14);
    }

    #[test]
    fn constant_rhs_is_incompatible() {
        let s = shapes::circle(1.0, 64).unwrap();
        let h = solver(&s);
        assert!(matches!(
            h.solve_poisson(&vec![1.0; 64]),
            Err(Error::Compatibility { .. })
        ));
        assert_eq!(h.solve_poisson(&vec![0.0; 64]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn poisson_residual_is_small() {
        let s = shapes::ellipsoid(1.0, 0.8, 1.3, 3).unwrap();
        let h = solver(&s);
        let xi = h.remove_means(&s.vertices().iter().map(|p| p.x * p.y + p.z).collect::<Vec<_>>());
        let f = h.solve_poisson(&xi).unwrap();
        let kf = h.stiffness().mul_vec(&f);
        let rhs: Vec<f64> = xi.iter().zip(h.mass()).map(|(a, b)| a * b).collect();
        let err = kf.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10 * scale, "{err} vs {scale}");
        assert!(h.component_means(&f)[0].abs() < 1e-14);
    }
}
