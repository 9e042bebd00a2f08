//! One incremental minimization: find the height `ψ` over the current surface
//! minimizing perimeter plus `d_{H⁻¹}² / 2h` among volume-preserving graphs.
//!
//! The Euler-Lagrange system reduces to `(1/h) M ξ(ψ) = -K H_graph(ψ)`. It is
//! solved by Picard iteration with the linear part treated implicitly:
//!
//! ```text
//! ((1/h) M + K M⁻¹ K) ψ⁺ = -K H_graph(ψ) + K M⁻¹ K ψ - (1/h) M q(ψ)
//! ```
//!
//! where `q = ξ - ψ`. The right-hand side equals `-K (H + R0(ψ)) - (1/h) M q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_curvature, estimate_ubc_radius, CurvatureData, DiscreteSurface, Point};
use crate::laplace::{Hm1Solver, SurfaceField};
use crate::normal_graph::{graph_jacobian, graph_surface, xi_derivative, xi_from_height, HeightField};
use crate::sparse::{Cholesky, CsrMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    #[default]
    GradientDescent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub h: f64,
    /// Upper cap on the constraint radius; the effective radius is
    /// `min(delta, r̂/8)` with `r̂` the reference UBC estimate.
    pub delta: Option<f64>,
    pub max_picard: usize,
    pub picard_tol: f64,
    pub fallback: Fallback,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            delta: None,
            max_picard: 50,
            picard_tol: 1e-10,
            fallback: Fallback::GradientDescent,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("delta must be positive, got {d}")));
            }
        }
        if self.max_picard == 0 {
            return Err(Error::Config("max_picard must be at least 1".into()));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Config(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        Ok(())
    }

    pub fn effective_delta(&self, ubc: f64) -> f64 {
        let d = ubc / 8.0;
        self.delta.map_or(d, |u| u.min(d))
    }
}

/// The surface a step is taken from, with everything computed from it.
#[derive(Debug)]
pub struct Reference {
    pub surface: DiscreteSurface,
    pub curvature: CurvatureData,
    pub solver: Hm1Solver,
    pub ubc: f64,
}

impl Reference {
    pub fn new(surface: DiscreteSurface) -> Result<Self> {
        let curvature = compute_curvature(&surface)?;
        if let Some(i) = curvature.mean.iter().position(|h| !h.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite curvature at vertex {i}")));
        }
        let solver = Hm1Solver::assemble(&surface, &curvature)?;
        let ubc = estimate_ubc_radius(&surface, &curvature);
        Ok(Self {
            surface,
            curvature,
            solver,
            ubc,
        })
    }

    pub fn n(&self) -> usize {
        self.surface.n_vertices()
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub psi: HeightField,
    pub xi: SurfaceField,
    /// `d_{H⁻¹}(F; E) = ‖ξ‖_{H⁻¹}`
    pub distance: f64,
    /// `λ` per component: weighted mean of `H_graph + u/h` with `-Δu = ξ`.
    pub multipliers: Vec<f64>,
    /// Weighted standard deviation of `H_graph + u/h` per component.
    pub multiplier_spread: Vec<f64>,
    pub el_residual: f64,
    /// `max|ψ| / δ`
    pub constraint_margin: f64,
    pub delta: f64,
    pub converged: bool,
    pub picard_iters: usize,
    /// Euler-Lagrange residual at each Picard iterate, starting from `ψ = 0`.
    pub residual_history: Vec<f64>,
    pub used_fallback: bool,
    pub graph: DiscreteSurface,
    pub h_graph: SurfaceField,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub perimeter_term: f64,
    pub dissipation_term: f64,
    pub total: f64,
}

/// `(1/h) M + K M⁻¹ K`
fn step_matrix(solver: &Hm1Solver, h: f64) -> CsrMatrix {
    let inv_m: Vec<f64> = solver.mass().iter().map(|m| 1.0 / m).collect();
    let scaled_m: Vec<f64> = solver.mass().iter().map(|m| m / h).collect();
    solver.stiffness().sandwich_diag(&inv_m).add_diag(&scaled_m)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn residual_norm(solver: &Hm1Solver, xi: &[f64], h_graph: &[f64], h: f64) -> f64 {
    let kh = solver.stiffness().mul_vec(h_graph);
    let r: Vec<f64> = (0..xi.len()).map(|i| xi[i] / h + kh[i] / solver.mass()[i]).collect();
    solver.l2_norm(&r)
}

/// Per-component constant `c` with `∫ ξ(ψ + c) = 0`, found by Newton.
pub fn project_volume(reference: &Reference, psi: &[f64]) -> Vec<f64> {
    let solver = &reference.solver;
    let curv = &reference.curvature;
    let cid = solver.component_id();
    let mut out = psi.to_vec();
    let mut shift = vec![0.0; solver.n_components()];
    for _ in 0..8 {
        let xi = xi_from_height(curv, &out);
        let dxi = xi_derivative(curv, &out);
        let g = solver.component_integrals(&xi);
        let dg = solver.component_integrals(&dxi);
        let mut moved = 0.0f64;
        for c in 0..g.len() {
            let dc = -g[c] / dg[c];
            shift[c] += dc;
            moved = moved.max(dc.abs());
        }
        for (i, v) in out.iter_mut().enumerate() {
            *v = psi[i] + shift[cid[i]];
        }
        if moved <= 1e-17 * (1.0 + max_abs(&out)) {
            break;
        }
    }
    out
}

/// Take one step from `reference`.
pub fn step(reference: &Reference, cfg: &StepConfig) -> Result<StepResult> {
    cfg.validate()?;
    let solver = &reference.solver;
    let curv = &reference.curvature;
    let surf = &reference.surface;
    let h = cfg.h;
    let n = reference.n();
    let delta = cfg.effective_delta(reference.ubc);
    let floor = 1e-14 * surf.bbox_diagonal();

    let a = step_matrix(solver, h);
    let chol = Cholesky::factor(&a)?;
    let k = solver.stiffness();
    let m = solver.mass();

    let mut psi = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    for it in 1..=cfg.max_picard {
        iters = it;
        let g = graph_surface(surf, curv, &psi)?;
        let hg = compute_curvature(&g)?.mean;
        let xi = xi_from_height(curv, &psi);
        history.push(residual_norm(solver, &xi, &hg, h));

        let kpsi = k.mul_vec(&psi);
        let kmk: Vec<f64> = k.mul_vec(&kpsi.iter().zip(m).map(|(a, b)| a / b).collect::<Vec<_>>());
        let khg = k.mul_vec(&hg);
        let rhs: Vec<f64> = (0..n)
            .map(|i| -khg[i] + kmk[i] - m[i] / h * (xi[i] - psi[i]))
            .collect();
        let next = chol.solve(&rhs);
        let update = next.iter().zip(&psi).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        psi = next;
        if !update.is_finite() || max_abs(&psi) > reference.ubc {
            log::debug!("picard iteration left the tubular neighbourhood at iterate {it}");
            break;
        }
        if update <= cfg.picard_tol * max_abs(&psi) + floor {
            converged = true;
            break;
        }
    }

    let mut used_fallback = false;
    if !converged && cfg.fallback == Fallback::GradientDescent {
        log::info!("picard did not converge in {iters} iterations; running gradient descent");
        used_fallback = true;
        let (p, ok, extra) = descend(reference, cfg, &chol)?;
        psi = p;
        converged = ok;
        iters += extra;
    }
    if !psi.iter().all(|v| v.is_finite()) || max_abs(&psi) >= reference.ubc {
        psi = vec![0.0; n];
        converged = false;
    }

    let psi = project_volume(reference, &psi);
    finish(reference, cfg, psi, delta, converged, iters, history, used_fallback)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    reference: &Reference,
    cfg: &StepConfig,
    psi: Vec<f64>,
    delta: f64,
    converged: bool,
    picard_iters: usize,
    mut residual_history: Vec<f64>,
    used_fallback: bool,
) -> Result<StepResult> {
    let solver = &reference.solver;
    let h = cfg.h;
    let graph = graph_surface(&reference.surface, &reference.curvature, &psi)?;
    let hg = compute_curvature(&graph)?.mean;
    let xi = xi_from_height(&reference.curvature, &psi);
    let el = residual_norm(solver, &xi, &hg, h);
    residual_history.push(el);
    let u = solver.solve_poisson(&xi)?;
    let distance = solver.stiffness().quadratic_form(&u).max(0.0).sqrt();
    let lam: Vec<f64> = hg.iter().zip(u.iter()).map(|(a, b)| a + b / h).collect();
    let multipliers = solver.component_means(&lam);
    let centred = solver.remove_means(&lam);
    let spread = solver
        .component_integrals(&centred.iter().map(|v| v * v).collect::<Vec<_>>())
        .iter()
        .zip(solver.component_mass())
        .map(|(s, m)| (s / m).max(0.0).sqrt())
        .collect();
    let margin = max_abs(&psi) / delta;
    Ok(StepResult {
        psi: psi.into(),
        xi,
        distance,
        multipliers,
        multiplier_spread: spread,
        el_residual: el,
        constraint_margin: margin,
        delta,
        converged: converged && margin <= 1.0,
        picard_iters,
        residual_history,
        used_fallback,
        graph,
        h_graph: hg.into(),
    })
}

/// `∫ J dA + ‖ξ(ψ)‖²_{H⁻¹} / 2h`.
pub fn energy(reference: &Reference, psi: &[f64], h: f64) -> Result<Energy> {
    let j = graph_jacobian(&reference.surface, &reference.curvature, psi)?;
    let perimeter_term: f64 = j.iter().zip(reference.solver.area_weights()).map(|(a, b)| a * b).sum();
    let d = reference.solver.hm1_norm(&xi_from_height(&reference.curvature, psi))?;
    let dissipation_term = d * d / (2.0 * h);
    Ok(Energy {
        perimeter_term,
        dissipation_term,
        total: perimeter_term + dissipation_term,
    })
}

/// `‖(1/h) ξ(ψ) - Δ H_graph(ψ)‖_{L²}`.
pub fn el_residual(reference: &Reference, psi: &[f64], h: f64) -> Result<f64> {
    let g = graph_surface(&reference.surface, &reference.curvature, psi)?;
    let hg = compute_curvature(&g)?.mean;
    let xi = xi_from_height(&reference.curvature, psi);
    Ok(residual_norm(&reference.solver, &xi, &hg, h))
}

/// Polyhedral perimeter of the graph plus the dissipation, and its gradient.
fn descent_energy(reference: &Reference, psi: &[f64], h: f64) -> Result<(f64, Vec<f64>)> {
    let solver = &reference.solver;
    let curv = &reference.curvature;
    let g = graph_surface(&reference.surface, curv, psi)?;
    let xi = xi_from_height(curv, psi);
    let u = solver.solve_poisson(&solver.remove_means(&xi))?;
    let d2 = solver.stiffness().quadratic_form(&u);
    let e = g.measure().perimeter + d2 / (2.0 * h);
    let pg = perimeter_gradient(&g);
    let dxi = xi_derivative(curv, psi);
    let grad = (0..psi.len())
        .map(|i| pg[i].dot(&curv.normal[i]) + solver.mass()[i] * u[i] * dxi[i] / h)
        .collect();
    Ok((e, grad))
}

fn perimeter_gradient(s: &DiscreteSurface) -> Vec<Point> {
    let v = s.vertices();
    let mut g = vec![Point::zeros(); s.n_vertices()];
    match s.triangles() {
        Some(tris) => {
            for t in tris {
                let nf = s.face_cross(t).normalize();
                for k in 0..3 {
                    let e = v[t[(k + 2) % 3]] - v[t[(k + 1) % 3]];
                    g[t[k]] += 0.5 * nf.cross(&e);
                }
            }
        }
        None => {
            for (a, b) in s.edges() {
                let t = (v[b] - v[a]).normalize();
                g[a] -= t;
                g[b] += t;
            }
        }
    }
    g
}

/// Projected descent on the step energy. With `A = M/h + K M⁻¹ K` the energy
/// Hessian is close to `M K⁺ A`, so the reduced gradient is preconditioned by
/// `A⁻¹ K M⁻¹`. Volume shifts are applied after every trial point.
fn descend(reference: &Reference, cfg: &StepConfig, precond: &Cholesky) -> Result<(Vec<f64>, bool, usize)> {
    let solver = &reference.solver;
    let curv = &reference.curvature;
    let cid = solver.component_id();
    let nc = solver.n_components();
    let (k, m) = (solver.stiffness(), solver.mass());
    let floor = 1e-14 * reference.surface.bbox_diagonal();
    let mut psi = vec![0.0; reference.n()];
    let (mut e, mut grad) = descent_energy(reference, &psi, cfg.h)?;
    for it in 1..=500 {
        let w: Vec<f64> = xi_derivative(curv, &psi).iter().zip(solver.mass()).map(|(a, b)| a * b).collect();
        // multiplier estimate per component, then the reduced gradient
        let mut gsum = vec![0.0; nc];
        let mut wsum = vec![0.0; nc];
        for i in 0..psi.len() {
            gsum[cid[i]] += grad[i];
            wsum[cid[i]] += w[i];
        }
        let ku: Vec<f64> = k
            .mul_vec(&(0..psi.len()).map(|i| (grad[i] - gsum[cid[i]] / wsum[cid[i]] * w[i]) / m[i]).collect::<Vec<_>>());
        let y = precond.solve(&ku);
        let mut wy = vec![0.0; nc];
        for i in 0..psi.len() {
            wy[cid[i]] += w[i] * y[i];
        }
        // constant shift per component keeps the volume fixed to first order
        let dir: Vec<f64> = (0..psi.len()).map(|i| wy[cid[i]] / wsum[cid[i]] - y[i]).collect();
        let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        // the preconditioned step estimates the distance to the minimizer
        if !(slope < 0.0) || max_abs(&dir) <= cfg.picard_tol * max_abs(&psi) + floor {
            return Ok((psi, true, it));
        }
        // energy differences near the minimizer drop below roundoff of the perimeter
        let noise = 64.0 * f64::EPSILON * e.abs();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = psi.iter().zip(&dir).map(|(p, d)| p + t * d).collect();
            let trial = project_volume(reference, &trial);
            if let Ok((et, gt)) = descent_energy(reference, &trial, cfg.h) {
                if et <= e + 1e-4 * t * slope + noise {
                    accepted = Some((trial, et, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, et, gt)) = accepted else {
            return Ok((psi, false, it));
        };
        psi = trial;
        e = et;
        grad = gt;
    }
    Ok((psi, false, 500))
}

/// Shape-health check before a step: returns an error naming the problem.
pub fn check_health(reference: &Reference, cfg: &StepConfig) -> Result<()> {
    if !(reference.ubc > 0.0 && reference.ubc.is_finite()) {
        return Err(Error::Degenerate(format!("UBC estimate {} is not positive", reference.ubc)));
    }
    if let Some(d) = cfg.delta {
        if reference.ubc < 2.0 * d {
            return Err(Error::Degenerate(format!(
                "UBC estimate {:.3e} fell below twice the constraint radius {d:.3e}",
                reference.ubc
            )));
        }
    }
    Ok(())
}
