//! Normal graphs over a reference surface: the volume density ξ, the
//! tangential Jacobian, the graph surface itself and its mean curvature, and
//! height extraction between two nearby surfaces.

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::bvh::Bvh;
use crate::geometry::{compute_curvature, CurvatureData, DiscreteSurface, Point};
use crate::laplace::{Hm1Solver, SurfaceField};

/// Signed normal displacement per reference vertex.
pub type HeightField = SurfaceField;

/// Everything derived from one height field over one reference.
#[derive(Clone, Debug)]
pub struct GraphGeometry {
    pub xi: SurfaceField,
    pub jacobian: SurfaceField,
    pub h_graph: SurfaceField,
    /// `H - Δψ`
    pub h_linear: SurfaceField,
    /// `H_graph - H_linear`
    pub r0: SurfaceField,
    pub graph: DiscreteSurface,
    pub graph_curvature: CurvatureData,
}

/// Fails when some `|ψ_i|` reaches `bound`.
pub fn check_height(psi: &[f64], bound: f64) -> Result<()> {
    match psi.iter().position(|v| !(v.abs() < bound)) {
        Some(vertex) => Err(Error::HeightTooLarge {
            vertex,
            value: psi[vertex],
            bound,
        }),
        None => Ok(()),
    }
}

/// `ξ = ψ + (H/2)ψ² + (K/3)ψ³`, the volume of the normal column between the
/// reference and the graph per unit reference area. In 2D `K = 0` and `H = κ`.
pub fn xi_from_height(curv: &CurvatureData, psi: &[f64]) -> SurfaceField {
    psi.iter()
        .zip(curv.mean.iter().zip(&curv.gaussian))
        .map(|(&p, (&h, &k))| p * (1.0 + p * (0.5 * h + p * k / 3.0)))
        .collect::<Vec<_>>()
        .into()
}

/// `dξ/dψ = 1 + Hψ + Kψ²`, the Jacobian of the normal offset map.
pub fn xi_derivative(curv: &CurvatureData, psi: &[f64]) -> Vec<f64> {
    psi.iter()
        .zip(curv.mean.iter().zip(&curv.gaussian))
        .map(|(&p, (&h, &k))| 1.0 + p * (h + p * k))
        .collect()
}

/// `x_i + ψ_i n_i` with the reference connectivity. Cells whose orientation
/// flips relative to the reference are reported as a fold-over.
pub fn graph_surface(reference: &DiscreteSurface, curv: &CurvatureData, psi: &[f64]) -> Result<DiscreteSurface> {
    if psi.len() != reference.n_vertices() {
        return Err(Error::FieldLength {
            expected: reference.n_vertices(),
            got: psi.len(),
        });
    }
    let v: Vec<Point> = reference
        .vertices()
        .iter()
        .zip(&curv.normal)
        .zip(psi)
        .map(|((x, n), p)| x + *p * n)
        .collect();
    // past a focal point the offset map reverses orientation locally
    let mut folded: Vec<usize> = (0..psi.len())
        .filter(|&i| {
            let [k1, k2] = curv.principal[i];
            !(1.0 + psi[i] * k1 > 0.0 && 1.0 + psi[i] * k2 > 0.0)
        })
        .collect();
    match reference.triangles() {
        Some(tris) => {
            for t in tris {
                let before = reference.face_cross(t);
                let after = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]));
                if !(before.dot(&after) > 0.0) {
                    folded.extend_from_slice(t);
                }
            }
        }
        None => {
            for (a, b) in reference.edges() {
                let before = reference.vertex(b) - reference.vertex(a);
                if !(before.dot(&(v[b] - v[a])) > 0.0) {
                    folded.extend([a, b]);
                }
            }
        }
    }
    if !folded.is_empty() {
        folded.sort_unstable();
        folded.dedup();
        return Err(Error::FoldOver(folded));
    }
    reference.with_vertices(v).map_err(|e| match e {
        Error::Degenerate(_) => Error::FoldOver(Vec::new()),
        other => other,
    })
}

/// Vertex tangential gradients: per-cell linear-element gradients averaged
/// with cell-measure weights.
pub fn tangential_gradient(surface: &DiscreteSurface, f: &[f64]) -> Vec<Point> {
    let v = surface.vertices();
    let n = surface.n_vertices();
    let mut g = vec![Point::zeros(); n];
    let mut w = vec![0.0; n];
    match surface.triangles() {
        Some(tris) => {
            for t in tris {
                let cross = surface.face_cross(t);
                let a2 = cross.norm();
                let nf = cross / a2;
                let mut grad = Point::zeros();
                for k in 0..3 {
                    let e = v[t[(k + 2) % 3]] - v[t[(k + 1) % 3]];
                    grad += f[t[k]] * nf.cross(&e);
                }
                grad /= a2;
                for &i in t {
                    g[i] += a2 * grad;
                    w[i] += a2;
                }
            }
        }
        None => {
            for (a, b) in surface.edges() {
                let d = v[b] - v[a];
                let l = d.norm();
                let grad = (f[b] - f[a]) / l * (d / l);
                for i in [a, b] {
                    g[i] += l * grad;
                    w[i] += l;
                }
            }
        }
    }
    g.iter().zip(&w).map(|(g, w)| g / *w).collect()
}

/// Tangential Jacobian of `x ↦ x + ψ(x) ν(x)`:
/// `J² = (1+ψκ₁)²(1+ψκ₂)² + (1+ψκ₁)²|∂₂ψ|² + (1+ψκ₂)²|∂₁ψ|²`,
/// with `∂ₖψ` the gradient component along the k-th principal direction.
pub fn graph_jacobian(reference: &DiscreteSurface, curv: &CurvatureData, psi: &[f64]) -> Result<SurfaceField> {
    let grad = tangential_gradient(reference, psi);
    let mut out = Vec::with_capacity(psi.len());
    for (i, &p) in psi.iter().enumerate() {
        let [k1, k2] = curv.principal[i];
        let [e1, e2] = curv.principal_dirs[i];
        let (a, b) = (1.0 + p * k1, 1.0 + p * k2);
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::FoldOver(vec![i]));
        }
        let (g1, g2) = (grad[i].dot(&e1), grad[i].dot(&e2));
        out.push((a * a * b * b + a * a * g2 * g2 + b * b * g1 * g1).sqrt());
    }
    Ok(out.into())
}

pub fn mean_curvature_of_graph(
    reference: &DiscreteSurface,
    curv: &CurvatureData,
    solver: &Hm1Solver,
    psi: &[f64],
) -> Result<GraphGeometry> {
    let graph = graph_surface(reference, curv, psi)?;
    let graph_curvature = compute_curvature(&graph)?;
    let lap = solver.apply_laplacian(psi)?;
    let h_linear: Vec<f64> = curv.mean.iter().zip(lap.iter()).map(|(h, l)| h - l).collect();
    let r0: Vec<f64> = graph_curvature.mean.iter().zip(&h_linear).map(|(a, b)| a - b).collect();
    Ok(GraphGeometry {
        xi: xi_from_height(curv, psi),
        jacobian: graph_jacobian(reference, curv, psi)?,
        h_graph: graph_curvature.mean.clone().into(),
        h_linear: h_linear.into(),
        r0: r0.into(),
        graph,
        graph_curvature,
    })
}

/// First-order expansion of the graph's mean curvature obtained from the
/// normal field `N = ν - (I + ψB)⁻¹∇ψ`: `H - Δψ - |B|²ψ`. Only used to
/// cross-check [`mean_curvature_of_graph`] at small amplitude.
pub fn linearized_graph_curvature(curv: &CurvatureData, solver: &Hm1Solver, psi: &[f64]) -> Result<SurfaceField> {
    let lap = solver.apply_laplacian(psi)?;
    let b2 = curv.b_norm_sq();
    Ok((0..psi.len())
        .map(|i| curv.mean[i] - lap[i] - b2[i] * psi[i])
        .collect::<Vec<_>>()
        .into())
}

/// Signed distance from each reference vertex along its normal to `target`,
/// searched in `[-window, window]`.
pub fn height_between(
    reference: &DiscreteSurface,
    curv: &CurvatureData,
    target: &DiscreteSurface,
    window: f64,
) -> Result<HeightField> {
    let bvh = Bvh::new(target);
    let tol = 1e-10 * target.bbox_diagonal();
    let per = exec::map_range(reference.n_vertices(), |i| {
        let hits = bvh.ray_hits(&reference.vertex(i), &curv.normal[i], -window, window);
        let mut distinct: Vec<f64> = Vec::new();
        for t in hits {
            match distinct.last() {
                Some(&last) if t - last <= tol => {}
                _ => distinct.push(t),
            }
        }
        match distinct.as_slice() {
            [t] => Ok(*t),
            [] => Err(Error::NotAGraph {
                vertex: i,
                reason: "normal ray misses the target",
            }),
            _ => Err(Error::NotAGraph {
                vertex: i,
                reason: "normal ray crosses the target more than once",
            }),
        }
    });
    per.into_iter().collect::<Result<Vec<f64>>>().map(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn zero_height_is_identity() {
        let s = shapes::sphere(1.0, 2).unwrap();
        let c = compute_curvature(&s).unwrap();
        let h = Hm1Solver::assemble(&s, &c).unwrap();
        let psi = vec![0.0; s.n_vertices()];
        let g = mean_curvature_of_graph(&s, &c, &h, &psi).unwrap();
        assert_eq!(g.graph, s);
        assert!(g.r0.iter().all(|&r| r == 0.0));
        assert!(g.jacobian.iter().all(|&j| j == 1.0));
        assert!(g.xi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fold_over_is_reported() {
        let s = shapes::circle(1.0, 16).unwrap();
        let c = compute_curvature(&s).unwrap();
        let mut psi = vec![0.0; 16];
        psi[3] = -1.5;
        assert!(matches!(graph_surface(&s, &c, &psi), Err(Error::FoldOver(_))));
    }

    #[test]
    fn height_too_large_names_vertex() {
        let err = check_height(&[0.0, 0.2, -0.6], 0.5).unwrap_err();
        assert!(matches!(err, Error::HeightTooLarge { vertex: 2, .. }));
    }
}
