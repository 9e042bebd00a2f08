//! Per-vertex normals and second fundamental form.
//!
//! Curves use the three-point osculating circle, which is exact on circles and
//! second order on uniformly sampled smooth curves. Meshes fit an osculating
//! sphere through the 1-ring to get the normal and then a least-squares Euler
//! fit of the normal curvatures along the ring edges to get the shape
//! operator. Both reproduce round shapes exactly, so circles and icospheres
//! are discretely stationary.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};

use super::surface::{DiscreteSurface, Point};
use crate::error::{Error, Result};
use crate::exec;

/// Per-vertex curvature data. In 2D `mean` holds the signed curvature κ,
/// `gaussian` is zero and the principal frame is (tangent, e_z) with
/// principal curvatures (κ, 0); this lets the 3D formulas reduce to the
/// planar ones unchanged.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub normal: Vec<Point>,
    pub mean: Vec<f64>,
    pub gaussian: Vec<f64>,
    /// `(κ₁, κ₂)` with `κ₁ ≥ κ₂` in 3D.
    pub principal: Vec<[f64; 2]>,
    pub principal_dirs: Vec<[Point; 2]>,
    /// Shape operator as a symmetric 3x3 matrix with the normal in its kernel.
    pub shape_operator: Vec<Matrix3<f64>>,
}

impl CurvatureData {
    /// Signed curvature of a planar curve (same storage as `mean`).
    pub fn kappa(&self) -> &[f64] {
        &self.mean
    }

    pub fn max_abs_principal(&self) -> f64 {
        self.principal
            .iter()
            .map(|p| p[0].abs().max(p[1].abs()))
            .fold(0.0, f64::max)
    }

    /// `|B|² = κ₁² + κ₂²` per vertex.
    pub fn b_norm_sq(&self) -> Vec<f64> {
        self.principal.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect()
    }
}

struct VertexCurvature {
    normal: Point,
    principal: [f64; 2],
    dirs: [Point; 2],
}

pub fn compute_curvature(surface: &DiscreteSurface) -> Result<CurvatureData> {
    let per: Vec<Result<VertexCurvature>> = if surface.is_curve() {
        exec::map_range(surface.n_vertices(), |i| curve_vertex(surface, i))
    } else {
        exec::map_range(surface.n_vertices(), |i| mesh_vertex(surface, i))
    };
    let n = surface.n_vertices();
    let mut out = CurvatureData {
        normal: Vec::with_capacity(n),
        mean: Vec::with_capacity(n),
        gaussian: Vec::with_capacity(n),
        principal: Vec::with_capacity(n),
        principal_dirs: Vec::with_capacity(n),
        shape_operator: Vec::with_capacity(n),
    };
    for v in per {
        let v = v?;
        let [k1, k2] = v.principal;
        let [e1, e2] = v.dirs;
        out.normal.push(v.normal);
        out.mean.push(k1 + k2);
        out.gaussian.push(k1 * k2);
        out.principal.push(v.principal);
        out.principal_dirs.push(v.dirs);
        out.shape_operator.push(k1 * e1 * e1.transpose() + k2 * e2 * e2.transpose());
    }
    Ok(out)
}

fn curve_vertex(s: &DiscreteSurface, i: usize) -> Result<VertexCurvature> {
    let x = s.vertex(i);
    let yp = s.vertex(s.next(i)) - x;
    let ym = s.vertex(s.prev(i)) - x;
    let (sp, sm) = (yp.norm_squared(), ym.norm_squared());
    // inversion about x maps the osculating circle to a line through yp/sp and ym/sm
    let d = yp / sp - ym / sm;
    let dn = d.norm();
    if !(dn > 0.0) || !dn.is_finite() {
        return Err(Error::Degenerate(format!("curve stencil at vertex {i} folds back")));
    }
    let chord = yp - ym;
    let mut t = d / dn;
    if t.dot(&chord) < 0.0 {
        t = -t;
    }
    let normal = Point::new(t.y, -t.x, 0.0);
    let kappa = -(normal.dot(&yp) / sp + normal.dot(&ym) / sm);
    Ok(VertexCurvature {
        normal,
        principal: [kappa, 0.0],
        dirs: [t, Point::z()],
    })
}

fn mesh_vertex(s: &DiscreteSurface, i: usize) -> Result<VertexCurvature> {
    let x = s.vertex(i);
    let ring = s.neighbors(i);
    let ys: Vec<Point> = ring.iter().map(|&j| s.vertex(j) - x).collect();
    let reference: Point = s
        .vertex_faces(i)
        .iter()
        .map(|&f| s.face_cross(&s.triangles().unwrap()[f]))
        .sum();

    // osculating sphere through x: minimize Σ (u0 |y|² + u·y)² / |y|² over |u| = 1
    let mut syy = Matrix3::zeros();
    let mut b = Point::zeros();
    let mut c = 0.0;
    for y in &ys {
        let s2 = y.norm_squared();
        syy += y * y.transpose() / s2;
        b += y;
        c += s2;
    }
    let m = syy - b * b.transpose() / c;
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 - l0 > 1e-10 * eig.eigenvalues[order[2]].abs()) {
        return Err(Error::Degenerate(format!("1-ring of vertex {i} does not span a plane")));
    }
    let mut normal: Point = eig.eigenvectors.column(order[0]).into();
    if normal.dot(&reference) < 0.0 {
        normal = -normal;
    }

    // Euler fit κ(θ) = A cos²θ + 2B cosθ sinθ + C sin²θ to the edge normal curvatures
    let (f1, f2) = tangent_frame(&normal);
    let mut ata = Matrix3::zeros();
    let mut atb = Point::zeros();
    for y in &ys {
        let s2 = y.norm_squared();
        let kn = -2.0 * normal.dot(y) / s2;
        let t = Vector2::new(y.dot(&f1), y.dot(&f2));
        let tn = t.norm();
        if tn == 0.0 {
            continue;
        }
        let (cth, sth) = (t.x / tn, t.y / tn);
        let row = Point::new(cth * cth, 2.0 * cth * sth, sth * sth);
        ata += row * row.transpose();
        atb += row * kn;
    }
    let coef = ata
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .ok_or_else(|| Error::Degenerate(format!("ring directions at vertex {i} do not determine the shape operator")))?;
    let sop = Matrix2::new(coef.x, coef.y, coef.y, coef.z);
    let e = SymmetricEigen::new(sop);
    let (hi, lo) = if e.eigenvalues[0] >= e.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let dir = |k: usize| -> Point {
        let v = e.eigenvectors.column(k);
        (f1 * v[0] + f2 * v[1]).normalize()
    };
    Ok(VertexCurvature {
        normal,
        principal: [e.eigenvalues[hi], e.eigenvalues[lo]],
        dirs: [dir(hi), dir(lo)],
    })
}

/// Orthonormal basis of the plane orthogonal to unit `n`.
pub fn tangent_frame(n: &Point) -> (Point, Point) {
    let a = if n.x.abs() < 0.9 { Point::x() } else { Point::y() };
    let f1 = (a - n * n.dot(&a)).normalize();
    let f2 = n.cross(&f1);
    (f1, f2)
}

/// Mean curvature from the cotangent mean-curvature normal, `H = (M⁻¹ L x)·n`
/// with barycentric areas. Cross-check only (3D).
pub fn cotangent_mean_curvature(surface: &DiscreteSurface, normals: &[Point]) -> Vec<f64> {
    let Some(tris) = surface.triangles() else {
        return Vec::new();
    };
    let v = surface.vertices();
    let mut hn = vec![Point::zeros(); surface.n_vertices()];
    for t in tris {
        for k in 0..3 {
            let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let (u, w) = (v[b] - v[a], v[c] - v[a]);
            let cot = u.dot(&w) / u.cross(&w).norm();
            // edge (b, c) opposite the angle at a
            let d = v[b] - v[c];
            hn[b] += 0.5 * cot * d;
            hn[c] -= 0.5 * cot * d;
        }
    }
    let area = surface.area_weights();
    (0..surface.n_vertices())
        .map(|i| hn[i].dot(&normals[i]) / area[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn circle_is_exact() {
        let s = shapes::circle(2.0, 32).unwrap();
        let c = compute_curvature(&s).unwrap();
        for i in 0..32 {
            assert!((c.kappa()[i] - 0.5).abs() < 1e-13);
            assert!((c.normal[i] - s.vertex(i) / 2.0).norm() < 1e-13);
        }
    }

    #[test]
    fn icosphere_is_exact() {
        let s = shapes::sphere(1.0, 2).unwrap();
        let c = compute_curvature(&s).unwrap();
        for i in 0..s.n_vertices() {
            assert!((c.mean[i] - 2.0).abs() < 1e-10, "{}", c.mean[i]);
            assert!((c.gaussian[i] - 1.0).abs() < 1e-10);
            assert!((c.normal[i] - s.vertex(i)).norm() < 1e-12);
            assert!((c.shape_operator[i] * c.normal[i]).norm() < 1e-10);
        }
    }
}
