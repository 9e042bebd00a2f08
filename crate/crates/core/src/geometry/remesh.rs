//! Mesh-quality maintenance between flow steps. No fields are transferred;
//! only vertex positions change, followed by a per-component normal shift that
//! restores the enclosed volumes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::curvature::{compute_curvature, CurvatureData};
use super::surface::{DiscreteSurface, Point};
use crate::error::{Error, Result};
use crate::sparse::{Cholesky, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RemeshPolicy {
    #[default]
    Off,
    /// Resample each curve to uniform arc length when the max/min edge-length
    /// ratio of a component exceeds `ratio`.
    ArcLength2d { ratio: f64 },
    /// Tangentially relax a mesh when some triangle has an angle below
    /// `min_angle_deg` or a longest/shortest edge ratio above `edge_ratio`.
    Quality3d { min_angle_deg: f64, edge_ratio: f64 },
}


/// Largest per-component max/min edge-length ratio of a curve.
pub fn curve_edge_ratio(surface: &DiscreteSurface) -> f64 {
    let Some(ranges) = surface.curve_ranges() else {
        return 1.0;
    };
    let v = surface.vertices();
    ranges
        .iter()
        .map(|r| {
            let (lo, hi) = r.clone().fold((f64::MAX, 0f64), |(lo, hi), i| {
                let l = (v[surface.next(i)] - v[i]).norm();
                (lo.min(l), hi.max(l))
            });
            hi / lo
        })
        .fold(1.0, f64::max)
}

/// `(smallest angle in degrees, largest longest/shortest edge ratio)` over all triangles.
pub fn mesh_quality(surface: &DiscreteSurface) -> (f64, f64) {
    let Some(tris) = surface.triangles() else {
        return (60.0, 1.0);
    };
    let v = surface.vertices();
    let mut min_angle = 180.0f64;
    let mut max_ratio = 1.0f64;
    for t in tris {
        let l = [
            (v[t[1]] - v[t[2]]).norm(),
            (v[t[2]] - v[t[0]]).norm(),
            (v[t[0]] - v[t[1]]).norm(),
        ];
        for k in 0..3 {
            let (a, b, c) = (l[k], l[(k + 1) % 3], l[(k + 2) % 3]);
            let cos = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cos.acos() * 180.0 / PI);
        }
        let (lo, hi) = l.iter().fold((f64::MAX, 0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        max_ratio = max_ratio.max(hi / lo);
    }
    (min_angle, max_ratio)
}

pub fn needs_remesh(surface: &DiscreteSurface, policy: &RemeshPolicy) -> bool {
    match *policy {
        RemeshPolicy::Off => false,
        RemeshPolicy::ArcLength2d { ratio } => surface.is_curve() && curve_edge_ratio(surface) > ratio,
        RemeshPolicy::Quality3d { min_angle_deg, edge_ratio } => {
            if surface.is_curve() {
                return false;
            }
            let (a, r) = mesh_quality(surface);
            a < min_angle_deg || r > edge_ratio
        }
    }
}

/// Apply `policy` if triggered. Returns `None` when nothing was done.
pub fn remesh(surface: &DiscreteSurface, policy: &RemeshPolicy) -> Result<Option<DiscreteSurface>> {
    if !needs_remesh(surface, policy) {
        return Ok(None);
    }
    let targets = surface.measure().volumes;
    let moved = match *policy {
        RemeshPolicy::Off => unreachable!(),
        RemeshPolicy::ArcLength2d { .. } => resample_uniform(surface)?,
        RemeshPolicy::Quality3d { .. } => {
            let mut s = surface.clone();
            for _ in 0..20 {
                s = relax_tangentially(&s, 0.5)?;
                if !needs_remesh(&s, policy) {
                    break;
                }
            }
            s
        }
    };
    let out = restore_volumes(&moved, &targets)?;
    if needs_remesh(&out, policy) {
        let (a, r) = mesh_quality(&out);
        return Err(Error::Remesh(format!(
            "quality still violated after relaxation (min angle {a:.2} deg, edge ratio {r:.2}, curve ratio {:.3})",
            curve_edge_ratio(&out)
        )));
    }
    Ok(Some(out))
}

/// Shift each component along its normals until its enclosed volume equals
/// `targets[c]` to near machine precision.
pub fn restore_volumes(surface: &DiscreteSurface, targets: &[f64]) -> Result<DiscreteSurface> {
    let curv = compute_curvature(surface)?;
    let comps = surface.component_vertices();
    let mut shift = vec![0.0; surface.n_components()];
    let mut cur = surface.clone();
    for _ in 0..20 {
        let vols = cur.measure().volumes;
        let mut done = true;
        for (c, comp) in comps.iter().enumerate() {
            let err = vols[c] - targets[c];
            if err.abs() > 1e-14 * targets[c].abs() {
                done = false;
            }
            let slope: f64 = comp
                .iter()
                .map(|&i| cur.volume_gradient(i).dot(&curv.normal[i]))
                .sum();
            shift[c] -= err / slope;
        }
        if done {
            return Ok(cur);
        }
        cur = shifted(surface, &curv, &shift)?;
    }
    Ok(cur)
}

fn shifted(surface: &DiscreteSurface, curv: &CurvatureData, shift: &[f64]) -> Result<DiscreteSurface> {
    let cid = surface.component_id();
    let v: Vec<Point> = surface
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, x)| x + shift[cid[i]] * curv.normal[i])
        .collect();
    surface.with_vertices(v)
}

fn relax_tangentially(surface: &DiscreteSurface, step: f64) -> Result<DiscreteSurface> {
    let curv = compute_curvature(surface)?;
    let v = surface.vertices();
    let out: Vec<Point> = (0..surface.n_vertices())
        .map(|i| {
            let nb = surface.neighbors(i);
            let c: Point = nb.iter().map(|&j| v[j]).sum::<Point>() / nb.len() as f64;
            let d = c - v[i];
            let n = curv.normal[i];
            v[i] + step * (d - n * n.dot(&d))
        })
        .collect();
    surface.with_vertices(out)
}

/// Resample every curve component to the same number of points, equally
/// spaced in arc length along the periodic cubic spline through the current
/// vertices. The first vertex of each component stays in place.
pub fn resample_uniform(surface: &DiscreteSurface) -> Result<DiscreteSurface> {
    let comps = surface
        .curve_components()
        .ok_or_else(|| Error::Remesh("arc-length resampling needs a curve".into()))?;
    let mut out = Vec::with_capacity(comps.len());
    for pts in comps {
        let spline = PeriodicSpline::new(&pts)?;
        out.push(spline.resample(pts.len()));
    }
    DiscreteSurface::from_curves(out)
}

/// Periodic cubic spline in the plane, parametrized by cumulative chord length.
pub struct PeriodicSpline {
    pts: Vec<[f64; 2]>,
    h: Vec<f64>,
    m: Vec<[f64; 2]>,
}

impl PeriodicSpline {
    pub fn new(pts: &[[f64; 2]]) -> Result<Self> {
        let n = pts.len();
        let h: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .collect();
        let mut trip = Vec::with_capacity(3 * n);
        for i in 0..n {
            let p = (i + n - 1) % n;
            trip.push((i, p, h[p]));
            trip.push((i, i, 2.0 * (h[p] + h[i])));
            trip.push((i, (i + 1) % n, h[i]));
        }
        let chol = Cholesky::factor(&CsrMatrix::from_triplets(n, trip))
            .map_err(|e| Error::Remesh(format!("spline system: {e}")))?;
        let mut m = vec![[0.0; 2]; n];
        for d in 0..2 {
            let rhs: Vec<f64> = (0..n)
                .map(|i| {
                    let p = (i + n - 1) % n;
                    let q = (i + 1) % n;
                    6.0 * ((pts[q][d] - pts[i][d]) / h[i] - (pts[i][d] - pts[p][d]) / h[p])
                })
                .collect();
            for (i, v) in chol.solve(&rhs).into_iter().enumerate() {
                m[i][d] = v;
            }
        }
        Ok(Self { pts: pts.to_vec(), h, m })
    }

    fn eval(&self, i: usize, u: f64) -> ([f64; 2], [f64; 2]) {
        let n = self.pts.len();
        let j = (i + 1) % n;
        let h = self.h[i];
        let mut p = [0.0; 2];
        let mut dp = [0.0; 2];
        for d in 0..2 {
            let (m0, m1) = (self.m[i][d], self.m[j][d]);
            let b = (self.pts[j][d] - self.pts[i][d]) / h - h * (2.0 * m0 + m1) / 6.0;
            let c3 = (m1 - m0) / (6.0 * h);
            p[d] = self.pts[i][d] + u * (b + u * (0.5 * m0 + u * c3));
            dp[d] = b + u * (m0 + 3.0 * c3 * u);
        }
        (p, dp)
    }

    fn speed(&self, i: usize, u: f64) -> f64 {
        let (_, d) = self.eval(i, u);
        d[0].hypot(d[1])
    }

    fn length(&self, i: usize, a: f64, b: f64) -> f64 {
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        X.iter().zip(W).map(|(x, w)| w * self.speed(i, c + r * x)).sum::<f64>() * r
    }

    pub fn resample(&self, count: usize) -> Vec<[f64; 2]> {
        let n = self.pts.len();
        let mut cum = vec![0.0; n + 1];
        for i in 0..n {
            cum[i + 1] = cum[i] + self.length(i, 0.0, self.h[i]);
        }
        let total = cum[n];
        let mut seg = 0;
        (0..count)
            .map(|j| {
                let s = total * j as f64 / count as f64;
                while seg + 1 < n && cum[seg + 1] <= s {
                    seg += 1;
                }
                let span = cum[seg + 1] - cum[seg];
                let mut u = self.h[seg] * (s - cum[seg]) / span;
                for _ in 0..6 {
                    u -= (cum[seg] + self.length(seg, 0.0, u) - s) / self.speed(seg, u);
                }
                self.eval(seg, u).0
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn spline_resample_of_uniform_circle_is_nearly_identity() {
        let s = shapes::circle(1.0, 64).unwrap();
        let r = resample_uniform(&s).unwrap();
        for (a, b) in s.vertices().iter().zip(r.vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn arc_length_remesh_evens_out_spacing_and_keeps_area() {
        let pts: Vec<[f64; 2]> = (0..80)
            .map(|j| {
                let u = j as f64 / 80.0;
                let t = 2.0 * PI * (u + 0.08 * (2.0 * PI * u).sin());
                [t.cos(), 0.7 * t.sin()]
            })
            .collect();
        let s = DiscreteSurface::from_curves(vec![pts]).unwrap();
        let policy = RemeshPolicy::ArcLength2d { ratio: 1.5 };
        assert!(needs_remesh(&s, &policy));
        let r = remesh(&s, &policy).unwrap().unwrap();
        assert!(curve_edge_ratio(&r) < 1.1);
        let (a0, a1) = (s.measure().volumes[0], r.measure().volumes[0]);
        assert!((a0 - a1).abs() < 1e-13 * a0);
    }

    #[test]
    fn relaxation_repairs_a_distorted_sphere() {
        let s = shapes::sphere(1.0, 2).unwrap();
        let v: Vec<Point> = s
            .vertices()
            .iter()
            .map(|p| {
                let q = Point::new(p.x + 0.25 * p.z * p.z, p.y, p.z);
                q.normalize()
            })
            .collect();
        let s = s.with_vertices(v).unwrap();
        let (a0, _) = mesh_quality(&s);
        let policy = RemeshPolicy::Quality3d {
            min_angle_deg: a0 + 5.0,
            edge_ratio: 10.0,
        };
        let r = remesh(&s, &policy).unwrap().unwrap();
        assert!(mesh_quality(&r).0 >= a0 + 5.0);
        let (v0, v1) = (s.measure().volumes[0], r.measure().volumes[0]);
        assert!((v0 - v1).abs() < 1e-13 * v0);
    }
}
