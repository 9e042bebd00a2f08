//! Uniform-ball-condition radius estimate and normal offsets.

use std::collections::HashMap;

use super::curvature::CurvatureData;
use super::surface::{DiscreteSurface, Point};
use crate::exec;

/// Vertices closer than this many edge hops are treated as the same local sheet.
pub const ADJACENT_RINGS: usize = 3;

/// Conservative proxy for the UBC radius:
/// `min(1 / max|κ|, min over non-adjacent pairs of |d|² / (2 |d·n|))`.
///
/// The pair term is the radius of the ball tangent at `x` that passes through
/// the other point `y = x + d`; it never exceeds `|d|/2` for opposing sheets
/// and equals `R` for two points on a sphere of radius `R`. Pairs closer than
/// [`ADJACENT_RINGS`] hops are excluded, since their ball radius is governed
/// by curvature, which the first term already covers.
pub fn estimate_ubc_radius(surface: &DiscreteSurface, curv: &CurvatureData) -> f64 {
    let kmax = curv.max_abs_principal();
    let diag = surface.bbox_diagonal();
    let r_curv = if kmax > 0.0 { 1.0 / kmax } else { diag };
    let search = 2.0 * r_curv.min(diag);
    let r_prox = min_pair_ball(surface, curv, search);
    r_curv.min(r_prox)
}

fn min_pair_ball(surface: &DiscreteSurface, curv: &CurvatureData, search: f64) -> f64 {
    let v = surface.vertices();
    let cell = search.max(f64::MIN_POSITIVE);
    let key = |p: &Point| -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in v.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let cid = surface.component_id();
    let per = exec::map_range(v.len(), |i| {
        let mut near = surface.ring(i, ADJACENT_RINGS);
        near.sort_unstable();
        let (kx, ky, kz) = key(&v[i]);
        let n = curv.normal[i];
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(list) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in list {
                        let d = v[j] - v[i];
                        let d2 = d.norm_squared();
                        if d2 > search * search {
                            continue;
                        }
                        let r = d2 / (2.0 * d.dot(&n).abs());
                        if r < best && (cid[j] != cid[i] || near.binary_search(&j).is_err()) {
                            best = r;
                        }
                    }
                }
            }
        }
        best
    });
    per.into_iter().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffsetStatus {
    Ok,
    /// `|τ|` reaches the UBC estimate; the offset may self-intersect.
    ExceedsUbc,
}

/// `x + τ ν(x)` at every vertex.
pub fn offset_points(
    surface: &DiscreteSurface,
    curv: &CurvatureData,
    tau: f64,
    ubc: f64,
) -> (Vec<Point>, OffsetStatus) {
    let pts = surface
        .vertices()
        .iter()
        .zip(&curv.normal)
        .map(|(x, n)| x + tau * n)
        .collect();
    let status = if tau.abs() < ubc {
        OffsetStatus::Ok
    } else {
        log::warn!("offset {tau} reaches the UBC estimate {ubc}");
        OffsetStatus::ExceedsUbc
    };
    (pts, status)
}
