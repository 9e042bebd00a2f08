use std::collections::HashMap;
use std::ops::Range;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Degeneracy floor relative to the bounding-box diagonal.
pub const EPS_GEOM_REL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Curve2D,
    Mesh3D,
}

#[derive(Clone, Debug, PartialEq)]
enum Connectivity {
    /// Each component is a contiguous cyclic block of vertices.
    Curves(Vec<Range<usize>>),
    Triangles(Vec<[usize; 3]>),
}

/// Perimeter and enclosed volume per component. In 2D "perimeter" is length
/// and "volume" is area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub perimeter: f64,
    pub volumes: Vec<f64>,
}

/// A closed embedded curve family in the plane or a closed triangle mesh in
/// space. Every component is oriented so that its signed volume is positive,
/// which makes the induced normals point outward.
#[derive(Clone, Debug)]
pub struct DiscreteSurface {
    mode: Mode,
    vertices: Vec<Point>,
    connectivity: Connectivity,
    component_id: Vec<usize>,
    n_components: usize,
    neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    eps_geom: f64,
}

impl PartialEq for DiscreteSurface {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.vertices == other.vertices
            && self.connectivity == other.connectivity
    }
}

impl DiscreteSurface {
    /// Closed polygons, one per component. Components with negative signed
    /// area are reversed.
    pub fn from_curves(components: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidShape("no curve components".into()));
        }
        let mut vertices = Vec::new();
        let mut ranges = Vec::new();
        for (c, comp) in components.into_iter().enumerate() {
            if comp.len() < 3 {
                return Err(Error::InvalidShape(format!(
                    "curve component {c} has {} vertices; at least 3 are required",
                    comp.len()
                )));
            }
            let start = vertices.len();
            let mut pts: Vec<Point> = comp.iter().map(|p| Point::new(p[0], p[1], 0.0)).collect();
            if signed_area(&pts) < 0.0 {
                pts[1..].reverse();
            }
            vertices.extend(pts);
            ranges.push(start..vertices.len());
        }
        Self::build(Mode::Curve2D, vertices, Connectivity::Curves(ranges), true)
    }

    /// Closed, orientable triangle mesh. Components with negative signed
    /// volume are flipped.
    pub fn from_triangles(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let vertices: Vec<Point> = vertices.iter().map(|p| Point::new(p[0], p[1], p[2])).collect();
        let n = vertices.len();
        if triangles.is_empty() {
            return Err(Error::InvalidShape("mesh has no triangles".into()));
        }
        for t in &triangles {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidShape(format!("triangle {t:?} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Degenerate(format!("triangle {t:?} repeats a vertex")));
            }
        }
        Self::build(Mode::Mesh3D, vertices, Connectivity::Triangles(triangles), true)
    }

    /// Same connectivity, new positions. Orientation is kept as is.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::FieldLength {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let mut out = self.clone();
        out.vertices = vertices;
        out.eps_geom = EPS_GEOM_REL * bbox_diagonal(&out.vertices);
        out.check_floor()?;
        Ok(out)
    }

    fn build(mode: Mode, vertices: Vec<Point>, mut conn: Connectivity, orient: bool) -> Result<Self> {
        let n = vertices.len();
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidShape("non-finite vertex coordinate".into()));
        }
        let (component_id, n_components, neighbors, vertex_faces) = match &mut conn {
            Connectivity::Curves(ranges) => {
                let mut cid = vec![0; n];
                let mut nb = vec![Vec::new(); n];
                for (c, r) in ranges.iter().enumerate() {
                    let len = r.len();
                    for k in 0..len {
                        let i = r.start + k;
                        cid[i] = c;
                        nb[i] = vec![r.start + (k + len - 1) % len, r.start + (k + 1) % len];
                    }
                }
                (cid, ranges.len(), nb, Vec::new())
            }
            Connectivity::Triangles(tris) => {
                check_closed_orientable(tris)?;
                let (cid, nc) = triangle_components(n, tris)?;
                if orient {
                    let mut vol = vec![0.0; nc];
                    for t in tris.iter() {
                        vol[cid[t[0]]] += tet_volume(&vertices, t);
                    }
                    for t in tris.iter_mut() {
                        if vol[cid[t[0]]] < 0.0 {
                            t.swap(1, 2);
                        }
                    }
                }
                let mut nb = vec![Vec::new(); n];
                let mut vf = vec![Vec::new(); n];
                for (f, t) in tris.iter().enumerate() {
                    for k in 0..3 {
                        vf[t[k]].push(f);
                        nb[t[k]].push(t[(k + 1) % 3]);
                        nb[t[k]].push(t[(k + 2) % 3]);
                    }
                }
                for l in nb.iter_mut() {
                    l.sort_unstable();
                    l.dedup();
                }
                (cid, nc, nb, vf)
            }
        };
        let eps_geom = EPS_GEOM_REL * bbox_diagonal(&vertices);
        let s = Self {
            mode,
            vertices,
            connectivity: conn,
            component_id,
            n_components,
            neighbors,
            vertex_faces,
            eps_geom,
        };
        s.check_floor()?;
        Ok(s)
    }

    fn check_floor(&self) -> Result<()> {
        let eps = self.eps_geom;
        for (a, b) in self.edges() {
            let l = (self.vertices[a] - self.vertices[b]).norm();
            if !(l > eps) {
                return Err(Error::Degenerate(format!(
                    "edge ({a}, {b}) has length {l:e} below the floor {eps:e}"
                )));
            }
        }
        if let Some(tris) = self.triangles() {
            for t in tris {
                let a = 0.5 * self.face_cross(t).norm();
                if !(a > eps * eps) {
                    return Err(Error::Degenerate(format!("triangle {t:?} has area {a:e}")));
                }
            }
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_curve(&self) -> bool {
        self.mode == Mode::Curve2D
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn component_id(&self) -> &[usize] {
        &self.component_id
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Vertex indices of each component.
    pub fn component_vertices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_components];
        for (i, &c) in self.component_id.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn triangles(&self) -> Option<&[[usize; 3]]> {
        match &self.connectivity {
            Connectivity::Triangles(t) => Some(t),
            Connectivity::Curves(_) => None,
        }
    }

    pub fn curve_ranges(&self) -> Option<&[Range<usize>]> {
        match &self.connectivity {
            Connectivity::Curves(r) => Some(r),
            Connectivity::Triangles(_) => None,
        }
    }

    /// 2D: `[prev, next]`. 3D: 1-ring sorted by index.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Triangles incident to vertex `i` (empty in 2D).
    pub fn vertex_faces(&self, i: usize) -> &[usize] {
        if self.vertex_faces.is_empty() {
            &[]
        } else {
            &self.vertex_faces[i]
        }
    }

    pub fn prev(&self, i: usize) -> usize {
        self.neighbors[i][0]
    }

    pub fn next(&self, i: usize) -> usize {
        self.neighbors[i][1]
    }

    /// Each undirected edge once, with `a < b` in 3D and `(i, next(i))` in 2D.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match &self.connectivity {
            Connectivity::Curves(_) => (0..self.n_vertices()).map(|i| (i, self.next(i))).collect(),
            Connectivity::Triangles(_) => (0..self.n_vertices())
                .flat_map(|i| self.neighbors[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
                .collect(),
        }
    }

    pub fn eps_geom(&self) -> f64 {
        self.eps_geom
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    /// `(x1 - x0) x (x2 - x0)`, twice the area vector.
    pub fn face_cross(&self, t: &[usize; 3]) -> Point {
        let v = &self.vertices;
        (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]))
    }

    pub fn measure(&self) -> Measure {
        let mut volumes = vec![0.0; self.n_components];
        let mut perimeter = 0.0;
        match &self.connectivity {
            Connectivity::Curves(ranges) => {
                for (c, r) in ranges.iter().enumerate() {
                    let o = self.vertices[r.start];
                    for i in r.clone() {
                        let a = self.vertices[i] - o;
                        let b = self.vertices[self.next(i)] - o;
                        perimeter += (b - a).norm();
                        volumes[c] += 0.5 * (a.x * b.y - a.y * b.x);
                    }
                }
            }
            Connectivity::Triangles(tris) => {
                let origins = self.component_origins();
                for t in tris {
                    let c = self.component_id[t[0]];
                    let o = origins[c];
                    let (a, b, d) = (self.vertices[t[0]] - o, self.vertices[t[1]] - o, self.vertices[t[2]] - o);
                    perimeter += 0.5 * (b - a).cross(&(d - a)).norm();
                    volumes[c] += a.dot(&b.cross(&d)) / 6.0;
                }
            }
        }
        Measure { perimeter, volumes }
    }

    fn component_origins(&self) -> Vec<Point> {
        let mut o = vec![None; self.n_components];
        for (i, &c) in self.component_id.iter().enumerate() {
            if o[c].is_none() {
                o[c] = Some(self.vertices[i]);
            }
        }
        o.into_iter().map(|p| p.unwrap_or_else(Point::zeros)).collect()
    }

    /// Barycentric (3D) or half-adjacent-length (2D) vertex weights.
    pub fn area_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_vertices()];
        match &self.connectivity {
            Connectivity::Curves(_) => {
                for i in 0..self.n_vertices() {
                    let j = self.next(i);
                    let l = (self.vertices[j] - self.vertices[i]).norm();
                    w[i] += 0.5 * l;
                    w[j] += 0.5 * l;
                }
            }
            Connectivity::Triangles(tris) => {
                for t in tris {
                    let a = self.face_cross(t).norm() / 6.0;
                    for &v in t {
                        w[v] += a;
                    }
                }
            }
        }
        w
    }

    /// Volume-gradient weights `dV/dψ_i` for normal displacements along
    /// `normals`: the exact first variation of the enclosed volume when
    /// vertex `i` moves by `ψ_i n_i`.
    pub fn volume_weights(&self, normals: &[Point]) -> Vec<f64> {
        (0..self.n_vertices())
            .map(|i| self.volume_gradient(i).dot(&normals[i]))
            .collect()
    }

    /// Gradient of the enclosed volume with respect to vertex `i`.
    pub fn volume_gradient(&self, i: usize) -> Point {
        let v = &self.vertices;
        match &self.connectivity {
            Connectivity::Curves(_) => {
                let d = v[self.next(i)] - v[self.prev(i)];
                0.5 * Point::new(d.y, -d.x, 0.0)
            }
            Connectivity::Triangles(tris) => {
                self.vertex_faces[i]
                    .iter()
                    .map(|&f| self.face_cross(&tris[f]))
                    .sum::<Point>()
                    / 6.0
            }
        }
    }

    pub fn translate(&self, d: Point) -> Self {
        let mut out = self.clone();
        for p in out.vertices.iter_mut() {
            *p += d;
        }
        out
    }

    /// Disjoint union; components of `other` are appended after those of `self`.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.mode != other.mode {
            return Err(Error::InvalidShape("cannot join a curve and a mesh".into()));
        }
        let off = self.n_vertices();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let conn = match (&self.connectivity, &other.connectivity) {
            (Connectivity::Curves(a), Connectivity::Curves(b)) => {
                let mut r = a.clone();
                r.extend(b.iter().map(|x| x.start + off..x.end + off));
                Connectivity::Curves(r)
            }
            (Connectivity::Triangles(a), Connectivity::Triangles(b)) => {
                let mut t = a.clone();
                t.extend(b.iter().map(|x| [x[0] + off, x[1] + off, x[2] + off]));
                Connectivity::Triangles(t)
            }
            _ => unreachable!(),
        };
        Self::build(self.mode, vertices, conn, false)
    }

    /// Vertices within `rings` edge hops of `i`, including `i`.
    pub fn ring(&self, i: usize, rings: usize) -> Vec<usize> {
        let mut seen = vec![i];
        let mut frontier = vec![i];
        for _ in 0..rings {
            let mut next = Vec::new();
            for &v in &frontier {
                for &w in &self.neighbors[v] {
                    if !seen.contains(&w) {
                        seen.push(w);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    /// Curve components as `[x, y]` lists.
    pub fn curve_components(&self) -> Option<Vec<Vec<[f64; 2]>>> {
        self.curve_ranges().map(|ranges| {
            ranges
                .iter()
                .map(|r| self.vertices[r.clone()].iter().map(|p| [p.x, p.y]).collect())
                .collect()
        })
    }
}

fn signed_area(pts: &[Point]) -> f64 {
    let o = pts[0];
    let n = pts.len();
    (0..n)
        .map(|i| {
            let a = pts[i] - o;
            let b = pts[(i + 1) % n] - o;
            0.5 * (a.x * b.y - a.y * b.x)
        })
        .sum()
}

fn tet_volume(v: &[Point], t: &[usize; 3]) -> f64 {
    v[t[0]].dot(&v[t[1]].cross(&v[t[2]])) / 6.0
}

pub(crate) fn bbox_diagonal(v: &[Point]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut lo = v[0];
    let mut hi = v[0];
    for p in v {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn check_closed_orientable(tris: &[[usize; 3]]) -> Result<()> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut keys: Vec<_> = directed.keys().copied().collect();
    keys.sort_unstable();
    for (a, b) in keys {
        let fwd = directed[&(a, b)];
        let back = directed.get(&(b, a)).copied().unwrap_or(0);
        if fwd + back != 2 {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            return Err(Error::NotClosed(lo, hi, fwd + back));
        }
        if fwd != 1 {
            return Err(Error::NotOrientable(a, b));
        }
    }
    Ok(())
}

fn triangle_components(n: usize, tris: &[[usize; 3]]) -> Result<(Vec<usize>, usize)> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut used = vec![false; n];
    for t in tris {
        for k in 0..3 {
            used[t[k]] = true;
            let a = find(&mut parent, t[k]);
            let b = find(&mut parent, t[(k + 1) % 3]);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::InvalidShape(format!("vertex {i} is not used by any triangle")));
    }
    let mut label = vec![usize::MAX; n];
    let mut cid = vec![0; n];
    let mut nc = 0;
    for (i, c) in cid.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = nc;
            nc += 1;
        }
        *c = label[r];
    }
    Ok((cid, nc))
}
