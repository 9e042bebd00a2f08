//! Axis-aligned bounding-volume hierarchy for ray queries against the cells
//! (segments or triangles) of a surface.

use super::surface::{DiscreteSurface, Point};

const LEAF: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Point,
    hi: Point,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Point::repeat(f64::INFINITY),
            hi: Point::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    /// Does the segment `o + t d`, `t ∈ [t0, t1]`, touch the box inflated by `pad`?
    fn hits(&self, o: &Point, d: &Point, t0: f64, t1: f64, pad: f64) -> bool {
        let (mut a, mut b) = (t0, t1);
        for k in 0..3 {
            let (lo, hi) = (self.lo[k] - pad, self.hi[k] + pad);
            if d[k] == 0.0 {
                if o[k] < lo || o[k] > hi {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[k];
            let (mut ta, mut tb) = ((lo - o[k]) * inv, (hi - o[k]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            a = a.max(ta);
            b = b.min(tb);
            if a > b {
                return false;
            }
        }
        true
    }
}

enum Node {
    Leaf { bbox: Aabb, cells: Vec<usize> },
    Inner { bbox: Aabb, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

/// Cells of one surface: each is 2 (segment) or 3 (triangle) vertex positions.
pub struct Bvh {
    cells: Vec<Vec<Point>>,
    root: Node,
    pad: f64,
}

impl Bvh {
    pub fn new(surface: &DiscreteSurface) -> Self {
        let v = surface.vertices();
        let cells: Vec<Vec<Point>> = match surface.triangles() {
            Some(t) => t.iter().map(|f| vec![v[f[0]], v[f[1]], v[f[2]]]).collect(),
            None => surface.edges().iter().map(|&(a, b)| vec![v[a], v[b]]).collect(),
        };
        let boxes: Vec<Aabb> = cells
            .iter()
            .map(|c| {
                let mut b = Aabb::empty();
                c.iter().for_each(|p| b.grow(p));
                b
            })
            .collect();
        let mut idx: Vec<usize> = (0..cells.len()).collect();
        let root = build(&boxes, &mut idx);
        Self {
            cells,
            root,
            pad: 1e-9 * surface.bbox_diagonal(),
        }
    }

    /// Parameters `t ∈ [t0, t1]` where the line `o + t d` crosses a cell.
    /// `d` should be unit length. In 2D the line lies in the plane z = 0.
    pub fn ray_hits(&self, o: &Point, d: &Point, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if !node.bbox().hits(o, d, t0, t1, self.pad) {
                continue;
            }
            match node {
                Node::Leaf { cells, .. } => {
                    for &c in cells {
                        let hit = match self.cells[c].as_slice() {
                            [a, b] => segment_hit(o, d, a, b),
                            [a, b, c] => triangle_hit(o, d, a, b, c),
                            _ => None,
                        };
                        if let Some(t) = hit {
                            if t >= t0 && t <= t1 {
                                out.push(t);
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

fn build(boxes: &[Aabb], idx: &mut [usize]) -> Node {
    let bbox = idx.iter().fold(Aabb::empty(), |acc, &i| acc.merge(&boxes[i]));
    if idx.len() <= LEAF {
        return Node::Leaf {
            bbox,
            cells: idx.to_vec(),
        };
    }
    let ext = bbox.hi - bbox.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let centre = |i: usize| boxes[i].lo[axis] + boxes[i].hi[axis];
    idx.sort_by(|&a, &b| centre(a).total_cmp(&centre(b)).then(a.cmp(&b)));
    let (l, r) = idx.split_at_mut(idx.len() / 2);
    Node::Inner {
        bbox,
        left: Box::new(build(boxes, l)),
        right: Box::new(build(boxes, r)),
    }
}

/// Barycentric slack so rays through shared edges and vertices are not lost.
const EDGE_SLACK: f64 = 1e-12;

fn segment_hit(o: &Point, d: &Point, a: &Point, b: &Point) -> Option<f64> {
    let e = b - a;
    let den = d.x * e.y - d.y * e.x;
    if den == 0.0 {
        return None;
    }
    let w = a - o;
    let t = (w.x * e.y - w.y * e.x) / den;
    let s = (w.x * d.y - w.y * d.x) / den;
    (-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&s).then_some(t)
}

fn triangle_hit(o: &Point, d: &Point, a: &Point, b: &Point, c: &Point) -> Option<f64> {
    let (e1, e2) = (b - a, c - a);
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if u < -EDGE_SLACK || v < -EDGE_SLACK || u + v > 1.0 + EDGE_SLACK {
        return None;
    }
    Some(e2.dot(&q) * inv)
}
