//! OFF / OBJ triangle meshes and JSON curve files.
//!
//! Curves are stored as a JSON array of components, each an ordered list of
//! `[x, y]` pairs. serde_json prints the shortest representation that parses
//! back to the same `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::surface::DiscreteSurface;
use crate::error::{Error, Result};

/// Load by extension: `.off`, `.obj` or `.json`.
pub fn load_surface(path: &Path) -> Result<DiscreteSurface> {
    let text = fs::read_to_string(path)?;
    match extension(path).as_str() {
        "off" => parse_off(&text),
        "obj" => parse_obj(&text),
        "json" => parse_curves_json(&text),
        other => Err(Error::Parse(format!("unsupported surface file extension '{other}'"))),
    }
}

/// Save by extension; curves must go to `.json`, meshes to `.off` or `.obj`.
pub fn save_surface(surface: &DiscreteSurface, path: &Path) -> Result<()> {
    let text = match (extension(path).as_str(), surface.is_curve()) {
        ("json", true) => curves_to_json(surface)?,
        ("off", false) => mesh_to_off(surface),
        ("obj", false) => mesh_to_obj(surface),
        (ext, curve) => {
            return Err(Error::Parse(format!(
                "cannot save a {} as '.{ext}'",
                if curve { "curve" } else { "mesh" }
            )))
        }
    };
    fs::write(path, text)?;
    Ok(())
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn parse_curves_json(text: &str) -> Result<DiscreteSurface> {
    let comps: Vec<Vec<[f64; 2]>> = serde_json::from_str(text)?;
    DiscreteSurface::from_curves(comps)
}

pub fn curves_to_json(surface: &DiscreteSurface) -> Result<String> {
    let comps = surface
        .curve_components()
        .ok_or_else(|| Error::Parse("surface is not a curve".into()))?;
    Ok(serde_json::to_string(&comps)?)
}

fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {line}: expected a number")))
}

pub fn parse_off(text: &str) -> Result<DiscreteSurface> {
    let mut lines = tokens(text);
    let (ln, first) = lines.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    let counts_line = if first == "OFF" {
        lines.next().ok_or_else(|| Error::Parse("OFF header without counts".into()))?
    } else if let Some(rest) = first.strip_prefix("OFF") {
        (ln, rest.trim())
    } else {
        return Err(Error::Parse(format!("line {ln}: missing OFF header")));
    };
    let mut c = counts_line.1.split_whitespace();
    let nv: usize = num(c.next(), counts_line.0)?;
    let nf: usize = num(c.next(), counts_line.0)?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| Error::Parse("OFF file ends inside the vertex list".into()))?;
        let mut it = s.split_whitespace();
        verts.push([num(it.next(), l)?, num(it.next(), l)?, num(it.next(), l)?]);
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| Error::Parse("OFF file ends inside the face list".into()))?;
        let mut it = s.split_whitespace();
        let k: usize = num(it.next(), l)?;
        if k != 3 {
            return Err(Error::Parse(format!("line {l}: only triangles are supported, found a {k}-gon")));
        }
        tris.push([num(it.next(), l)?, num(it.next(), l)?, num(it.next(), l)?]);
    }
    DiscreteSurface::from_triangles(verts, tris)
}

pub fn parse_obj(text: &str) -> Result<DiscreteSurface> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (l, s) in tokens(text) {
        let mut it = s.split_whitespace();
        match it.next() {
            Some("v") => verts.push([num(it.next(), l)?, num(it.next(), l)?, num(it.next(), l)?]),
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(Error::Parse(format!(
                        "line {l}: only triangles are supported, found a {}-gon",
                        idx.len()
                    )));
                }
                let mut t = [0usize; 3];
                for (k, tok) in idx.iter().enumerate() {
                    let i: i64 = num(tok.split('/').next(), l)?;
                    let i = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                    if i < 0 {
                        return Err(Error::Parse(format!("line {l}: face index out of range")));
                    }
                    t[k] = i as usize;
                }
                tris.push(t);
            }
            _ => {}
        }
    }
    DiscreteSurface::from_triangles(verts, tris)
}

pub fn mesh_to_off(surface: &DiscreteSurface) -> String {
    let tris = surface.triangles().unwrap_or(&[]);
    let mut s = format!("OFF\n{} {} 0\n", surface.n_vertices(), tris.len());
    for p in surface.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for t in tris {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn mesh_to_obj(surface: &DiscreteSurface) -> String {
    let mut s = String::new();
    for p in surface.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for t in surface.triangles().unwrap_or(&[]) {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn off_round_trip() {
        let s = shapes::sphere(1.0, 1).unwrap();
        let back = parse_off(&mesh_to_off(&s)).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn obj_round_trip() {
        let s = shapes::ellipsoid(1.0, 2.0, 0.5, 1).unwrap();
        let back = parse_obj(&mesh_to_obj(&s)).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn quads_are_rejected() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(parse_off(text).unwrap_err().to_string().contains("triangles"));
    }
}
