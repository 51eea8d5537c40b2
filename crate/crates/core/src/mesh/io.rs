//! Text formats: OFF meshes, `i j length` edge-length sidecars and
//! `i phi` conformal-factor files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DiscreteMetric, SimplicialMesh};
use crate::error::{Error, Result};

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

fn parse(line: usize, message: impl Into<String>) -> Error {
    Error::parse(line, message)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn number<T: std::str::FromStr>(line: usize, token: Option<&str>, what: &str) -> Result<T> {
    token
        .ok_or_else(|| parse(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse(line, format!("invalid {what}")))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<SimplicialMesh> {
    parse_off(&read(path.as_ref())?)
}

pub(crate) fn parse_off(text: &str) -> Result<SimplicialMesh> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse(1, "empty mesh file"))?;
    let mut tokens = header.split_whitespace();
    let first = tokens.next().unwrap_or("");
    let counts_line: (usize, String) = if first == "OFF" {
        let rest: Vec<&str> = tokens.collect();
        if rest.is_empty() {
            let (l, s) = lines.next().ok_or_else(|| parse(hl, "missing counts line"))?;
            (l, s.to_string())
        } else {
            (hl, rest.join(" "))
        }
    } else {
        return Err(parse(hl, "expected OFF header"));
    };
    let (cl, counts) = counts_line;
    let mut ct = counts.split_whitespace();
    let nv: usize = number(cl, ct.next(), "vertex count")?;
    let nf: usize = number(cl, ct.next(), "face count")?;

    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| parse(cl, "too few vertex lines"))?;
        let mut t = s.split_whitespace();
        let mut p = [0.0; 3];
        for (k, v) in p.iter_mut().enumerate() {
            *v = number(l, t.next(), &format!("coordinate {k}"))?;
        }
        coords.push(p);
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| parse(cl, "too few face lines"))?;
        let mut t = s.split_whitespace();
        let arity: usize = number(l, t.next(), "face arity")?;
        if arity != 3 {
            return Err(parse(l, format!("only triangles are supported, found a {arity}-gon")));
        }
        let mut tri = [0usize; 3];
        for (k, v) in tri.iter_mut().enumerate() {
            *v = number(l, t.next(), &format!("vertex index {k}"))?;
            if *v >= nv {
                return Err(parse(l, format!("vertex index {} out of range", *v)));
            }
        }
        tris.push(tri);
    }
    if let Some((l, _)) = lines.next() {
        return Err(parse(l, "unexpected trailing content"));
    }
    SimplicialMesh::new(nv, tris, Some(coords))
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &SimplicialMesh) -> Result<()> {
    write(path.as_ref(), &format_off(mesh))
}

pub(crate) fn format_off(mesh: &SimplicialMesh) -> String {
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} {}", mesh.vertex_count(), mesh.triangles().len(), mesh.edge_count()).unwrap();
    for v in 0..mesh.vertex_count() {
        let p = mesh.coordinates().map_or([0.0; 3], |c| c[v]);
        writeln!(s, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

/// Edge-length sidecar. Every mesh edge must be listed exactly once.
pub fn load_lengths(path: impl AsRef<Path>, mesh: &SimplicialMesh) -> Result<DiscreteMetric> {
    parse_lengths(&read(path.as_ref())?, mesh)
}

pub(crate) fn parse_lengths(text: &str, mesh: &SimplicialMesh) -> Result<DiscreteMetric> {
    let mut lengths = vec![f64::NAN; mesh.edge_count()];
    for (l, s) in content_lines(text) {
        let mut t = s.split_whitespace();
        let i: usize = number(l, t.next(), "vertex index")?;
        let j: usize = number(l, t.next(), "vertex index")?;
        let len: f64 = number(l, t.next(), "length")?;
        let e = mesh
            .edge_index(i, j)
            .ok_or_else(|| parse(l, format!("({i}, {j}) is not a mesh edge")))?;
        if !lengths[e].is_nan() {
            return Err(parse(l, format!("edge ({i}, {j}) listed twice")));
        }
        lengths[e] = len;
    }
    if let Some(e) = lengths.iter().position(|l| l.is_nan()) {
        let [a, b] = mesh.edges()[e];
        return Err(Error::InvalidMetric(format!("no length given for edge ({a}, {b})")));
    }
    Ok(DiscreteMetric::from_lengths(lengths))
}

pub fn save_lengths(path: impl AsRef<Path>, mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<()> {
    write(path.as_ref(), &format_lengths(mesh, metric))
}

pub(crate) fn format_lengths(mesh: &SimplicialMesh, metric: &DiscreteMetric) -> String {
    let mut s = String::new();
    for (e, l) in mesh.edges().iter().zip(metric.lengths(mesh)) {
        writeln!(s, "{} {} {:.16e}", e[0], e[1], l).unwrap();
    }
    s
}

/// Per-vertex log conformal factor, one `i phi` line per vertex.
pub fn load_conformal_factor(path: impl AsRef<Path>, mesh: &SimplicialMesh) -> Result<Vec<f64>> {
    let text = read(path.as_ref())?;
    let mut phi = vec![f64::NAN; mesh.vertex_count()];
    for (l, s) in content_lines(&text) {
        let mut t = s.split_whitespace();
        let i: usize = number(l, t.next(), "vertex index")?;
        let v: f64 = number(l, t.next(), "conformal factor")?;
        if i >= phi.len() {
            return Err(parse(l, format!("vertex index {i} out of range")));
        }
        phi[i] = v;
    }
    if let Some(v) = phi.iter().position(|p| p.is_nan()) {
        return Err(Error::InvalidMetric(format!("no conformal factor given for vertex {v}")));
    }
    Ok(phi)
}

pub fn save_conformal_factor(path: impl AsRef<Path>, phi: &[f64]) -> Result<()> {
    let mut s = String::new();
    for (i, p) in phi.iter().enumerate() {
        writeln!(s, "{i} {p:.16e}").unwrap();
    }
    write(path.as_ref(), &s)
}
