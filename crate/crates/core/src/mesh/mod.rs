//! Triangulated surfaces with boundary and intrinsic (edge-length) metrics.

mod builders;
mod io;
mod refine;

pub use builders::{
    build_annulus_mesh, build_cap_mesh, build_flat_disk_mesh, build_hyperbolic_ball_mesh, mobius_band,
    perturb_metric, punctured_torus, single_triangle, square_grid, unit_square,
};
pub use io::{load_conformal_factor, load_lengths, load_mesh, save_conformal_factor, save_lengths, save_mesh};
pub use refine::{boundary_distance, midpoint_subdivide, refine_boundary_strip};

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Combinatorial triangulated surface with non-empty boundary.
#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    vertex_count: usize,
    triangles: Vec<[usize; 3]>,
    /// Unique edges as sorted pairs, in lexicographic order.
    edges: Vec<[usize; 2]>,
    edge_lookup: HashMap<(usize, usize), usize>,
    /// `triangle_edges[t][k]` is the edge opposite local vertex `k`.
    triangle_edges: Vec<[usize; 3]>,
    edge_faces: Vec<Vec<usize>>,
    boundary_edges: Vec<[usize; 2]>,
    boundary_loops: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
    coordinates: Option<Vec<[f64; 3]>>,
}

impl SimplicialMesh {
    pub fn new(vertex_count: usize, triangles: Vec<[usize; 3]>, coordinates: Option<Vec<[f64; 3]>>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        if let Some(c) = &coordinates {
            if c.len() != vertex_count {
                return Err(Error::InvalidMesh(format!(
                    "{} coordinates for {} vertices",
                    c.len(),
                    vertex_count
                )));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertex_count) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
        }

        let mut edge_set: Vec<[usize; 2]> = triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| sorted(t[(k + 1) % 3], t[(k + 2) % 3])))
            .collect();
        edge_set.sort_unstable();
        edge_set.dedup();
        let edge_lookup: HashMap<(usize, usize), usize> =
            edge_set.iter().enumerate().map(|(i, e)| ((e[0], e[1]), i)).collect();
        let mut edge_faces = vec![Vec::new(); edge_set.len()];
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let e = sorted(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let idx = edge_lookup[&(e[0], e[1])];
                te[k] = idx;
                edge_faces[idx].push(t);
            }
            triangle_edges.push(te);
        }
        for (idx, faces) in edge_faces.iter().enumerate() {
            if faces.len() > 2 {
                let e = edge_set[idx];
                return Err(Error::NonManifoldEdge(e[0], e[1], faces.len()));
            }
        }

        let components = count_components(vertex_count, &triangles);
        if components != 1 {
            return Err(Error::Disconnected(components));
        }

        // Boundary edges keep the orientation they have in their triangle.
        let mut boundary_edges = Vec::new();
        for (idx, faces) in edge_faces.iter().enumerate() {
            if faces.len() == 1 {
                let tri = triangles[faces[0]];
                let e = edge_set[idx];
                let oriented = (0..3)
                    .map(|k| [tri[k], tri[(k + 1) % 3]])
                    .find(|p| sorted(p[0], p[1]) == e)
                    .unwrap();
                boundary_edges.push(oriented);
            }
        }
        if boundary_edges.is_empty() {
            return Err(Error::InvalidMesh("surface has no boundary".into()));
        }
        let boundary_loops = extract_loops(vertex_count, &boundary_edges)?;
        let mut boundary_vertex = vec![false; vertex_count];
        for e in &boundary_edges {
            boundary_vertex[e[0]] = true;
            boundary_vertex[e[1]] = true;
        }

        Ok(Self {
            vertex_count,
            triangles,
            edges: edge_set,
            edge_lookup,
            triangle_edges,
            edge_faces,
            boundary_edges,
            boundary_loops,
            boundary_vertex,
            coordinates,
        })
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let e = sorted(a, b);
        self.edge_lookup.get(&(e[0], e[1])).copied()
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn edge_faces(&self, edge: usize) -> &[usize] {
        &self.edge_faces[edge]
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count).filter(|&v| self.boundary_vertex[v]).collect()
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count).filter(|&v| !self.boundary_vertex[v]).collect()
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edge_faces[edge].len() == 1
    }

    pub fn coordinates(&self) -> Option<&[[f64; 3]]> {
        self.coordinates.as_deref()
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for (idx, e) in self.edges.iter().enumerate() {
            adj[e[0]].push((e[1], idx));
            adj[e[1]].push((e[0], idx));
        }
        adj
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn is_orientable(&self) -> bool {
        // Propagate a sign per triangle so that shared edges are traversed in
        // opposite directions; a conflict means the surface is not orientable.
        let nt = self.triangles.len();
        let mut sign = vec![0i8; nt];
        let mut queue = VecDeque::new();
        for seed in 0..nt {
            if sign[seed] != 0 {
                continue;
            }
            sign[seed] = 1;
            queue.push_back(seed);
            while let Some(t) = queue.pop_front() {
                for k in 0..3 {
                    let e = self.triangle_edges[t][k];
                    for &s in &self.edge_faces[e] {
                        if s == t {
                            continue;
                        }
                        let a = self.triangles[t][(k + 1) % 3];
                        let b = self.triangles[t][(k + 2) % 3];
                        let same_direction = (0..3).any(|m| self.triangles[s][m] == a && self.triangles[s][(m + 1) % 3] == b);
                        let want = if same_direction { -sign[t] } else { sign[t] };
                        if sign[s] == 0 {
                            sign[s] = want;
                            queue.push_back(s);
                        } else if sign[s] != want {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

pub(crate) fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn count_components(n: usize, triangles: &[[usize; 3]]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in triangles {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).filter(|&v| find(&mut parent, v) == v).count()
}

fn extract_loops(n: usize, boundary_edges: &[[usize; 2]]) -> Result<Vec<Vec<usize>>> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in boundary_edges.iter().enumerate() {
        incident[e[0]].push(i);
        incident[e[1]].push(i);
    }
    for (v, inc) in incident.iter().enumerate() {
        if !inc.is_empty() && inc.len() != 2 {
            return Err(Error::InvalidMesh(format!(
                "boundary vertex {v} has {} boundary edges; boundary is not a union of simple cycles",
                inc.len()
            )));
        }
    }
    let mut used = vec![false; boundary_edges.len()];
    let mut loops = Vec::new();
    for start in 0..boundary_edges.len() {
        if used[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut edge = start;
        let mut v = boundary_edges[start][0];
        loop {
            used[edge] = true;
            cycle.push(v);
            let e = boundary_edges[edge];
            let next_v = if e[0] == v { e[1] } else { e[0] };
            let next_edge = incident[next_v].iter().copied().find(|&x| !used[x]);
            v = next_v;
            match next_edge {
                Some(x) => edge = x,
                None => break,
            }
        }
        if v != cycle[0] {
            return Err(Error::InvalidMesh("open boundary chain".into()));
        }
        loops.push(cycle);
    }
    Ok(loops)
}

/// Intrinsic metric as edge lengths, or as a per-vertex log conformal factor
/// over base lengths with `ℓᵢⱼ = ℓ⁰ᵢⱼ·exp((φᵢ + φⱼ)/2)`, i.e. `g = e^{2φ} g₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "representation", rename_all = "snake_case")]
pub enum DiscreteMetric {
    EdgeLengths { lengths: Vec<f64> },
    Conformal { base: Vec<f64>, log_factor: Vec<f64> },
}

impl DiscreteMetric {
    pub fn from_lengths(lengths: Vec<f64>) -> Self {
        DiscreteMetric::EdgeLengths { lengths }
    }

    pub fn conformal(base: Vec<f64>, log_factor: Vec<f64>) -> Self {
        DiscreteMetric::Conformal { base, log_factor }
    }

    /// Euclidean lengths from the mesh's vertex coordinates.
    pub fn from_coordinates(mesh: &SimplicialMesh) -> Result<Self> {
        let coords = mesh
            .coordinates()
            .ok_or_else(|| Error::InvalidMetric("mesh has no vertex coordinates".into()))?;
        let lengths = mesh
            .edges()
            .iter()
            .map(|e| {
                let (p, q) = (coords[e[0]], coords[e[1]]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
            })
            .collect();
        Ok(Self::from_lengths(lengths))
    }

    /// Induced edge lengths, indexed like `mesh.edges()`.
    pub fn lengths(&self, mesh: &SimplicialMesh) -> Vec<f64> {
        match self {
            DiscreteMetric::EdgeLengths { lengths } => lengths.clone(),
            DiscreteMetric::Conformal { base, log_factor } => mesh
                .edges()
                .iter()
                .zip(base)
                .map(|(e, &l0)| l0 * (0.5 * (log_factor[e[0]] + log_factor[e[1]])).exp())
                .collect(),
        }
    }

    /// Number of degrees of freedom of the representation.
    pub fn dof_count(&self) -> usize {
        match self {
            DiscreteMetric::EdgeLengths { lengths } => lengths.len(),
            DiscreteMetric::Conformal { log_factor, .. } => log_factor.len(),
        }
    }

    /// The metric's own degrees of freedom (lengths or log factors).
    pub fn dofs(&self) -> &[f64] {
        match self {
            DiscreteMetric::EdgeLengths { lengths } => lengths,
            DiscreteMetric::Conformal { log_factor, .. } => log_factor,
        }
    }

    /// Same representation with replaced degrees of freedom.
    pub fn with_dofs(&self, dofs: Vec<f64>) -> Self {
        match self {
            DiscreteMetric::EdgeLengths { .. } => DiscreteMetric::EdgeLengths { lengths: dofs },
            DiscreteMetric::Conformal { base, .. } => DiscreteMetric::Conformal {
                base: base.clone(),
                log_factor: dofs,
            },
        }
    }

    /// Lengths multiplied by `factor`, keeping the representation.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            DiscreteMetric::EdgeLengths { lengths } => {
                DiscreteMetric::from_lengths(lengths.iter().map(|l| l * factor).collect())
            }
            DiscreteMetric::Conformal { base, log_factor } => {
                let shift = factor.ln();
                DiscreteMetric::conformal(base.clone(), log_factor.iter().map(|p| p + shift).collect())
            }
        }
    }

    fn check_shape(&self, mesh: &SimplicialMesh) -> Result<()> {
        let ok = match self {
            DiscreteMetric::EdgeLengths { lengths } => lengths.len() == mesh.edge_count(),
            DiscreteMetric::Conformal { base, log_factor } => {
                base.len() == mesh.edge_count() && log_factor.len() == mesh.vertex_count()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMetric("metric size does not match mesh".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    /// Orientable genus, or the non-orientable genus (number of cross-caps)
    /// when `orientable` is false.
    pub genus: i64,
    pub boundary_components: usize,
    pub euler_characteristic: i64,
    pub orientable: bool,
}

/// χ = 2 − 2γ − l for orientable surfaces, χ = 2 − γ̃ − l otherwise.
pub fn topology(mesh: &SimplicialMesh) -> TopologyReport {
    let chi = mesh.euler_characteristic();
    let l = mesh.boundary_loops().len();
    let orientable = mesh.is_orientable();
    let genus = if orientable { (2 - chi - l as i64) / 2 } else { 2 - chi - l as i64 };
    TopologyReport {
        genus,
        boundary_components: l,
        euler_characteristic: chi,
        orientable,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricDiagnostics {
    pub non_positive_edges: Vec<usize>,
    pub violated_triangles: Vec<usize>,
}

impl MetricDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.non_positive_edges.is_empty() && self.violated_triangles.is_empty()
    }
}

pub fn validate_metric(mesh: &SimplicialMesh, metric: &DiscreteMetric) -> MetricDiagnostics {
    if metric.check_shape(mesh).is_err() {
        return MetricDiagnostics {
            non_positive_edges: (0..mesh.edge_count()).collect(),
            violated_triangles: Vec::new(),
        };
    }
    validate_lengths(mesh, &metric.lengths(mesh))
}

pub fn validate_lengths(mesh: &SimplicialMesh, lengths: &[f64]) -> MetricDiagnostics {
    let non_positive_edges = lengths
        .iter()
        .enumerate()
        .filter(|(_, &l)| !(l > 0.0 && l.is_finite()))
        .map(|(i, _)| i)
        .collect();
    let max_len = lengths.iter().copied().filter(|l| l.is_finite()).fold(0.0, f64::max);
    let slack = 1e-12 * max_len;
    let violated_triangles = mesh
        .triangle_edges()
        .iter()
        .enumerate()
        .filter(|(_, te)| {
            let [a, b, c] = te.map(|e| lengths[e]);
            !(a + b - c > slack && b + c - a > slack && c + a - b > slack)
        })
        .map(|(t, _)| t)
        .collect();
    MetricDiagnostics {
        non_positive_edges,
        violated_triangles,
    }
}

pub(crate) fn checked_lengths(mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<Vec<f64>> {
    metric.check_shape(mesh)?;
    let lengths = metric.lengths(mesh);
    let diag = validate_lengths(mesh, &lengths);
    if !diag.is_valid() {
        return Err(Error::InvalidMetric(format!(
            "{} non-positive edges, {} triangles violate the triangle inequality",
            diag.non_positive_edges.len(),
            diag.violated_triangles.len()
        )));
    }
    Ok(lengths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub area: f64,
    pub boundary_length: f64,
    pub per_triangle_areas: Vec<f64>,
}

pub fn measures(mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<Measures> {
    let lengths = checked_lengths(mesh, metric)?;
    Ok(measures_from_lengths(mesh, &lengths))
}

pub(crate) fn measures_from_lengths(mesh: &SimplicialMesh, lengths: &[f64]) -> Measures {
    let per_triangle_areas: Vec<f64> = mesh
        .triangle_edges()
        .iter()
        .map(|te| heron(lengths[te[0]], lengths[te[1]], lengths[te[2]]))
        .collect();
    let boundary_length = (0..mesh.edge_count())
        .filter(|&e| mesh.is_boundary_edge(e))
        .map(|e| lengths[e])
        .sum();
    Measures {
        area: per_triangle_areas.iter().sum(),
        boundary_length,
        per_triangle_areas,
    }
}

/// Triangle area from side lengths (numerically stable form of Heron's formula).
pub fn heron(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * p.max(0.0).sqrt()
}
