//! Intrinsic refinement (new vertices are placed inside the flat triangles
//! of the existing piecewise-flat metric, so the metric itself is unchanged)
//! and graph distances to the boundary.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::{checked_lengths, sorted, DiscreteMetric, SimplicialMesh};
use crate::error::{Error, Result};

/// Edge-graph (Dijkstra) distance from every vertex to the boundary.
pub fn boundary_distance(mesh: &SimplicialMesh, lengths: &[f64]) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }

    let adj = mesh.neighbors();
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    let mut heap = BinaryHeap::new();
    for v in mesh.boundary_vertices() {
        dist[v] = 0.0;
        heap.push(Item(0.0, v));
    }
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, e) in &adj[v] {
            let nd = d + lengths[e];
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Item(nd, w));
            }
        }
    }
    dist
}

/// Planar layout of a triangle from its side lengths: `v0` at the origin,
/// `v1` on the positive x-axis.
fn layout(l01: f64, l12: f64, l20: f64) -> [[f64; 2]; 3] {
    let x = (l01 * l01 + l20 * l20 - l12 * l12) / (2.0 * l01);
    let y = (l20 * l20 - x * x).max(0.0).sqrt();
    [[0.0, 0.0], [l01, 0.0], [x, y]]
}

fn lerp2(p: [f64; 2], q: [f64; 2], t: f64) -> [f64; 2] {
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn lerp3(p: [f64; 3], q: [f64; 3], t: f64) -> [f64; 3] {
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])]
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn area2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Edge splits: for every edge, a list of `(fraction from the lower-indexed
/// endpoint)` values at which new vertices are inserted.
struct Splitter<'a> {
    mesh: &'a SimplicialMesh,
    lengths: &'a [f64],
    splits: Vec<Vec<f64>>,
}

impl<'a> Splitter<'a> {
    /// Re-triangulates every triangle as a convex polygon through its corners
    /// and edge split points, and returns the refined mesh and lengths.
    fn apply(self) -> Result<(SimplicialMesh, DiscreteMetric)> {
        let mesh = self.mesh;
        let mut next = mesh.vertex_count();
        let mut split_ids: Vec<Vec<usize>> = Vec::with_capacity(self.splits.len());
        let mut coords = mesh.coordinates().map(|c| c.to_vec());
        for (e, fr) in self.splits.iter().enumerate() {
            let [a, b] = mesh.edges()[e];
            let mut ids = Vec::with_capacity(fr.len());
            for &t in fr {
                ids.push(next);
                next += 1;
                if let Some(c) = coords.as_mut() {
                    let p = lerp3(c[a], c[b], t);
                    c.push(p);
                }
            }
            split_ids.push(ids);
        }

        let mut triangles = Vec::new();
        let mut new_lengths: HashMap<(usize, usize), f64> = HashMap::new();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let te = mesh.triangle_edges()[t];
            // Edge opposite local vertex k joins vertices k+1 and k+2.
            let side = |k: usize| te[(k + 2) % 3];
            let pos = layout(
                self.lengths[side(0)],
                self.lengths[side(1)],
                self.lengths[side(2)],
            );
            let mut poly: Vec<(usize, [f64; 2])> = Vec::new();
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                poly.push((a, pos[k]));
                let e = side(k);
                let fr = &self.splits[e];
                let ids = &split_ids[e];
                let forward = a < b;
                let mut pts: Vec<(usize, f64)> = fr
                    .iter()
                    .zip(ids)
                    .map(|(&f, &id)| (id, if forward { f } else { 1.0 - f }))
                    .collect();
                pts.sort_by(|x, y| x.1.total_cmp(&y.1));
                for (id, f) in pts {
                    poly.push((id, lerp2(pos[k], pos[(k + 1) % 3], f)));
                }
            }
            for [i, j, k] in triangulate_convex(&poly) {
                let (a, b, c) = (poly[i], poly[j], poly[k]);
                triangles.push([a.0, b.0, c.0]);
                for (p, q) in [(a, b), (b, c), (c, a)] {
                    let key = sorted(p.0, q.0);
                    new_lengths.entry((key[0], key[1])).or_insert_with(|| dist2(p.1, q.1));
                }
            }
        }
        let refined = SimplicialMesh::new(next, triangles, coords)?;
        let lengths = refined
            .edges()
            .iter()
            .map(|e| new_lengths[&(e[0], e[1])])
            .collect();
        Ok((refined, DiscreteMetric::from_lengths(lengths)))
    }
}

/// Ear-clipping triangulation of a convex polygon that may contain collinear
/// runs; ears are chosen greedily by best minimum angle and never leave a
/// fully collinear remainder.
fn triangulate_convex(poly: &[(usize, [f64; 2])]) -> Vec<[usize; 3]> {
    let scale: f64 = poly
        .iter()
        .map(|p| p.1[0].abs().max(p.1[1].abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = 1e-12 * scale * scale;
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::new();
    while idx.len() > 3 {
        let n = idx.len();
        let mut best: Option<(f64, usize)> = None;
        for s in 0..n {
            let (i, j, k) = (idx[(s + n - 1) % n], idx[s], idx[(s + 1) % n]);
            if area2(poly[i].1, poly[j].1, poly[k].1) <= tiny {
                continue;
            }
            let rest: Vec<[f64; 2]> = idx.iter().filter(|&&x| x != j).map(|&x| poly[x].1).collect();
            let non_degenerate = (1..rest.len() - 1).any(|m| area2(rest[0], rest[m], rest[m + 1]).abs() > tiny);
            if !non_degenerate {
                continue;
            }
            let q = min_angle(poly[i].1, poly[j].1, poly[k].1);
            if best.is_none_or(|(bq, _)| q > bq) {
                best = Some((q, s));
            }
        }
        let s = best.expect("convex polygon always has a valid ear").1;
        out.push([idx[(s + n - 1) % n], idx[s], idx[(s + 1) % n]]);
        idx.remove(s);
    }
    out.push([idx[0], idx[1], idx[2]]);
    out
}

fn min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let (la, lb, lc) = (dist2(b, c), dist2(c, a), dist2(a, b));
    let ang = |x: f64, y: f64, z: f64| ((y * y + z * z - x * x) / (2.0 * y * z)).clamp(-1.0, 1.0).acos();
    ang(la, lb, lc).min(ang(lb, lc, la)).min(ang(lc, la, lb))
}

/// Uniform 1-to-4 subdivision at edge midpoints.
pub fn midpoint_subdivide(mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<(SimplicialMesh, DiscreteMetric)> {
    let lengths = checked_lengths(mesh, metric)?;
    Splitter {
        mesh,
        lengths: &lengths,
        splits: vec![vec![0.5]; mesh.edge_count()],
    }
    .apply()
}

/// One pass of boundary-strip refinement. Interior edges with one boundary
/// endpoint are split at `fraction` of their length from that endpoint;
/// interior edges joining two boundary vertices are split near both ends;
/// boundary edges are left intact. Repeated passes produce geometrically
/// graded layers along the boundary.
pub fn refine_boundary_strip(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    fraction: f64,
) -> Result<(SimplicialMesh, DiscreteMetric)> {
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::OutOfRange(format!("strip fraction {fraction} not in (0, 1/2)")));
    }
    let lengths = checked_lengths(mesh, metric)?;
    let splits = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &[a, b])| {
            if mesh.is_boundary_edge(e) {
                return vec![];
            }
            match (mesh.is_boundary_vertex(a), mesh.is_boundary_vertex(b)) {
                (true, true) => vec![fraction, 1.0 - fraction],
                (true, false) => vec![fraction],
                (false, true) => vec![1.0 - fraction],
                (false, false) => vec![],
            }
        })
        .collect();
    Splitter {
        mesh,
        lengths: &lengths,
        splits,
    }
    .apply()
}
