//! Reference and test meshes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{validate_lengths, DiscreteMetric, SimplicialMesh};
use crate::error::{Error, Result};

/// Concentric-ring layout: centre vertex, ring `j` (1..=m) carrying `6j`
/// vertices, consecutive rings joined by a zipper that is identical in each of
/// the six sectors (so the triangulation has exact six-fold symmetry).
/// Returns triangles and per-vertex polar coordinates `(ring, angle)`.
fn polar_layout(m: usize) -> (Vec<[usize; 3]>, Vec<(usize, f64)>) {
    let mut polar = vec![(0usize, 0.0)];
    let mut ring_start = vec![0usize];
    for j in 1..=m {
        ring_start.push(polar.len());
        let n = 6 * j;
        for k in 0..n {
            polar.push((j, 2.0 * PI * k as f64 / n as f64));
        }
    }
    let mut tris = Vec::with_capacity(6 * m * m);
    for k in 0..6 {
        tris.push([0, ring_start[1] + k, ring_start[1] + (k + 1) % 6]);
    }
    for j in 2..=m {
        let (n_in, n_out) = (6 * (j - 1), 6 * j);
        let (s_in, s_out) = (ring_start[j - 1], ring_start[j]);
        let (mut a, mut b) = (0usize, 0usize);
        while a < n_in || b < n_out {
            // Compare the angles of the next inner and outer vertices exactly;
            // ties advance the outer ring.
            let advance_outer = a == n_in || (b < n_out && (b + 1) * n_in <= (a + 1) * n_out);
            if advance_outer {
                tris.push([s_in + a % n_in, s_out + b, s_out + (b + 1) % n_out]);
                b += 1;
            } else {
                tris.push([s_in + a, s_out + b % n_out, s_in + (a + 1) % n_in]);
                a += 1;
            }
        }
    }
    (tris, polar)
}

fn check_refinement(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::OutOfRange("refinement must be at least 1".into()));
    }
    Ok(())
}

/// Geodesic cap of radius `r` in the unit sphere centred at `(1, 0, 0)`,
/// with exact great-circle edge lengths.
pub fn build_cap_mesh(r: f64, refinement: usize) -> Result<(SimplicialMesh, DiscreteMetric)> {
    if !(r > 0.0 && r < PI / 2.0) {
        return Err(Error::OutOfRange(format!("cap radius {r} not in (0, π/2)")));
    }
    check_refinement(refinement)?;
    let (tris, polar) = polar_layout(refinement);
    let coords: Vec<[f64; 3]> = polar
        .iter()
        .map(|&(j, a)| {
            let rho = r * j as f64 / refinement as f64;
            [rho.cos(), rho.sin() * a.cos(), rho.sin() * a.sin()]
        })
        .collect();
    let mesh = SimplicialMesh::new(coords.len(), tris, Some(coords))?;
    let c = mesh.coordinates().unwrap();
    let lengths = mesh
        .edges()
        .iter()
        .map(|e| {
            let chord = dist3(c[e[0]], c[e[1]]);
            2.0 * (0.5 * chord).min(1.0).asin()
        })
        .collect();
    Ok((mesh, DiscreteMetric::from_lengths(lengths)))
}

/// Geodesic ball of radius `r` in the hyperboloid model centred at
/// `(1, 0, 0)`, with exact hyperbolic edge lengths.
pub fn build_hyperbolic_ball_mesh(r: f64, refinement: usize) -> Result<(SimplicialMesh, DiscreteMetric)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::OutOfRange(format!("ball radius {r} must be positive")));
    }
    check_refinement(refinement)?;
    let (tris, polar) = polar_layout(refinement);
    let coords: Vec<[f64; 3]> = polar
        .iter()
        .map(|&(j, a)| {
            let rho = r * j as f64 / refinement as f64;
            [rho.cosh(), rho.sinh() * a.cos(), rho.sinh() * a.sin()]
        })
        .collect();
    let mesh = SimplicialMesh::new(coords.len(), tris, Some(coords))?;
    let c = mesh.coordinates().unwrap();
    let lengths = mesh
        .edges()
        .iter()
        .map(|e| {
            let (p, q) = (c[e[0]], c[e[1]]);
            let s2 = -(p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            2.0 * (0.5 * s2.max(0.0).sqrt()).asinh()
        })
        .collect();
    Ok((mesh, DiscreteMetric::from_lengths(lengths)))
}

/// Flat polygonal disk of the given radius (same ring layout as the caps).
pub fn build_flat_disk_mesh(radius: f64, refinement: usize) -> Result<(SimplicialMesh, DiscreteMetric)> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::OutOfRange(format!("disk radius {radius} must be positive")));
    }
    check_refinement(refinement)?;
    let (tris, polar) = polar_layout(refinement);
    let coords: Vec<[f64; 3]> = polar
        .iter()
        .map(|&(j, a)| {
            let rho = radius * j as f64 / refinement as f64;
            [rho * a.cos(), rho * a.sin(), 0.0]
        })
        .collect();
    let mesh = SimplicialMesh::new(coords.len(), tris, Some(coords))?;
    let metric = DiscreteMetric::from_coordinates(&mesh)?;
    Ok((mesh, metric))
}

/// Flat annulus with `rings + 1` circles of `per_ring` vertices each.
pub fn build_annulus_mesh(
    inner: f64,
    outer: f64,
    rings: usize,
    per_ring: usize,
) -> Result<(SimplicialMesh, DiscreteMetric)> {
    if !(inner > 0.0 && outer > inner) || rings == 0 || per_ring < 3 {
        return Err(Error::OutOfRange("annulus needs 0 < inner < outer, rings ≥ 1, per_ring ≥ 3".into()));
    }
    let mut coords = Vec::new();
    for j in 0..=rings {
        let rho = inner + (outer - inner) * j as f64 / rings as f64;
        // Alternate rings are rotated by half a step for better triangle shape.
        let offset = if j % 2 == 1 { 0.5 } else { 0.0 };
        for k in 0..per_ring {
            let a = 2.0 * PI * (k as f64 + offset) / per_ring as f64;
            coords.push([rho * a.cos(), rho * a.sin(), 0.0]);
        }
    }
    let idx = |j: usize, k: usize| j * per_ring + k % per_ring;
    let mut tris = Vec::new();
    for j in 0..rings {
        for k in 0..per_ring {
            if j % 2 == 0 {
                tris.push([idx(j, k), idx(j, k + 1), idx(j + 1, k)]);
                tris.push([idx(j, k + 1), idx(j + 1, k + 1), idx(j + 1, k)]);
            } else {
                tris.push([idx(j, k), idx(j + 1, k + 1), idx(j + 1, k)]);
                tris.push([idx(j, k), idx(j, k + 1), idx(j + 1, k + 1)]);
            }
        }
    }
    let mesh = SimplicialMesh::new(coords.len(), tris, Some(coords))?;
    let metric = DiscreteMetric::from_coordinates(&mesh)?;
    Ok((mesh, metric))
}

/// Flat `n × n` grid on the unit square, each cell split along its diagonal.
pub fn square_grid(n: usize) -> Result<(SimplicialMesh, DiscreteMetric)> {
    check_refinement(n)?;
    let h = 1.0 / n as f64;
    let mut coords = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            coords.push([i as f64 * h, j as f64 * h, 0.0]);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mesh = SimplicialMesh::new(coords.len(), tris, Some(coords))?;
    let metric = DiscreteMetric::from_coordinates(&mesh)?;
    Ok((mesh, metric))
}

/// Edge-length metric with every length multiplied by an independent factor
/// `1 + amplitude·U(−1, 1)`; draws that break a triangle inequality are
/// redrawn from the same seeded stream.
pub fn perturb_metric(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    amplitude: f64,
    seed: u64,
) -> Result<DiscreteMetric> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::OutOfRange(format!("perturbation amplitude {amplitude} must lie in [0, 1)")));
    }
    let base = metric.lengths(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let l: Vec<f64> = base
            .iter()
            .map(|&l| l * (1.0 + amplitude * rng.gen_range(-1.0..1.0)))
            .collect();
        if validate_lengths(mesh, &l).is_valid() {
            return Ok(DiscreteMetric::from_lengths(l));
        }
    }
    Err(Error::InvalidMetric(format!(
        "no valid perturbation of amplitude {amplitude} found"
    )))
}

/// Unit square made of two triangles.
pub fn unit_square() -> (SimplicialMesh, DiscreteMetric) {
    square_grid(1).expect("unit square is valid")
}

/// Single equilateral triangle with unit sides.
pub fn single_triangle() -> (SimplicialMesh, DiscreteMetric) {
    let h = 0.75f64.sqrt();
    let coords = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]];
    let mesh = SimplicialMesh::new(3, vec![[0, 1, 2]], Some(coords)).expect("triangle is valid");
    let metric = DiscreteMetric::from_coordinates(&mesh).expect("coordinates present");
    (mesh, metric)
}

/// Periodic `n × n` grid (a torus) with the two triangles of one cell removed:
/// genus one, one boundary loop.
pub fn punctured_torus(n: usize) -> Result<SimplicialMesh> {
    if n < 3 {
        return Err(Error::OutOfRange("punctured torus needs n ≥ 3".into()));
    }
    let idx = |i: usize, j: usize| (j % n) * n + (i % n);
    let mut tris = Vec::with_capacity(2 * n * n - 2);
    for j in 0..n {
        for i in 0..n {
            if i == 0 && j == 0 {
                continue;
            }
            tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    SimplicialMesh::new(n * n, tris, None)
}

/// Möbius band: an `n × 1` strip of cells whose ends are glued with a flip.
pub fn mobius_band(n: usize) -> Result<SimplicialMesh> {
    if n < 3 {
        return Err(Error::OutOfRange("Möbius band needs n ≥ 3".into()));
    }
    // Vertices (i, 0) = i and (i, 1) = n + i for i in 0..n; column n is
    // column 0 with the two rows exchanged.
    let v = |i: usize, row: usize| {
        if i == n {
            if row == 0 {
                n
            } else {
                0
            }
        } else {
            row * n + i
        }
    };
    let mut tris = Vec::with_capacity(2 * n);
    for i in 0..n {
        tris.push([v(i, 0), v(i + 1, 0), v(i + 1, 1)]);
        tris.push([v(i, 0), v(i + 1, 1), v(i, 1)]);
    }
    SimplicialMesh::new(2 * n, tris, None)
}

fn dist3(p: [f64; 3], q: [f64; 3]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{measures, topology, validate_metric};

    #[test]
    fn cap_counts_and_symmetry() {
        for m in 1..6 {
            let (mesh, metric) = build_cap_mesh(1.0, m).unwrap();
            assert_eq!(mesh.vertex_count(), 1 + 3 * m * (m + 1));
            assert_eq!(mesh.triangles().len(), 6 * m * m);
            assert!(validate_metric(&mesh, &metric).is_valid());
            let t = topology(&mesh);
            assert_eq!((t.genus, t.boundary_components, t.euler_characteristic), (0, 1, 1));
            assert_eq!(mesh.boundary_vertices().len(), 6 * m);
        }
    }

    #[test]
    fn triangles_are_positively_oriented() {
        let (mesh, _) = build_flat_disk_mesh(1.0, 5).unwrap();
        let c = mesh.coordinates().unwrap();
        for t in mesh.triangles() {
            let (p, q, s) = (c[t[0]], c[t[1]], c[t[2]]);
            let cross = (q[0] - p[0]) * (s[1] - p[1]) - (q[1] - p[1]) * (s[0] - p[0]);
            assert!(cross > 0.0);
        }
    }

    #[test]
    fn cap_area_converges() {
        let r = PI / 3.0;
        let (mesh, metric) = build_cap_mesh(r, 24).unwrap();
        let m = measures(&mesh, &metric).unwrap();
        let area = 2.0 * PI * (1.0 - r.cos());
        assert!((m.area - area).abs() / area < 5e-3);
        let len = 2.0 * PI * r.sin();
        assert!((m.boundary_length - len).abs() / len < 5e-3);
    }

    #[test]
    fn ball_area_converges() {
        let (mesh, metric) = build_hyperbolic_ball_mesh(1.0, 24).unwrap();
        let m = measures(&mesh, &metric).unwrap();
        let area = 2.0 * PI * (1f64.cosh() - 1.0);
        assert!((m.area - area).abs() / area < 5e-3, "{}", m.area);
        let len = 2.0 * PI * 1f64.sinh();
        assert!((m.boundary_length - len).abs() / len < 5e-3);
    }

    #[test]
    fn radius_out_of_range() {
        assert!(build_cap_mesh(0.0, 2).is_err());
        assert!(build_cap_mesh(PI / 2.0, 2).is_err());
        assert!(build_hyperbolic_ball_mesh(0.0, 2).is_err());
        assert!(build_cap_mesh(1.0, 0).is_err());
    }

    #[test]
    fn coarse_cap_is_valid() {
        let (mesh, metric) = build_cap_mesh(PI / 3.0, 1).unwrap();
        assert_eq!(mesh.vertex_count(), 7);
        assert!(validate_metric(&mesh, &metric).is_valid());
        let m = measures(&mesh, &metric).unwrap();
        assert!(m.per_triangle_areas.iter().all(|&a| a > 0.0));
    }
}
