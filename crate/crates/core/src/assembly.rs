//! Piecewise-linear finite elements on an intrinsic metric: cotangent
//! stiffness `S`, area mass `M` and boundary mass `B`, together with the exact
//! derivatives of their quadratic forms with respect to edge lengths.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{checked_lengths, DiscreteMetric, SimplicialMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMode {
    #[default]
    Consistent,
    Lumped,
}

#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Dirichlet energy `∫|∇u|²`.
    pub stiffness: CsrMatrix,
    /// `∫u²` over the surface.
    pub mass: CsrMatrix,
    /// `∫u²` over the boundary curve.
    pub boundary_mass: CsrMatrix,
    /// Boundary vertices in increasing order; position = boundary DOF index.
    pub boundary_index_map: Vec<usize>,
    pub interior_vertices: Vec<usize>,
    pub mass_mode: MassMode,
    /// `𝟙ᵀM𝟙`.
    pub area: f64,
    /// `𝟙ᵀB𝟙`.
    pub boundary_length: f64,
}

impl OperatorSet {
    pub fn vertex_count(&self) -> usize {
        self.stiffness.nrows()
    }
}

/// Per-triangle geometry derived from squared side lengths `s[k]` (side
/// opposite local vertex `k`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Element {
    pub s: [f64; 3],
    pub area: f64,
    pub cot: [f64; 3],
}

impl Element {
    pub fn new(t: usize, l: [f64; 3]) -> Result<Self> {
        let s = l.map(|x| x * x);
        let area = crate::mesh::heron(l[0], l[1], l[2]);
        let scale = s[0].max(s[1]).max(s[2]);
        if !(area > 1e-14 * scale) {
            return Err(Error::DegenerateTriangle(t));
        }
        let cot = [0, 1, 2].map(|k| (s[(k + 1) % 3] + s[(k + 2) % 3] - s[k]) / (4.0 * area));
        if cot.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateTriangle(t));
        }
        Ok(Self { s, area, cot })
    }

    /// `∂A/∂s_m`.
    pub fn d_area(&self) -> [f64; 3] {
        self.cot.map(|c| 0.25 * c)
    }

    /// `∂cot_k/∂s_m` as `[k][m]`.
    pub fn d_cot(&self) -> [[f64; 3]; 3] {
        let da = self.d_area();
        let mut out = [[0.0; 3]; 3];
        for k in 0..3 {
            for m in 0..3 {
                let dn = if k == m { -1.0 } else { 1.0 };
                out[k][m] = dn / (4.0 * self.area) - self.cot[k] / self.area * da[m];
            }
        }
        out
    }
}

fn elements(mesh: &SimplicialMesh, lengths: &[f64]) -> Result<Vec<Element>> {
    mesh.triangle_edges()
        .par_iter()
        .enumerate()
        .map(|(t, te)| Element::new(t, te.map(|e| lengths[e])))
        .collect()
}

pub fn assemble(mesh: &SimplicialMesh, metric: &DiscreteMetric, mass_mode: MassMode) -> Result<OperatorSet> {
    let lengths = checked_lengths(mesh, metric)?;
    assemble_lengths(mesh, &lengths, mass_mode)
}

pub(crate) fn assemble_lengths(mesh: &SimplicialMesh, lengths: &[f64], mass_mode: MassMode) -> Result<OperatorSet> {
    let els = elements(mesh, lengths)?;
    let ones = vec![1.0; mesh.vertex_count()];
    build(mesh, lengths, &els, &ones, &ones, mass_mode)
}

/// Operators for the conformal metric `e^{2φ}g₀`, weighting the mass by the
/// piecewise-linear interpolant of `e^{2φ}` and the boundary mass by that of
/// `e^{φ}`, while the stiffness keeps the base metric (the Dirichlet energy
/// of a surface is conformally invariant). Unlike changing edge lengths, this
/// stays well defined for arbitrarily steep factors.
pub fn assemble_conformal(
    mesh: &SimplicialMesh,
    base: &DiscreteMetric,
    log_factor: &[f64],
    mass_mode: MassMode,
) -> Result<OperatorSet> {
    if log_factor.len() != mesh.vertex_count() || log_factor.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidMetric("conformal factor must be finite, one value per vertex".into()));
    }
    let lengths = checked_lengths(mesh, base)?;
    let els = elements(mesh, &lengths)?;
    let area_w: Vec<f64> = log_factor.iter().map(|p| (2.0 * p).exp()).collect();
    let line_w: Vec<f64> = log_factor.iter().map(|p| p.exp()).collect();
    build(mesh, &lengths, &els, &area_w, &line_w, mass_mode)
}

fn build(
    mesh: &SimplicialMesh,
    lengths: &[f64],
    els: &[Element],
    area_w: &[f64],
    line_w: &[f64],
    mass_mode: MassMode,
) -> Result<OperatorSet> {
    let n = mesh.vertex_count();
    let tris = mesh.triangles();
    let mut ts = Vec::with_capacity(9 * tris.len());
    let mut tm = Vec::with_capacity(9 * tris.len());
    for (t, tri) in tris.iter().enumerate() {
        let el = &els[t];
        for k in 0..3 {
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let w = 0.5 * el.cot[k];
            ts.push((i, j, -w));
            ts.push((j, i, -w));
            ts.push((i, i, w));
            ts.push((j, j, w));
        }
        let a = el.area;
        let w = tri.map(|v| area_w[v]);
        for p in 0..3 {
            for q in 0..3 {
                let val = if p == q {
                    a * (w[p] / 10.0 + (w[(p + 1) % 3] + w[(p + 2) % 3]) / 30.0)
                } else {
                    a * ((w[p] + w[q]) / 30.0 + w[3 - p - q] / 60.0)
                };
                match mass_mode {
                    MassMode::Consistent => tm.push((tri[p], tri[q], val)),
                    MassMode::Lumped => tm.push((tri[p], tri[p], val)),
                }
            }
        }
    }
    let mut tb = Vec::new();
    for &[i, j] in mesh.boundary_edges() {
        let e = mesh.edge_index(i, j).expect("boundary edge exists");
        let l = lengths[e];
        let (wi, wj) = (line_w[i], line_w[j]);
        let bii = l * (wi / 4.0 + wj / 12.0);
        let bjj = l * (wj / 4.0 + wi / 12.0);
        let bij = l * (wi + wj) / 12.0;
        match mass_mode {
            MassMode::Consistent => {
                tb.extend([(i, i, bii), (j, j, bjj), (i, j, bij), (j, i, bij)]);
            }
            MassMode::Lumped => {
                tb.extend([(i, i, bii + bij), (j, j, bjj + bij)]);
            }
        }
    }
    let stiffness = CsrMatrix::from_triplets(n, n, ts);
    let mass = CsrMatrix::from_triplets(n, n, tm);
    let boundary_mass = CsrMatrix::from_triplets(n, n, tb);
    let area = mass.row_sums().iter().sum();
    let boundary_length = boundary_mass.row_sums().iter().sum();
    Ok(OperatorSet {
        stiffness,
        mass,
        boundary_mass,
        boundary_index_map: mesh.boundary_vertices(),
        interior_vertices: mesh.interior_vertices(),
        mass_mode,
        area,
        boundary_length,
    })
}

/// `S − cM`.
pub fn shifted_pencil(ops: &OperatorSet, c: f64) -> CsrMatrix {
    ops.stiffness.linear_combination(1.0, &ops.mass, -c)
}

/// Derivatives of `uᵀSu`, `uᵀMu`, `uᵀBu` with respect to every edge length.
#[derive(Debug, Clone)]
pub struct QuadraticFormGradients {
    pub stiffness: Vec<f64>,
    pub mass: Vec<f64>,
    pub boundary_mass: Vec<f64>,
}

pub fn quadratic_form_gradients(
    mesh: &SimplicialMesh,
    lengths: &[f64],
    u: &[f64],
    mass_mode: MassMode,
) -> Result<QuadraticFormGradients> {
    let els = elements(mesh, lengths)?;
    let ne = mesh.edge_count();
    let mut ds = vec![0.0; ne];
    let mut dm = vec![0.0; ne];
    // Per-triangle contributions are accumulated sequentially in triangle
    // order so that results are reproducible.
    let contrib: Vec<([f64; 3], [f64; 3])> = mesh
        .triangles()
        .par_iter()
        .zip(&els)
        .map(|(tri, el)| {
            let uv = tri.map(|v| u[v]);
            let diff2 = [0, 1, 2].map(|k| (uv[(k + 1) % 3] - uv[(k + 2) % 3]).powi(2));
            let dcot = el.d_cot();
            let da = el.d_area();
            let mass_poly = match mass_mode {
                MassMode::Consistent => {
                    (uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2] + uv[0] * uv[1] + uv[1] * uv[2] + uv[2] * uv[0])
                        / 6.0
                }
                MassMode::Lumped => (uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2]) / 3.0,
            };
            let mut gs = [0.0; 3];
            let mut gm = [0.0; 3];
            for m in 0..3 {
                let d_s: f64 = (0..3).map(|k| 0.5 * dcot[k][m] * diff2[k]).sum();
                gs[m] = d_s;
                gm[m] = da[m] * mass_poly;
            }
            (gs, gm)
        })
        .collect();
    for ((te, el), (gs, gm)) in mesh.triangle_edges().iter().zip(&els).zip(contrib) {
        for m in 0..3 {
            // d/dℓ = 2ℓ d/ds.
            let chain = 2.0 * el.s[m].sqrt();
            ds[te[m]] += chain * gs[m];
            dm[te[m]] += chain * gm[m];
        }
    }
    let mut db = vec![0.0; ne];
    for &[i, j] in mesh.boundary_edges() {
        let e = mesh.edge_index(i, j).expect("boundary edge exists");
        db[e] += match mass_mode {
            MassMode::Consistent => (u[i] * u[i] + u[j] * u[j] + u[i] * u[j]) / 3.0,
            MassMode::Lumped => (u[i] * u[i] + u[j] * u[j]) / 2.0,
        };
    }
    Ok(QuadraticFormGradients {
        stiffness: ds,
        mass: dm,
        boundary_mass: db,
    })
}

/// `∂A/∂ℓ_e` and `∂a/∂ℓ_e` for total area and boundary length.
pub fn measure_gradients(mesh: &SimplicialMesh, lengths: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let els = elements(mesh, lengths)?;
    let mut da = vec![0.0; mesh.edge_count()];
    for (te, el) in mesh.triangle_edges().iter().zip(&els) {
        let d = el.d_area();
        for m in 0..3 {
            da[te[m]] += 2.0 * el.s[m].sqrt() * d[m];
        }
    }
    let dl = (0..mesh.edge_count())
        .map(|e| if mesh.is_boundary_edge(e) { 1.0 } else { 0.0 })
        .collect();
    Ok((da, dl))
}

/// Coordinate-format dump, one `row col value` line per stored entry.
pub fn write_coordinate_matrix(path: impl AsRef<Path>, matrix: &CsrMatrix) -> Result<()> {
    let mut s = String::new();
    for (i, j, v) in matrix.iter() {
        writeln!(s, "{i} {j} {v:.16e}").unwrap();
    }
    std::fs::write(path.as_ref(), s).map_err(|e| Error::io(path.as_ref().display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, EnvelopeLdlt};
    use crate::mesh::{build_cap_mesh, build_flat_disk_mesh, measures, single_triangle, unit_square};

    #[test]
    fn equilateral_stiffness_entries() {
        let (mesh, metric) = single_triangle();
        let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
        let expect = -1.0 / (2.0 * 3f64.sqrt());
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert!((ops.stiffness.get(i, j) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn totals_match_measures() {
        let (mesh, metric) = unit_square();
        for mode in [MassMode::Consistent, MassMode::Lumped] {
            let ops = assemble(&mesh, &metric, mode).unwrap();
            let one = vec![1.0; 4];
            assert!((ops.mass.quad_form(&one) - 1.0).abs() < 1e-14);
            assert!((ops.boundary_mass.quad_form(&one) - 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_in_stiffness_kernel() {
        let (mesh, metric) = build_cap_mesh(1.0, 6).unwrap();
        let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
        let r = ops.stiffness.mul_vec(&vec![1.0; mesh.vertex_count()]);
        let tol = 1e-12 * ops.stiffness.max_abs();
        assert!(r.iter().all(|v| v.abs() < tol));
        let m = measures(&mesh, &metric).unwrap();
        assert!((ops.area - m.area).abs() < 1e-12 * m.area);
        assert!((ops.boundary_length - m.boundary_length).abs() < 1e-12 * m.boundary_length);
    }

    #[test]
    fn negative_shift_is_positive_definite() {
        let (mesh, metric) = build_cap_mesh(1.0, 5).unwrap();
        let ops = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
        let f = EnvelopeLdlt::factor(&shifted_pencil(&ops, -2.0)).unwrap();
        assert_eq!(f.inertia().positive, mesh.vertex_count());
        let p0 = shifted_pencil(&ops, 0.0);
        for ((a, b, x), (c, d, y)) in p0.iter().zip(ops.stiffness.iter()) {
            assert_eq!((a, b), (c, d));
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }

    #[test]
    fn conformal_assembly_with_zero_factor_matches() {
        let (mesh, metric) = build_flat_disk_mesh(1.0, 4).unwrap();
        let a = assemble(&mesh, &metric, MassMode::Consistent).unwrap();
        let b = assemble_conformal(&mesh, &metric, &vec![0.0; mesh.vertex_count()], MassMode::Consistent).unwrap();
        let u: Vec<f64> = (0..mesh.vertex_count()).map(|i| (i as f64 * 0.3).sin()).collect();
        for (x, y) in [(&a.mass, &b.mass), (&a.boundary_mass, &b.boundary_mass), (&a.stiffness, &b.stiffness)] {
            assert!((x.quad_form(&u) - y.quad_form(&u)).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_form_gradients_match_finite_differences() {
        let (mesh, metric) = build_flat_disk_mesh(1.0, 3).unwrap();
        let lengths: Vec<f64> = metric
            .lengths(&mesh)
            .iter()
            .enumerate()
            .map(|(i, l)| l * (1.0 + 0.05 * (i as f64 * 1.7).sin()))
            .collect();
        let u: Vec<f64> = (0..mesh.vertex_count()).map(|i| (i as f64 * 0.71).cos()).collect();
        for mode in [MassMode::Consistent, MassMode::Lumped] {
            let g = quadratic_form_gradients(&mesh, &lengths, &u, mode).unwrap();
            let dir: Vec<f64> = (0..lengths.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let h = 1e-6;
            let eval = |t: f64| {
                let l: Vec<f64> = lengths.iter().zip(&dir).map(|(l, d)| l + t * d).collect();
                let ops = assemble_lengths(&mesh, &l, mode).unwrap();
                [ops.stiffness.quad_form(&u), ops.mass.quad_form(&u), ops.boundary_mass.quad_form(&u)]
            };
            let (p, m) = (eval(h), eval(-h));
            let analytic = [dot(&g.stiffness, &dir), dot(&g.mass, &dir), dot(&g.boundary_mass, &dir)];
            for k in 0..3 {
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!((fd - analytic[k]).abs() < 1e-7 * fd.abs().max(1.0), "{k}: {fd} vs {}", analytic[k]);
            }
        }
    }
}
