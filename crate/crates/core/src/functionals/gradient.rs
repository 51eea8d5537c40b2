//! Hellmann–Feynman derivatives of eigenvalues with respect to the metric.
//!
//! For a normalized eigenvector `u` of the pencil `(A(ℓ), W(ℓ))` with
//! eigenvalue `μ`, `dμ = uᵀ(dA − μ dW)u`. For Robin, `A = S − σB` and
//! `W = M`; for frequency-c Steklov, `A = S − cM` and `W = B`. Eigenvectors
//! of a multiple eigenvalue give the elements of its subdifferential.

use serde::{Deserialize, Serialize};

use crate::assembly::{quadratic_form_gradients, MassMode, OperatorSet};
use crate::error::Result;
use crate::mesh::{checked_lengths, DiscreteMetric, SimplicialMesh};
use crate::spectra::{freq_steklov_spectrum, robin_spectrum, ProblemKind, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofKind {
    EdgeLengths,
    Conformal,
}

impl DofKind {
    pub fn of(metric: &DiscreteMetric) -> Self {
        match metric {
            DiscreteMetric::EdgeLengths { .. } => DofKind::EdgeLengths,
            DiscreteMetric::Conformal { .. } => DofKind::Conformal,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricGradient {
    pub dofs: DofKind,
    pub vector: Vec<f64>,
    /// Per-triangle symmetric tensor `[xx, xy, yy]` in the triangle's local
    /// orthonormal frame (first axis along its first edge): the density whose
    /// pairing with a metric variation gives the interior part of the derivative.
    pub interior_tensor_field: Vec<[f64; 3]>,
    /// Per boundary vertex (in boundary index order): density of the
    /// boundary part of the derivative.
    pub boundary_density: Vec<f64>,
}

impl MetricGradient {
    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.vector)
    }

    /// `Σ wᵢ gᵢ` over gradients of the same DOF kind.
    pub fn combination(parts: &[(f64, &MetricGradient)]) -> MetricGradient {
        let first = parts[0].1;
        let mut out = MetricGradient {
            dofs: first.dofs,
            vector: vec![0.0; first.vector.len()],
            interior_tensor_field: vec![[0.0; 3]; first.interior_tensor_field.len()],
            boundary_density: vec![0.0; first.boundary_density.len()],
        };
        for &(w, g) in parts {
            crate::linalg::axpy(w, &g.vector, &mut out.vector);
            for (t, s) in out.interior_tensor_field.iter_mut().zip(&g.interior_tensor_field) {
                for k in 0..3 {
                    t[k] += w * s[k];
                }
            }
            crate::linalg::axpy(w, &g.boundary_density, &mut out.boundary_density);
        }
        out
    }
}

/// Which eigenproblem a derivative refers to.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Pencil {
    /// `(S − σB) u = λ M u`.
    Robin(f64),
    /// `(S − cM) u = θ B u`.
    Steklov(f64),
}

impl Pencil {
    pub fn from_problem(p: ProblemKind) -> Self {
        match p {
            ProblemKind::Robin { sigma } => Pencil::Robin(sigma),
            ProblemKind::FreqSteklov { c } => Pencil::Steklov(c),
            ProblemKind::Dirichlet => unreachable!("Dirichlet eigenvalues are not differentiated"),
        }
    }
}

/// Derivative of the eigenvalue `mu` along the normalized eigenvector `u`,
/// with respect to the metric's own degrees of freedom.
pub(crate) fn eigen_gradient(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    mass_mode: MassMode,
    pencil: Pencil,
    mu: f64,
    u: &[f64],
) -> Result<MetricGradient> {
    let lengths = checked_lengths(mesh, metric)?;
    let q = quadratic_form_gradients(mesh, &lengths, u, mass_mode)?;
    // Coefficients of (uᵀSu, uᵀMu, uᵀBu).
    let (cs, cm, cb) = match pencil {
        Pencil::Robin(sigma) => (1.0, -mu, -sigma),
        Pencil::Steklov(c) => (1.0, -c, -mu),
    };
    let edge: Vec<f64> = (0..mesh.edge_count())
        .map(|e| cs * q.stiffness[e] + cm * q.mass[e] + cb * q.boundary_mass[e])
        .collect();
    let (tensor, boundary) = densities(mesh, &lengths, u, mass_mode, -cm, -cb);
    Ok(MetricGradient {
        dofs: DofKind::of(metric),
        vector: to_dofs(mesh, metric, &lengths, &edge),
        interior_tensor_field: tensor,
        boundary_density: boundary,
    })
}

/// Contracts an edge-length gradient to the metric's DOFs
/// (`∂ℓᵢⱼ/∂φᵢ = ℓᵢⱼ/2` for conformal factors).
pub(crate) fn to_dofs(mesh: &SimplicialMesh, metric: &DiscreteMetric, lengths: &[f64], edge: &[f64]) -> Vec<f64> {
    match metric {
        DiscreteMetric::EdgeLengths { .. } => edge.to_vec(),
        DiscreteMetric::Conformal { .. } => {
            let mut g = vec![0.0; mesh.vertex_count()];
            for (e, &[a, b]) in mesh.edges().iter().enumerate() {
                let w = 0.5 * lengths[e] * edge[e];
                g[a] += w;
                g[b] += w;
            }
            g
        }
    }
}

/// Local frame positions of a triangle's vertices.
pub(crate) fn local_frame(l01: f64, l12: f64, l20: f64) -> [[f64; 2]; 3] {
    let x = (l01 * l01 + l20 * l20 - l12 * l12) / (2.0 * l01);
    let y = (l20 * l20 - x * x).max(0.0).sqrt();
    [[0.0, 0.0], [l01, 0.0], [x, y]]
}

pub(crate) fn triangle_frame(mesh: &SimplicialMesh, lengths: &[f64], t: usize) -> [[f64; 2]; 3] {
    let te = mesh.triangle_edges()[t];
    // Side k→k+1 is opposite local vertex k+2.
    local_frame(lengths[te[2]], lengths[te[0]], lengths[te[1]])
}

/// Interior tensor `A(½(|∇u|² − m·⟨u²⟩)g − ∇u⊗∇u)` per triangle, where `m` is
/// the coefficient of the area mass in the pencil, and boundary density
/// `−b·u²` per boundary vertex.
fn densities(
    mesh: &SimplicialMesh,
    lengths: &[f64],
    u: &[f64],
    mass_mode: MassMode,
    mass_coeff: f64,
    boundary_coeff: f64,
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let tensor = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let p = triangle_frame(mesh, lengths, t);
            let area = 0.5 * (p[1][0] * p[2][1]);
            let uv = tri.map(|v| u[v]);
            // Gradient of the linear interpolant.
            let gx = (uv[1] - uv[0]) / p[1][0];
            let gy = (uv[2] - uv[0] - gx * p[2][0]) / p[2][1];
            let g2 = gx * gx + gy * gy;
            let mean_sq = match mass_mode {
                MassMode::Consistent => {
                    (uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2] + uv[0] * uv[1] + uv[1] * uv[2] + uv[2] * uv[0])
                        / 6.0
                }
                MassMode::Lumped => (uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2]) / 3.0,
            };
            let iso = 0.5 * (g2 - mass_coeff * mean_sq);
            [area * (iso - gx * gx), -area * gx * gy, area * (iso - gy * gy)]
        })
        .collect();
    let boundary = mesh
        .boundary_vertices()
        .iter()
        .map(|&v| -boundary_coeff * u[v] * u[v])
        .collect();
    (tensor, boundary)
}

/// Metric variation per triangle (`[xx, xy, yy]` in the local frame) induced by
/// an edge-length perturbation `dl`: `eᵀhe = 2ℓ dℓ` on each side.
pub fn metric_variation(mesh: &SimplicialMesh, lengths: &[f64], dl: &[f64]) -> Vec<[f64; 3]> {
    (0..mesh.triangles().len())
        .map(|t| {
            let p = triangle_frame(mesh, lengths, t);
            let te = mesh.triangle_edges()[t];
            let sides = [(0usize, 1usize, te[2]), (1, 2, te[0]), (2, 0, te[1])];
            let mut a = nalgebra::Matrix3::zeros();
            let mut b = nalgebra::Vector3::zeros();
            for (row, &(i, j, e)) in sides.iter().enumerate() {
                let ex = p[j][0] - p[i][0];
                let ey = p[j][1] - p[i][1];
                a[(row, 0)] = ex * ex;
                a[(row, 1)] = 2.0 * ex * ey;
                a[(row, 2)] = ey * ey;
                b[row] = 2.0 * lengths[e] * dl[e];
            }
            let h = a.lu().solve(&b).unwrap_or_else(nalgebra::Vector3::zeros);
            [h[0], h[1], h[2]]
        })
        .collect()
}

/// `Σ_T ⟨τ_T, h_T⟩` with the Frobenius pairing of symmetric tensors.
pub fn pair_tensor_field(tau: &[[f64; 3]], h: &[[f64; 3]]) -> f64 {
    tau.iter()
        .zip(h)
        .map(|(t, h)| t[0] * h[0] + 2.0 * t[1] * h[1] + t[2] * h[2])
        .sum()
}

fn spectrum_for(ops: &OperatorSet, pencil: Pencil, index: usize) -> Result<Spectrum> {
    // Two extra eigenpairs let the cluster of `index` be detected.
    let count = |avail: usize| (index + 3).min(avail);
    match pencil {
        Pencil::Robin(sigma) => robin_spectrum(ops, sigma, count(ops.vertex_count())),
        Pencil::Steklov(c) => freq_steklov_spectrum(ops, c, count(ops.boundary_index_map.len())),
    }
}

fn simple_eigen_gradient(
    ops: &OperatorSet,
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    pencil: Pencil,
    index: usize,
) -> Result<MetricGradient> {
    let spec = spectrum_for(ops, pencil, index)?;
    if index >= spec.eigenvalues.len() {
        return Err(crate::error::Error::CountTooLarge {
            requested: index + 1,
            available: spec.eigenvalues.len(),
        });
    }
    spec.require_simple(index)?;
    eigen_gradient(
        mesh,
        metric,
        ops.mass_mode,
        pencil,
        spec.eigenvalues[index],
        &spec.eigenvectors[index],
    )
}

/// `dλ_index` of `(S − σB)u = λMu`; the eigenvalue must be simple.
pub fn grad_robin_eigenvalue(
    ops: &OperatorSet,
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    sigma: f64,
    index: usize,
) -> Result<MetricGradient> {
    simple_eigen_gradient(ops, mesh, metric, Pencil::Robin(sigma), index)
}

/// `dθ_index` of `(S − cM)u = θBu`; the eigenvalue must be simple and `c` admissible.
pub fn grad_freq_steklov_eigenvalue(
    ops: &OperatorSet,
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    c: f64,
    index: usize,
) -> Result<MetricGradient> {
    simple_eigen_gradient(ops, mesh, metric, Pencil::Steklov(c), index)
}
