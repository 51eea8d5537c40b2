//! Reconstruction of a candidate free boundary immersion from eigenfunctions.
//!
//! `v₀ = √a·cos r·u₀` (`cosh r` in the hyperbolic case) comes from the ground
//! Steklov eigenfunction; the remaining coordinates come from a positive
//! semidefinite form `Q` on the `i`-th eigenspace fitted so that
//! `±v₀² + uᵀQu` is as close as possible to the target constant, then
//! factored as `Q = Σ μ_l w_l w_lᵀ`, `v_l = √μ_l·(U w_l)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Geometry;
use crate::assembly::{assemble, MassMode};
use crate::error::{Error, Result};
use crate::functionals::triangle_frame;
use crate::linalg::dot;
use crate::mesh::{checked_lengths, DiscreteMetric, SimplicialMesh};
use crate::spectra::{freq_steklov_spectrum_with, SolverOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateResiduals {
    /// `max_v |±v₀² + Σv_j² − s|` with `s = 1` (spherical) or `−1` (hyperbolic).
    pub sphere: f64,
    /// Max over triangles of `‖Σ±∇v_j∇v_jᵀ − I‖_F / ‖I‖_F` in the triangle's frame.
    pub metric: f64,
    /// `max_{∂Σ} |v₀ − cos r|` (or `cosh r`).
    pub boundary: f64,
    /// Relative errors of `θ₀` and of each cluster eigenvalue against their targets.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub geometry: Geometry,
    pub r: f64,
    pub i: usize,
    /// Number of coordinates besides `v₀` (the rank of `Q`).
    pub ambient_dimension: usize,
    /// `v₀, v₁, …, v_m` per vertex.
    pub functions: Vec<Vec<f64>>,
    /// `t_j`, normalized to a probability vector.
    pub mixing: Vec<f64>,
    /// `Σ t_j` before normalization (1 for an exact immersion).
    pub mixing_sum: f64,
    /// Fitted form on the eigenspace basis.
    pub quadratic_form: Vec<Vec<f64>>,
    /// Eigenvalue indices spanning the fitted eigenspace.
    pub cluster: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub targets: Vec<f64>,
    pub residuals: CertificateResiduals,
    /// Sphere residual of the best single-direction fit, for comparison.
    pub rank_one_sphere_residual: f64,
}

#[derive(Debug, Clone)]
pub struct CertificateOptions {
    pub mass_mode: MassMode,
    pub solver: SolverOptions,
    /// Smallest eigenspace dimension used for the fit (the surface dimension).
    pub min_functions: usize,
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            mass_mode: MassMode::Consistent,
            solver: SolverOptions::default(),
            min_functions: 2,
            seed: 0xce47,
        }
    }
}

pub fn fbmi_certificate(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    r: f64,
    i: usize,
    geometry: Geometry,
) -> Result<Certificate> {
    fbmi_certificate_with(mesh, metric, r, i, geometry, &CertificateOptions::default())
}

pub fn fbmi_certificate_with(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    r: f64,
    i: usize,
    geometry: Geometry,
    opts: &CertificateOptions,
) -> Result<Certificate> {
    let reference = super::cap_reference(r, 2, geometry)?;
    if i == 0 {
        return Err(Error::OutOfRange("eigenvalue index i must be at least 1".into()));
    }
    let hyperbolic = geometry == Geometry::Hyperbolic;
    let (c, sign, level, cos_r, sin_r) = if hyperbolic {
        (-2.0, -1.0, -1.0, r.cosh(), r.sinh())
    } else {
        (2.0, 1.0, 1.0, r.cos(), r.sin())
    };
    let (target0, target1) = if hyperbolic {
        (reference.omega0.unwrap(), reference.omega1.unwrap())
    } else {
        (reference.theta0.unwrap(), reference.theta1.unwrap())
    };

    let ops = assemble(mesh, metric, opts.mass_mode)?;
    let nb = ops.boundary_index_map.len();
    let count = (i + opts.min_functions + 3).min(nb);
    let spectrum = freq_steklov_spectrum_with(&ops, c, count, &opts.solver)?;
    let mut cluster = spectrum.cluster_of(i).to_vec();
    if cluster.is_empty() {
        return Err(Error::CountTooLarge {
            requested: i + 1,
            available: spectrum.eigenvalues.len(),
        });
    }
    while cluster.len() < opts.min_functions {
        let next = cluster[cluster.len() - 1] + 1;
        if next >= spectrum.eigenvalues.len() {
            break;
        }
        cluster.push(next);
    }
    if cluster.contains(&0) {
        return Err(Error::ClusteredEigenvalue { index: 0, cluster });
    }

    let a = ops.boundary_length;
    let mut u0 = spectrum.eigenvectors[0].clone();
    if dot(&ops.boundary_mass.row_sums(), &u0) < 0.0 {
        u0.iter_mut().for_each(|x| *x = -*x);
    }
    let v0: Vec<f64> = u0.iter().map(|x| a.sqrt() * cos_r * x).collect();
    let n = mesh.vertex_count();
    let m = cluster.len();
    let basis: Vec<&Vec<f64>> = cluster.iter().map(|&j| &spectrum.eigenvectors[j]).collect();
    let rows: Vec<DVector<f64>> = (0..n).map(|v| DVector::from_iterator(m, basis.iter().map(|u| u[v]))).collect();
    // Σ v_j² must equal `level − sign·v₀²`.
    let y: Vec<f64> = v0.iter().map(|x| level - sign * x * x).collect();

    let q = fit_psd(&rows, &y);
    let sphere_of = |q: &DMatrix<f64>| -> f64 {
        rows.iter()
            .zip(&v0)
            .map(|(u, x)| (sign * x * x + u.dot(&(q * u)) - level).abs())
            .fold(0.0, f64::max)
    };
    let sphere = sphere_of(&q);
    let rank_one = best_rank_one(&rows, &y, &q, opts.seed, &sphere_of);
    if m == 1 {
        return Err(Error::NoCandidate("the eigenspace is one-dimensional".into()));
    }
    if sphere >= rank_one / 10.0 {
        return Err(Error::NoCandidate(format!(
            "eigenspace fit residual {sphere:.3e} is not 10× below the rank-one residual {rank_one:.3e}"
        )));
    }

    let eig = SymmetricEigen::new(q.clone());
    let trace = q.trace().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let mut functions = vec![v0.clone()];
    let mut raw_t = Vec::new();
    for &l in &order {
        let mu = eig.eigenvalues[l];
        if mu <= 1e-10 * trace {
            continue;
        }
        let w = eig.eigenvectors.column(l);
        functions.push(rows.iter().map(|u| mu.sqrt() * u.dot(&w)).collect());
        raw_t.push(mu / (a * sin_r * sin_r));
    }
    let mixing_sum: f64 = raw_t.iter().sum();
    let mixing = raw_t.iter().map(|t| t / mixing_sum).collect();

    let boundary = ops
        .boundary_index_map
        .iter()
        .map(|&v| (v0[v] - cos_r).abs())
        .fold(0.0, f64::max);
    let signs: Vec<f64> = std::iter::once(sign).chain(std::iter::repeat(1.0)).take(functions.len()).collect();
    let metric_residual = pullback_residual(mesh, metric, &functions, &signs)?;
    let mut eigenvalues = vec![spectrum.eigenvalues[0]];
    let mut targets = vec![target0];
    for &j in &cluster {
        eigenvalues.push(spectrum.eigenvalues[j]);
        targets.push(target1);
    }
    let eigen_res = eigenvalues
        .iter()
        .zip(&targets)
        .map(|(v, t): (&f64, &f64)| (v - t).abs() / t.abs())
        .collect();
    Ok(Certificate {
        geometry,
        r,
        i,
        ambient_dimension: functions.len() - 1,
        functions,
        mixing,
        mixing_sum,
        quadratic_form: (0..m).map(|p| (0..m).map(|s| q[(p, s)]).collect()).collect(),
        cluster,
        eigenvalues,
        targets,
        residuals: CertificateResiduals {
            sphere,
            metric: metric_residual,
            boundary,
            eigenvalues: eigen_res,
        },
        rank_one_sphere_residual: rank_one,
    })
}

/// Least-squares `Q ⪰ 0` minimizing `Σ_v (u_vᵀQu_v − y_v)²`.
fn fit_psd(rows: &[DVector<f64>], y: &[f64]) -> DMatrix<f64> {
    let m = rows[0].len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|p| (p..m).map(move |q| (p, q))).collect();
    let feats = DMatrix::from_fn(rows.len(), pairs.len(), |v, k| {
        let (p, q) = pairs[k];
        let f = rows[v][p] * rows[v][q];
        if p == q {
            f
        } else {
            2.0 * f
        }
    });
    let rhs = DVector::from_column_slice(y);
    let sol = feats
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(pairs.len()));
    let mut q = DMatrix::zeros(m, m);
    for (k, &(p, s)) in pairs.iter().enumerate() {
        q[(p, s)] = sol[k];
        q[(s, p)] = sol[k];
    }
    if SymmetricEigen::new(q.clone()).eigenvalues.min() >= 0.0 {
        return q;
    }
    // Projected gradient on the PSD cone.
    let lip: f64 = 2.0 * rows.iter().map(|u| u.norm_squared().powi(2)).sum::<f64>();
    let mut q = project_psd(&q);
    for _ in 0..5000 {
        let mut grad = DMatrix::zeros(m, m);
        for (u, &t) in rows.iter().zip(y) {
            let res = u.dot(&(&q * u)) - t;
            grad += 2.0 * res * u * u.transpose();
        }
        let next = project_psd(&(&q - grad / lip));
        let change = (&next - &q).norm();
        q = next;
        if change <= 1e-15 * q.norm().max(1.0) {
            break;
        }
    }
    q
}

fn project_psd(q: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(q.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

fn best_rank_one(
    rows: &[DVector<f64>],
    y: &[f64],
    q: &DMatrix<f64>,
    seed: u64,
    sphere_of: &dyn Fn(&DMatrix<f64>) -> f64,
) -> f64 {
    let m = q.nrows();
    let mut dirs: Vec<DVector<f64>> = SymmetricEigen::new(q.clone()).eigenvectors.column_iter().map(|c| c.into_owned()).collect();
    dirs.extend((0..m).map(|j| DVector::from_fn(m, |p, _| f64::from(u8::from(p == j)))));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..32 {
        let w = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        if w.norm() > 1e-3 {
            dirs.push(w.normalize());
        }
    }
    dirs.iter()
        .map(|w| {
            let g: Vec<f64> = rows.iter().map(|u| u.dot(w).powi(2)).collect();
            let gg: f64 = g.iter().map(|x| x * x).sum();
            let s = if gg > 0.0 {
                (g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / gg).max(0.0)
            } else {
                0.0
            };
            sphere_of(&(s * w * w.transpose()))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Max over triangles of the relative Frobenius gap between the pullback
/// `Σ signs_j ∇v_j∇v_jᵀ` and the metric.
fn pullback_residual(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    functions: &[Vec<f64>],
    signs: &[f64],
) -> Result<f64> {
    let lengths = checked_lengths(mesh, metric)?;
    let mut worst: f64 = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = triangle_frame(mesh, &lengths, t);
        let mut pb = [0.0; 3];
        for (f, &s) in functions.iter().zip(signs) {
            let uv = tri.map(|v| f[v]);
            let gx = (uv[1] - uv[0]) / p[1][0];
            let gy = (uv[2] - uv[0] - gx * p[2][0]) / p[2][1];
            pb[0] += s * gx * gx;
            pb[1] += s * gx * gy;
            pb[2] += s * gy * gy;
        }
        let gap = ((pb[0] - 1.0).powi(2) + 2.0 * pb[1] * pb[1] + (pb[2] - 1.0).powi(2)).sqrt() / 2f64.sqrt();
        worst = worst.max(gap);
    }
    Ok(worst)
}
