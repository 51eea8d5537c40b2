//! Discrete extremality test for Θ.
//!
//! At an extremal metric some convex combination of the gradients
//! `G(u₀, u_j)` — Θ's gradient with `θᵢ` differentiated along `u_j` — vanishes.
//! The `u_j` range over the `θᵢ` cluster basis plus seeded random unit
//! combinations of it; the residual is the norm of the min-norm point of
//! their convex hull.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{eigen_gradient, Evaluation, Functional, FunctionalSpec, MetricGradient, Pencil, Theta};
use crate::error::{Error, Result};
use crate::linalg::{combine, gram_matrix, min_norm_point, norm};
use crate::mesh::{DiscreteMetric, SimplicialMesh};
use crate::spectra::SolverOptions;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalityOptions {
    /// Random unit combinations drawn in addition to the cluster basis.
    pub samples: usize,
    pub seed: u64,
    /// Eigenvalues within `cluster_tolerance·max(1, |θᵢ|)` of `θᵢ` join its
    /// cluster (an ε-subdifferential); 0 keeps the solver's cluster.
    #[serde(default)]
    pub cluster_tolerance: f64,
    #[serde(skip, default)]
    pub solver: SolverOptions,
}

impl Default for CriticalityOptions {
    fn default() -> Self {
        Self {
            samples: 32,
            seed: 0x7e7a,
            cluster_tolerance: 0.0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalitySample {
    /// Position of `u₀` in the `θ₀` cluster basis.
    pub ground: usize,
    /// Coefficients of `u_j` in the `θᵢ` cluster basis (unit vector).
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalityWitness {
    /// Norm of the min-norm point of the sampled gradient hull.
    pub residual: f64,
    /// Largest sampled gradient norm.
    pub reference_norm: f64,
    /// `residual / reference_norm`.
    pub relative_residual: f64,
    /// Mixing coefficients `t_j` (a probability vector over `samples`).
    pub weights: Vec<f64>,
    pub samples: Vec<CriticalitySample>,
    pub theta0: f64,
    pub theta_i: f64,
    pub cluster: Vec<usize>,
    /// The min-norm combination itself, in the metric's DOFs.
    pub min_norm_gradient: Vec<f64>,
    /// `u_j` for every sample (full vertex vectors, B-normalized).
    #[serde(skip)]
    pub eigenfunctions: Vec<Vec<f64>>,
}

pub fn criticality_residual_theta(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    r: f64,
    i: usize,
    opts: &CriticalityOptions,
) -> Result<CriticalityWitness> {
    let s = sample_gradients(mesh, metric, r, i, None, opts)?;
    let mn = min_norm_point(&gram_matrix(&s.points));
    let min_norm_gradient = combine(&s.points, &mn.weights);
    let residual = norm(&min_norm_gradient);
    let reference_norm = s.points.iter().map(|v| norm(v)).fold(0.0, f64::max);
    Ok(CriticalityWitness {
        residual,
        reference_norm,
        relative_residual: if reference_norm > 0.0 { residual / reference_norm } else { 0.0 },
        weights: mn.weights,
        samples: s.samples,
        theta0: s.theta0,
        theta_i: s.theta_i,
        cluster: s.cluster,
        min_norm_gradient,
        eigenfunctions: s.functions,
    })
}

pub(crate) struct SampledGradients {
    pub points: Vec<Vec<f64>>,
    pub samples: Vec<CriticalitySample>,
    pub functions: Vec<Vec<f64>>,
    pub theta0: f64,
    pub theta_i: f64,
    pub cluster: Vec<usize>,
    pub admissibility_margin: Option<f64>,
}

/// Gradients `G(u₀, u_j)` for either a fresh sample of the `θᵢ` eigenspace or,
/// when `fixed` is given, for the same cluster indices and basis coefficients
/// as an earlier sample (used to differentiate the residual).
pub(crate) fn sample_gradients(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    r: f64,
    i: usize,
    fixed: Option<(&[usize], &[CriticalitySample])>,
    opts: &CriticalityOptions,
) -> Result<SampledGradients> {
    let spec = FunctionalSpec::theta(r, i);
    let f = Theta;
    f.validate(&spec)?;
    let branches = f.branches(&spec);
    let mut reqs = branches[0].eigen.clone();
    if let Some((cluster, _)) = fixed {
        let top = cluster.iter().copied().max().unwrap_or(i);
        reqs[1].index = top.max(i);
    }
    let ev = Evaluation::new(mesh, metric, spec.mass_mode, &reqs, &opts.solver)?;
    let [r0, ri] = [branches[0].eigen[0], branches[0].eigen[1]];
    let spectrum = ev.spectrum(r0.problem);
    let (t0, ti) = (spectrum.eigenvalues[0], spectrum.eigenvalues[i]);
    let p = f.branch_partials(&spec, 0, &[t0, ti], ev.ops.boundary_length, ev.ops.area);
    let (g_area, g_len) = ev.measure_gradients()?;
    let ground = ev.eigen_subgradients(&r0)?;

    let cluster = match fixed {
        Some((c, _)) => c.to_vec(),
        None if opts.cluster_tolerance > 0.0 => {
            let band = opts.cluster_tolerance * ti.abs().max(1.0);
            let mut c: Vec<usize> = (0..spectrum.eigenvalues.len())
                .filter(|&j| (spectrum.eigenvalues[j] - ti).abs() <= band)
                .collect();
            c.extend(spectrum.cluster_of(ri.index));
            c.sort_unstable();
            c.dedup();
            c
        }
        None => spectrum.cluster_of(ri.index).to_vec(),
    };
    if cluster.contains(&0) {
        return Err(Error::ClusteredEigenvalue { index: 0, cluster });
    }
    let pairs: Vec<(usize, Vec<f64>)> = match fixed {
        Some((_, samples)) => samples
            .iter()
            .map(|s| (s.ground.min(ground.len() - 1), s.coefficients.clone()))
            .collect(),
        None => {
            let mut coefficients: Vec<Vec<f64>> = (0..cluster.len())
                .map(|k| (0..cluster.len()).map(|j| f64::from(u8::from(j == k))).collect())
                .collect();
            if cluster.len() > 1 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                while coefficients.len() < cluster.len() + opts.samples {
                    let v: Vec<f64> = (0..cluster.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = norm(&v);
                    if n > 0.1 && n <= 1.0 {
                        coefficients.push(v.iter().map(|x| x / n).collect());
                    }
                }
            }
            (0..ground.len())
                .flat_map(|g| coefficients.iter().map(move |c| (g, c.clone())))
                .collect()
        }
    };

    let mut points = Vec::with_capacity(pairs.len());
    let mut functions = Vec::with_capacity(pairs.len());
    let mut samples = Vec::with_capacity(pairs.len());
    for (g, c) in pairs {
        let mut u = vec![0.0; mesh.vertex_count()];
        for (&w, &j) in c.iter().zip(&cluster) {
            crate::linalg::axpy(w, &spectrum.eigenvectors[j], &mut u);
        }
        // Eigenvalue of the sampled direction (the cluster mean when the
        // cluster has split).
        let mu: f64 = c.iter().zip(&cluster).map(|(w, &j)| w * w * spectrum.eigenvalues[j]).sum();
        let gu = eigen_gradient(mesh, metric, ev.ops.mass_mode, Pencil::from_problem(ri.problem), mu, &u)?;
        let parts = [(p.eigen[0], &ground[g]), (p.eigen[1], &gu), (p.boundary_length, &g_len), (p.area, &g_area)];
        points.push(MetricGradient::combination(&parts).vector);
        functions.push(u);
        samples.push(CriticalitySample {
            ground: g,
            coefficients: c,
        });
    }
    Ok(SampledGradients {
        points,
        samples,
        functions,
        theta0: t0,
        theta_i: ti,
        cluster,
        admissibility_margin: ev.admissibility_margin,
    })
}
