//! Central finite-difference validation of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    eval_functional_with, grad_freq_steklov_eigenvalue, grad_functional_with, grad_robin_eigenvalue,
    FunctionalRegistry, FunctionalSpec,
};
use crate::assembly::{assemble, MassMode};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::mesh::{DiscreteMetric, SimplicialMesh};
use crate::spectra::{freq_steklov_spectrum_with, robin_spectrum_with, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum GradTarget {
    RobinEigenvalue { sigma: f64, index: usize },
    FreqSteklovEigenvalue { c: f64, index: usize },
    Functional { spec: FunctionalSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Relative step: DOF `x` moves by `step·d` with `d` scaled like `x`.
    pub step: f64,
    pub directions: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            directions: 3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub analytic: f64,
    pub finite_difference: f64,
    /// `|analytic − fd| / max(|analytic|, |fd|)`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub target: GradTarget,
    pub value: f64,
    pub checks: Vec<DirectionalCheck>,
    pub max_relative_error: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

// Differences divide by the step, so solve well below the default tolerance.
fn tight() -> SolverOptions {
    SolverOptions {
        tolerance: 1e-14,
        ..SolverOptions::default()
    }
}

/// Value of the target at a metric.
pub fn target_value(target: &GradTarget, mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<f64> {
    let opts = tight();
    match target {
        GradTarget::RobinEigenvalue { sigma, index } => {
            let ops = assemble(mesh, metric, MassMode::Consistent)?;
            let s = robin_spectrum_with(&ops, *sigma, (index + 3).min(ops.vertex_count()), &opts)?;
            pick(&s.eigenvalues, *index)
        }
        GradTarget::FreqSteklovEigenvalue { c, index } => {
            let ops = assemble(mesh, metric, MassMode::Consistent)?;
            let n = ops.boundary_index_map.len();
            let s = freq_steklov_spectrum_with(&ops, *c, (index + 3).min(n), &opts)?;
            pick(&s.eigenvalues, *index)
        }
        GradTarget::Functional { spec } => {
            Ok(eval_functional_with(&FunctionalRegistry::default(), spec, mesh, metric, &opts)?.value)
        }
    }
}

fn pick(values: &[f64], index: usize) -> Result<f64> {
    values.get(index).copied().ok_or(Error::CountTooLarge {
        requested: index + 1,
        available: values.len(),
    })
}

/// Analytic gradient of the target in the metric's DOFs; errors at nonsmooth points.
pub fn target_gradient(target: &GradTarget, mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<Vec<f64>> {
    match target {
        GradTarget::RobinEigenvalue { sigma, index } => {
            let ops = assemble(mesh, metric, MassMode::Consistent)?;
            Ok(grad_robin_eigenvalue(&ops, mesh, metric, *sigma, *index)?.vector)
        }
        GradTarget::FreqSteklovEigenvalue { c, index } => {
            let ops = assemble(mesh, metric, MassMode::Consistent)?;
            Ok(grad_freq_steklov_eigenvalue(&ops, mesh, metric, *c, *index)?.vector)
        }
        GradTarget::Functional { spec } => {
            let g = grad_functional_with(&FunctionalRegistry::default(), spec, mesh, metric, &tight())?;
            match g.smooth() {
                Some(s) => Ok(s.vector.clone()),
                None => Err(Error::OutOfRange(format!(
                    "functional is not differentiable here ({} subgradients)",
                    g.gradients.len()
                ))),
            }
        }
    }
}

/// Compares directional derivatives along seeded random directions with
/// central differences.
pub fn grad_check(
    target: &GradTarget,
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let value = target_value(target, mesh, metric)?;
    let grad = target_gradient(target, mesh, metric)?;
    let x = metric.dofs().to_vec();
    let conformal = matches!(metric, DiscreteMetric::Conformal { .. });
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::with_capacity(opts.directions);
    for _ in 0..opts.directions {
        let d: Vec<f64> = x
            .iter()
            .map(|&xi| {
                let u: f64 = rng.gen_range(-1.0..1.0);
                if conformal {
                    u
                } else {
                    u * xi
                }
            })
            .collect();
        let at = |t: f64| {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            target_value(target, mesh, &metric.with_dofs(y))
        };
        // Fourth-order central stencil.
        let h = opts.step;
        let fd = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
        let an = dot(&grad, &d);
        checks.push(DirectionalCheck {
            analytic: an,
            finite_difference: fd,
            relative_error: relative_error(an, fd),
        });
    }
    let max_relative_error = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        target: target.clone(),
        value,
        checks,
        max_relative_error,
    })
}
