//! Boundary concentration of a conformal factor, driving Ξ⁻ to −∞.
//!
//! For each ε the factor is `φ_ε = −log ε` on vertices within intrinsic
//! distance ε² of the boundary and 0 elsewhere. The boundary strip is first
//! resolved by graded refinement so that it contains interior vertices at the
//! smallest ε; all ε then share the refined mesh.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_conformal, MassMode};
use crate::error::{Error, Result};
use crate::functionals::{Functional, FunctionalSpec, XiMinus};
use crate::mesh::{boundary_distance, checked_lengths, refine_boundary_strip, DiscreteMetric, SimplicialMesh};
use crate::spectra::{robin_spectrum_with, SolverOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegenerationOptions {
    /// Split fraction of each strip refinement pass.
    pub fraction: f64,
    pub max_passes: usize,
    pub mass_mode: MassMode,
}

impl Default for DegenerationOptions {
    fn default() -> Self {
        Self {
            fraction: 0.3,
            max_passes: 12,
            mass_mode: MassMode::Consistent,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegenerationRow {
    pub epsilon: f64,
    pub xi_minus: f64,
    /// `λ₀(g_ε, tanh r)`.
    pub lambda0: f64,
    /// `λᵢ(g_ε, coth r)`.
    pub lambda_i: f64,
    pub active_branch: usize,
    pub area: f64,
    pub boundary_length: f64,
    /// Vertices carrying the factor `−log ε` (boundary included).
    pub strip_vertices: usize,
    /// `A_ε − A`.
    pub area_drift: f64,
    /// `πε²a`, the first-order area correction of a smooth concentration.
    pub area_correction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegenerationTable {
    pub r: f64,
    pub i: usize,
    pub refinement_passes: usize,
    pub vertex_count: usize,
    /// `A` and `a` of the unperturbed metric.
    pub base_area: f64,
    pub base_boundary_length: f64,
    pub base_xi_minus: f64,
    pub rows: Vec<DegenerationRow>,
    pub strictly_decreasing: bool,
}

impl DegenerationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epsilon,xi_minus,lambda0,lambda_i,active_branch,area,boundary_length,strip_vertices,area_drift,area_correction\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{},{:e},{:e},{},{:e},{:e}\n",
                r.epsilon,
                r.xi_minus,
                r.lambda0,
                r.lambda_i,
                r.active_branch,
                r.area,
                r.boundary_length,
                r.strip_vertices,
                r.area_drift,
                r.area_correction
            ));
        }
        s
    }
}

pub fn degeneration_experiment(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    r: f64,
    i: usize,
    epsilons: &[f64],
) -> Result<DegenerationTable> {
    degeneration_experiment_with(mesh, metric, r, i, epsilons, &DegenerationOptions::default())
}

pub fn degeneration_experiment_with(
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    r: f64,
    i: usize,
    epsilons: &[f64],
    opts: &DegenerationOptions,
) -> Result<DegenerationTable> {
    let spec = FunctionalSpec::xi_minus(r, i);
    XiMinus.validate(&spec)?;
    if epsilons.is_empty() {
        return Err(Error::OutOfRange("no ε values given".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::OutOfRange("ε values must lie in (0, 1]".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::OutOfRange("ε values must be strictly decreasing".into()));
    }

    // Refine until the narrowest strip contains an interior vertex.
    let width = epsilons[epsilons.len() - 1].powi(2);
    let mut mesh = mesh.clone();
    let mut metric = DiscreteMetric::from_lengths(checked_lengths(&mesh, metric)?);
    let mut passes = 0;
    loop {
        let d = boundary_distance(&mesh, &metric.lengths(&mesh));
        let nearest = mesh.interior_vertices().iter().map(|&v| d[v]).fold(f64::INFINITY, f64::min);
        if nearest <= width || epsilons[epsilons.len() - 1] == 1.0 {
            break;
        }
        if passes == opts.max_passes {
            return Err(Error::StripUnresolvable(format!(
                "no interior vertex within {width:e} of the boundary after {passes} passes"
            )));
        }
        (mesh, metric) = refine_boundary_strip(&mesh, &metric, opts.fraction)?;
        passes += 1;
    }
    let dist = boundary_distance(&mesh, &metric.lengths(&mesh));

    let branches = XiMinus.branches(&spec);
    let solver = SolverOptions::default();
    let evaluate = |phi: &[f64]| -> Result<(f64, f64, f64, usize, f64, f64)> {
        let ops = assemble_conformal(&mesh, &metric, phi, opts.mass_mode)?;
        let mut vals = Vec::new();
        for b in &branches {
            let req = b.eigen[0];
            let sigma = match req.problem {
                crate::spectra::ProblemKind::Robin { sigma } => sigma,
                _ => unreachable!("Ξ⁻ branches are Robin eigenvalues"),
            };
            let s = robin_spectrum_with(&ops, sigma, (req.index + 3).min(ops.vertex_count()), &solver)?;
            vals.push(s.eigenvalues[req.index]);
        }
        let values: Vec<f64> = (0..2)
            .map(|b| XiMinus.branch_value(&spec, b, &vals[b..b + 1], ops.boundary_length, ops.area))
            .collect();
        let active = usize::from(values[1] < values[0]);
        Ok((values[active], vals[0], vals[1], active, ops.area, ops.boundary_length))
    };

    let zero = vec![0.0; mesh.vertex_count()];
    let (base_xi, _, _, _, base_area, base_len) = evaluate(&zero)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let phi: Vec<f64> = dist
            .iter()
            .map(|&d| if d <= eps * eps && eps < 1.0 { -eps.ln() } else { 0.0 })
            .collect();
        let strip_vertices = phi.iter().filter(|&&p| p != 0.0).count();
        let (xi, l0, li, active, area, len) = evaluate(&phi)?;
        rows.push(DegenerationRow {
            epsilon: eps,
            xi_minus: xi,
            lambda0: l0,
            lambda_i: li,
            active_branch: active,
            area,
            boundary_length: len,
            strip_vertices,
            area_drift: area - base_area,
            area_correction: std::f64::consts::PI * eps * eps * base_len,
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].xi_minus < w[0].xi_minus);
    Ok(DegenerationTable {
        r,
        i,
        refinement_passes: passes,
        vertex_count: mesh.vertex_count(),
        base_area,
        base_boundary_length: base_len,
        base_xi_minus: base_xi,
        rows,
        strictly_decreasing,
    })
}
