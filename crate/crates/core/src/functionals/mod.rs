//! Eigenvalue functionals of a metric and their gradients.
//!
//! Every family is a minimum over one or more *branches*; a branch is a smooth
//! function of a few eigenvalues, the boundary length `a` and the area `A`.
//! Families are trait objects held in a [`FunctionalRegistry`] and looked up
//! by name, so new families can be added without touching the evaluator.

mod criticality;
mod families;
mod gradcheck;
mod gradient;

pub use criticality::{criticality_residual_theta, CriticalityOptions, CriticalitySample, CriticalityWitness};
pub(crate) use criticality::sample_gradients;
pub use gradcheck::{
    grad_check, relative_error, target_gradient, target_value, DirectionalCheck, GradCheckOptions, GradCheckReport,
    GradTarget,
};
pub use families::{GeneralFamily, Omega, Theta, XiMinus, XiPlus};
pub use gradient::{
    grad_freq_steklov_eigenvalue, grad_robin_eigenvalue, metric_variation, pair_tensor_field, DofKind,
    MetricGradient,
};
pub(crate) use gradient::{eigen_gradient, to_dofs, triangle_frame, Pencil};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, measure_gradients, MassMode, OperatorSet};
use crate::error::{Error, Result};
use crate::mesh::{checked_lengths, DiscreteMetric, SimplicialMesh};
use crate::spectra::{
    admissibility_check, cluster_multiplicities, freq_steklov_spectrum_with, robin_spectrum_with, ProblemKind,
    SolverOptions, Spectrum,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralCoefficients {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl Default for GeneralCoefficients {
    /// The coefficients for which the family coincides with Θ.
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            beta1: 1.0,
            alpha2: 2.0,
            beta2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    /// Registry name: `theta`, `omega`, `xi_plus`, `xi_minus`, `general`, …
    pub family: String,
    /// Radius: spherical for theta/xi_plus/general, hyperbolic for omega/xi_minus.
    pub r: f64,
    pub i: usize,
    /// Intrinsic dimension; meshes require 2.
    pub k: usize,
    #[serde(default)]
    pub coefficients: GeneralCoefficients,
    #[serde(default)]
    pub mass_mode: MassMode,
}

impl FunctionalSpec {
    pub fn new(family: &str, r: f64, i: usize) -> Self {
        Self {
            family: family.to_string(),
            r,
            i,
            k: 2,
            coefficients: GeneralCoefficients::default(),
            mass_mode: MassMode::Consistent,
        }
    }

    pub fn theta(r: f64, i: usize) -> Self {
        Self::new("theta", r, i)
    }

    pub fn omega(r: f64, i: usize) -> Self {
        Self::new("omega", r, i)
    }

    pub fn xi_plus(r: f64, i: usize) -> Self {
        Self::new("xi_plus", r, i)
    }

    pub fn xi_minus(r: f64, i: usize) -> Self {
        Self::new("xi_minus", r, i)
    }

    pub fn general(r: f64, i: usize, coefficients: GeneralCoefficients) -> Self {
        Self {
            coefficients,
            ..Self::new("general", r, i)
        }
    }
}

/// One eigenvalue entering a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRequest {
    pub problem: ProblemKind,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: String,
    pub eigen: Vec<EigenRequest>,
}

/// Partial derivatives of a branch with respect to its eigenvalues, `a` and `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub eigen: Vec<f64>,
    pub boundary_length: f64,
    pub area: f64,
}

pub trait Functional: Send + Sync {
    fn name(&self) -> &'static str;
    fn validate(&self, spec: &FunctionalSpec) -> Result<()>;
    fn branches(&self, spec: &FunctionalSpec) -> Vec<Branch>;
    fn branch_value(&self, spec: &FunctionalSpec, branch: usize, eigen: &[f64], a: f64, area: f64) -> f64;
    fn branch_partials(&self, spec: &FunctionalSpec, branch: usize, eigen: &[f64], a: f64, area: f64) -> Partials;
}

#[derive(Clone)]
pub struct FunctionalRegistry {
    entries: BTreeMap<String, Arc<dyn Functional>>,
}

impl Default for FunctionalRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register(Arc::new(Theta));
        r.register(Arc::new(Omega));
        r.register(Arc::new(XiPlus));
        r.register(Arc::new(XiMinus));
        r.register(Arc::new(GeneralFamily));
        r
    }
}

impl FunctionalRegistry {
    pub fn register(&mut self, f: Arc<dyn Functional>) {
        self.entries.insert(f.name().to_string(), f);
    }

    /// Accepts `xi-plus` as well as `xi_plus`.
    pub fn get(&self, name: &str) -> Result<Arc<dyn Functional>> {
        let key = name.replace('-', "_");
        self.entries
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::OutOfRange(format!("unknown functional family `{name}`")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenIngredient {
    pub problem: ProblemKind,
    pub index: usize,
    pub value: f64,
    /// Size of the numerical cluster containing the eigenvalue.
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub label: String,
    pub value: f64,
    pub eigenvalues: Vec<EigenIngredient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub spec: FunctionalSpec,
    pub value: f64,
    /// `A = |Σ|`.
    pub area: f64,
    /// `a = |∂Σ|`.
    pub boundary_length: f64,
    pub branches: Vec<BranchReport>,
    /// Index of the minimizing branch.
    pub active_branch: usize,
    /// Branches whose values are within the cluster tolerance of the minimum.
    pub tied_branches: Vec<usize>,
    /// Relative distance from the Steklov frequency to the Dirichlet spectrum,
    /// for families that use a positive frequency.
    pub admissibility_margin: Option<f64>,
}

impl FunctionalReport {
    pub fn is_tied(&self) -> bool {
        self.tied_branches.len() > 1
    }

    /// Recomputes the value from the stored ingredients.
    pub fn recompute(&self, registry: &FunctionalRegistry) -> Result<f64> {
        let f = registry.get(&self.spec.family)?;
        Ok(self
            .branches
            .iter()
            .enumerate()
            .map(|(b, br)| {
                let eig: Vec<f64> = br.eigenvalues.iter().map(|e| e.value).collect();
                f.branch_value(&self.spec, b, &eig, self.boundary_length, self.area)
            })
            .fold(f64::INFINITY, f64::min))
    }
}

/// Spectra of one metric, computed on demand and shared between branches.
pub(crate) struct Evaluation<'a> {
    pub mesh: &'a SimplicialMesh,
    pub metric: &'a DiscreteMetric,
    pub ops: OperatorSet,
    pub spectra: Vec<(ProblemKind, Spectrum)>,
    pub admissibility_margin: Option<f64>,
}

impl<'a> Evaluation<'a> {
    pub fn new(
        mesh: &'a SimplicialMesh,
        metric: &'a DiscreteMetric,
        mass_mode: MassMode,
        requests: &[EigenRequest],
        opts: &SolverOptions,
    ) -> Result<Self> {
        let ops = assemble(mesh, metric, mass_mode)?;
        let mut problems: Vec<(ProblemKind, usize)> = Vec::new();
        for r in requests {
            match problems.iter_mut().find(|(p, _)| *p == r.problem) {
                Some((_, m)) => *m = (*m).max(r.index),
                None => problems.push((r.problem, r.index)),
            }
        }
        let mut margin: Option<f64> = None;
        let mut spectra = Vec::new();
        for (problem, max_index) in problems {
            let spec = match problem {
                ProblemKind::Robin { sigma } => {
                    robin_spectrum_with(&ops, sigma, (max_index + 3).min(ops.vertex_count()), opts)?
                }
                ProblemKind::FreqSteklov { c } => {
                    if c > 0.0 {
                        let adm = admissibility_check(&ops, c)?;
                        if let crate::spectra::Admissibility::Inadmissible { nearest, .. } = adm {
                            return Err(Error::Inadmissible { c, nearest });
                        }
                        margin = Some(margin.map_or(adm.margin(), |m: f64| m.min(adm.margin())));
                    }
                    let o = SolverOptions {
                        check_admissibility: false,
                        ..opts.clone()
                    };
                    freq_steklov_spectrum_with(&ops, c, (max_index + 3).min(ops.boundary_index_map.len()), &o)?
                }
                ProblemKind::Dirichlet => {
                    return Err(Error::OutOfRange("functionals do not use Dirichlet eigenvalues".into()))
                }
            };
            if max_index >= spec.eigenvalues.len() {
                return Err(Error::CountTooLarge {
                    requested: max_index + 1,
                    available: spec.eigenvalues.len(),
                });
            }
            spectra.push((problem, spec));
        }
        Ok(Self {
            mesh,
            metric,
            ops,
            spectra,
            admissibility_margin: margin,
        })
    }

    pub fn spectrum(&self, problem: ProblemKind) -> &Spectrum {
        &self.spectra.iter().find(|(p, _)| *p == problem).expect("spectrum was computed").1
    }

    pub fn eigenvalue(&self, r: &EigenRequest) -> f64 {
        self.spectrum(r.problem).eigenvalues[r.index]
    }

    /// Gradients of the eigenvalue along each vector of its cluster basis.
    pub fn eigen_subgradients(&self, r: &EigenRequest) -> Result<Vec<MetricGradient>> {
        let spec = self.spectrum(r.problem);
        let mu = spec.eigenvalues[r.index];
        spec.cluster_of(r.index)
            .iter()
            .map(|&j| {
                eigen_gradient(
                    self.mesh,
                    self.metric,
                    self.ops.mass_mode,
                    Pencil::from_problem(r.problem),
                    mu,
                    &spec.eigenvectors[j],
                )
            })
            .collect()
    }

    /// Gradients of `A` and `a` as metric gradients with their densities.
    pub fn measure_gradients(&self) -> Result<(MetricGradient, MetricGradient)> {
        let lengths = checked_lengths(self.mesh, self.metric)?;
        let (da, dl) = measure_gradients(self.mesh, &lengths)?;
        let areas = crate::mesh::measures_from_lengths(self.mesh, &lengths).per_triangle_areas;
        let nb = self.mesh.boundary_vertices().len();
        let kind = DofKind::of(self.metric);
        let area = MetricGradient {
            dofs: kind,
            vector: to_dofs(self.mesh, self.metric, &lengths, &da),
            interior_tensor_field: areas.iter().map(|&a| [0.5 * a, 0.0, 0.5 * a]).collect(),
            boundary_density: vec![0.0; nb],
        };
        let boundary = MetricGradient {
            dofs: kind,
            vector: to_dofs(self.mesh, self.metric, &lengths, &dl),
            interior_tensor_field: vec![[0.0; 3]; areas.len()],
            boundary_density: vec![1.0; nb],
        };
        Ok((area, boundary))
    }
}

fn requests(f: &dyn Functional, spec: &FunctionalSpec) -> (Vec<Branch>, Vec<EigenRequest>) {
    let branches = f.branches(spec);
    let all = branches.iter().flat_map(|b| b.eigen.iter().copied()).collect();
    (branches, all)
}

fn check_mesh_dimension(spec: &FunctionalSpec) -> Result<()> {
    if spec.k != 2 {
        return Err(Error::OutOfRange(format!(
            "mesh functionals are two-dimensional; got k = {}",
            spec.k
        )));
    }
    Ok(())
}

pub fn eval_functional(spec: &FunctionalSpec, mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<FunctionalReport> {
    eval_functional_with(&FunctionalRegistry::default(), spec, mesh, metric, &SolverOptions::default())
}

pub fn eval_functional_with(
    registry: &FunctionalRegistry,
    spec: &FunctionalSpec,
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    opts: &SolverOptions,
) -> Result<FunctionalReport> {
    let f = registry.get(&spec.family)?;
    f.validate(spec)?;
    check_mesh_dimension(spec)?;
    let (branches, reqs) = requests(f.as_ref(), spec);
    let ev = Evaluation::new(mesh, metric, spec.mass_mode, &reqs, opts)?;
    Ok(report(f.as_ref(), spec, &branches, &ev, opts.cluster_rel_gap))
}

fn report(
    f: &dyn Functional,
    spec: &FunctionalSpec,
    branches: &[Branch],
    ev: &Evaluation,
    rel_gap: f64,
) -> FunctionalReport {
    let (a, area) = (ev.ops.boundary_length, ev.ops.area);
    let branch_reports: Vec<BranchReport> = branches
        .iter()
        .enumerate()
        .map(|(b, br)| {
            let eig: Vec<f64> = br.eigen.iter().map(|r| ev.eigenvalue(r)).collect();
            BranchReport {
                label: br.label.clone(),
                value: f.branch_value(spec, b, &eig, a, area),
                eigenvalues: br
                    .eigen
                    .iter()
                    .zip(&eig)
                    .map(|(r, &value)| EigenIngredient {
                        problem: r.problem,
                        index: r.index,
                        value,
                        multiplicity: ev.spectrum(r.problem).cluster_of(r.index).len(),
                    })
                    .collect(),
            }
        })
        .collect();
    let active = (0..branch_reports.len())
        .min_by(|&x, &y| branch_reports[x].value.total_cmp(&branch_reports[y].value))
        .unwrap_or(0);
    let vmin = branch_reports[active].value;
    let tied = branch_reports
        .iter()
        .enumerate()
        .filter(|(_, b)| b.value - vmin < rel_gap * (1.0 + vmin.abs()))
        .map(|(i, _)| i)
        .collect();
    FunctionalReport {
        spec: spec.clone(),
        value: vmin,
        area,
        boundary_length: a,
        branches: branch_reports,
        active_branch: active,
        tied_branches: tied,
        admissibility_margin: ev.admissibility_margin,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggedGradient {
    pub branch: usize,
    pub label: String,
    /// For each eigenvalue of the branch, the position of the cluster basis
    /// vector used (0 for simple eigenvalues).
    pub basis_choice: Vec<usize>,
    pub gradient: MetricGradient,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientReport {
    pub report: FunctionalReport,
    /// One gradient for a smooth point; otherwise the generators of the
    /// subdifferential (tied branches × cluster basis directions).
    pub gradients: Vec<TaggedGradient>,
    pub nonsmooth: bool,
}

impl GradientReport {
    /// The unique gradient at a smooth point.
    pub fn smooth(&self) -> Option<&MetricGradient> {
        (!self.nonsmooth).then(|| &self.gradients[0].gradient)
    }
}

pub fn grad_functional(spec: &FunctionalSpec, mesh: &SimplicialMesh, metric: &DiscreteMetric) -> Result<GradientReport> {
    grad_functional_with(&FunctionalRegistry::default(), spec, mesh, metric, &SolverOptions::default())
}

pub fn grad_functional_with(
    registry: &FunctionalRegistry,
    spec: &FunctionalSpec,
    mesh: &SimplicialMesh,
    metric: &DiscreteMetric,
    opts: &SolverOptions,
) -> Result<GradientReport> {
    let f = registry.get(&spec.family)?;
    f.validate(spec)?;
    check_mesh_dimension(spec)?;
    let (branches, reqs) = requests(f.as_ref(), spec);
    let ev = Evaluation::new(mesh, metric, spec.mass_mode, &reqs, opts)?;
    let rep = report(f.as_ref(), spec, &branches, &ev, opts.cluster_rel_gap);
    let gradients = branch_gradients(f.as_ref(), spec, &branches, &ev, &rep.tied_branches)?;
    let nonsmooth = gradients.len() > 1;
    Ok(GradientReport {
        report: rep,
        gradients,
        nonsmooth,
    })
}

/// Generators of the subdifferential over the given branches.
pub(crate) fn branch_gradients(
    f: &dyn Functional,
    spec: &FunctionalSpec,
    branches: &[Branch],
    ev: &Evaluation,
    which: &[usize],
) -> Result<Vec<TaggedGradient>> {
    let (a, area) = (ev.ops.boundary_length, ev.ops.area);
    let (g_area, g_len) = ev.measure_gradients()?;
    let mut out = Vec::new();
    for &b in which {
        let br = &branches[b];
        let eig: Vec<f64> = br.eigen.iter().map(|r| ev.eigenvalue(r)).collect();
        let p = f.branch_partials(spec, b, &eig, a, area);
        let sub: Vec<Vec<MetricGradient>> = br
            .eigen
            .iter()
            .map(|r| ev.eigen_subgradients(r))
            .collect::<Result<_>>()?;
        for choice in cartesian(&sub.iter().map(Vec::len).collect::<Vec<_>>()) {
            let mut parts: Vec<(f64, &MetricGradient)> = vec![(p.area, &g_area), (p.boundary_length, &g_len)];
            for (j, &c) in choice.iter().enumerate() {
                parts.push((p.eigen[j], &sub[j][c]));
            }
            out.push(TaggedGradient {
                branch: b,
                label: br.label.clone(),
                basis_choice: choice,
                gradient: MetricGradient::combination(&parts),
            });
        }
    }
    Ok(out)
}

fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out
}

/// Groups raw values into clusters; re-exported for callers that post-process
/// reports.
pub fn clusters_of(values: &[f64], rel_gap: f64) -> Vec<Vec<usize>> {
    cluster_multiplicities(values, rel_gap)
}
