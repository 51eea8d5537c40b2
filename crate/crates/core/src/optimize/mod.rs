//! Searches for extremal metrics.
//!
//! Iterates live in log coordinates: log edge lengths, or the log conformal
//! factor over fixed base lengths. In both, adding a constant to every
//! coordinate rescales the metric, so fixing the area is the exact shift
//! `x ← x + ½log(A₀/A)`.
//!
//! * Ξ⁺ ascent: the direction is the min-norm element of the convex hull of
//!   the gradients of all nearly active pieces (both branches of the min when
//!   they are close, every basis direction of a clustered eigenvalue), with a
//!   backtracking line search on the penalized objective.
//! * Θ criticality: descent on the criticality residual `R = ‖g*‖`, with `g*`
//!   the min-norm point of the sampled gradients. Holding the samples and
//!   hull weights fixed, a Gauss–Newton step for `g*(x) = 0` is solved by
//!   CGLS with Jacobian products from central differences.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::MassMode;
use crate::error::{Error, Result};
use crate::functionals::{
    branch_gradients, sample_gradients, CriticalityOptions, DofKind, Evaluation, Functional, FunctionalSpec, XiPlus,
};
use crate::linalg::{combine, dot, gram_matrix, min_norm_point, norm};
use crate::mesh::{checked_lengths, validate_metric, DiscreteMetric, SimplicialMesh};
use crate::spectra::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    XiPlus { r: f64, i: usize },
    ThetaCriticality { r: f64, i: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub dofs: DofKind,
    pub objective: Objective,
    pub max_iterations: usize,
    /// Largest change of any log coordinate in the first trial step.
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant.
    pub sufficient_increase: f64,
    /// Steps below this size count as a collapse.
    pub min_step: f64,
    /// Stop when the direction norm falls below this fraction of the largest
    /// generator norm.
    pub gradient_tolerance: f64,
    /// Pieces within this relative distance of the minimum are active (Ξ⁺);
    /// width of the θᵢ eigenvalue band sampled by the residual (Θ).
    pub active_tolerance: f64,
    /// Weight `μ` of the branch-matching penalty `−μ(λ₀ − λᵢ)²` (Ξ⁺ only).
    pub penalty: f64,
    /// Keep the area at its initial value (Ξ⁺ only; Θ has a definite scale).
    pub normalize_area: bool,
    pub seed: u64,
    /// Iterations between checkpoints (0 disables them).
    pub checkpoint_interval: usize,
    pub mass_mode: MassMode,
    /// Relative step of the Jacobian–vector differences (Θ criticality).
    pub hessian_step: f64,
    /// Inner least-squares iterations per Gauss–Newton step (Θ criticality).
    pub newton_iterations: usize,
    /// Stop once `R / max‖G‖` falls below this (Θ criticality).
    pub residual_tolerance: f64,
}

impl OptimizerConfig {
    pub fn xi_plus(r: f64, i: usize) -> Self {
        Self {
            dofs: DofKind::Conformal,
            objective: Objective::XiPlus { r, i },
            max_iterations: 500,
            initial_step: 0.02,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            min_step: 1e-10,
            gradient_tolerance: 1e-3,
            active_tolerance: 2e-3,
            penalty: 0.0,
            normalize_area: true,
            seed: 0,
            checkpoint_interval: 0,
            mass_mode: MassMode::Consistent,
            hessian_step: 1e-5,
            newton_iterations: 6,
            residual_tolerance: 1e-2,
        }
    }

    pub fn theta_criticality(r: f64, i: usize) -> Self {
        Self {
            objective: Objective::ThetaCriticality { r, i },
            max_iterations: 300,
            normalize_area: false,
            gradient_tolerance: 1e-8,
            active_tolerance: 0.05,
            ..Self::xi_plus(r, i)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("sufficient_increase", self.sufficient_increase),
            ("min_step", self.min_step),
            ("gradient_tolerance", self.gradient_tolerance),
            ("active_tolerance", self.active_tolerance),
            ("hessian_step", self.hessian_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::OutOfRange(format!("shrink = {} must lie in (0, 1)", self.shrink)));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::OutOfRange(format!("penalty = {} must be non-negative", self.penalty)));
        }
        let (r, i) = match self.objective {
            Objective::XiPlus { r, i } | Objective::ThetaCriticality { r, i } => (r, i),
        };
        XiPlus.validate(&FunctionalSpec::xi_plus(r, i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// The quantity the line search compares (penalized Ξ⁺, or `R`).
    pub objective: f64,
    /// Ξ⁺ (Ξ⁺ runs) or `R / max‖G‖` (criticality runs).
    pub value: f64,
    /// `[λ₀(−tan r), λᵢ(cot r)]` or `[θ₀, θᵢ]`.
    pub branch_values: Vec<f64>,
    pub gradient_norm: f64,
    /// Accepted step (0 when the iteration made no move).
    pub step: f64,
    pub admissibility_margin: Option<f64>,
    pub area: f64,
    /// Trial points rejected by the line search, with reasons.
    pub rejections: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ResidualTolerance,
    IterationLimit,
    StepCollapse,
    AllStepsInadmissible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub config: OptimizerConfig,
    pub target_area: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Ξ⁺ runs: whether the starting point could not be improved at all.
    pub non_improving_start: bool,
    pub final_metric: DiscreteMetric,
}

/// Resumable optimizer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: OptimizerConfig,
    pub iteration: usize,
    /// Current log coordinates.
    pub dofs: Vec<f64>,
    /// Base lengths of the conformal parametrization.
    pub base_lengths: Option<Vec<f64>>,
    pub step: f64,
    pub target_area: f64,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
}

impl Checkpoint {
    /// Atomic write: temporary file, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(self)?;
        std::fs::write(&tmp, text).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Hooks for long runs.
#[derive(Default)]
pub struct RunControl<'a> {
    pub resume: Option<Checkpoint>,
    pub checkpoint_path: Option<PathBuf>,
    pub on_iteration: Option<&'a mut dyn FnMut(&IterationRecord)>,
}

pub fn maximize_xi_plus(
    mesh: &SimplicialMesh,
    metric0: &DiscreteMetric,
    r: f64,
    i: usize,
    config: &OptimizerConfig,
) -> Result<(DiscreteMetric, OptimizerTrace)> {
    let config = OptimizerConfig {
        objective: Objective::XiPlus { r, i },
        ..config.clone()
    };
    run(mesh, metric0, &config, RunControl::default())
}

pub fn minimize_theta_criticality(
    mesh: &SimplicialMesh,
    metric0: &DiscreteMetric,
    r: f64,
    i: usize,
    config: &OptimizerConfig,
) -> Result<(DiscreteMetric, OptimizerTrace)> {
    let config = OptimizerConfig {
        objective: Objective::ThetaCriticality { r, i },
        ..config.clone()
    };
    run(mesh, metric0, &config, RunControl::default())
}

/// Objective, generators and bookkeeping at one iterate.
struct Point {
    objective: f64,
    value: f64,
    branch_values: Vec<f64>,
    margin: Option<f64>,
    area: f64,
    /// Search direction in log coordinates and the norm used for stopping.
    direction: Vec<f64>,
    stationarity: f64,
    /// Directional derivative of the objective along `direction`.
    slope: f64,
    /// Largest coordinate change of a full Newton-type step, if any.
    natural_step: Option<f64>,
}

struct Problem<'a> {
    mesh: &'a SimplicialMesh,
    config: &'a OptimizerConfig,
    base: Option<Vec<f64>>,
    solver: SolverOptions,
}

impl Problem<'_> {
    fn metric(&self, x: &[f64]) -> DiscreteMetric {
        match &self.base {
            Some(base) => DiscreteMetric::conformal(base.clone(), x.to_vec()),
            None => DiscreteMetric::from_lengths(x.iter().map(|v| v.exp()).collect()),
        }
    }

    fn area(&self, x: &[f64]) -> Result<f64> {
        let metric = self.metric(x);
        let lengths = checked_lengths(self.mesh, &metric)?;
        Ok(crate::mesh::measures_from_lengths(self.mesh, &lengths).area)
    }

    fn project(&self, x: &mut [f64], target: f64) -> Result<()> {
        if self.config.normalize_area {
            let shift = 0.5 * (target / self.area(x)?).ln();
            x.iter_mut().for_each(|v| *v += shift);
        }
        Ok(())
    }

    /// Metric-DOF gradient to log coordinates.
    fn to_log(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        match self.base {
            Some(_) => g.to_vec(),
            None => g.iter().zip(x).map(|(g, v)| g * v.exp()).collect(),
        }
    }

    fn evaluate(&self, x: &[f64], with_direction: bool) -> Result<Point> {
        let metric = self.metric(x);
        let diag = validate_metric(self.mesh, &metric);
        if !diag.is_valid() {
            return Err(Error::InvalidMetric(format!(
                "{} triangles violate the triangle inequality",
                diag.violated_triangles.len()
            )));
        }
        match self.config.objective {
            Objective::XiPlus { r, i } => self.evaluate_xi(x, &metric, r, i, with_direction),
            Objective::ThetaCriticality { r, i } => self.evaluate_theta(x, &metric, r, i, with_direction),
        }
    }

    fn evaluate_xi(&self, x: &[f64], metric: &DiscreteMetric, r: f64, i: usize, with_direction: bool) -> Result<Point> {
        let mut spec = FunctionalSpec::xi_plus(r, i);
        spec.mass_mode = self.config.mass_mode;
        let f = XiPlus;
        let branches = f.branches(&spec);
        let reqs: Vec<_> = branches.iter().flat_map(|b| b.eigen.iter().copied()).collect();
        let ev = Evaluation::new(self.mesh, metric, spec.mass_mode, &reqs, &self.solver)?;
        let area = ev.ops.area;
        let lambdas: Vec<f64> = reqs.iter().map(|q| ev.eigenvalue(q)).collect();
        let values: Vec<f64> = lambdas.iter().map(|l| l * area).collect();
        let xi = values[0].min(values[1]);
        let gap = lambdas[0] - lambdas[1];
        let mu = self.config.penalty;
        let objective = xi - mu * gap * gap;
        let mut point = Point {
            objective,
            value: xi,
            branch_values: lambdas.clone(),
            margin: None,
            area,
            direction: vec![],
            stationarity: 0.0,
            slope: 0.0,
            natural_step: None,
        };
        if !with_direction {
            return Ok(point);
        }
        let tol = self.config.active_tolerance.max(self.solver.cluster_rel_gap);
        let active: Vec<usize> = (0..2).filter(|&b| values[b] - xi <= tol * xi.abs().max(1e-300)).collect();
        let tagged = branch_gradients(&f, &spec, &branches, &ev, &active)?;
        let mut penalty = vec![0.0; x.len()];
        if mu > 0.0 {
            for (k, q) in reqs.iter().enumerate() {
                let sub = ev.eigen_subgradients(q)?;
                let w = -2.0 * mu * gap * if k == 0 { 1.0 } else { -1.0 } / sub.len() as f64;
                for g in &sub {
                    crate::linalg::axpy(w, &self.to_log(x, &g.vector), &mut penalty);
                }
            }
        }
        let generators: Vec<Vec<f64>> = tagged
            .iter()
            .map(|t| {
                let mut g = self.to_log(x, &t.gradient.vector);
                crate::linalg::axpy(1.0, &penalty, &mut g);
                if self.config.normalize_area {
                    remove_mean(&mut g);
                }
                g
            })
            .collect();
        let mn = min_norm_point(&gram_matrix(&generators));
        let d = combine(&generators, &mn.weights);
        let reference = generators.iter().map(|g| norm(g)).fold(0.0, f64::max);
        point.stationarity = if reference > 0.0 { norm(&d) / reference } else { 0.0 };
        // Each active piece increases at rate ≥ ‖d‖² along d.
        point.slope = dot(&d, &d);
        point.direction = d;
        Ok(point)
    }

    fn evaluate_theta(
        &self,
        x: &[f64],
        metric: &DiscreteMetric,
        r: f64,
        i: usize,
        with_direction: bool,
    ) -> Result<Point> {
        let opts = CriticalityOptions {
            seed: self.config.seed,
            cluster_tolerance: self.config.active_tolerance,
            solver: self.solver.clone(),
            ..CriticalityOptions::default()
        };
        let s = sample_gradients(self.mesh, metric, r, i, None, &opts)?;
        let mn = min_norm_point(&gram_matrix(&s.points));
        let g_star = combine(&s.points, &mn.weights);
        let residual = norm(&g_star);
        let reference = s.points.iter().map(|v| norm(v)).fold(0.0, f64::max);
        let area = self.area(x)?;
        let mut point = Point {
            objective: residual,
            value: if reference > 0.0 { residual / reference } else { 0.0 },
            branch_values: vec![s.theta0, s.theta_i],
            margin: s.admissibility_margin,
            area,
            direction: vec![],
            stationarity: 0.0,
            slope: 0.0,
            natural_step: None,
        };
        if !with_direction || residual == 0.0 {
            return Ok(point);
        }
        // Gauss–Newton on the fixed-weight combination G(x) = Σ t_j G_j(x):
        // minimize ‖G + Jδ‖ by CGLS, with J = ∂G/∂x applied by central
        // differences of the gradient field at frozen samples.
        let fixed = Some((s.cluster.as_slice(), s.samples.as_slice()));
        let jacobian = |v: &[f64]| -> Result<Vec<f64>> {
            let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if scale == 0.0 {
                return Ok(vec![0.0; g_star.len()]);
            }
            let h = self.config.hessian_step / scale;
            let field = |sign: f64| -> Result<Vec<f64>> {
                let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + sign * h * b).collect();
                let t = sample_gradients(self.mesh, &self.metric(&y), r, i, fixed, &opts)?;
                Ok(combine(&t.points, &mn.weights))
            };
            let (plus, minus) = (field(1.0)?, field(-1.0)?);
            Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
        };
        // Jᵀw = ℓ⊙(Hw) for edge coordinates, Hw for conformal ones.
        let transpose = |w: &[f64]| -> Result<Vec<f64>> {
            let dir: Vec<f64> = match self.base {
                Some(_) => w.to_vec(),
                None => w.iter().zip(x).map(|(a, v)| a / v.exp()).collect(),
            };
            Ok(self.to_log(x, &jacobian(&dir)?))
        };
        let grad: Vec<f64> = transpose(&g_star)?.iter().map(|v| v / residual).collect();
        point.stationarity = norm(&grad) / reference.max(1e-300);
        let mut step = cgls(&jacobian, &transpose, &g_star, self.config.newton_iterations)?;
        let mut slope = -dot(&grad, &step);
        if !(slope > 0.0) {
            step = grad.iter().map(|v| -v).collect();
            slope = dot(&grad, &grad);
        }
        point.slope = slope;
        point.natural_step = Some(step.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        point.direction = step;
        Ok(point)
    }
}

type LinearMap<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// A few CGLS iterations for `min ‖b + Jδ‖`, starting at `δ = 0`.
fn cgls(jacobian: &LinearMap, transpose: &LinearMap, b: &[f64], iterations: usize) -> Result<Vec<f64>> {
    let mut r: Vec<f64> = b.iter().map(|v| -v).collect();
    let mut s = transpose(&r)?;
    let mut delta = vec![0.0; s.len()];
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    for _ in 0..iterations {
        if gamma == 0.0 {
            break;
        }
        let q = jacobian(&p)?;
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        crate::linalg::axpy(alpha, &p, &mut delta);
        crate::linalg::axpy(-alpha, &q, &mut r);
        s = transpose(&r)?;
        let next = dot(&s, &s);
        let beta = next / gamma;
        gamma = next;
        p = s.iter().zip(&p).map(|(a, b)| a + beta * b).collect();
    }
    Ok(delta)
}

fn remove_mean(g: &mut [f64]) {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.iter_mut().for_each(|v| *v -= mean);
}

/// Runs the configured objective, optionally resuming from a checkpoint and
/// writing checkpoints and per-iteration callbacks.
pub fn run(
    mesh: &SimplicialMesh,
    metric0: &DiscreteMetric,
    config: &OptimizerConfig,
    mut control: RunControl,
) -> Result<(DiscreteMetric, OptimizerTrace)> {
    config.validate()?;
    let maximize = matches!(config.objective, Objective::XiPlus { .. });
    let mut solver = SolverOptions::default();
    solver.seed ^= config.seed;

    let (mut x, base, mut step, target, start_iter, mut records) = match control.resume.take() {
        Some(cp) => {
            if cp.config != *config {
                return Err(Error::OutOfRange("checkpoint was written with a different configuration".into()));
            }
            (cp.dofs, cp.base_lengths, cp.step, cp.target_area, cp.iteration, cp.records)
        }
        None => {
            let lengths = checked_lengths(mesh, metric0)?;
            let (x, base) = match config.dofs {
                DofKind::EdgeLengths => (lengths.iter().map(|l| l.ln()).collect(), None),
                DofKind::Conformal => match metric0 {
                    DiscreteMetric::Conformal { base, log_factor } => (log_factor.clone(), Some(base.clone())),
                    DiscreteMetric::EdgeLengths { .. } => (vec![0.0; mesh.vertex_count()], Some(lengths.clone())),
                },
            };
            let area = crate::mesh::measures_from_lengths(mesh, &lengths).area;
            (x, base, config.initial_step, area, 0, Vec::new())
        }
    };
    let problem = Problem {
        mesh,
        config,
        base,
        solver,
    };
    if start_iter == 0 {
        problem.project(&mut x, target)?;
    }

    let sign = if maximize { 1.0 } else { -1.0 };
    let mut current = problem.evaluate(&x, true)?;
    let mut termination = Termination::IterationLimit;
    let mut any_accepted = records.iter().any(|r: &IterationRecord| r.step > 0.0);
    let mut iteration = start_iter;
    while iteration < config.max_iterations {
        let d_inf = current.direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !maximize && current.value < config.residual_tolerance {
            termination = Termination::ResidualTolerance;
            push(&mut records, &mut control, record(iteration, &current, 0.0, vec![]));
            break;
        }
        if current.stationarity < config.gradient_tolerance || d_inf == 0.0 {
            termination = Termination::GradientTolerance;
            push(&mut records, &mut control, record(iteration, &current, 0.0, vec![]));
            break;
        }
        let mut rejections = Vec::new();
        let mut inadmissible = 0;
        let mut s = current.natural_step.map_or(step, |n| n.min(step));
        let mut accepted = None;
        while s >= config.min_step {
            let t = s / d_inf;
            let mut y: Vec<f64> = x.iter().zip(&current.direction).map(|(a, d)| a + t * d).collect();
            let trial = problem.project(&mut y, target).and_then(|_| problem.evaluate(&y, false));
            match trial {
                Ok(p) if sign * (p.objective - current.objective) >= config.sufficient_increase * t * current.slope => {
                    // The accepted point also needs its search direction;
                    // failing to form it rejects the step.
                    match problem.evaluate(&y, true) {
                        Ok(full) => {
                            accepted = Some((y, s, full));
                            break;
                        }
                        Err(e) => {
                            inadmissible += usize::from(matches!(e, Error::Inadmissible { .. }));
                            rejections.push(format!("step {s:.3e}: {e}"));
                        }
                    }
                }
                Ok(p) => rejections.push(format!("step {s:.3e}: insufficient change ({:.6e})", p.objective)),
                Err(e) => {
                    inadmissible += usize::from(matches!(e, Error::Inadmissible { .. }));
                    rejections.push(format!("step {s:.3e}: {e}"));
                }
            }
            s *= config.shrink;
        }
        match accepted {
            Some((y, s, full)) => {
                push(&mut records, &mut control, record(iteration, &current, s, rejections));
                x = y;
                current = full;
                step = (2.0 * s).min(config.initial_step * 8.0);
                any_accepted = true;
                iteration += 1;
                if config.checkpoint_interval > 0 && iteration % config.checkpoint_interval == 0 {
                    if let Some(path) = &control.checkpoint_path {
                        Checkpoint {
                            config: config.clone(),
                            iteration,
                            dofs: x.clone(),
                            base_lengths: problem.base.clone(),
                            step,
                            target_area: target,
                            seed: config.seed,
                            records: records.clone(),
                        }
                        .save(path)?;
                    }
                }
            }
            None => {
                termination = if !rejections.is_empty() && inadmissible == rejections.len() {
                    Termination::AllStepsInadmissible
                } else {
                    Termination::StepCollapse
                };
                push(&mut records, &mut control, record(iteration, &current, 0.0, rejections));
                break;
            }
        }
    }
    if iteration >= config.max_iterations && termination == Termination::IterationLimit {
        push(&mut records, &mut control, record(iteration, &current, 0.0, vec![]));
    }
    let final_metric = problem.metric(&x);
    let trace = OptimizerTrace {
        config: config.clone(),
        target_area: target,
        records,
        termination,
        non_improving_start: maximize && !any_accepted && termination != Termination::GradientTolerance,
        final_metric: final_metric.clone(),
    };
    Ok((final_metric, trace))
}

fn record(iteration: usize, p: &Point, step: f64, rejections: Vec<String>) -> IterationRecord {
    IterationRecord {
        iteration,
        objective: p.objective,
        value: p.value,
        branch_values: p.branch_values.clone(),
        gradient_norm: p.stationarity,
        step,
        admissibility_margin: p.margin,
        area: p.area,
        rejections,
    }
}

fn push(records: &mut Vec<IterationRecord>, control: &mut RunControl, r: IterationRecord) {
    if let Some(cb) = control.on_iteration.as_mut() {
        cb(&r);
    }
    records.push(r);
}
