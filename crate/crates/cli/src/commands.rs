//! Subcommand bodies: load inputs, call the library, write reports.

use std::path::Path;

use fbmi_core::assembly::{assemble, MassMode};
use fbmi_core::certify::{
    cap_reference as reference, degeneration_experiment_with, fbmi_certificate_with, CertificateOptions,
    DegenerationOptions, Geometry,
};
use fbmi_core::functionals::{
    eval_functional, grad_check as check, DofKind, FunctionalSpec, GeneralCoefficients, GradCheckOptions, GradTarget,
};
use fbmi_core::mesh::{
    build_annulus_mesh, build_cap_mesh, build_flat_disk_mesh, build_hyperbolic_ball_mesh, load_conformal_factor,
    load_lengths, load_mesh, measures, perturb_metric, save_conformal_factor, save_lengths, save_mesh, square_grid,
    topology, validate_metric, DiscreteMetric, SimplicialMesh,
};
use fbmi_core::optimize::{run, Checkpoint, IterationRecord, OptimizerConfig, RunControl};
use fbmi_core::spectra::{admissibility_check, dirichlet_spectrum, freq_steklov_spectrum, robin_spectrum};
use serde::Serialize;

use crate::output::Session;
use crate::{
    BuildMeshArgs, CapReferenceArgs, CertifyArgs, DegenerateArgs, DofArg, Failure, Family, FamilyArgs, FunctionalArgs,
    GeometryArg, GradCheckArgs, MassModeArg, MeshInfoArgs, MeshKind, MetricArgs, ObjectiveArg, OptimizeArgs,
    SpectrumArgs, SpectrumKind,
};

fn mass_mode(m: MassModeArg) -> MassMode {
    match m {
        MassModeArg::Consistent => MassMode::Consistent,
        MassModeArg::Lumped => MassMode::Lumped,
    }
}

fn geometry(g: GeometryArg) -> Geometry {
    match g {
        GeometryArg::Spherical => Geometry::Spherical,
        GeometryArg::Hyperbolic => Geometry::Hyperbolic,
    }
}

/// Mesh plus metric: sidecar lengths or coordinate lengths, optionally with a
/// conformal factor on top.
fn load(session: &mut Session, args: &MetricArgs) -> Result<(SimplicialMesh, DiscreteMetric), Failure> {
    session.input(&args.mesh)?;
    let mesh = load_mesh(&args.mesh)?;
    let metric = match &args.lengths {
        Some(p) => {
            session.input(p)?;
            load_lengths(p, &mesh)?
        }
        None => DiscreteMetric::from_coordinates(&mesh)?,
    };
    let metric = match &args.conformal {
        Some(p) => {
            session.input(p)?;
            let phi = load_conformal_factor(p, &mesh)?;
            DiscreteMetric::conformal(metric.lengths(&mesh), phi)
        }
        None => metric,
    };
    session.stage("load");
    Ok((mesh, metric))
}

fn require(value: Option<f64>, flag: &str, context: &str) -> Result<f64, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("{context} requires --{flag}")))
}

fn functional_spec(args: &FamilyArgs, mass: MassModeArg) -> Result<FunctionalSpec, Failure> {
    let name = match args.family {
        Family::Theta => "theta",
        Family::Omega => "omega",
        Family::XiPlus => "xi_plus",
        Family::XiMinus => "xi_minus",
        Family::General => "general",
        Family::Robin | Family::FreqSteklov => {
            return Err(Failure::Usage("single-eigenvalue families are only available in grad-check".into()))
        }
    };
    let r = require(args.r, "r", "a functional family")?;
    let mut spec = FunctionalSpec::new(name, r, args.i);
    spec.mass_mode = mass_mode(mass);
    if args.family == Family::General {
        let ctx = "--family general";
        spec.coefficients = GeneralCoefficients {
            alpha1: require(args.alpha1, "alpha1", ctx)?,
            beta1: require(args.beta1, "beta1", ctx)?,
            alpha2: require(args.alpha2, "alpha2", ctx)?,
            beta2: require(args.beta2, "beta2", ctx)?,
        };
    }
    Ok(spec)
}

#[derive(Serialize)]
struct MeshInfoReport {
    vertices: usize,
    edges: usize,
    triangles: usize,
    topology: fbmi_core::mesh::TopologyReport,
    boundary_loop_sizes: Vec<usize>,
    area: f64,
    boundary_length: f64,
    metric_representation: &'static str,
}

#[derive(Serialize)]
struct TriangleRow {
    triangle: usize,
    area: f64,
}

pub fn mesh_info(session: &mut Session, args: &MeshInfoArgs) -> Result<(), Failure> {
    let (mesh, metric) = load(session, &args.metric)?;
    let diag = validate_metric(&mesh, &metric);
    if !diag.is_valid() {
        return Err(Failure::Domain(format!(
            "invalid metric: {} non-positive edges, {} triangles violate the triangle inequality",
            diag.non_positive_edges.len(),
            diag.violated_triangles.len()
        )));
    }
    let m = measures(&mesh, &metric)?;
    session.stage("compute");
    session.report(&MeshInfoReport {
        vertices: mesh.vertex_count(),
        edges: mesh.edge_count(),
        triangles: mesh.triangles().len(),
        topology: topology(&mesh),
        boundary_loop_sizes: mesh.boundary_loops().iter().map(Vec::len).collect(),
        area: m.area,
        boundary_length: m.boundary_length,
        metric_representation: match DofKind::of(&metric) {
            DofKind::EdgeLengths => "edge_lengths",
            DofKind::Conformal => "conformal",
        },
    })?;
    let rows: Vec<TriangleRow> = m
        .per_triangle_areas
        .iter()
        .enumerate()
        .map(|(triangle, &area)| TriangleRow { triangle, area })
        .collect();
    session.csv(&rows)
}

#[derive(Serialize)]
struct SpectrumReport {
    spectrum: fbmi_core::spectra::Spectrum,
    admissibility: Option<fbmi_core::spectra::Admissibility>,
}

#[derive(Serialize)]
struct EigenRow {
    index: usize,
    eigenvalue: f64,
    residual: f64,
    cluster_size: usize,
}

pub fn spectrum(session: &mut Session, args: &SpectrumArgs) -> Result<(), Failure> {
    let (mesh, metric) = load(session, &args.metric)?;
    let ops = assemble(&mesh, &metric, mass_mode(args.metric.mass_mode))?;
    let (spectrum, admissibility) = match args.kind {
        SpectrumKind::Robin => (robin_spectrum(&ops, require(args.param, "param", "--kind robin")?, args.count)?, None),
        SpectrumKind::FreqSteklov => {
            let c = require(args.param, "param", "--kind freq-steklov")?;
            let adm = if ops.interior_vertices.is_empty() { None } else { Some(admissibility_check(&ops, c)?) };
            (freq_steklov_spectrum(&ops, c, args.count)?, adm)
        }
        SpectrumKind::Dirichlet => {
            if args.param.is_some() {
                return Err(Failure::Usage("--kind dirichlet takes no --param".into()));
            }
            (dirichlet_spectrum(&ops, args.count)?, None)
        }
    };
    session.stage("compute");
    let rows: Vec<EigenRow> = spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(index, &eigenvalue)| EigenRow {
            index,
            eigenvalue,
            residual: spectrum.residuals.get(index).copied().unwrap_or(f64::NAN),
            cluster_size: spectrum.cluster_of(index).len(),
        })
        .collect();
    session.report(&SpectrumReport {
        spectrum,
        admissibility,
    })?;
    session.csv(&rows)
}

#[derive(Serialize)]
struct BranchRow<'a> {
    branch: usize,
    label: &'a str,
    value: f64,
    active: bool,
}

pub fn functional(session: &mut Session, args: &FunctionalArgs) -> Result<(), Failure> {
    let spec = functional_spec(&args.family, args.metric.mass_mode)?;
    session.resolve("spec", &spec)?;
    let (mesh, metric) = load(session, &args.metric)?;
    let report = eval_functional(&spec, &mesh, &metric)?;
    session.stage("compute");
    session.report(&report)?;
    let rows: Vec<BranchRow> = report
        .branches
        .iter()
        .enumerate()
        .map(|(branch, b)| BranchRow {
            branch,
            label: &b.label,
            value: b.value,
            active: branch == report.active_branch,
        })
        .collect();
    session.csv(&rows)
}

#[derive(Serialize)]
struct CheckRow {
    direction: usize,
    analytic: f64,
    finite_difference: f64,
    relative_error: f64,
}

pub fn grad_check(session: &mut Session, args: &GradCheckArgs) -> Result<(), Failure> {
    let f = &args.family;
    let target = match f.family {
        Family::Robin => GradTarget::RobinEigenvalue {
            sigma: require(f.param, "param", "--family robin")?,
            index: f.i,
        },
        Family::FreqSteklov => GradTarget::FreqSteklovEigenvalue {
            c: require(f.param, "param", "--family freq-steklov")?,
            index: f.i,
        },
        _ => GradTarget::Functional {
            spec: functional_spec(f, args.metric.mass_mode)?,
        },
    };
    if !(args.fd_step > 0.0 && args.fd_step.is_finite()) || args.trials == 0 {
        return Err(Failure::Usage("--fd-step must be positive and --trials at least 1".into()));
    }
    let opts = GradCheckOptions {
        step: args.fd_step,
        directions: args.trials,
        seed: args.seed,
    };
    session.resolve("target", &target)?;
    let (mesh, metric) = load(session, &args.metric)?;
    let report = check(&target, &mesh, &metric, &opts)?;
    session.stage("compute");
    session.report(&report)?;
    let rows: Vec<CheckRow> = report
        .checks
        .iter()
        .enumerate()
        .map(|(direction, c)| CheckRow {
            direction,
            analytic: c.analytic,
            finite_difference: c.finite_difference,
            relative_error: c.relative_error,
        })
        .collect();
    session.csv(&rows)
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    config: &'a OptimizerConfig,
    termination: fbmi_core::optimize::Termination,
    target_area: f64,
    non_improving_start: bool,
    iterations: usize,
    initial_value: f64,
    final_value: f64,
    records: &'a [IterationRecord],
}

#[derive(Serialize)]
struct IterationRow {
    iteration: usize,
    objective: f64,
    value: f64,
    branch0: f64,
    branch1: f64,
    gradient_norm: f64,
    step: f64,
    area: f64,
    admissibility_margin: Option<f64>,
    rejections: usize,
}

pub fn optimize(session: &mut Session, args: &OptimizeArgs) -> Result<(), Failure> {
    let mut config = match args.objective {
        ObjectiveArg::XiPlus => OptimizerConfig::xi_plus(args.r, args.i),
        ObjectiveArg::ThetaCriticality => OptimizerConfig::theta_criticality(args.r, args.i),
    };
    config.dofs = match args.dofs {
        DofArg::Conformal => DofKind::Conformal,
        DofArg::Edges => DofKind::EdgeLengths,
    };
    config.max_iterations = args.max_iter;
    config.seed = args.seed;
    config.mass_mode = mass_mode(args.metric.mass_mode);
    config.checkpoint_interval = if args.checkpoint.is_some() { args.checkpoint_interval } else { 0 };
    if let Some(p) = args.penalty {
        config.penalty = p;
    }
    session.resolve("config", &config)?;
    let (mesh, metric) = load(session, &args.metric)?;
    let resume = match &args.resume {
        Some(p) => {
            session.input(p)?;
            Some(Checkpoint::load(p)?)
        }
        None => None,
    };
    let quiet = args.quiet;
    let mut progress = |r: &IterationRecord| {
        if !quiet {
            eprintln!(
                "iter {:>4}  objective {:.10e}  value {:.10e}  step {:.3e}",
                r.iteration, r.objective, r.value, r.step
            );
        }
    };
    let control = RunControl {
        resume,
        checkpoint_path: args.checkpoint.clone(),
        on_iteration: Some(&mut progress),
    };
    let (final_metric, trace) = run(&mesh, &metric, &config, control)?;
    session.stage("compute");

    session.prepare()?;
    let lengths_path = session.path(".lengths");
    save_lengths(&lengths_path, &mesh, &DiscreteMetric::from_lengths(final_metric.lengths(&mesh)))?;
    session.output(lengths_path);
    if let DiscreteMetric::Conformal { log_factor, .. } = &final_metric {
        let phi_path = session.path(".phi");
        save_conformal_factor(&phi_path, log_factor)?;
        session.output(phi_path);
    }
    if let Some(p) = &args.checkpoint {
        if p.exists() {
            session.output(p.clone());
        }
    }
    let value = |r: Option<&IterationRecord>| r.map_or(f64::NAN, |r| r.value);
    session.report(&OptimizeReport {
        config: &config,
        termination: trace.termination,
        target_area: trace.target_area,
        non_improving_start: trace.non_improving_start,
        iterations: trace.records.last().map_or(0, |r| r.iteration),
        initial_value: value(trace.records.first()),
        final_value: value(trace.records.last()),
        records: &trace.records,
    })?;
    let rows: Vec<IterationRow> = trace
        .records
        .iter()
        .map(|r| IterationRow {
            iteration: r.iteration,
            objective: r.objective,
            value: r.value,
            branch0: r.branch_values.first().copied().unwrap_or(f64::NAN),
            branch1: r.branch_values.get(1).copied().unwrap_or(f64::NAN),
            gradient_norm: r.gradient_norm,
            step: r.step,
            area: r.area,
            admissibility_margin: r.admissibility_margin,
            rejections: r.rejections.len(),
        })
        .collect();
    session.csv(&rows)
}

pub fn certify(session: &mut Session, args: &CertifyArgs) -> Result<(), Failure> {
    let opts = CertificateOptions {
        mass_mode: mass_mode(args.metric.mass_mode),
        ..CertificateOptions::default()
    };
    session.resolve("min_functions", opts.min_functions)?;
    session.resolve("seed", opts.seed)?;
    let (mesh, metric) = load(session, &args.metric)?;
    let cert = fbmi_certificate_with(&mesh, &metric, args.r, args.i, geometry(args.geometry), &opts)?;
    session.stage("compute");
    session.report(&cert)?;
    if session.csv_enabled() {
        let n = cert.functions.first().map_or(0, Vec::len);
        let mut text = String::from("vertex");
        for j in 0..cert.functions.len() {
            text.push_str(&format!(",v{j}"));
        }
        text.push('\n');
        for v in 0..n {
            text.push_str(&v.to_string());
            for f in &cert.functions {
                text.push_str(&format!(",{:e}", f[v]));
            }
            text.push('\n');
        }
        session.csv_text(&text)?;
    }
    Ok(())
}

pub fn degenerate(session: &mut Session, args: &DegenerateArgs) -> Result<(), Failure> {
    let opts = DegenerationOptions {
        mass_mode: mass_mode(args.metric.mass_mode),
        ..DegenerationOptions::default()
    };
    session.resolve("options", &opts)?;
    let (mesh, metric) = load(session, &args.metric)?;
    let table = degeneration_experiment_with(&mesh, &metric, args.r, args.i, &args.epsilons, &opts)?;
    session.stage("compute");
    session.report(&table)?;
    session.csv_text(&table.to_csv())
}

pub fn cap_reference(session: &mut Session, args: &CapReferenceArgs) -> Result<(), Failure> {
    let c = reference(args.r, args.k, geometry(args.geometry))?;
    session.stage("compute");
    session.report(&c)?;
    session.csv(std::slice::from_ref(&c))
}

#[derive(Serialize)]
struct BuildMeshReport {
    mesh: String,
    lengths: String,
    vertices: usize,
    triangles: usize,
    area: f64,
    boundary_length: f64,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    path.with_extension("lengths")
}

pub fn build_mesh(session: &mut Session, args: &BuildMeshArgs) -> Result<(), Failure> {
    let (mesh, metric) = match args.kind {
        MeshKind::Cap => build_cap_mesh(args.r, args.refinement)?,
        MeshKind::Ball => build_hyperbolic_ball_mesh(args.r, args.refinement)?,
        MeshKind::Disk => build_flat_disk_mesh(args.r, args.refinement)?,
        MeshKind::Annulus => build_annulus_mesh(args.inner, args.r, args.refinement, args.per_ring)?,
        MeshKind::Square => square_grid(args.refinement)?,
    };
    let metric = if args.perturb > 0.0 {
        perturb_metric(&mesh, &metric, args.perturb, args.seed)?
    } else {
        metric
    };
    let m = measures(&mesh, &metric)?;
    session.stage("compute");
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Domain(format!("cannot create {}: {e}", dir.display())))?;
    }
    let lengths = sidecar(&args.output);
    save_mesh(&args.output, &mesh)?;
    save_lengths(&lengths, &mesh, &metric)?;
    session.output(args.output.clone());
    session.output(lengths.clone());
    session.report(&BuildMeshReport {
        mesh: args.output.display().to_string(),
        lengths: lengths.display().to_string(),
        vertices: mesh.vertex_count(),
        triangles: mesh.triangles().len(),
        area: m.area,
        boundary_length: m.boundary_length,
    })
}
