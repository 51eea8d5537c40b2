//! `fbmi`: command-line driver for the spectral extremal-metric toolkit.
//!
//! Exit codes: 0 on success, 1 on domain errors (invalid mesh or metric,
//! inadmissible frequency, solver failure), 2 on usage errors (bad flags,
//! unreadable input files).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Thread count for inner parallelism; defaults to the physical core count.
pub const THREADS_ENV: &str = "FBMI_THREADS";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
}

impl From<fbmi_core::Error> for Failure {
    fn from(e: fbmi_core::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "fbmi", version, about = "Spectral functionals and extremal metrics on triangle meshes")]
struct Cli {
    /// Directory for reports and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Also write tabular results as `<command>.csv`.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Topology and measures of a mesh with its metric.
    MeshInfo(MeshInfoArgs),
    /// Robin, frequency-Steklov or Dirichlet eigenvalues.
    Spectrum(SpectrumArgs),
    /// Evaluate a spectral functional.
    Functional(FunctionalArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
    /// Run the Ξ⁺ ascent or the Θ criticality search.
    Optimize(OptimizeArgs),
    /// Build an immersion certificate from the eigenfunctions.
    Certify(CertifyArgs),
    /// Tabulate Ξ⁻ along the boundary-concentrating degeneration.
    Degenerate(DegenerateArgs),
    /// Closed-form values on the geodesic cap or hyperbolic ball.
    CapReference(CapReferenceArgs),
    /// Write a generated mesh and its edge-length sidecar.
    BuildMesh(BuildMeshArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricArgs {
    /// OFF mesh file.
    pub mesh: PathBuf,
    /// Edge-length sidecar (`i j length` per edge); defaults to coordinate lengths.
    #[arg(long)]
    pub lengths: Option<PathBuf>,
    /// Conformal factor file (`i phi` per vertex) applied over the base lengths.
    #[arg(long)]
    pub conformal: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MassModeArg::Consistent)]
    pub mass_mode: MassModeArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassModeArg {
    Consistent,
    Lumped,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Robin,
    FreqSteklov,
    Dirichlet,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Theta,
    Omega,
    XiPlus,
    XiMinus,
    General,
    /// Single Robin eigenvalue (grad-check only).
    Robin,
    /// Single frequency-Steklov eigenvalue (grad-check only).
    FreqSteklov,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryArg {
    Spherical,
    Hyperbolic,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    XiPlus,
    ThetaCriticality,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofArg {
    Conformal,
    Edges,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshKind {
    Cap,
    Ball,
    Disk,
    Annulus,
    Square,
}

#[derive(Args, Debug, Serialize)]
pub struct MeshInfoArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[arg(long, value_enum)]
    pub kind: SpectrumKind,
    /// σ (robin) or c (freq-steklov).
    #[arg(long, allow_negative_numbers = true)]
    pub param: Option<f64>,
    #[arg(long)]
    pub count: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Radius in radians (functional families).
    #[arg(long)]
    pub r: Option<f64>,
    /// Functional or eigenvalue index.
    #[arg(long)]
    pub i: usize,
    /// σ or c for the single-eigenvalue targets.
    #[arg(long, allow_negative_numbers = true)]
    pub param: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta2: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct FunctionalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct GradCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
    /// Number of random directions.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[arg(long, value_enum)]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub i: usize,
    #[arg(long, value_enum, default_value_t = DofArg::Conformal)]
    pub dofs: DofArg,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Branch-matching penalty weight (Ξ⁺ only).
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Checkpoint file written every `--checkpoint-interval` iterations.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub checkpoint_interval: usize,
    /// Continue from a checkpoint written with the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Suppress per-iteration progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[arg(long, value_enum)]
    pub geometry: GeometryArg,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub i: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct DegenerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub i: usize,
    /// Decreasing values in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.1,0.03,0.01")]
    pub epsilons: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct CapReferenceArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum)]
    pub geometry: GeometryArg,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildMeshArgs {
    #[arg(long, value_enum)]
    pub kind: MeshKind,
    /// Radius (cap, ball, disk) or outer radius (annulus).
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Inner radius (annulus).
    #[arg(long, default_value_t = 0.5)]
    pub inner: f64,
    /// Ring count (cap, ball, disk, annulus) or cells per side (square).
    #[arg(long)]
    pub refinement: usize,
    /// Vertices per ring (annulus).
    #[arg(long, default_value_t = 24)]
    pub per_ring: usize,
    /// Relative edge-length noise amplitude in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// OFF file to write; the sidecar goes next to it with extension `lengths`.
    #[arg(long)]
    pub output: PathBuf,
}

/// Physical cores unless the environment variable overrides it.
fn configure_threads() -> Result<usize, Failure> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => num_cpus::get_physical().max(1),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Domain(e.to_string()))?;
    Ok(threads)
}

fn run(cli: Cli) -> Result<PathBuf, Failure> {
    let threads = configure_threads()?;
    let parameters = serde_json::to_value(&cli.command).map_err(|e| Failure::Domain(e.to_string()))?;
    // Externally tagged: unwrap `{ "<command>": { … } }` to the argument object.
    let (name, parameters) = match parameters {
        serde_json::Value::Object(map) => map.into_iter().next().expect("one subcommand"),
        _ => unreachable!("subcommands serialize as objects"),
    };
    let mut session = output::Session::new(&name, &cli.out, cli.csv, parameters, threads);
    session.resolve("out", &cli.out)?;
    session.resolve("csv", cli.csv)?;
    match &cli.command {
        Command::MeshInfo(a) => commands::mesh_info(&mut session, a)?,
        Command::Spectrum(a) => commands::spectrum(&mut session, a)?,
        Command::Functional(a) => commands::functional(&mut session, a)?,
        Command::GradCheck(a) => commands::grad_check(&mut session, a)?,
        Command::Optimize(a) => commands::optimize(&mut session, a)?,
        Command::Certify(a) => commands::certify(&mut session, a)?,
        Command::Degenerate(a) => commands::degenerate(&mut session, a)?,
        Command::CapReference(a) => commands::cap_reference(&mut session, a)?,
        Command::BuildMesh(a) => commands::build_mesh(&mut session, a)?,
    }
    session.finish()
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
