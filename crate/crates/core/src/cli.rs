//! Command-line interface: `register`, `synth` and `eval`.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a registration
//! stops without converging (its outputs are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::driver::{
    register_simultaneous, register_skeleton, RegistrationConfig, RegistrationReport,
};
use crate::energy::assign;
use crate::error::{Error, Result};
use crate::geometry::{OrientedPoint, ProjectionMode, Vec3};
use crate::io::{self, CloudFormat};
use crate::skeleton::{builtin_pose, Skeleton};
use crate::synth::{generate, Hole, NoiseModel, SynthSpec};

/// Tessellation segments used for `--out-mesh`.
const MESH_SEGMENTS: usize = 24;

#[derive(Debug, Parser)]
#[command(
    name = "skelreg",
    version,
    about = "Fit sphere-mesh skeletons to oriented point clouds"
)]
pub struct Cli {
    /// Worker threads; 0 picks one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a skeleton template against a point cloud.
    Register(RegisterArgs),
    /// Sample a synthetic cloud from a posed skeleton.
    Synth(SynthArgs),
    /// Print the mean distance and total energy of a cloud against a skeleton.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Normal,
    Orthogonal,
}

impl From<Mode> for ProjectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Normal => ProjectionMode::NormalConstrained,
            Mode::Orthogonal => ProjectionMode::Orthogonal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Update every joint at once from a frozen snapshot.
    Simultaneous,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Input cloud (`.ply` or `x y z nx ny nz` text).
    #[arg(long)]
    pub input: PathBuf,
    /// Template file or `builtin:NAME`.
    #[arg(long)]
    pub skeleton: String,
    /// Position of the root joint, `X,Y,Z`.
    #[arg(
        long,
        conflicts_with = "auto_init",
        required_unless_present = "auto_init"
    )]
    pub anchor: Option<String>,
    /// Place the root at the centre of the cloud's bounding box.
    #[arg(long)]
    pub auto_init: bool,
    #[arg(long, value_enum, default_value_t = Mode::Normal)]
    pub mode: Mode,
    /// Maximum passes per chain (sweeps for the baseline).
    #[arg(long, default_value_t = 20)]
    pub max_iters: usize,
    /// Relative energy change that counts as converged.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_skeleton: Option<PathBuf>,
    #[arg(long)]
    pub out_mesh: Option<PathBuf>,
    /// Per-pass CSV report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Estimate normals from K neighbours instead of reading them.
    #[arg(long, value_name = "K", num_args = 0..=1, default_missing_value = "16")]
    pub estimate_normals: Option<usize>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Template file or `builtin:NAME`.
    #[arg(long)]
    pub template: String,
    /// Posed skeleton file, or `builtin` for the builtin template's
    /// reference pose. Defaults to the template's rest pose.
    #[arg(long)]
    pub pose: Option<String>,
    #[arg(long, default_value_t = 5000)]
    pub points: usize,
    /// `none`, `gaussian:SIGMA` or `poisson:LAMBDA`.
    #[arg(long, default_value = "none")]
    pub noise: String,
    /// Spherical holes, `x,y,z,r;x,y,z,r;...`.
    #[arg(long)]
    pub holes: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output cloud (`.ply` or text).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Template file or `builtin:NAME`.
    #[arg(long)]
    pub skeleton: String,
    #[arg(long, value_enum, default_value_t = Mode::Normal)]
    pub mode: Mode,
}

/// Parses the arguments, runs the command and maps the outcome to an exit
/// code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    ExitCode::from(run(cli))
}

pub fn run(cli: Cli) -> u8 {
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        log::debug!("thread pool already configured: {e}");
    }
    let outcome = match cli.command {
        Command::Register(args) => register(&args),
        Command::Synth(args) => synth(&args).map(|()| 0),
        Command::Eval(args) => eval(&args).map(|()| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn parse_anchor(s: &str) -> Result<Vec3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("invalid anchor '{s}'")))?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(Error::InvalidArgument(format!(
            "anchor '{s}' needs three finite values"
        ))),
    }
}

fn read_input(path: &Path, estimate: Option<usize>) -> Result<Vec<OrientedPoint>> {
    let format = CloudFormat::from_path(path);
    let points = match estimate {
        Some(k) => io::read_cloud_estimating(path, format, k, true)?,
        None => io::read_cloud(path, format)?,
    };
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: cloud is empty",
            path.display()
        )));
    }
    Ok(points)
}

fn register(args: &RegisterArgs) -> Result<u8> {
    if args.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "--max-iters must be at least 1".into(),
        ));
    }
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(Error::InvalidArgument("--tol must be positive".into()));
    }
    if args.estimate_normals.is_some_and(|k| k < 3) {
        return Err(Error::InvalidArgument(
            "--estimate-normals needs k >= 3".into(),
        ));
    }
    let skeleton = Skeleton::load(&args.skeleton)?;
    let points = read_input(&args.input, args.estimate_normals)?;
    let config = RegistrationConfig {
        max_outer_iters: args.max_iters,
        convergence_tol: args.tol,
        mode: args.mode.into(),
        auto_init: args.auto_init,
        anchor: args.anchor.as_deref().map(parse_anchor).transpose()?,
        rng_seed: args.seed,
        ..RegistrationConfig::default()
    };
    let report = match args.baseline {
        Some(Baseline::Simultaneous) => {
            let anchor = match config.anchor {
                Some(a) => a,
                None => crate::driver::auto_anchor(&points)?,
            };
            register_simultaneous(&points, &skeleton.place_root(&anchor), &config)?
        }
        None => register_skeleton(&points, &skeleton, &config)?,
    };
    write_outputs(args, &report)?;
    println!(
        "converged {} passes {} energy {} mean_distance {}",
        report.converged,
        report.passes(),
        report.final_energy(),
        report.final_mean_distance()
    );
    for bone in &report.empty_bones {
        log::warn!("bone `{bone}` ends without points");
    }
    for failure in &report.failures {
        eprintln!("warning: {failure}");
    }
    Ok(if report.converged { 0 } else { 2 })
}

fn write_outputs(args: &RegisterArgs, report: &RegistrationReport) -> Result<()> {
    let write =
        |path: &Path, text: String| std::fs::write(path, text).map_err(|e| Error::io(path, e));
    if let Some(path) = &args.report {
        write(path, report.to_csv())?;
    }
    if let Some(path) = &args.out_skeleton {
        write(path, report.skeleton.to_template())?;
    }
    if let Some(path) = &args.out_mesh {
        io::export_mesh(&report.skeleton, MESH_SEGMENTS, path)?;
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let noise: NoiseModel = args.noise.parse()?;
    let holes = args
        .holes
        .as_deref()
        .map(Hole::parse_list)
        .transpose()?
        .unwrap_or_default();
    let template = Skeleton::load(&args.template)?;
    let skeleton = match args.pose.as_deref() {
        None => template,
        Some("builtin") => {
            let name = args.template.strip_prefix("builtin:").ok_or_else(|| {
                Error::InvalidArgument("--pose builtin needs a builtin:NAME template".into())
            })?;
            builtin_pose(name)?
        }
        Some(path) => {
            let posed = Skeleton::load(path)?;
            let ids = |s: &Skeleton| s.bones().iter().map(|b| b.id.clone()).collect::<Vec<_>>();
            if ids(&posed) != ids(&template) {
                return Err(Error::InvalidArgument(format!(
                    "pose {path} does not have the template's bones"
                )));
            }
            posed
        }
    };
    let cloud = generate(&SynthSpec {
        skeleton,
        points: args.points,
        noise,
        holes,
        seed: args.seed,
    })?;
    io::write_cloud(&args.out, &cloud.points, CloudFormat::from_path(&args.out))
}

fn eval(args: &EvalArgs) -> Result<()> {
    let skeleton = Skeleton::load(&args.skeleton)?;
    let points = read_input(&args.input, None)?;
    let a = assign(&points, &skeleton, args.mode.into());
    println!("{} {}", a.mean_distance(), a.total_energy());
    Ok(())
}
