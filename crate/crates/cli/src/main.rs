//! `anisoft` experiment runner.
//!
//! Exit status: 0 on success, 2 when a request is refused (bad config, violated hypothesis,
//! insufficient resolution), 1 on internal failure. Refusals print a one-line JSON reason to
//! stderr.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anisoft::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Context, Defaults, SpaceKind, SpaceOverrides};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "anisoft", version, about = "Anisotropic function-space experiments on periodic grids")]
struct Cli {
    /// JSON experiment config; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for generated test families.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SpaceFlags {
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    /// Integrability exponents; `inf` is accepted.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    q: Option<f64>,
    /// Points per axis.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Box length per axis.
    #[arg(long = "box", value_delimiter = ',')]
    box_lengths: Option<Vec<f64>>,
    /// Test family `kind:count` with kind in gaussians, modes, band-limited.
    #[arg(long)]
    family: Option<String>,
}

impl SpaceFlags {
    fn overrides(&self) -> SpaceOverrides {
        SpaceOverrides {
            s: self.s,
            a: self.a.clone(),
            p: self.p.clone(),
            q: self.q,
            grid: self.grid.clone(),
            box_lengths: self.box_lengths.clone(),
            family: self.family.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    F,
    B,
    H,
}

#[derive(Subcommand)]
enum Command {
    /// Anisotropic distance of a point and the root residual.
    AnisoDist {
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
    },
    /// Partition-of-unity and corona-support checks.
    PartitionCheck {
        #[command(flatten)]
        space: SpaceFlags,
    },
    /// Quasi-norm of a grid file with per-level contributions.
    Norm {
        #[arg(long = "space", value_enum, default_value = "f", ignore_case = true)]
        space_kind: SpaceArg,
        #[command(flatten)]
        space: SpaceFlags,
        /// Binary grid file: header line then little-endian complex samples.
        #[arg(long)]
        input: PathBuf,
    },
    /// Lift operator ratio bands and round-trip errors at two resolutions.
    LiftCheck {
        #[arg(long, default_value_t = 2.5, allow_hyphen_values = true)]
        r: f64,
        #[command(flatten)]
        space: SpaceFlags,
    },
    /// Local-means quasi-norm against the Littlewood-Paley quasi-norm.
    LocalMeansCompare {
        #[arg(long, default_value_t = 2)]
        laplacian_power: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[command(flatten)]
        space: SpaceFlags,
    },
    /// Peetre maximal side against the convolution side.
    MaximalCheck {
        /// Peetre exponents, one per axis.
        #[arg(long = "r", value_delimiter = ',')]
        r: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2)]
        laplacian_power: usize,
        #[command(flatten)]
        space: SpaceFlags,
    },
    /// Ratio `|f o sigma| / |f|` over a family at two resolutions.
    DiffeoInvariance {
        /// `kind:key=value,...` with kind in identity, translation, shear, swirl, radial.
        #[arg(long)]
        sigma: String,
        #[command(flatten)]
        space: SpaceFlags,
    },
    /// Chain-rule term list with exact coefficients, or the finite-difference suite.
    FaaDiBruno {
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<usize>>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        verify: bool,
    },
    /// JSON summary of the main checks.
    Report {
        #[command(flatten)]
        space: SpaceFlags,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ANISOFT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Configuration(format!("ANISOFT_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let ctx = |flags: &SpaceFlags, family: &'static str| {
        Context::resolve(&cfg, cli.seed, &flags.overrides(), &Defaults::standard(family))
    };
    let mut failed = None;
    let bytes = match &cli.command {
        Command::AnisoDist { a, x } => commands::aniso_dist(a, x)?,
        Command::PartitionCheck { space } => {
            let mut flags = space.clone();
            if flags.grid.is_none() && cfg.grid.is_none() {
                let n = flags.a.as_ref().or(cfg.space.first().map(|s| &s.a)).map_or(2, Vec::len);
                flags.grid = Some(vec![if n >= 3 { 32 } else { 64 }; n]);
            }
            commands::partition_check(&ctx(&flags, "band-limited:1")?)?
        }
        Command::Norm { space_kind, space, input } => {
            let kind = match space_kind {
                SpaceArg::F => SpaceKind::F,
                SpaceArg::B => SpaceKind::B,
                SpaceArg::H => SpaceKind::H,
            };
            commands::norm(kind, ctx(space, "band-limited:1")?.first(), input)?
        }
        Command::LiftCheck { r, space } => commands::lift_check(&ctx(space, "band-limited:20")?, *r)?,
        Command::LocalMeansCompare { laplacian_power, radius, space } => {
            commands::local_means_compare(&ctx(space, "band-limited:30")?, *laplacian_power, *radius)?
        }
        Command::MaximalCheck { r, laplacian_power, space } => {
            commands::maximal_check(&ctx(space, "band-limited:10")?, r.clone(), *laplacian_power)?
        }
        Command::DiffeoInvariance { sigma, space } => {
            let mut flags = space.clone();
            if flags.box_lengths.is_none() && cfg.grid.is_none() {
                let n = flags.a.as_ref().or(cfg.space.first().map(|s| &s.a)).map_or(2, Vec::len);
                flags.box_lengths = Some(vec![4.0 * std::f64::consts::PI; n]);
            }
            commands::diffeo_invariance(&ctx(&flags, "gaussians:50")?, sigma)?
        }
        Command::FaaDiBruno { gamma, n, m, verify } => {
            if *verify {
                let (bytes, ok) = commands::faa_di_bruno_verify()?;
                if !ok {
                    failed = Some("finite-difference verification exceeded the tolerance");
                }
                bytes
            } else {
                let gamma = gamma.as_ref().ok_or_else(|| Error::Usage("--gamma is required without --verify".into()))?;
                commands::faa_di_bruno_terms(gamma, n.unwrap_or(gamma.len()), *m)?
            }
        }
        Command::Report { space } => commands::report(&ctx(space, "band-limited:10")?)?,
    };
    match cli.out.as_ref().or(cfg.output_path.as_ref()) {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    match failed {
        Some(msg) => Err(Error::Numerical(msg.into())),
        None => Ok(()),
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Configuration(_) => "configuration",
        Error::Usage(_) => "usage",
        Error::Precondition(_) => "precondition",
        Error::MissingDerivative(_) => "missing_derivative",
        Error::Io(_) => "io",
        Error::Format(_) => "format",
        Error::Numerical(_) => "numerical",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let status = if e.is_refusal() { "refused" } else { "error" };
            let line = serde_json::json!({ "status": status, "kind": kind(&e), "reason": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(if e.is_refusal() { 2 } else { 1 })
        }
    }
}
