//! Command-line entry point for the three-cavity transfer simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cavity_array::cli::{reproduce, run, FigureId, ScenarioConfig, ScenarioKind};
use cavity_array::error::SimError;
use cavity_array::fock::InitialState;
use cavity_array::model::Variant;

#[derive(Parser)]
#[command(
    name = "cavity-array",
    version,
    about = "Photon transfer in a three-cavity array with a central two-level system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Declarative config file (JSON); flags override its fields.
    /// A run manifest is accepted: its embedded config is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cavity-qubit coupling g (units of omega).
    #[arg(long)]
    g: Option<f64>,
    /// Hopping amplitude J1.
    #[arg(long)]
    j1: Option<f64>,
    /// Hopping amplitude J2.
    #[arg(long)]
    j2: Option<f64>,
    /// Homogeneous hopping: sets J1 = J2 = J.
    #[arg(long, conflicts_with_all = ["j1", "j2"])]
    j: Option<f64>,
    /// Qubit frequency omega_q (units of omega).
    #[arg(long)]
    wq: Option<f64>,
    /// Photon cutoff per cavity.
    #[arg(long, conflicts_with = "auto_nmax")]
    nmax: Option<usize>,
    /// Determine the cutoff by convergence.
    #[arg(long)]
    auto_nmax: bool,
    /// Trotter step (units of 1/omega).
    #[arg(long)]
    dt: Option<f64>,
    /// Sampling interval (integer multiple of dt).
    #[arg(long)]
    dt_sample: Option<f64>,
    /// Time horizon.
    #[arg(long)]
    t_end: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Model variant: full | rwa | qubit-rwa | degenerate.
    #[arg(long)]
    variant: Option<String>,
    /// Initial state: single-photon | coherent | superposition.
    #[arg(long)]
    initial: Option<String>,
    /// Coherent-state amplitude (with --initial coherent).
    #[arg(long)]
    alpha: Option<f64>,
    /// Vacuum weight p (with --initial superposition).
    #[arg(long)]
    p: Option<f64>,
    /// Relative phase theta (with --initial superposition).
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepGArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    g_min: Option<f64>,
    #[arg(long)]
    g_max: Option<f64>,
    /// Grid step in g.
    #[arg(long)]
    step: Option<f64>,
    /// Horizon after which a point is censored.
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepJ2Args {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    j2_min: Option<f64>,
    #[arg(long)]
    j2_max: Option<f64>,
    #[arg(long)]
    j2_step: Option<f64>,
    /// Cross-check the closed form with a numerical evolution.
    #[arg(long)]
    numeric: bool,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// Figure id: fig2a fig2b fig3a fig3b fig4 fig5 s1 s2 s3.
    figure: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single transfer trajectory (photon numbers + monitors).
    Transfer(CommonArgs),
    /// Inversion time T_inv versus the cavity-qubit coupling g.
    SweepG(SweepGArgs),
    /// Transfer amplitude versus the second hopping J2.
    SweepJ2(SweepJ2Args),
    /// Trajectory plus box-counting fractal analysis of N1(t).
    Boxcount(CommonArgs),
    /// Trajectory with rightmost-cavity transfer fidelity.
    Fidelity(CommonArgs),
    /// Degenerate-qubit effective model vs cos(sqrt(2) J t).
    Degenerate(CommonArgs),
    /// Re-run a figure preset and emit data plus a comparison report.
    Reproduce(ReproduceArgs),
}

fn parse_variant(s: &str) -> Result<Variant, SimError> {
    Ok(match s {
        "full" => Variant::Full,
        "rwa" => Variant::FullRwa,
        "qubit-rwa" => Variant::QubitRwa,
        "degenerate" => Variant::DegenerateEffective,
        other => {
            return Err(SimError::Config(format!(
                "unknown variant '{other}' (expected full, rwa, qubit-rwa, degenerate)"
            )))
        }
    })
}

fn build_config(kind: ScenarioKind, args: &CommonArgs) -> Result<ScenarioConfig, SimError> {
    let mut config = match &args.config {
        Some(path) => {
            let file = ScenarioConfig::from_file(path)?;
            if file.scenario != kind {
                return Err(SimError::Config(format!(
                    "config file declares scenario {:?} but the subcommand is {:?}",
                    file.scenario, kind
                )));
            }
            file
        }
        None => ScenarioConfig::new(kind),
    };
    if let Some(g) = args.g {
        config.params.g = g;
    }
    if let Some(j) = args.j {
        config.params.j1 = j;
        config.params.j2 = j;
    }
    if let Some(j1) = args.j1 {
        config.params.j1 = j1;
    }
    if let Some(j2) = args.j2 {
        config.params.j2 = j2;
    }
    if let Some(wq) = args.wq {
        config.params.omega_q = wq;
    }
    if let Some(v) = &args.variant {
        config.params.variant = parse_variant(v)?;
    }
    if let Some(n) = args.nmax {
        config.numerics.n_max = Some(n);
    }
    if args.auto_nmax {
        config.numerics.auto_nmax = true;
        config.numerics.n_max = None;
    }
    if let Some(dt) = args.dt {
        config.numerics.dt = dt;
    }
    if let Some(ds) = args.dt_sample {
        config.numerics.dt_sample = ds;
    }
    if let Some(te) = args.t_end {
        config.numerics.t_end = Some(te);
    }
    if let Some(init) = &args.initial {
        config.initial = match init.as_str() {
            "single-photon" => InitialState::SinglePhoton,
            "coherent" => InitialState::Coherent {
                alpha: args.alpha.unwrap_or(1.0),
            },
            "superposition" => InitialState::Superposition {
                p: args.p.unwrap_or(0.2),
                theta: args.theta.unwrap_or(0.0),
            },
            other => {
                return Err(SimError::Config(format!(
                    "unknown initial state '{other}' (expected single-photon, coherent, superposition)"
                )))
            }
        };
    }
    Ok(config)
}

fn configure_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn execute() -> Result<(), SimError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Transfer(args) => {
            configure_workers(args.workers);
            let config = build_config(ScenarioKind::Transfer, &args)?;
            report(run(&config, &args.out)?)
        }
        Command::Boxcount(args) => {
            configure_workers(args.workers);
            let config = build_config(ScenarioKind::Boxcount, &args)?;
            report(run(&config, &args.out)?)
        }
        Command::Fidelity(args) => {
            configure_workers(args.workers);
            let config = build_config(ScenarioKind::Fidelity, &args)?;
            report(run(&config, &args.out)?)
        }
        Command::Degenerate(args) => {
            configure_workers(args.workers);
            let config = build_config(ScenarioKind::Degenerate, &args)?;
            report(run(&config, &args.out)?)
        }
        Command::SweepG(args) => {
            configure_workers(args.common.workers);
            let mut config = build_config(ScenarioKind::SweepG, &args.common)?;
            if let Some(v) = args.g_min {
                config.sweep.g_min = v;
            }
            if let Some(v) = args.g_max {
                config.sweep.g_max = v;
            }
            if let Some(v) = args.step {
                config.sweep.step = v;
            }
            if let Some(v) = args.t_max {
                config.sweep.t_max = v;
            }
            // Scans default to the coarser validated step unless overridden.
            if args.common.dt.is_none() {
                config.numerics.dt = 0.05;
            }
            report(run(&config, &args.common.out)?)
        }
        Command::SweepJ2(args) => {
            configure_workers(args.common.workers);
            let mut config = build_config(ScenarioKind::SweepJ2, &args.common)?;
            if let Some(v) = args.j2_min {
                config.sweep.j2_min = v;
            }
            if let Some(v) = args.j2_max {
                config.sweep.j2_max = v;
            }
            if let Some(v) = args.j2_step {
                config.sweep.j2_step = v;
            }
            config.sweep.numeric = args.numeric;
            report(run(&config, &args.common.out)?)
        }
        Command::Reproduce(args) => {
            configure_workers(args.workers);
            let figure: FigureId = args.figure.parse()?;
            report(reproduce(figure, &args.out)?)
        }
    }
}

fn report(artifacts: cavity_array::cli::RunArtifacts) -> Result<(), SimError> {
    for f in &artifacts.files {
        println!("wrote {}", f.display());
    }
    if let Some(obj) = artifacts.diagnostics.as_object() {
        for (k, v) in obj {
            println!("{k}: {v}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
