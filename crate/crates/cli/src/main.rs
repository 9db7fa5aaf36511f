use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scma_d2d_core::experiments::{self, default_sweep_values_dbm, ExperimentKind, ExperimentSpec};
use scma_d2d_core::{load_config_file, ConfigFile, Error};

/// Monte-Carlo experiments for SCMA uplink cells shared with D2D pairs.
#[derive(Parser)]
#[command(name = "scma-d2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration powers and sum rate of the iterative allocation.
    Convergence(Common),
    /// Sweep the cellular power cap P_0.
    SweepCell(Common),
    /// Sweep the D2D power cap P'_0.
    SweepD2d(Common),
    /// Eigenvalue and capacity bounds against exact values for random codebooks.
    Bounds(Common),
    /// Proposed allocation against the random baseline at the configured caps.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file; keys left out take the default scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds, starting at the scenario seed.
    #[arg(long, default_value_t = 50)]
    seeds: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum allocation iterations.
    #[arg(long, default_value_t = 10)]
    tmax: usize,
    /// Override the number of D2D pairs.
    #[arg(long)]
    jd: Option<usize>,
    /// Also write the barrier solver trace (needs --out).
    #[arg(long)]
    trace: bool,
}

enum Failure {
    Config(Error),
    Run(Error),
    InfeasibleOnly,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigParse { .. } | Error::ConfigRange { .. } | Error::InvalidArgument(_) => Failure::Config(e),
            other => Failure::Run(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::InfeasibleOnly) => {
            eprintln!("error: every channel draw was infeasible");
            ExitCode::from(3)
        }
    }
}

fn build_spec(kind: ExperimentKind, c: &Common) -> Result<ExperimentSpec, Failure> {
    let file = match &c.config {
        Some(path) => load_config_file(path).map_err(|e| match e {
            Error::Io(io) => Failure::Config(Error::InvalidArgument(format!("cannot read {}: {io}", path.display()))),
            other => Failure::from(other),
        })?,
        None => ConfigFile::default(),
    };
    let mut scenario = file.scenario;
    if let Some(jd) = c.jd {
        scenario.d2d_pairs = jd;
    }
    let spec = ExperimentSpec {
        kind,
        scenario,
        sweep_values_dbm: file.sweep_values_dbm.unwrap_or_else(default_sweep_values_dbm),
        num_seeds: c.seeds,
        t_max: c.tmax,
        solver_trace: c.trace,
    };
    spec.validate()?;
    if c.trace && c.out.is_none() {
        return Err(Failure::Config(Error::InvalidArgument("--trace writes a second file and needs --out".into())));
    }
    Ok(spec)
}

/// `<dir>/<stem>_<suffix>.csv` next to the main output.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn open(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Convergence(c) => {
            let spec = build_spec(ExperimentKind::Convergence, &c)?;
            let result = experiments::run_convergence(&spec)?;
            result.write_csv(open(&c.out)?)?;
            if let (true, Some(out)) = (c.trace, &c.out) {
                result.write_solver_trace_csv(File::create(sibling(out, "solver_trace"))?)?;
            }
            let infeasible = result.infeasible_count();
            let converged = result.runs.iter().filter_map(|r| r.outcome.trace()).filter(|t| t.converged).count();
            eprintln!("{} seeds, {infeasible} infeasible, {converged} converged within {} iterations", spec.num_seeds, spec.t_max);
            if infeasible == result.runs.len() {
                return Err(Failure::InfeasibleOnly);
            }
        }
        Command::SweepCell(c) => sweep(ExperimentKind::SweepCellularCap, &c)?,
        Command::SweepD2d(c) => sweep(ExperimentKind::SweepD2dCap, &c)?,
        Command::Bounds(c) => {
            let spec = build_spec(ExperimentKind::BoundValidation, &c)?;
            let result = experiments::run_bound_validation(&spec)?;
            result.write_csv(open(&c.out)?)?;
            if let Some(out) = &c.out {
                result.write_capacity_csv(File::create(sibling(out, "capacity"))?)?;
            }
            eprintln!(
                "{} draws, {} eigenvalue violations, {} capacity violations",
                spec.num_seeds,
                result.eigen_violations(),
                result.capacity_violations()
            );
        }
        Command::Compare(c) => {
            let spec = build_spec(ExperimentKind::BaselineComparison, &c)?;
            let result = experiments::run_comparison(&spec)?;
            result.write_csv(open(&c.out)?)?;
            let scale = spec.scenario.rate_scale();
            eprintln!(
                "mean proposed {:.4}, mean random {:.4}, {} infeasible of {}",
                result.mean_proposed() * scale,
                result.mean_random() * scale,
                result.infeasible_count(),
                spec.num_seeds
            );
            if result.infeasible_count() == result.rows.len() {
                return Err(Failure::InfeasibleOnly);
            }
        }
    }
    Ok(())
}

fn sweep(kind: ExperimentKind, c: &Common) -> Result<(), Failure> {
    let spec = build_spec(kind, c)?;
    let result = experiments::run_sweep(&spec)?;
    result.write_summary_csv(open(&c.out)?)?;
    if let Some(out) = &c.out {
        result.write_points_csv(File::create(sibling(out, "seeds"))?)?;
    }
    let scale = spec.scenario.rate_scale();
    for r in &result.rows {
        eprintln!(
            "{:>6.1} dBm: proposed {:.4}, random {:.4}, {} infeasible",
            r.sweep_value_dbm,
            r.mean_sum_rate_proposed * scale,
            r.mean_sum_rate_random * scale,
            r.num_infeasible_draws
        );
    }
    if result.points.iter().all(|p| p.proposed.is_none()) {
        return Err(Failure::InfeasibleOnly);
    }
    Ok(())
}
