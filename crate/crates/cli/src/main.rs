use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lie_sac::harness::{
    measure_compute, monte_carlo, run_scenario, write_history, write_log, write_report, ScenarioConfig, StoConfig,
};
use lie_sac::sto::optimize_times;
use lie_sac::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "lie-sac", version, about = "Sequential action control on matrix Lie groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop run from the scenario's initial state; writes the trajectory CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Seeded trials over the scenario's sampling ranges. Writes the summary
    /// to `--out` and the per-trial table next to it with a `_trials` suffix.
    Montecarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Switching-time optimization; writes the iteration history CSV.
    Sto {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-step controller timing.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
    },
}

enum Failure {
    Config(String),
    Divergence(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::Json(_) => Failure::Config(e.to_string()),
            Error::Divergence { .. } => Failure::Divergence(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<lie_sac::harness::Scenario, Failure> {
    let cfg = ScenarioConfig::from_file(path).map_err(|e| match e {
        Error::Io(io) => Failure::Config(format!("{}: {io}", path.display())),
        e => e.into(),
    })?;
    Ok(cfg.build()?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn trials_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}_trials{ext}"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let mut sc = load(&scenario)?;
            if let Some(seed) = seed {
                sc.config.seed = seed;
            }
            let (log, res) = run_scenario(&sc)?;
            write_log(create(&out)?, &sc, &log)?;
            println!("{}", serde_json::to_string(&res).map_err(Error::from)?);
            if res.diverged {
                return Err(Failure::Divergence(format!("trajectory diverged; log written to {}", out.display())));
            }
        }
        Command::Montecarlo { scenario, trials, seed, out } => {
            let sc = load(&scenario)?;
            let report = monte_carlo(&sc, trials, seed)?;
            write_report(&report, create(&out)?, create(&trials_path(&out))?)?;
            println!("{} / {} trials succeeded", report.successes(), report.trials.len());
        }
        Command::Sto { config, out } => {
            let cfg = StoConfig::from_file(&config).map_err(|e| match e {
                Error::Io(io) => Failure::Config(format!("{}: {io}", config.display())),
                e => e.into(),
            })?;
            let (sys, cost) = cfg.build()?;
            let (best, history) = optimize_times(&sys, &cost, &cfg.options)?;
            write_history(create(&out)?, &history)?;
            let last = history.last().expect("history holds the initial point");
            println!("cost {} -> {} times {:?}", history[0].cost, last.cost, best.times());
        }
        Command::Bench { scenario, steps, warmup } => {
            let sc = load(&scenario)?;
            let t = measure_compute(&sc, steps, warmup)?;
            println!(
                "steps {steps} median_ms {:.4} p95_ms {:.4} period_ms {:.1}",
                t.median_ms,
                t.p95_ms,
                1e3 / sc.config.sim.feedback_hz
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Divergence(m)) => {
            eprintln!("divergence: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
