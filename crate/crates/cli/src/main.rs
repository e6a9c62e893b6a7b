use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use openhier_cli::config::parse_method;
use openhier_cli::runner::{run_sweep, run_task, write_summary, Summary};
use openhier_cli::{parse_config, CliError, CliResult, RunConfig, Task};
use serde_json::json;

#[derive(Parser)]
#[command(name = "openhier", version, about = "Hierarchy solvers for open quantum systems")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// First trajectory seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "OPENHIER_THREADS")]
    threads: Option<usize>,
    /// Integrator (overrides the configuration).
    #[arg(long, global = true, value_parser = ["rk4", "rkf45"])]
    method: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Bosonic stochastic hierarchy of pure states.
    Hops,
    /// Bosonic density-operator hierarchy.
    MasterBoson,
    /// Fermionic density-operator hierarchy.
    MasterFermion,
    /// Exact propagation with a discrete bath.
    Oracle,
    /// Thermal correlation function expansion vs quadrature.
    Bcf,
    /// Grassmann sign and Novikov identities.
    Verify,
    /// Convergence sweep described in the configuration.
    Sweep,
}

impl Verb {
    fn task(self) -> Option<Task> {
        Some(match self {
            Verb::Hops => Task::Hops,
            Verb::MasterBoson => Task::MasterBoson,
            Verb::MasterFermion => Task::MasterFermion,
            Verb::Oracle => Task::Oracle,
            Verb::Bcf => Task::Bcf,
            Verb::Verify => Task::Verify,
            Verb::Sweep => return None,
        })
    }

    fn name(self) -> &'static str {
        self.task().map_or("sweep", Task::name)
    }
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
        None if matches!(cli.verb, Verb::Verify) => parse_config("")?,
        None => return Err(CliError::Schema("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.settings.seed = s;
    }
    if let Some(m) = &cli.method {
        cfg.settings.options.method = parse_method(m)?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<Summary> {
    let cfg = load(cli)?;
    match cli.verb.task() {
        Some(task) => run_task(task, &cfg, &cli.out).map(|(s, _)| s),
        None => run_sweep(&cfg, &cli.out),
    }
}

fn finish(out: &Path, verb: &str, result: CliResult<Summary>, start: Instant, threads: usize) -> ExitCode {
    let wall = start.elapsed().as_secs_f64();
    let (status, mut body, err) = match result {
        Ok(s) => ("ok", s, None),
        Err(e) => ("error", Summary::new(), Some(e)),
    };
    body.insert("wall_clock_s".into(), json!(wall));
    body.insert("threads".into(), json!(threads));
    if let Err(e) = write_summary(out, status, verb, body, err.as_ref()) {
        eprintln!("openhier: cannot write summary: {e}");
    }
    match err {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("openhier: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let err = CliError::Schema(format!("cannot start {:?} worker threads: {e}", cli.threads));
            return finish(&cli.out, cli.verb.name(), Err(err), start, 0);
        }
    };
    let result = pool.install(|| execute(&cli));
    finish(&cli.out, cli.verb.name(), result, start, pool.current_num_threads())
}
