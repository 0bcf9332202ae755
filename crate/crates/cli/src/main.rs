//! Command-line front end: `cfmimo <verb> --config <file> [--out <file>]`.
//!
//! Tables go to `--out` as CSV with a JSON mirror next to it (same stem,
//! `.json` extension), or to stdout as CSV. Failures are printed to stderr as
//! a single JSON object and the process exits with status 1 (2 for usage
//! errors).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfmimo::harness::{load_config, run_experiment, write_results, ExperimentKind, Format};
use cfmimo::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cfmimo", version, about = "Cell-free massive MIMO spectral-efficiency experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Compare closed-form and Monte Carlo SE per UE.
    Validate(Common),
    /// Run one of the sweep experiments named in the config.
    Sweep(Common),
    /// Power optimization.
    Optimize(Common),
    /// Per-term interference breakdown.
    Terms(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; a JSON mirror is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the system seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Monte Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn verb_accepts(verb: &Verb, kind: ExperimentKind) -> bool {
    use ExperimentKind::*;
    match verb {
        Verb::Validate(_) => kind == Validate,
        Verb::Sweep(_) => matches!(kind, SweepInstant | SweepTauc | SweepTaup | SweepAps | SweepAntennas | SweepPower),
        Verb::Optimize(_) => kind == Optimize,
        Verb::Terms(_) => kind == TermBreakdown,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = match &cli.verb {
        Verb::Validate(c) | Verb::Sweep(c) | Verb::Optimize(c) | Verb::Terms(c) => c,
    };
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Domain(format!("cannot configure thread pool: {e}")))?;
    }
    let mut cfg = load_config(&common.config)?;
    if !verb_accepts(&cli.verb, cfg.experiment.kind) {
        return Err(Error::Config {
            path: "experiment.kind".into(),
            message: format!("`{}` cannot be run by this verb", cfg.experiment.kind.name()),
        });
    }
    if let Some(s) = common.seed {
        cfg.system.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.experiment.trials = t;
    }
    let table = run_experiment(&cfg)?;
    match &common.out {
        Some(path) => {
            write_results(&table, path, Format::Csv)?;
            write_results(&table, &json_path(path), Format::Json)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            if let Err(e) = out.write_all(table.to_csv()?.as_bytes()).and_then(|_| out.flush()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn json_path(p: &Path) -> PathBuf {
    p.with_extension("json")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let body = serde_json::json!({ "error": { "kind": "usage", "message": e.to_string() } });
            eprintln!("{body}");
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut err = serde_json::json!({ "kind": e.kind(), "message": e.to_string() });
            if let Error::Config { path, .. } = &e {
                err["path"] = serde_json::Value::String(path.clone());
            }
            eprintln!("{}", serde_json::json!({ "error": err }));
            ExitCode::FAILURE
        }
    }
}
