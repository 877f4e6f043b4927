use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use percolab_cli::config::{ExperimentConfig, FitSpec};
use percolab_cli::record::{append, default_out, read_glob};
use percolab_cli::{fit, oracle_suite, pc_estimate, run, CliError, SuiteOptions};

#[derive(Parser)]
#[command(name = "percolab", version, about = "Bond percolation experiments on Z^d")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator named in a config over its grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// JSONL file to append to.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact identity audits and estimator-vs-exact cross-checks.
    OracleSuite {
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Run with no fixtures at all.
        #[arg(long)]
        empty_catalog: bool,
        /// Replace the sampler's unit constant (fault injection).
        #[arg(long, hide = true)]
        corrupt_sampler: Option<f64>,
    },
    /// Fit stored records and append the fit as a record.
    Fit {
        /// Glob of JSONL result files.
        records: String,
        /// Fit spec (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the points used as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Bisect for p_c with the drift statistic.
    PcEstimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(config: &Path, workers: Option<usize>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, workers, seed } => {
            let cfg = load(&config, workers, seed)?;
            let path = default_out(out.as_deref(), &cfg.experiment_id);
            let result = run(&cfg)?;
            append(&path, &result.records)?;
            for r in &result.records {
                match &r.error {
                    Some(e) => eprintln!("{} {}: {}", r.estimand, r.inputs["cell"], e.message),
                    None => eprintln!("{} {}: done in {:.2}s", r.estimand, r.inputs["cell"], r.wall_time_s),
                }
            }
            eprintln!("appended {} records to {}", result.records.len(), path.display());
            result.failure.map_or(Ok(()), Err)
        }
        Command::PcEstimate { config, out, workers, seed } => {
            let cfg = load(&config, workers, seed)?;
            let path = default_out(out.as_deref(), &cfg.experiment_id);
            let rec = pc_estimate(&cfg)?;
            append(&path, std::slice::from_ref(&rec))?;
            println!("{}", rec.payload["pc"]);
            Ok(())
        }
        Command::Fit { records, config, out, csv } => {
            let spec = FitSpec::load(&config)?;
            let found: Vec<_> = read_glob(&records)?.into_iter().map(|(_, r)| r).collect();
            let result = fit(&found, &spec)?;
            let path = default_out(out.as_deref(), "fits");
            append(&path, std::slice::from_ref(&result.record))?;
            if csv {
                print!("{}", result.csv);
            } else {
                println!("{}", serde_json::to_string_pretty(&result.record.payload).expect("values serialize"));
            }
            Ok(())
        }
        Command::OracleSuite {
            out,
            workers,
            seed,
            trials,
            empty_catalog,
            corrupt_sampler,
        } => {
            let mut opts = SuiteOptions {
                trials,
                empty_catalog,
                corrupt_sampler,
                workers: workers.unwrap_or(0),
                ..SuiteOptions::default()
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            let report = oracle_suite(&opts)?;
            for c in &report.identities {
                println!("{} {}/{}: {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
            }
            for c in &report.estimators {
                println!(
                    "{} estimator/{}: {:.6} vs exact {:.6} (z = {:.2})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.estimate.mean,
                    c.exact,
                    c.z
                );
            }
            if report.vacuous {
                println!("VACUOUS: the catalog is empty, nothing was checked");
            }
            println!("{} checks, {} passed, {} failed", report.total, report.passed, report.failed);
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&report).expect("reports serialize");
                std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            }
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::OracleFailure(format!("{} of {} checks failed", report.failed, report.total)))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("percolab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
