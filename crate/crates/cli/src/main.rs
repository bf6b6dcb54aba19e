use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use opdlab::experiment::{apply_options, run_experiment, RunOptions};
use opdlab::{checks, plots, summary, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "opdlab", version, about = "Run and inspect on-policy distillation experiments")]
struct Cli {
    /// Run a single seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true, env = "OPDLAB_OUT")]
    out: Option<PathBuf>,
    /// Arms to run concurrently.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Largest response space enumerated exactly; above it metrics are sampled.
    #[arg(long, global = true)]
    enum_cap: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm of an experiment config.
    Run { config: PathBuf },
    /// Regenerate plots for a finished run.
    Plot { run_dir: PathBuf },
    /// Aggregate one or more runs of the same experiment.
    Summarize {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
    /// Check core invariants on small random instances.
    Verify,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config).map_err(|e| HarnessError::Io {
                path: config.clone(),
                source: e,
            })?;
            let parsed = RunConfig::parse(&text, &config.display().to_string())?;
            let options = RunOptions {
                out_root: cli.out,
                seeds: cli.seed.map(|s| vec![s]),
                jobs: cli.jobs,
                enum_cap: cli.enum_cap,
            };
            let parsed = apply_options(parsed, &options);
            let report = run_experiment(&parsed, &text)?;
            println!("run directory: {}", report.run_dir.display());
            if !report.records.is_empty() {
                let s = summary::summarize(std::slice::from_ref(&report.run_dir))?;
                s.write(&report.run_dir.join("summary.json"))?;
                print!("{}", s.to_table());
                for p in plots::emit_plots(&report.run_dir)? {
                    println!("wrote {}", p.display());
                }
            }
            if !report.ok() {
                for f in &report.failures {
                    eprintln!("error: {f}");
                }
                return Err(HarnessError::Runtime(format!("{} arm(s) failed", report.failures.len())));
            }
        }
        Command::Plot { run_dir } => {
            for p in plots::emit_plots(&run_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Summarize { run_dirs } => {
            let s = summary::summarize(&run_dirs)?;
            if let [single] = run_dirs.as_slice() {
                s.write(&single.join("summary.json"))?;
            }
            print!("{}", s.to_table());
        }
        Command::Verify => {
            let results = checks::run_checks()?;
            for c in &results {
                println!("{c}");
            }
            if results.iter().any(|c| !c.pass) {
                return Err(HarnessError::Runtime("invariant checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
