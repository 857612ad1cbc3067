use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svbounds::harness::{
    csv_bytes, emit_csv, run_experiment, selftest, verify_pass_counts, write_figure_data, ExperimentConfig,
    ExperimentReport,
};
use svbounds::Error;

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Extract leading singular values from approximate subspaces and check
/// them against perturbation bounds.
#[derive(Parser)]
#[command(name = "svbounds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one CSV row per (trial, method, index).
    Run(RunArgs),
    /// Run the built-in invariant checks.
    Selftest,
    /// Write the plotting datasets fig1..fig5 (n = m = 400, r = 50).
    Figdata {
        /// Output directory.
        #[arg(long, default_value = "figdata")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Settings are applied as defaults, then `--config`, then flags.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value file; keys are the flag names below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rows of A [default: 400]
    #[arg(long)]
    m: Option<String>,
    /// Columns of A [default: 400]
    #[arg(long)]
    n: Option<String>,
    /// Number of singular values to extract [default: 50]
    #[arg(long)]
    r: Option<String>,
    /// Oversampling of the left subspace [default: 0]
    #[arg(long)]
    ell: Option<String>,
    /// Singular value decay: exponential or algebraic [default: exponential]
    #[arg(long)]
    decay: Option<String>,
    /// Products with A per side when sketching [default: 1]
    #[arg(long)]
    q: Option<String>,
    /// Base seed; trial t uses seed + t [default: 0]
    #[arg(long)]
    seed: Option<String>,
    /// Number of independent trials [default: 1]
    #[arg(long)]
    trials: Option<String>,
    /// Comma-separated subset of RR,SVD,GN,HMT [default: all]
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated subset of weyl,forward,backward,backward_approx,improved [default: all]
    #[arg(long)]
    bounds: Option<String>,
    /// Subspace source: sketched, exact or random [default: sketched]
    #[arg(long)]
    subspaces: Option<String>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_kv_file(path)?;
        }
        let flags = [
            ("m", &self.m),
            ("n", &self.n),
            ("r", &self.r),
            ("ell", &self.ell),
            ("decay", &self.decay),
            ("q", &self.q),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("methods", &self.methods),
            ("bounds", &self.bounds),
            ("subspaces", &self.subspaces),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize(rep: &ExperimentReport) {
    let wall: f64 = rep.trials.iter().map(|t| t.wall_time.as_secs_f64()).sum();
    eprintln!("{}", rep.config);
    eprintln!(
        "trials: {} ({} failed), rows: {}, trial time: {wall:.2}s",
        rep.trials.len(),
        rep.failed_trials(),
        rep.rows.len()
    );
    for t in rep.trials.iter().filter(|t| t.failure.is_some()) {
        eprintln!("trial {} failed: {}", t.trial, t.failure.as_deref().unwrap_or(""));
    }
    eprintln!("access counts match: {}", verify_pass_counts(rep));
    for v in &rep.violations {
        eprintln!(
            "VIOLATION trial {} {} i={} {}: error {:e} > bound {:e}",
            v.trial, v.method, v.i, v.bound, v.error, v.value
        );
    }
    if !rep.heuristic_misses.is_empty() {
        eprintln!("heuristic bound exceeded on {} indices", rep.heuristic_misses.len());
    }
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(EXIT_CONFIG)
}

fn run(args: &RunArgs) -> ExitCode {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let rep = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    let written = match &args.out {
        Some(path) => emit_csv(&rep, path),
        None => std::io::stdout()
            .write_all(&csv_bytes(&rep))
            .map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    };
    if let Err(e) = written {
        return exit_for(&e);
    }
    summarize(&rep);
    if rep.is_sound() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Selftest => {
            let checks = selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            }
        }
        Command::Figdata { out, seed } => match write_figure_data(&out, seed) {
            Ok(outputs) => {
                let mut sound = true;
                for (path, rep) in &outputs {
                    println!("{} ({} rows, {} violations)", path.display(), rep.rows.len(), rep.violations.len());
                    sound &= rep.is_sound();
                }
                if sound {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_VIOLATION)
                }
            }
            Err(e) => exit_for(&e),
        },
    }
}
