use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forge_core::config::RunConfig;
use forge_core::pipeline::{cmd_build, cmd_schedule, cmd_verify, parse_checks};
use forge_core::schedule::Mode;
use forge_core::sequence::{load_sequence, mobius, verify_aperiodic};
use forge_core::{ForgeError, Result};

#[derive(Parser)]
#[command(name = "forge", version, about = "Build and check hierarchical block families")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's mode: desk or faithful.
    #[arg(long)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Set up and validate the parameter schedule.
    Schedule {
        #[command(flatten)]
        run: RunArgs,
        /// Also write schedule.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the levels into a run directory, resuming if it has some.
    Build {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this level.
        #[arg(long)]
        levels: Option<u32>,
    },
    /// Re-check a run directory; exits 4 when a gating check fails.
    Verify {
        #[arg(long)]
        out: PathBuf,
        /// Refuse the directory unless it was built from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Comma-separated: schedule, reverify, nesting, gamma, entropy, spread, uncorrelation.
        #[arg(long, default_value = "all")]
        checks: String,
        /// Print only failing checks.
        #[arg(long)]
        quiet: bool,
    },
    /// Test sequences.
    #[command(subcommand)]
    Seq(SeqCommand),
}

#[derive(Subcommand)]
enum SeqCommand {
    /// Print mu(1), ..., mu(n), one per line.
    Mobius {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Averages along arithmetic progressions `t i + l`.
    Verify {
        #[arg(long, default_value_t = 10)]
        t_max: usize,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        /// Sequence file; the Mobius sequence of length --n otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
    },
}

fn load_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = run.mode {
        cfg.mode = mode;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn verify(out: &Path, expected: Option<RunConfig>, checks: &str, quiet: bool) -> Result<()> {
    let selected = parse_checks(checks)?;
    let report = cmd_verify(out, &selected, expected.as_ref())?;
    for c in &report.checks {
        if quiet && !c.gate_failed() {
            continue;
        }
        let tag = match (c.holds, c.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "info",
        };
        println!(
            "{tag} {} {} measured={} bound={}",
            c.check,
            serde_json::to_string(&c.params)?,
            c.measured,
            c.bound
        );
    }
    let failed = report.failures().count();
    println!(
        "{} gating checks failed out of {}; report in {}",
        failed,
        report.checks.iter().filter(|c| c.gating).count(),
        out.join("verify.json").display()
    );
    if report.passed {
        Ok(())
    } else {
        Err(ForgeError::Verification(format!("{failed} gating checks failed")))
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ForgeError::InvalidArgument(e.to_string()))?;
    }
    match cli.command {
        Command::Schedule { run, out } => {
            let cfg = load_config(&run)?;
            let record = cmd_schedule(&cfg, out.as_deref())?;
            print_json(&record)
        }
        Command::Build { run, out, levels } => {
            let cfg = load_config(&run)?;
            let summary = cmd_build(&cfg, &out, levels)?;
            print_json(&summary)
        }
        Command::Verify {
            out,
            config,
            seed,
            mode,
            checks,
            quiet,
        } => {
            let expected = config
                .map(|c| load_config(&RunArgs { config: c, seed, mode }))
                .transpose()?;
            verify(&out, expected, &checks, quiet)
        }
        Command::Seq(SeqCommand::Mobius { n, output }) => {
            let text = mobius(n)?.to_text();
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| ForgeError::Io { path, source: e }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Seq(SeqCommand::Verify { t_max, tol, input, n }) => {
            let y = match (input, n) {
                (Some(path), _) => load_sequence(path)?,
                (None, Some(n)) => mobius(n)?,
                (None, None) => return Err(ForgeError::InvalidArgument("give --input or --n".into())),
            };
            let report = verify_aperiodic(&y, t_max, tol)?;
            print_json(&report)?;
            match report.flagged().count() {
                0 => Ok(()),
                k => Err(ForgeError::Verification(format!(
                    "{k} progressions exceed the tolerance"
                ))),
            }
        }
    }
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
