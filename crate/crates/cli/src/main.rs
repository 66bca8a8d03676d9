use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nfl_cli::{
    cmd_attack, cmd_curve, cmd_simulate, cmd_verify, format_check, load_config, resolve_out, CliError, CliResult,
};

/// Bayesian privacy / utility trade-off experiments for federated learning.
#[derive(Parser)]
#[command(name = "tradeoff", version)]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the federation sweep and write releases, traces and reports.
    Simulate(RunArgs),
    /// Run the attack suite against a recorded run directory.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Run directory written by `simulate` or `curve`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check every bound on a run directory; exit 3 if any gated check fails.
    Verify {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Like `simulate`, plus curve.csv and the per-budget choice.
    Curve(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; defaults to `<root>/<config stem>-<seed>`, with the root
    /// from `output_dir`, `TRADEOFF_OUT_ROOT`, or `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = load_config(&a.config, a.seed)?;
            let dir = resolve_out(a.out.as_deref(), &a.config, &cfg);
            let out = cmd_simulate(&cfg, &dir, cli.jobs)?;
            for r in &out.reports {
                println!(
                    "{} {}={} view={} eps_p={:.6} eps_u={:.6} C1={:.6} xi={:.4}",
                    r.mechanism_id, r.param_name, r.param_value, r.view, r.eps_p, r.eps_u, r.c1, r.xi
                );
            }
            println!("{}", out.dir.display());
        }
        Command::Curve(a) => {
            let cfg = load_config(&a.config, a.seed)?;
            let dir = resolve_out(a.out.as_deref(), &a.config, &cfg);
            let out = cmd_curve(&cfg, &dir, cli.jobs)?;
            println!("{}", out.dir.join("curve.csv").display());
        }
        Command::Attack { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            println!("{}", cmd_attack(&cfg, &out, cli.jobs)?.display());
        }
        Command::Verify { out } => {
            let verdict = cmd_verify(&out)?;
            for c in &verdict.checks {
                println!("{}", format_check(c));
            }
            if !verdict.pass {
                return Err(CliError::Verification { failed: verdict.failed });
            }
            println!("verdict: pass ({} checks)", verdict.checks.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
