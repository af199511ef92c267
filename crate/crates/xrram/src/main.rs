use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xrram::{commands, with_threads, CliError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "xrram", version, about = "XNOR-RRAM in-memory-computing macro simulator")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Program the model's tiles (or random macros) and write snapshots.
    Program,
    /// Calibrate the ADC references of every stored macro.
    Calibrate,
    /// Transfer curves for all header strengths and the level histogram.
    Characterize,
    /// Classify the dataset once.
    Infer,
    /// Accuracy statistics over the configured run seeds.
    Evaluate,
    /// Throughput, figures of merit and divider power.
    Perf,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let cmd = cli.command;
    with_threads(cfg.threads, || match cmd {
        Command::Program => {
            let r = commands::program(&cfg)?;
            println!("programmed {} macros, {:.4} of cells converged", r.macros.len(), r.converged_fraction);
            Ok(())
        }
        Command::Calibrate => {
            let c = commands::calibrate(&cfg)?;
            println!("calibrated {} macros ({})", c.len(), cfg.adc.scheme.name());
            Ok(())
        }
        Command::Characterize => {
            let c = commands::characterize(&cfg)?;
            println!("histogram from {} (bitcount, level) pairs", c.pairs);
            Ok(())
        }
        Command::Infer => {
            let (p, acc) = commands::infer(&cfg)?;
            println!("{} samples, accuracy {:.4}", p.len(), acc);
            Ok(())
        }
        Command::Evaluate => {
            let r = commands::evaluate(&cfg)?;
            println!(
                "{} over {} runs: mean {:.4}, p25 {:.4}, p75 {:.4}",
                r.mode.name(),
                r.seeds.len(),
                r.mean,
                r.p25,
                r.p75
            );
            Ok(())
        }
        Command::Perf => {
            let r = commands::perf(&cfg)?;
            println!(
                "{:.2} GOPS total, {:.2} GOPS/ADC, FoM1 {:.1}, FoM2 {:.1}",
                r.throughput_total, r.throughput_per_adc, r.fom1, r.fom2
            );
            Ok(())
        }
    })
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e))
        }
    }
}
