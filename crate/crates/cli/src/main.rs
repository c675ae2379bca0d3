use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sqg_cli::{CliError, RunConfig, TraceOptions};
use sqg_core::geometry::{DEFAULT_GRAD_XI_THRESHOLD, DEFAULT_REGION_FRACTION};
use sqg_core::interp::Interpolation;

#[derive(Parser)]
#[command(name = "sqg", version, about = "Surface quasi-geostrophic solver and level-set diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a run described by a config file
    Simulate { config: PathBuf },
    /// Region masks, contours and geometry fields for one snapshot
    Diagnose {
        snapshot: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REGION_FRACTION)]
        fraction: f64,
        #[arg(long, default_value_t = DEFAULT_GRAD_XI_THRESHOLD)]
        threshold: f64,
    },
    /// Track a level-set segment through the stored snapshots
    Trace {
        dir: PathBuf,
        #[arg(long)]
        seed_time: f64,
        #[arg(long, default_value_t = 1.0)]
        seed_length: f64,
        #[arg(long)]
        until: Option<f64>,
        /// write results here instead of the run directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// evaluate fields by direct Fourier sums instead of refined bicubic interpolation
        #[arg(long)]
        fourier: bool,
    },
    /// Replay the growth-bound machinery on the stored series
    Verify {
        dir: PathBuf,
        #[arg(long)]
        r: Option<f64>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SQG_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SQG_THREADS = '{v}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn partition_r_from(dir: &std::path::Path) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join(sqg_cli::CONFIG_COPY)).ok()?;
    RunConfig::parse(&text).ok()?.partition_r
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Simulate { config } => {
            let cfg = RunConfig::load(&config)?;
            let s = sqg_cli::simulate(&cfg)?;
            println!(
                "wrote {} snapshots after {} steps to {} (final omega {:.6e})",
                s.snapshots,
                s.steps,
                s.out_dir.display(),
                s.final_omega
            );
        }
        Command::Diagnose { snapshot, fraction, threshold } => {
            let d = sqg_cli::diagnose(&snapshot, fraction, threshold)?;
            println!("{}", d.stats_line);
            println!("outputs in {}", d.out_dir.display());
        }
        Command::Trace { dir, seed_time, seed_length, until, out, fourier } => {
            let scheme = if fourier { Interpolation::Fourier } else { Interpolation::default() };
            let opts = TraceOptions { seed_time, seed_length, until, out, scheme };
            let s = sqg_cli::trace(&dir, &opts)?;
            for e in &s.events {
                eprintln!("{e}");
            }
            println!(
                "{} samples written to {}; max s_beta deviation {:.3e}, cauchy {:.3e}, |det-1| {:.3e}",
                s.samples,
                s.out_dir.display(),
                s.s_beta_max_dev,
                s.cauchy_max_rel,
                s.det_max_err
            );
        }
        Command::Verify { dir, r } => {
            let r = r.or_else(|| partition_r_from(&dir));
            let v = sqg_cli::verify(&dir, r)?;
            print!("{}", v.report);
            v.into_result()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
