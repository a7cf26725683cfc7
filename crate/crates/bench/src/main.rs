use cdukf_bench::config::{parse_list, parse_variants, ScheduleSpec};
use cdukf_bench::{emit_csv, sweep_cells, ExperimentConfig};
use clap::Parser;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

/// Monte-Carlo sweep of the continuous-discrete UKF variants on the
/// coordinated-turn benchmark. Writes one CSV row per (variant, delta).
#[derive(Debug, Parser)]
#[command(name = "cdukf-bench", version)]
struct Cli {
    /// Comma-separated variant labels (1, 1a, …, 2c-SR) or `all`
    #[arg(long)]
    variants: Option<String>,
    /// Comma-separated, strictly decreasing measurement-noise levels
    #[arg(long, allow_hyphen_values = true)]
    deltas: Option<String>,
    /// Monte-Carlo runs per cell
    #[arg(long)]
    runs: Option<usize>,
    /// ODE local-error tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Largest ODE step
    #[arg(long)]
    max_step: Option<f64>,
    /// Base RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// `regular:K,dt` or a file of measurement times
    #[arg(long)]
    schedule: Option<String>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start the truth at the prior mean instead of sampling it
    #[arg(long)]
    pin_truth: bool,
    /// Treat the turn-rate constants as degree-valued
    #[arg(long)]
    omega_degrees: bool,
    /// Write zero wall times so that repeated runs give identical files
    #[arg(long)]
    no_timing: bool,
    /// `key = value` file applied before the flags above
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suppress per-cell progress on stderr
    #[arg(long, short)]
    quiet: bool,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut c = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        c.apply_file(path)?;
    }
    if let Some(v) = &cli.variants {
        c.variants = parse_variants(v)?;
    }
    if let Some(d) = &cli.deltas {
        c.deltas = parse_list(d)?;
    }
    if let Some(r) = cli.runs {
        c.runs = r;
    }
    if let Some(t) = cli.tol {
        c.tolerance = t;
    }
    if let Some(h) = cli.max_step {
        c.max_step = h;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(s) = &cli.schedule {
        c.schedule = ScheduleSpec::parse(s)?;
    }
    c.pin_truth |= cli.pin_truth;
    c.omega_degrees |= cli.omega_degrees;
    if cli.no_timing {
        c.record_timing = false;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let config = build_config(&cli)?;
    let out: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    let quiet = cli.quiet;
    let cells = sweep_cells(&config, |r| {
        if quiet {
            return;
        }
        match r.armse_p {
            Some(a) => eprintln!("{:>6} delta={:e} armse_p={a:.4} ({:.1}s)", r.variant.label(), r.delta, r.wall_time_s),
            None => eprintln!(
                "{:>6} delta={:e} fails: {}/{} runs, first cause {}",
                r.variant.label(),
                r.delta,
                r.failed_runs,
                config.runs,
                r.failure_cause.as_deref().unwrap_or("?")
            ),
        }
    })?;
    let reports: Vec<_> = cells.into_iter().map(|c| c.report).collect();
    emit_csv(&reports, out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cdukf-bench: {e}");
            ExitCode::from(2)
        }
    }
}
