use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bae::bench::{self, Aggregate, DummySpec};
use bae::config::Config;
use bae::{Error, Result};

#[derive(Parser)]
#[command(name = "bae", version, about = "Bayesian amplitude estimation benchmarks")]
struct Cli {
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run of the configured algorithm; writes its trace as JSON.
    Run,
    /// Benchmark trials; writes raw points as CSV.
    Bench,
    /// Bins raw points, fits a power law and writes the binned CSV. The
    /// fitted curve and reference lines go to `<out>.lines.csv`.
    Process {
        /// Raw points CSV.
        input: PathBuf,
        /// Overrides the configured bin count.
        #[arg(long)]
        bins: Option<usize>,
        /// Aggregate bins by median.
        #[arg(long)]
        median: bool,
    },
    /// Synthetic Heisenberg-limited points in the raw CSV format.
    Dummy {
        #[arg(long, default_value_t = DummySpec::default().n_points)]
        n_points: usize,
        #[arg(long, default_value_t = DummySpec::default().x_min)]
        x_min: f64,
        #[arg(long, default_value_t = DummySpec::default().x_max)]
        x_max: f64,
        #[arg(long, default_value_t = DummySpec::default().anchor_x)]
        anchor_x: f64,
        #[arg(long, default_value_t = DummySpec::default().anchor_sigma)]
        anchor_sigma: f64,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Run => {
            let (truth, run_seed) = bench::draw_problem(&config, cli.seed)?;
            let trace = bench::run_algorithm(&config, &truth, run_seed)?;
            if let Some(f) = &trace.failure {
                eprintln!("run stopped early: {f}");
            }
            let mut w = output(cli.out.as_deref())?;
            trace.write_json(&mut w)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Bench => {
            let out = bench::run_benchmark(&config, cli.seed)?;
            for f in &out.failures {
                eprintln!("trial {} (seed {}): {}", f.run_id, f.seed, f.message);
            }
            let mut w = output(cli.out.as_deref())?;
            bench::write_points(&mut w, &out.points)?;
            w.flush()?;
        }
        Command::Process { input, bins, median } => {
            let points = bench::read_points(BufReader::new(File::open(&input)?))?;
            if points.is_empty() {
                return Err(Error::NoPoints);
            }
            let aggregate = if median || config.median {
                Aggregate::Median
            } else {
                Aggregate::Mean
            };
            let processed = bench::process_points(&points, bins.unwrap_or(config.bins), aggregate)?;
            let mut w = output(cli.out.as_deref())?;
            bench::write_bins(&mut w, &processed.bins)?;
            w.flush()?;
            if let Some(out) = &cli.out {
                let mut name = out.clone().into_os_string();
                name.push(".lines.csv");
                let lines = BufWriter::new(File::create(PathBuf::from(name))?);
                bench::write_lines(lines, &processed)?;
            }
            let f = processed.fit;
            let mut stdout = std::io::stdout();
            if cli.out.is_some() {
                writeln!(stdout, "slope={}", f.slope)?;
                writeln!(stdout, "scale={}", f.scale)?;
                writeln!(stdout, "x0={}", f.x0)?;
                writeln!(stdout, "y0={}", f.y0)?;
            } else {
                eprintln!("slope={} scale={} x0={} y0={}", f.slope, f.scale, f.x0, f.y0);
            }
        }
        Command::Dummy {
            n_points,
            x_min,
            x_max,
            anchor_x,
            anchor_sigma,
        } => {
            let spec = DummySpec {
                n_points,
                x_min,
                x_max,
                anchor_x,
                anchor_sigma,
            };
            let points = bench::generate_dummy_hl_data(&spec, cli.seed)?;
            let mut w = output(cli.out.as_deref())?;
            bench::write_points(&mut w, &points)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
