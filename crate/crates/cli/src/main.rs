use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;
use so3_density::parallel::Workers;
use so3_density::pipeline::{self, RunConfig};
use so3_density::{Error, Result};

/// Density propagation and estimation for the 3D pendulum on SO(3) x R^3.
#[derive(Debug, Parser)]
#[command(name = "so3d", version)]
struct Cli {
    /// Run configuration (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated snapshot times in seconds, overriding
    /// `output.snapshot_times`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    snapshot_times: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate the initial density to each snapshot time.
    Propagate,
    /// Alternate propagation and Bayes updates over a set of measurements.
    Estimate {
        /// CSV of `k,z1,...,z6` rows.
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// Inline `k,z1,...,z6` measurement; may be repeated.
        #[arg(long = "measurement", allow_hyphen_values = true)]
        inline: Vec<String>,
        /// Interpolate the previous posterior grid instead of evaluating the
        /// closed-form posterior.
        #[arg(long)]
        grid_source: bool,
    },
    /// Integrate a single trajectory and log its energy.
    Trajectory,
    /// Forward SO(3) transform of a density file.
    Transform { density: PathBuf },
    /// Sphere marginals of a density file.
    Marginal { density: PathBuf },
    /// Write noisy measurements of the configured trajectory.
    Simulate {
        #[arg(long, default_value_t = 20)]
        every: u64,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut entries = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config {
                field: "--config".into(),
                message: format!("{}: {e}", p.display()),
            })?;
            pipeline::parse_entries(&text)?
        }
        None => Default::default(),
    };
    if let Some(t) = &cli.snapshot_times {
        entries.insert("output.snapshot_times".into(), t.clone());
    }
    if let Some(o) = &cli.out {
        entries.insert("output.dir".into(), o.display().to_string());
    }
    let mut cfg = RunConfig::from_entries(entries)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config {
                field: "--workers".into(),
                message: "must be at least 1".into(),
            });
        }
        cfg.workers = Workers::new(w);
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let start = Instant::now();
    let mut progress = |line: &str| eprintln!("[{:8.1}s] {line}", start.elapsed().as_secs_f64());
    match &cli.command {
        Command::Propagate => print_json(&pipeline::cmd_propagate(&cfg, &mut progress)?),
        Command::Estimate {
            measurements,
            inline,
            grid_source,
        } => {
            let mut ms = match measurements {
                Some(p) => pipeline::read_measurements(BufReader::new(File::open(p)?))?,
                None => Vec::new(),
            };
            for m in inline {
                ms.push(pipeline::parse_measurement(m)?);
            }
            print_json(&pipeline::cmd_estimate(&cfg, &ms, !grid_source, &mut progress)?)
        }
        Command::Trajectory => print_json(&pipeline::cmd_trajectory(&cfg)?),
        Command::Transform { density } => print_json(&pipeline::cmd_transform(&cfg, density)?),
        Command::Marginal { density } => print_json(&pipeline::cmd_marginal(&cfg, density)?),
        Command::Simulate { every, count, seed } => {
            let (ms, _) = pipeline::simulate_measurements(&cfg, *every, *count, *seed)?;
            fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("measurements.csv");
            let mut w = BufWriter::new(File::create(&path)?);
            let mut header = pipeline::header_lines(&cfg);
            header.push(format!("every {every} steps, seed {seed}"));
            pipeline::write_measurements(&mut w, &ms, &header)?;
            w.flush()?;
            print_json(&json!({ "measurements": path, "count": ms.len() }))
        }
    }
}

fn fail(kind: &str, field: Option<&str>, message: &str) -> ExitCode {
    let mut err = json!({ "error": kind, "message": message });
    if let Some(f) = field {
        err["field"] = json!(f);
    }
    eprintln!("{err}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", None, e.to_string().trim()),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config { field, message }) => fail("Config", Some(&field), &message),
        Err(Error::InvalidParameter { field, reason }) => fail("InvalidParameter", Some(&field), &reason),
        Err(e) => fail(e.kind(), None, &e.to_string()),
    }
}
