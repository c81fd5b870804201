use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artic_core::allocator::{build_qp_map, DEFAULT_GAMMA};
use artic_core::metrics::{write_csv, CsvRow};
use artic_core::runner::{run_scenario, sweep, RunOptions};
use artic_core::scenario::{Scenario, SweepAxis};
use artic_core::sim::RunOutput;
use artic_core::trace::write_jsonl;
use artic_core::{mapfile, Error};

#[derive(Parser)]
#[command(name = "artic", version, about = "Packet-level RTC-to-MLLM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario once per configured seed.
    Run {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a scenario for each value of one axis, crossed with every seed.
    Sweep {
        config: PathBuf,
        /// bitrate (kbps), loss (probability) or frame_rate (fixed FPS)
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the header and QP summary of a correlation-map file.
    InspectMap {
        map: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of simulations to run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Record a JSON-lines event trace per run.
    #[arg(long)]
    trace: bool,
    /// Where traces go; defaults to the CSV's directory, or `.`.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("artic: {e}");
            match e {
                Error::Config { .. }
                | Error::MissingFile(_)
                | Error::MapFormat(_)
                | Error::EmptyInput(_)
                | Error::InvalidParameter { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run { config, output } => {
            let scenario = Scenario::load(&config)?;
            let runs = run_scenario(&scenario, options(&output))?;
            emit(&runs, &output)
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
        } => {
            let scenario = Scenario::load(&config)?;
            let runs = sweep(&scenario, axis, &values, options(&output))?;
            emit(&runs, &output)
        }
        Command::InspectMap { map, gamma } => inspect_map(&map, gamma),
    }
}

fn options(o: &OutputArgs) -> RunOptions {
    RunOptions {
        parallel: o.parallel.max(1),
        trace: o.trace,
    }
}

fn emit(runs: &[RunOutput], o: &OutputArgs) -> Result<(), Error> {
    let rows: Vec<CsvRow> = runs.iter().map(|r| r.row.clone()).collect();
    match &o.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_csv(&rows, BufWriter::new(File::create(path)?))?;
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    if o.trace {
        let dir = o
            .trace_dir
            .clone()
            .or_else(|| o.out.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf))
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        for run in runs {
            let path = dir.join(trace_file_name(&run.scenario_id, run.seed));
            let mut w = BufWriter::new(File::create(&path)?);
            write_jsonl(&run.trace, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn trace_file_name(id: &str, seed: u64) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.seed{seed}.jsonl")
}

fn inspect_map(path: &Path, gamma: f64) -> Result<(), Error> {
    let map = mapfile::load(path)?;
    let qp = build_qp_map(&map, gamma)?;
    let (min, max) = qp
        .values()
        .iter()
        .fold((u8::MAX, u8::MIN), |(lo, hi), &q| (lo.min(q), hi.max(q)));
    let rho = map.values();
    let mean = rho.iter().map(|&v| f64::from(v)).sum::<f64>() / rho.len() as f64;
    let mut out = io::stdout().lock();
    writeln!(out, "rows: {}", map.rows())?;
    writeln!(out, "cols: {}", map.cols())?;
    writeln!(out, "patch_size: {}", map.patch_size())?;
    writeln!(out, "rho_mean: {mean:.6}")?;
    writeln!(out, "qp_range: {min}..={max} (gamma {gamma})")?;
    Ok(())
}
