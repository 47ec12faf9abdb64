use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_sid_cli::commands::{cmd_estimate, cmd_pipeline, cmd_plot_data, cmd_simulate, PipelineOptions, PlotArgs};
use levy_sid_cli::dataset_io::DatasetFormat;
use levy_sid_cli::{CliError, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "levy-sid", version, about = "Simulate SDEs with Lévy noise and identify their coefficients from pair data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one Euler step from every grid point and write the pairs.
    Simulate {
        /// Model file, or a built-in name (lorenz3d, genereg1d).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DatasetFormat::Csv)]
        format: DatasetFormat,
    },
    /// Estimate Lévy parameters, drift and diffusion from a dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        est_config: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Optional model file, echoed into the report.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Record wall-clock timings in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Write learned (and optionally true) coefficient values on a grid.
    PlotData {
        #[arg(long)]
        report: PathBuf,
        /// Model file supplying the true coefficient column.
        #[arg(long)]
        config: Option<PathBuf>,
        /// b1, a12, b:<i> or a:<i>,<j>.
        #[arg(long)]
        component: String,
        /// start:stop:step, both ends included.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        /// Coordinate that varies (1-based).
        #[arg(long, default_value_t = 1)]
        axis: usize,
        /// Comma-separated point supplying the other coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, estimate and emit plot data into a work directory.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        est_config: PathBuf,
        #[arg(long)]
        workdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DatasetFormat::Bin)]
        format: DatasetFormat,
        #[arg(long)]
        timings: bool,
    },
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("{WORKERS_ENV}: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    match cli.command {
        Command::Simulate { config, out, seed, format } => {
            let s = cmd_simulate(&config, &out, seed, format)?;
            println!("M={} n={} h={} rate={:.0} rows/s", s.rows, s.dimension, s.h, s.rate());
        }
        Command::Estimate { data, est_config, report, config, timings } => {
            let r = cmd_estimate(&data, &est_config, &report, config.as_deref(), timings)?;
            for l in &r.levy {
                println!("L{}: alpha={} beta={} sigma={}", l.component, l.alpha, l.beta, l.sigma);
            }
            println!("survival fraction {}; {} warning(s)", r.survival_fraction, r.warnings.len());
        }
        Command::PlotData { report, config, component, range, axis, at, out } => {
            let rows = cmd_plot_data(PlotArgs {
                report: &report,
                model_config: config.as_deref(),
                component: &component,
                range: &range,
                axis,
                at,
                out: &out,
            })?;
            println!("{rows} rows written to {}", out.display());
        }
        Command::Pipeline { config, est_config, workdir, seed, format, timings } => {
            let out = cmd_pipeline(&config, &est_config, &workdir, &PipelineOptions { seed, format, timings })?;
            let s = &out.simulate;
            println!("M={} n={} h={} rate={:.0} rows/s", s.rows, s.dimension, s.h, s.rate());
            println!("report {}", out.report_path.display());
            for p in &out.plots {
                println!("plot {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category().label());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
