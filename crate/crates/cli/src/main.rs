use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qpsk_nsp::covariance_synthesis::OptimizerConfig;
use qpsk_nsp::experiment::{self, ExperimentConfig, ReportFormat};
use qpsk_nsp::sharing::DesignMode;

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Stationary,
    Moving,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Monte-Carlo spectrum-sharing experiment for QPSK MIMO-radar waveforms.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Radar antennas M.
    #[arg(long, default_value_t = 10)]
    antennas: usize,
    /// Waveform length N.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Base stations per trial.
    #[arg(long, default_value_t = 5)]
    bs_count: usize,
    /// Antennas per base station; one run per entry.
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    bs_antennas: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Stationary)]
    mode: Mode,
    /// Lobe intervals in degrees, e.g. -60:-40,40:60.
    #[arg(long, allow_hyphen_values = true, default_value = "-60:-40,40:60")]
    lobes: String,
    /// Desired lobe height [default: antennas].
    #[arg(long)]
    lobe_height: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    grid_step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file [default: JSON on stdout].
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Debug: replace every interference channel by zeros.
    #[arg(long)]
    zero_channel: bool,
    /// Run both modes on the same channel draws.
    #[arg(long)]
    compare: bool,
}

fn parse_lobes(text: &str) -> Result<Vec<(f64, f64)>, String> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| format!("lobe '{part}' is not start:stop"))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("lobe '{part}': {e}"));
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect()
}

fn config_from(args: &Args) -> Result<ExperimentConfig, String> {
    let mut optimizer = OptimizerConfig::default();
    if let Some(r) = args.restarts {
        optimizer.restarts = r;
    }
    if let Some(i) = args.max_iters {
        optimizer.max_iters = i;
    }
    Ok(ExperimentConfig {
        antennas: args.antennas,
        samples: args.samples,
        trials: args.trials,
        bs_count: args.bs_count,
        bs_antennas: args.bs_antennas.clone(),
        mode: match args.mode {
            Mode::Stationary => DesignMode::Stationary,
            Mode::Moving => DesignMode::Moving,
        },
        compare: args.compare,
        lobes: parse_lobes(&args.lobes)?,
        lobe_height: args.lobe_height,
        grid_step_deg: args.grid_step,
        seed: args.seed,
        optimizer,
        alpha: None,
        zero_channel: args.zero_channel,
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match config_from(&args).and_then(|c| c.validate().map(|_| c).map_err(|e| e.to_string())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let format = match args.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    if args.output.is_none() && format == ReportFormat::Csv {
        eprintln!("error: --format csv needs --output");
        return ExitCode::from(2);
    }

    let out = match experiment::run_experiment(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_config() { 2 } else { 1 });
        }
    };
    for (run, t) in out.report.runs.iter().zip(&out.wall_clock) {
        eprintln!(
            "{} n_bs={}: cost {:.4} +- {:.4}, in-lobe power {:.4}, selections {:?}, {:.2?}",
            run.mode.as_str(),
            run.bs_antennas,
            run.cost_mean,
            run.cost_std,
            run.in_lobe_power_mean,
            run.selection_histogram,
            t
        );
    }

    let written = match &args.output {
        Some(path) => experiment::write_report(&out.report, path, format),
        None => {
            if out.report.runs.iter().all(|r| !r.trials.is_empty()) {
                print!("{}", experiment::report_json(&out.report));
            }
            Ok(Vec::new())
        }
    };
    match written {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
