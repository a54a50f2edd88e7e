//! Monte-Carlo harness: configuration, trial orchestration and reports.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{AngleGrid, DesiredBeampattern};
use crate::covariance_synthesis::{optimize, OptimizerConfig};
use crate::error::{Error, Result};
use crate::nullspace::{generate_channel_seeded, InterferenceChannel};
use crate::seed;
use crate::sharing::{self, DesignMode, SharingResult, StationaryConfig};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub antennas: usize,
    pub samples: usize,
    pub trials: usize,
    pub bs_count: usize,
    /// Base-station antenna counts; every entry is a separate run.
    pub bs_antennas: Vec<usize>,
    pub mode: DesignMode,
    /// Run both modes on the same channel draws (overrides `mode`).
    pub compare: bool,
    pub lobes: Vec<(f64, f64)>,
    /// Defaults to the antenna count.
    pub lobe_height: Option<f64>,
    pub grid_step_deg: f64,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Scale of the stationary designs. Defaults to the scale picked by an
    /// unconstrained reference design.
    pub alpha: Option<f64>,
    /// Replace every channel by zeros.
    pub zero_channel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            antennas: 10,
            samples: 100,
            trials: 100,
            bs_count: 5,
            bs_antennas: vec![3, 5, 7],
            mode: DesignMode::Stationary,
            compare: false,
            lobes: vec![(-60.0, -40.0), (40.0, 60.0)],
            lobe_height: None,
            grid_step_deg: 1.0,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            alpha: None,
            zero_channel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas < 2 {
            return Err(Error::config("antennas", "need at least 2"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples", "must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be positive"));
        }
        if self.bs_count == 0 {
            return Err(Error::config("bs_count", "must be positive"));
        }
        if self.bs_antennas.is_empty() || self.bs_antennas.contains(&0) {
            return Err(Error::config("bs_antennas", "need one or more positive counts"));
        }
        if !(self.grid_step_deg.is_finite() && self.grid_step_deg > 0.0 && self.grid_step_deg <= 180.0) {
            return Err(Error::config("grid_step_deg", "must lie in (0, 180]"));
        }
        if let Some(h) = self.lobe_height {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config("lobe_height", "must be positive"));
            }
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::config("alpha", "must be positive"));
            }
        }
        if self.lobes.is_empty() {
            return Err(Error::config("lobes", "need at least one lobe"));
        }
        for &(lo, hi) in &self.lobes {
            if !(lo.is_finite() && hi.is_finite() && -90.0 <= lo && lo < hi && hi <= 90.0) {
                return Err(Error::config("lobes", format!("[{lo}, {hi}] is not an interval inside [-90, 90]")));
            }
        }
        let mut sorted = self.lobes.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = sorted.windows(2).find(|w| w[1].0 <= w[0].1) {
            return Err(Error::config(
                "lobes",
                format!("[{}, {}] overlaps [{}, {}]", w[0].0, w[0].1, w[1].0, w[1].1),
            ));
        }
        self.optimizer.validate()
    }

    pub fn modes(&self) -> Vec<DesignMode> {
        if self.compare {
            vec![DesignMode::Stationary, DesignMode::Moving]
        } else {
            vec![self.mode]
        }
    }

    pub fn desired(&self) -> Result<DesiredBeampattern> {
        let grid = AngleGrid::uniform(self.grid_step_deg)?;
        let height = self.lobe_height.unwrap_or(self.antennas as f64);
        DesiredBeampattern::from_lobes(grid, &self.lobes, height)
    }

    /// Channels of one trial; identical across modes.
    pub fn channels(&self, trial: usize, n_bs: usize) -> Result<Vec<InterferenceChannel>> {
        let trial_seed = seed::derive(self.seed, &[trial as u64]);
        (0..self.bs_count)
            .map(|i| {
                if self.zero_channel {
                    Ok(InterferenceChannel::zero(i, n_bs, self.antennas))
                } else {
                    let s = seed::derive(trial_seed, &[seed::stream::CHANNEL, n_bs as u64, i as u64]);
                    generate_channel_seeded(i, n_bs, self.antennas, s)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// 0-based base-station index.
    pub selected_bs: usize,
    pub selected_cost: f64,
    pub per_bs_costs: Vec<f64>,
    pub selection_metric: Vec<f64>,
    pub alpha: f64,
    pub in_lobe_power: f64,
    pub leakage: f64,
    pub envelope_error: f64,
    pub optimizer_runs: usize,
    pub converged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: DesignMode,
    pub bs_antennas: usize,
    pub achieved_mean: Vec<f64>,
    pub achieved_std: Vec<f64>,
    /// `achieved_mean` scaled to unit peak.
    pub achieved_normalized: Vec<f64>,
    /// Mean projected beampattern for each base station, selected or not.
    pub per_bs_mean: Vec<Vec<f64>>,
    pub selection_histogram: Vec<usize>,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub in_lobe_power_mean: f64,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Scale used by the stationary designs, when any ran.
    pub stationary_alpha: Option<f64>,
    pub angles_deg: Vec<f64>,
    pub desired: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl ExperimentReport {
    pub fn run(&self, mode: DesignMode, bs_antennas: usize) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.mode == mode && r.bs_antennas == bs_antennas)
    }
}

/// A report plus the wall-clock time of each run (kept out of the report so
/// that reports stay reproducible byte for byte).
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub wall_clock: Vec<Duration>,
}

/// Result of one trial, as handed to [`run_experiment_with`] observers.
pub struct TrialOutcome<'a> {
    pub mode: DesignMode,
    pub bs_antennas: usize,
    pub trial: usize,
    pub channels: &'a [InterferenceChannel],
    pub result: &'a SharingResult,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, |_| {})
}

/// [`run_experiment`], calling `observe` on every trial before its
/// waveforms are dropped.
pub fn run_experiment_with<F>(config: &ExperimentConfig, observe: F) -> Result<ExperimentOutput>
where
    F: Fn(&TrialOutcome<'_>) + Sync,
{
    config.validate()?;
    let desired = config.desired()?;
    let modes = config.modes();

    let stationary_alpha = if modes.contains(&DesignMode::Stationary) {
        Some(match config.alpha {
            Some(a) => a,
            None => {
                let reference = optimize(
                    &desired,
                    config.antennas,
                    &config.optimizer,
                    seed::derive(config.seed, &[seed::stream::OPTIMIZER]),
                )?;
                reference.params.alpha()
            }
        })
    } else {
        None
    };

    let mut runs = Vec::new();
    let mut wall_clock = Vec::new();
    for &n_bs in &config.bs_antennas {
        for &mode in &modes {
            let start = Instant::now();
            let results: Vec<(TrialRecord, Vec<f64>, Vec<Vec<f64>>)> = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let channels = config.channels(trial, n_bs)?;
                    let trial_seed = seed::derive(config.seed, &[trial as u64]);
                    let result = match mode {
                        DesignMode::Stationary => {
                            let cfg = StationaryConfig {
                                optimizer: config.optimizer.clone(),
                                samples: config.samples,
                                alpha: stationary_alpha,
                            };
                            sharing::stationary_design(&channels, &desired, &cfg, trial_seed)?
                        }
                        DesignMode::Moving => sharing::moving_design_from_pattern(
                            &channels,
                            &desired,
                            &config.optimizer,
                            config.samples,
                            trial_seed,
                        )?,
                    };
                    observe(&TrialOutcome {
                        mode,
                        bs_antennas: n_bs,
                        trial,
                        channels: &channels,
                        result: &result,
                    });
                    let record = TrialRecord {
                        trial,
                        selected_bs: result.selected,
                        selected_cost: result.selected_cost(),
                        per_bs_costs: result.per_bs_costs.clone(),
                        selection_metric: result.selection_metric.clone(),
                        alpha: result.alpha(),
                        in_lobe_power: sharing::in_lobe_power(&result.achieved_beampattern, &desired),
                        leakage: result.leakage,
                        envelope_error: result.envelope_error,
                        optimizer_runs: result.optimizer_runs,
                        converged_runs: result.converged.iter().filter(|c| **c).count(),
                    };
                    Ok((record, result.achieved_beampattern, result.per_bs_beampatterns))
                })
                .collect::<Result<_>>()?;
            runs.push(summarize(mode, n_bs, config.bs_count, results)?);
            wall_clock.push(start.elapsed());
        }
    }

    Ok(ExperimentOutput {
        report: ExperimentReport {
            tool_version: TOOL_VERSION.to_string(),
            seed: config.seed,
            config: config.clone(),
            stationary_alpha,
            angles_deg: desired.grid().angles_deg().to_vec(),
            desired: desired.values().to_vec(),
            runs,
        },
        wall_clock,
    })
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(
    mode: DesignMode,
    bs_antennas: usize,
    bs_count: usize,
    results: Vec<(TrialRecord, Vec<f64>, Vec<Vec<f64>>)>,
) -> Result<RunSummary> {
    let patterns: Vec<Vec<f64>> = results.iter().map(|r| r.1.clone()).collect();
    let achieved_mean = sharing::average_beampattern(&patterns)?;
    let achieved_std = (0..achieved_mean.len())
        .map(|k| mean_std(patterns.iter().map(|p| p[k])).1)
        .collect();
    let peak = achieved_mean.iter().copied().fold(0.0, f64::max);
    let achieved_normalized = achieved_mean
        .iter()
        .map(|v| if peak > 0.0 { v / peak } else { 0.0 })
        .collect();
    let per_bs_mean = (0..bs_count)
        .map(|i| sharing::average_beampattern(&results.iter().map(|r| r.2[i].clone()).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut selection_histogram = vec![0; bs_count];
    for r in &results {
        selection_histogram[r.0.selected_bs] += 1;
    }
    let (cost_mean, cost_std) = mean_std(results.iter().map(|r| r.0.selected_cost));
    let (in_lobe_power_mean, _) = mean_std(results.iter().map(|r| r.0.in_lobe_power));
    Ok(RunSummary {
        mode,
        bs_antennas,
        achieved_mean,
        achieved_std,
        achieved_normalized,
        per_bs_mean,
        selection_histogram,
        cost_mean,
        cost_std,
        in_lobe_power_mean,
        trials: results.into_iter().map(|r| r.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Pretty-printed JSON, newline terminated.
pub fn report_json(report: &ExperimentReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report holds plain data");
    text.push('\n');
    text
}

/// Where the CSV tables of a report go: `path` itself for a single run,
/// otherwise one `<stem>_<mode>_nbs<k>.<ext>` file per run.
pub fn csv_paths(report: &ExperimentReport, path: &Path) -> Vec<PathBuf> {
    if report.runs.len() == 1 {
        return vec![path.to_path_buf()];
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    report
        .runs
        .iter()
        .map(|r| path.with_file_name(format!("{stem}_{}_nbs{}.{ext}", r.mode.as_str(), r.bs_antennas)))
        .collect()
}

/// Write `report`; returns the files written.
pub fn write_report(report: &ExperimentReport, path: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if report.runs.is_empty() || report.runs.iter().any(|r| r.trials.is_empty()) {
        return Err(Error::InvalidParameter("report has no trials".into()));
    }
    match format {
        ReportFormat::Json => {
            std::fs::write(path, report_json(report)).map_err(io_err(path))?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::Csv => {
            let paths = csv_paths(report, path);
            for (run, p) in report.runs.iter().zip(&paths) {
                write_run_csv(report, run, p)?;
            }
            Ok(paths)
        }
    }
}

fn write_run_csv(report: &ExperimentReport, run: &RunSummary, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["angle_deg".to_string(), "desired".into(), "achieved_mean".into(), "achieved_std".into()];
    header.extend((0..run.per_bs_mean.len()).map(|i| format!("bs_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..report.angles_deg.len() {
        let mut row = vec![report.angles_deg[k], report.desired[k], run.achieved_mean[k], run.achieved_std[k]];
        row.extend(run.per_bs_mean.iter().map(|p| p[k]));
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            antennas: 6,
            samples: 40,
            trials: 3,
            bs_count: 2,
            bs_antennas: vec![2],
            optimizer: OptimizerConfig {
                max_iters: 50,
                restarts: 1,
                ..OptimizerConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!((c.antennas, c.samples, c.trials, c.bs_count), (10, 100, 100, 5));
        assert_eq!(c.desired().unwrap().values()[130], 10.0);
        assert_eq!(c.desired().unwrap().len(), 181);
        c.validate().unwrap();
    }

    #[test]
    fn validation_names_the_field() {
        let field = |c: ExperimentConfig| match c.validate() {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(ExperimentConfig { trials: 0, ..small() }), "trials");
        assert_eq!(field(ExperimentConfig { antennas: 1, ..small() }), "antennas");
        assert_eq!(field(ExperimentConfig { bs_antennas: vec![], ..small() }), "bs_antennas");
        assert_eq!(field(ExperimentConfig { lobes: vec![(-100.0, 0.0)], ..small() }), "lobes");
        assert_eq!(field(ExperimentConfig { lobes: vec![(0.0, 20.0), (10.0, 30.0)], ..small() }), "lobes");
        assert_eq!(field(ExperimentConfig { grid_step_deg: 0.0, ..small() }), "grid_step_deg");
        let mut c = small();
        c.optimizer.restarts = 0;
        assert_eq!(field(c), "restarts");
    }

    #[test]
    fn summary_shapes() {
        let out = run_experiment(&ExperimentConfig { compare: true, ..small() }).unwrap();
        let r = &out.report;
        assert_eq!(r.runs.len(), 2);
        assert_eq!(out.wall_clock.len(), 2);
        assert!(r.stationary_alpha.is_some());
        for run in &r.runs {
            assert_eq!(run.achieved_mean.len(), r.angles_deg.len());
            assert_eq!(run.per_bs_mean.len(), 2);
            assert_eq!(run.selection_histogram.iter().sum::<usize>(), 3);
            let max = run.achieved_normalized.iter().copied().fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.run(DesignMode::Moving, 2).unwrap().trials[0].optimizer_runs, 1);
        assert_eq!(r.run(DesignMode::Stationary, 2).unwrap().trials[0].optimizer_runs, 2);
    }

    #[test]
    fn single_trial_has_zero_spread() {
        let out = run_experiment(&ExperimentConfig { trials: 1, mode: DesignMode::Moving, ..small() }).unwrap();
        assert!(out.report.runs[0].achieved_std.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn reports_round_trip_and_reject_empty() {
        let report = run_experiment(&small()).unwrap().report;
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("r.json");
        write_report(&report, &json, ReportFormat::Json).unwrap();
        assert_eq!(load_report(&json).unwrap(), report);

        let csv = dir.path().join("r.csv");
        assert_eq!(write_report(&report, &csv, ReportFormat::Csv).unwrap(), vec![csv.clone()]);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("angle_deg,desired,achieved_mean,achieved_std,bs_0,bs_1\n"));
        assert_eq!(text.lines().count(), 182);

        let mut empty = report.clone();
        empty.runs.clear();
        assert!(write_report(&empty, &json, ReportFormat::Json).is_err());
        let mut no_trials = report;
        no_trials.runs[0].trials.clear();
        assert!(write_report(&no_trials, &csv, ReportFormat::Csv).is_err());

        let missing = dir.path().join("nope").join("r.json");
        match load_report(&missing) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multi_run_csv_files() {
        let report = run_experiment(&ExperimentConfig { bs_antennas: vec![1, 2], ..small() }).unwrap().report;
        let dir = tempfile::tempdir().unwrap();
        let written = write_report(&report, &dir.path().join("out.csv"), ReportFormat::Csv).unwrap();
        let names: Vec<_> = written.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["out_stationary_nbs1.csv", "out_stationary_nbs2.csv"]);
        assert!(written.iter().all(|p| p.exists()));
    }
}
