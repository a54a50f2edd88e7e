//! Spectrum-sharing designs.
//!
//! Stationary radar: the channel is known while designing, so each base
//! station gets its own design with the projector inside the objective, and
//! the projected waveform with the best beampattern fit wins.
//!
//! Moving radar: one unconstrained design, projected onto every candidate
//! null space afterwards; the projection that distorts the waveform least wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{self, DesiredBeampattern};
use crate::covariance_synthesis::{optimize, optimize_objective, BeampatternObjective, OptimizerConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::nullspace::{nullspace_projector, project_waveform, InterferenceChannel};
use crate::seed;
use crate::waveform_gen::{generate_qpsk_waveform, WaveformKind, WaveformMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    Stationary,
    Moving,
}

impl DesignMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignMode::Stationary => "stationary",
            DesignMode::Moving => "moving",
        }
    }
}

/// Settings for [`stationary_design`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryConfig {
    pub optimizer: OptimizerConfig,
    /// Waveform length `N`.
    pub samples: usize,
    /// Beampattern scale held fixed in every projected design; `None` lets
    /// each design pick its own.
    pub alpha: Option<f64>,
}

/// Outcome of one sharing design.
#[derive(Debug, Clone)]
pub struct SharingResult {
    pub mode: DesignMode,
    /// Position of the winner in the channel list.
    pub selected: usize,
    pub selected_bs_id: usize,
    /// Beampattern cost of every projected covariance.
    pub per_bs_costs: Vec<f64>,
    /// The quantity minimized by the selection rule: the cost in stationary
    /// mode, `|Z P^H - Z|_F` in moving mode.
    pub selection_metric: Vec<f64>,
    /// Scale used by each per-base-station cost.
    pub alphas: Vec<f64>,
    /// `Z^H Z / N` of the transmitted waveform.
    pub final_covariance: CMatrix,
    pub achieved_beampattern: Vec<f64>,
    pub per_bs_beampatterns: Vec<Vec<f64>>,
    pub transmitted: WaveformMatrix,
    pub optimizer_runs: usize,
    pub converged: Vec<bool>,
    /// Largest constant-envelope violation over the pre-projection waveforms.
    pub envelope_error: f64,
    /// [`InterferenceChannel::leakage`] of the transmitted waveform toward the
    /// selected base station.
    pub leakage: f64,
}

impl SharingResult {
    pub fn selected_cost(&self) -> f64 {
        self.per_bs_costs[self.selected]
    }

    pub fn alpha(&self) -> f64 {
        self.alphas[self.selected]
    }
}

fn check_channels(channels: &[InterferenceChannel], antennas: Option<usize>) -> Result<usize> {
    let first = channels
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one base station is required".into()))?;
    let m = antennas.unwrap_or(first.antennas());
    if let Some(ch) = channels.iter().find(|c| c.antennas() != m) {
        return Err(Error::Dimension(format!(
            "base station {} channel has {} columns, expected {m}",
            ch.bs_id(),
            ch.antennas()
        )));
    }
    Ok(m)
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.total_cmp(b).then(i.cmp(j)))
        .map(|(i, _)| i)
        .expect("non-empty")
}

fn waveform_covariance(z: &WaveformMatrix) -> CMatrix {
    linalg::hermitian_part(&z.sample_covariance())
}

fn pattern_of(r: &CMatrix, desired: &DesiredBeampattern) -> Vec<f64> {
    array_model::beampattern(r, desired.grid()).expect("Hermitian by construction")
}

struct Candidate {
    waveform: WaveformMatrix,
    covariance: CMatrix,
    pattern: Vec<f64>,
    cost: f64,
    alpha: f64,
    converged: bool,
    envelope_error: f64,
}

/// One projected design per base station, keeping the best-fitting projected waveform.
pub fn stationary_design(
    channels: &[InterferenceChannel],
    desired: &DesiredBeampattern,
    config: &StationaryConfig,
    rng_seed: u64,
) -> Result<SharingResult> {
    check_channels(channels, None)?;
    if config.samples == 0 {
        return Err(Error::InvalidParameter("waveform length must be positive".into()));
    }
    let candidates: Vec<Candidate> = channels
        .par_iter()
        .enumerate()
        .map(|(i, ch)| {
            let projector = nullspace_projector(ch);
            let mut objective = BeampatternObjective::with_projector(desired, projector.matrix())?;
            if let Some(a) = config.alpha {
                objective = objective.fix_alpha(a);
            }
            let design = optimize_objective(
                &objective,
                &config.optimizer,
                seed::derive(rng_seed, &[seed::stream::OPTIMIZER, i as u64]),
            )?;
            let z = generate_qpsk_waveform(
                &design.gaussian,
                config.samples,
                seed::derive(rng_seed, &[seed::stream::WAVEFORM, i as u64]),
            )?;
            let projected = project_waveform(&z, &projector)?;
            let covariance = waveform_covariance(&projected);
            let pattern = pattern_of(&covariance, desired);
            let alpha = design.params.alpha();
            Ok(Candidate {
                cost: array_model::pattern_cost(&pattern, desired.values(), alpha),
                envelope_error: z.envelope_error(),
                waveform: projected,
                covariance,
                pattern,
                alpha,
                converged: design.converged,
            })
        })
        .collect::<Result<_>>()?;

    let costs: Vec<f64> = candidates.iter().map(|c| c.cost).collect();
    let selected = argmin(&costs);
    Ok(assemble(DesignMode::Stationary, channels, candidates, costs.clone(), costs, selected, channels.len()))
}

/// Project one designed QPSK waveform onto every null space and keep the
/// least distorted. `alpha` scales `desired` in the reported costs.
pub fn moving_design(
    channels: &[InterferenceChannel],
    base_waveform: &WaveformMatrix,
    desired: &DesiredBeampattern,
    alpha: f64,
) -> Result<SharingResult> {
    if base_waveform.kind() != WaveformKind::Qpsk {
        return Err(Error::InvalidParameter("moving design projects a QPSK waveform".into()));
    }
    check_channels(channels, Some(base_waveform.antennas()))?;
    let mut distortion = Vec::with_capacity(channels.len());
    let candidates: Vec<Candidate> = channels
        .iter()
        .map(|ch| {
            let projected = project_waveform(base_waveform, &nullspace_projector(ch))?;
            distortion.push(linalg::frobenius(&(projected.samples() - base_waveform.samples())));
            let covariance = waveform_covariance(&projected);
            let pattern = pattern_of(&covariance, desired);
            Ok(Candidate {
                cost: array_model::pattern_cost(&pattern, desired.values(), alpha),
                envelope_error: base_waveform.envelope_error(),
                waveform: projected,
                covariance,
                pattern,
                alpha,
                converged: true,
            })
        })
        .collect::<Result<_>>()?;
    let costs = candidates.iter().map(|c| c.cost).collect();
    let selected = argmin(&distortion);
    Ok(assemble(DesignMode::Moving, channels, candidates, costs, distortion, selected, 0))
}

/// Moving design from scratch: one unconstrained optimization, one QPSK
/// waveform, then [`moving_design`] with the design's own scale.
pub fn moving_design_from_pattern(
    channels: &[InterferenceChannel],
    desired: &DesiredBeampattern,
    optimizer: &OptimizerConfig,
    samples: usize,
    rng_seed: u64,
) -> Result<SharingResult> {
    let m = check_channels(channels, None)?;
    let design = optimize(desired, m, optimizer, seed::derive(rng_seed, &[seed::stream::OPTIMIZER]))?;
    let z = generate_qpsk_waveform(&design.gaussian, samples, seed::derive(rng_seed, &[seed::stream::WAVEFORM]))?;
    let mut result = moving_design(channels, &z, desired, design.params.alpha())?;
    result.optimizer_runs = 1;
    result.converged = vec![design.converged];
    Ok(result)
}

fn assemble(
    mode: DesignMode,
    channels: &[InterferenceChannel],
    mut candidates: Vec<Candidate>,
    per_bs_costs: Vec<f64>,
    selection_metric: Vec<f64>,
    selected: usize,
    optimizer_runs: usize,
) -> SharingResult {
    let converged = if optimizer_runs > 0 {
        candidates.iter().map(|c| c.converged).collect()
    } else {
        Vec::new()
    };
    let envelope_error = candidates.iter().map(|c| c.envelope_error).fold(0.0, f64::max);
    let alphas = candidates.iter().map(|c| c.alpha).collect();
    let per_bs_beampatterns = candidates.iter().map(|c| c.pattern.clone()).collect();
    let winner = candidates.swap_remove(selected);
    let leakage = channels[selected].leakage(&winner.waveform);
    SharingResult {
        mode,
        selected,
        selected_bs_id: channels[selected].bs_id(),
        per_bs_costs,
        selection_metric,
        alphas,
        final_covariance: winner.covariance,
        achieved_beampattern: winner.pattern,
        per_bs_beampatterns,
        transmitted: winner.waveform,
        optimizer_runs,
        converged,
        envelope_error,
        leakage,
    }
}

/// Pointwise mean of equal-length beampatterns.
pub fn average_beampattern(patterns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = patterns
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to average".into()))?;
    if patterns.iter().any(|p| p.len() != first.len()) {
        return Err(Error::Dimension("beampatterns differ in length".into()));
    }
    let n = patterns.len() as f64;
    Ok((0..first.len())
        .map(|k| patterns.iter().map(|p| p[k]).sum::<f64>() / n)
        .collect())
}

/// Mean power over the in-lobe angles of `desired`.
pub fn in_lobe_power(pattern: &[f64], desired: &DesiredBeampattern) -> f64 {
    let mask = desired.in_lobe_mask();
    let (sum, count) = pattern
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, c), (p, _)| (s + p, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::AngleGrid;
    use crate::nullspace::generate_channel_seeded;
    use approx::assert_abs_diff_eq;

    fn two_lobe() -> DesiredBeampattern {
        DesiredBeampattern::from_lobes(AngleGrid::uniform(1.0).unwrap(), &[(-60.0, -40.0), (40.0, 60.0)], 10.0).unwrap()
    }

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            max_iters: 200,
            restarts: 1,
            ..OptimizerConfig::default()
        }
    }

    fn five_channels(n_bs: usize, seed: u64) -> Vec<InterferenceChannel> {
        (0..5).map(|i| generate_channel_seeded(i, n_bs, 10, seed + i as u64).unwrap()).collect()
    }

    #[test]
    fn empty_channel_list_rejected() {
        let cfg = StationaryConfig { optimizer: quick(), samples: 10, alpha: None };
        assert!(stationary_design(&[], &two_lobe(), &cfg, 0).is_err());
        assert!(moving_design_from_pattern(&[], &two_lobe(), &quick(), 10, 0).is_err());
    }

    #[test]
    fn zero_channel_stationary_matches_plain_design() {
        let desired = two_lobe();
        let cfg = StationaryConfig { optimizer: quick(), samples: 20_000, alpha: None };
        let chans = [InterferenceChannel::zero(0, 3, 10)];
        let res = stationary_design(&chans, &desired, &cfg, 11).unwrap();
        let plain = optimize(&desired, 10, &quick(), seed::derive(11, &[seed::stream::OPTIMIZER, 0])).unwrap();
        assert_abs_diff_eq!(res.alpha(), plain.params.alpha(), epsilon = 1e-9);
        let rel = (res.per_bs_costs[0] - plain.cost()).abs() / plain.cost();
        assert!(rel < 0.05, "{} vs {}", res.per_bs_costs[0], plain.cost());
        assert_eq!(res.optimizer_runs, 1);
    }

    #[test]
    fn stationary_selects_argmin_and_nulls_interference() {
        let desired = two_lobe();
        let cfg = StationaryConfig { optimizer: quick(), samples: 100, alpha: Some(2.5) };
        let chans = five_channels(3, 40);
        let res = stationary_design(&chans, &desired, &cfg, 3).unwrap();
        assert_eq!(res.optimizer_runs, 5);
        assert_eq!(res.converged.len(), 5);
        assert!(res.per_bs_costs.iter().all(|c| c.is_finite() && res.selected_cost() <= *c));
        assert_eq!(res.selection_metric, res.per_bs_costs);
        assert!(res.alphas.iter().all(|a| *a == 2.5));
        assert!(res.leakage < 1e-8);
        assert!(res.envelope_error < 1e-12);
        assert!(res.achieved_beampattern.iter().all(|p| *p >= -1e-8));
        assert_eq!(res.transmitted.kind(), WaveformKind::Projected);
    }

    #[test]
    fn moving_zero_channel_leaves_waveform() {
        let desired = two_lobe();
        let res = moving_design_from_pattern(&[InterferenceChannel::zero(0, 2, 6)], &desired, &quick(), 50, 1).unwrap();
        assert_eq!(res.selection_metric, vec![0.0]);
        assert_eq!(res.optimizer_runs, 1);
        let design = optimize(&desired, 6, &quick(), seed::derive(1, &[seed::stream::OPTIMIZER])).unwrap();
        let z = generate_qpsk_waveform(&design.gaussian, 50, seed::derive(1, &[seed::stream::WAVEFORM])).unwrap();
        assert_eq!(res.transmitted.samples(), z.samples());
    }

    #[test]
    fn moving_selects_least_distortion() {
        let desired = two_lobe();
        let design = optimize(&desired, 10, &quick(), 5).unwrap();
        let z = generate_qpsk_waveform(&design.gaussian, 100, 6).unwrap();
        let chans: Vec<_> = [7, 3, 5]
            .iter()
            .enumerate()
            .map(|(i, n)| generate_channel_seeded(i, *n, 10, 90 + i as u64).unwrap())
            .collect();
        let res = moving_design(&chans, &z, &desired, design.params.alpha()).unwrap();
        let min = res.selection_metric.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(res.selection_metric[res.selected], min);
        assert_eq!(res.optimizer_runs, 0);
        assert!(res.leakage < 1e-8);

        let projected = WaveformMatrix::new(res.transmitted.samples().clone(), WaveformKind::Projected).unwrap();
        assert!(moving_design(&chans, &projected, &desired, 1.0).is_err());
    }

    #[test]
    fn averaging() {
        let a = vec![1.0, 2.0, 4.0];
        assert_eq!(average_beampattern(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(average_beampattern(&[a.clone(), vec![0.0; 3]]).unwrap(), vec![0.5, 1.0, 2.0]);
        assert!(average_beampattern(&[]).is_err());
        assert!(average_beampattern(&[a, vec![0.0]]).is_err());
    }

    #[test]
    fn in_lobe_power_is_lobe_mean() {
        let desired = two_lobe();
        assert_abs_diff_eq!(in_lobe_power(desired.values(), &desired), 10.0);
    }
}
