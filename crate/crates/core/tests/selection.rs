//! Monte-Carlo checks that a larger null space wins the selection.

use qpsk_nsp::array_model::{AngleGrid, DesiredBeampattern};
use qpsk_nsp::covariance_synthesis::{optimize, OptimizerConfig};
use qpsk_nsp::nullspace::generate_channel_seeded;
use qpsk_nsp::seed;
use qpsk_nsp::sharing::{moving_design, stationary_design, StationaryConfig};
use qpsk_nsp::waveform_gen::generate_qpsk_waveform;

const TRIALS: u64 = 100;

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

#[test]
fn stationary_prefers_small_base_station() {
    let desired = two_lobe();
    let alpha = optimize(&desired, 10, &quick(), 1).unwrap().params.alpha();
    let cfg = StationaryConfig { optimizer: quick(), samples: 100, alpha: Some(alpha) };
    let mut small_wins = 0;
    for t in 0..TRIALS {
        let s = seed::derive(77, &[t]);
        let chans = [
            generate_channel_seeded(0, 3, 10, seed::derive(s, &[0])).unwrap(),
            generate_channel_seeded(1, 9, 10, seed::derive(s, &[1])).unwrap(),
        ];
        let res = stationary_design(&chans, &desired, &cfg, s).unwrap();
        small_wins += usize::from(res.selected_bs_id == 0);
    }
    assert!(small_wins >= 90, "3-antenna station chosen in {small_wins} of {TRIALS}");
}

#[test]
fn moving_prefers_small_base_station() {
    let desired = two_lobe();
    let design = optimize(&desired, 10, &quick(), 2).unwrap();
    let mut small_wins = 0;
    for t in 0..TRIALS {
        let s = seed::derive(78, &[t]);
        let z = generate_qpsk_waveform(&design.gaussian, 100, seed::derive(s, &[9])).unwrap();
        let chans: Vec<_> = [3, 5, 7]
            .iter()
            .enumerate()
            .map(|(i, n)| generate_channel_seeded(i, *n, 10, seed::derive(s, &[i as u64])).unwrap())
            .collect();
        let res = moving_design(&chans, &z, &desired, design.params.alpha()).unwrap();
        assert!(res.leakage < 1e-8);
        small_wins += usize::from(res.selected_bs_id == 0);
    }
    assert!(small_wins >= 80, "3-antenna station chosen in {small_wins} of {TRIALS}");
}
