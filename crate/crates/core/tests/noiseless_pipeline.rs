//! End-to-end consistency of simulate -> LS estimate -> stack -> IFFT ->
//! snapshot -> pencil on noiseless scenarios, where every stage is exact.

use bisar_core::csi::{estimate_csi_stack, ifft_rows, snapshot_at_peak};
use bisar_core::estimator::{AngleEstimator, Observation, PencilEstimator};
use bisar_core::model::{channel_matrix, steering_vector, ScenarioConfig, TargetPath};
use bisar_core::pencil::{estimate_2d, PencilConfig};
use bisar_core::rng::derive_rng;
use bisar_core::types::{CMatrix, C64};
use rand::Rng;

fn scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
}

/// Random well-separated targets sharing one delay bin.
fn random_targets<R: Rng>(
    rng: &mut R,
    q: usize,
    bin: usize,
    cfg: &ScenarioConfig,
) -> Vec<TargetPath> {
    let min_sep = 0.17; // ~10 degrees
    let mut aoas: Vec<f64> = Vec::new();
    let mut aods: Vec<f64> = Vec::new();
    while aoas.len() < q {
        let theta = rng.gen_range(-1.0..1.0);
        let phi = rng.gen_range(-1.0..1.0);
        if aoas.iter().all(|&a: &f64| (a - theta).abs() > min_sep)
            && aods.iter().all(|&a: &f64| (a - phi).abs() > min_sep)
        {
            aoas.push(theta);
            aods.push(phi);
        }
    }
    (0..q)
        .map(|i| TargetPath {
            aoa_rad: aoas[i],
            aod_rad: aods[i],
            delay_s: bin as f64 * cfg.bin_delay_s(),
            gain: C64::new(rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0)),
        })
        .collect()
}

/// Direct construction of the angle structure at one bin.
fn direct_snapshot(cfg: &ScenarioConfig, targets: &[TargetPath]) -> CMatrix {
    let mut h = CMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for t in targets {
        let a_r = steering_vector(t.aoa_rad, cfg.n_rx, cfg.element_spacing_rx).unwrap();
        let a_t = steering_vector(t.aod_rad, cfg.n_tx, cfg.element_spacing_tx).unwrap();
        let g = t.composite_gain(cfg);
        for c in 0..cfg.n_tx {
            for r in 0..cfg.n_rx {
                h[(r, c)] += g * a_r[r] * a_t[c];
            }
        }
    }
    h
}

#[test]
fn noiseless_chain_reproduces_angle_structure() {
    let cfg = scenario(101);
    let mut rng = derive_rng(7, 0, "pipeline");
    for trial in 0..5 {
        let bin = 3 + trial;
        let targets = random_targets(&mut rng, 2, bin, &cfg);
        let obs = Observation::simulate(&cfg, &targets).unwrap();
        let stack = estimate_csi_stack(&obs.rx, &obs.pilots).unwrap();
        let snap = snapshot_at_peak(&stack, bin, &cfg).unwrap();
        let want = direct_snapshot(&cfg, &targets);
        let rel = (&snap.snapshot - &want).norm() / want.norm();
        assert!(rel < 1e-9, "trial {trial}: relative error {rel:.3e}");
    }
}

#[test]
fn noiseless_estimates_are_exact_for_one_to_three_targets() {
    let cfg = scenario(102);
    let mut rng = derive_rng(8, 0, "pipeline");
    for q in 1..=3 {
        for trial in 0..10 {
            let targets = random_targets(&mut rng, q, 4, &cfg);
            let obs = Observation::simulate(&cfg, &targets).unwrap();
            let stack = estimate_csi_stack(&obs.rx, &obs.pilots).unwrap();
            let snap = snapshot_at_peak(&stack, 4, &cfg).unwrap();
            let pc = PencilConfig::defaults_for(cfg.n_tx, cfg.n_rx, q);
            let est = estimate_2d(&snap.snapshot, &pc, &cfg).unwrap();
            // match estimates to truth by nearest AoD
            for tgt in &targets {
                let best = est
                    .targets
                    .iter()
                    .min_by(|a, b| {
                        (a.aod_rad - tgt.aod_rad)
                            .abs()
                            .partial_cmp(&(b.aod_rad - tgt.aod_rad).abs())
                            .unwrap()
                    })
                    .unwrap();
                assert!(
                    (best.aod_rad - tgt.aod_rad).abs() < 1e-6,
                    "q={q} trial={trial}: aod error {:.3e}",
                    (best.aod_rad - tgt.aod_rad).abs()
                );
                assert!(
                    (best.aoa_rad - tgt.aoa_rad).abs() < 1e-6,
                    "q={q} trial={trial}: aoa error {:.3e}",
                    (best.aoa_rad - tgt.aoa_rad).abs()
                );
                assert!((best.gain_mag - tgt.composite_gain(&cfg).norm()).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn intermediate_case_splits_rank_across_peaks() {
    // three targets, two in one bin and one in another: the front end assigns
    // p = 2 and p = 1 and the pencil runs at the matching rank
    let cfg = scenario(103);
    let mut rng = derive_rng(9, 0, "pipeline");
    let mut targets = random_targets(&mut rng, 2, 3, &cfg);
    targets.push(TargetPath {
        aoa_rad: 0.9,
        aod_rad: -0.8,
        delay_s: 9.0 * cfg.bin_delay_s(),
        gain: C64::new(1.0, -0.2),
    });
    let obs = Observation::simulate(&cfg, &targets).unwrap();
    let snaps = bisar_core::estimator::frontend_snapshots(&obs, 3).unwrap();
    // the shared bin holds roughly twice the energy of the lone bin
    let counts: Vec<(usize, usize)> = snaps
        .iter()
        .map(|s| (s.bin_index, s.est_num_targets))
        .collect();
    assert!(counts.contains(&(3, 2)), "counts {counts:?}");
    assert!(counts.contains(&(9, 1)), "counts {counts:?}");

    let est = PencilEstimator::default().estimate(&obs, 3).unwrap();
    assert_eq!(est.len(), 3);
    for tgt in &targets {
        let best = est
            .targets
            .iter()
            .map(|e| (e.aoa_rad - tgt.aoa_rad).hypot(e.aod_rad - tgt.aod_rad))
            .fold(f64::INFINITY, f64::min);
        assert!(
            best < 1e-6,
            "target at ({}, {}) missed: {best:.3e}",
            tgt.aoa_rad,
            tgt.aod_rad
        );
    }
}

#[test]
fn off_bin_delay_still_peaks_at_nearest_bin() {
    // leakage tolerated; coarse timing stays coarse
    let cfg = scenario(104);
    let target = TargetPath {
        aoa_rad: 0.2,
        aod_rad: -0.3,
        delay_s: 5.3 * cfg.bin_delay_s(),
        gain: C64::new(1.0, 0.0),
    };
    let obs = Observation::simulate(&cfg, &[target]).unwrap();
    let stack = estimate_csi_stack(&obs.rx, &obs.pilots).unwrap();
    let h = ifft_rows(&stack);
    let det = bisar_core::csi::detect_peaks(&h, 1).unwrap();
    assert_eq!(det.bins, vec![5]);
}

#[test]
fn ls_noiseless_equals_truth_at_every_subcarrier() {
    let cfg = scenario(105);
    let mut rng = derive_rng(10, 0, "pipeline");
    let targets = random_targets(&mut rng, 2, 2, &cfg);
    let obs = Observation::simulate(&cfg, &targets).unwrap();
    for n in [1, 17, 64] {
        let est = bisar_core::csi::ls_channel_estimate(&obs.rx, &obs.pilots, n).unwrap();
        let truth = channel_matrix(&cfg, &targets, n).unwrap();
        let rel = (est - &truth).norm() / truth.norm();
        assert!(rel < 1e-10, "subcarrier {n}: {rel:.3e}");
    }
}
