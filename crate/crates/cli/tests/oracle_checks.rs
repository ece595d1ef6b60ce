//! Monte Carlo oracle checks that need the harness calibration machinery:
//! peak-detection rates, MLE hit rates against truth, the CRB bound
//! property, and byte-level reproducibility of result files.

use bisar_cli::experiments::{mean_signal_power, run_mse_sweep, TargetSampler};
use bisar_cli::output::write_result_csv;
use bisar_cli::plan::{ExperimentKind, ExperimentPlan};
use bisar_core::crb::{crb_angles, fim_assemble};
use bisar_core::csi::{detect_peaks, estimate_csi_stack, ifft_rows};
use bisar_core::estimator::{Observation, PencilEstimator};
use bisar_core::mle::{mle_grid_search, GridSpec};
use bisar_core::model::{ScenarioConfig, TargetPath};
use bisar_core::rng::{derive_rng, derive_seed};
use bisar_core::types::C64;

fn noisy_scenario(snr_db: f64, sampler: &TargetSampler, seed: u64) -> (ScenarioConfig, f64) {
    let base = ScenarioConfig::default();
    let power = mean_signal_power(&base, sampler, seed, 64).unwrap();
    let sigma2 = power / 10f64.powf(snr_db / 10.0);
    (base, sigma2)
}

#[test]
fn peak_detection_rate_at_20db() {
    // two well-separated delay bins; both must be found in >= 99% of trials
    let sampler = TargetSampler::for_scene(2);
    let (base, sigma2) = noisy_scenario(20.0, &sampler, 404);
    let trials = 1000;
    let mut hits = 0;
    for t in 0..trials {
        let tseed = derive_seed(404, t, "peak-trial");
        let mut rng = derive_rng(tseed, 0, "targets");
        let mut targets = sampler.sample(&mut rng, &base);
        targets[0].delay_s = 3.0 * base.bin_delay_s();
        targets[1].delay_s = 9.0 * base.bin_delay_s();
        let cfg = ScenarioConfig {
            noise_var: sigma2,
            rng_seed: derive_seed(tseed, 0, "sim"),
            ..base.clone()
        };
        let obs = Observation::simulate(&cfg, &targets).unwrap();
        let stack = estimate_csi_stack(&obs.rx, &obs.pilots).unwrap();
        let det = detect_peaks(&ifft_rows(&stack), 2).unwrap();
        if det.bins == vec![3, 9] {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    assert!(rate >= 0.99, "detection rate {rate:.3} < 0.99");
}

#[test]
fn mle_lands_within_one_grid_step_of_truth() {
    // q = 1, 20 dB, 1-degree grid with delay and gain pinned to truth:
    // |theta_hat - theta| within one step in >= 95% of 200 trials
    let sampler = TargetSampler::for_scene(1);
    let (base, sigma2) = noisy_scenario(20.0, &sampler, 505);
    let step = std::f64::consts::PI / 180.0;
    let trials = 200;
    let mut hits = 0;
    for t in 0..trials {
        let tseed = derive_seed(505, t, "mle-trial");
        let mut rng = derive_rng(tseed, 0, "targets");
        let targets = sampler.sample(&mut rng, &base);
        let cfg = ScenarioConfig {
            noise_var: sigma2,
            rng_seed: derive_seed(tseed, 0, "sim"),
            ..base.clone()
        };
        let obs = Observation::simulate(&cfg, &targets).unwrap();
        let grid = GridSpec {
            fixed_delays: Some(vec![targets[0].delay_s]),
            fixed_gains: Some(vec![targets[0].composite_gain(&cfg)]),
            ..GridSpec::default()
        };
        let est = mle_grid_search(&obs.rx, &obs.pilots, &grid, 1, &cfg).unwrap();
        if (est.targets[0].aoa_rad - targets[0].aoa_rad).abs() <= step
            && (est.targets[0].aod_rad - targets[0].aod_rad).abs() <= step
        {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    assert!(rate >= 0.95, "MLE within-one-step rate {rate:.3} < 0.95");
}

#[test]
fn crb_lower_bounds_mle_mse_at_high_snr() {
    let sampler = TargetSampler::for_scene(1);
    let (base, sigma2) = noisy_scenario(25.0, &sampler, 606);
    let trials = 150;
    let mut se_sum = 0.0;
    let mut crb_sum = 0.0;
    for t in 0..trials {
        let tseed = derive_seed(606, t, "bound-trial");
        let mut rng = derive_rng(tseed, 0, "targets");
        let targets = sampler.sample(&mut rng, &base);
        let cfg = ScenarioConfig {
            noise_var: sigma2,
            rng_seed: derive_seed(tseed, 0, "sim"),
            ..base.clone()
        };
        let obs = Observation::simulate(&cfg, &targets).unwrap();
        let grid = GridSpec {
            fixed_delays: Some(vec![targets[0].delay_s]),
            fixed_gains: Some(vec![targets[0].composite_gain(&cfg)]),
            ..GridSpec::default()
        };
        let est = mle_grid_search(&obs.rx, &obs.pilots, &grid, 1, &cfg).unwrap();
        se_sum += (est.targets[0].aoa_rad - targets[0].aoa_rad).powi(2);
        let fim = fim_assemble(&cfg, &targets, &obs.pilots).unwrap();
        let (crb_t, _) = crb_angles(&fim).unwrap();
        crb_sum += crb_t[(0, 0)];
    }
    let mse = se_sum / trials as f64;
    let crb = crb_sum / trials as f64;
    assert!(
        mse >= crb,
        "grid MLE MSE {mse:.3e} beats the CRB {crb:.3e}; bound violated"
    );
}

#[test]
fn pencil_mse_tracks_crb_within_12db_and_declines() {
    let mut plan = ExperimentPlan::new(ExperimentKind::MseSweep, &ScenarioConfig::default());
    plan.snr_list_db = vec![10.0, 20.0, 30.0];
    plan.trials = 150;
    plan.seed = 99;
    plan.num_targets = 1;
    let table = run_mse_sweep(&plan, &PencilEstimator::default()).unwrap();
    let mse = table.series("aoa_mse");
    for w in mse.windows(2) {
        assert!(w[1].1 < w[0].1, "AoA MSE not declining: {mse:?}");
    }
    for &(snr, value) in &mse {
        let crb = table.metric_at("crb_aoa", snr).unwrap();
        assert!(value >= crb, "MSE below the CRB at {snr} dB");
        let gap_db = 10.0 * (value / crb).log10();
        assert!(gap_db <= 12.0, "MSE {gap_db:.1} dB above CRB at {snr} dB");
    }
}

#[test]
fn result_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = ExperimentPlan::new(ExperimentKind::MseSweep, &ScenarioConfig::default());
    plan.snr_list_db = vec![10.0, 20.0];
    plan.trials = 20;
    plan.seed = 3;
    let paths: Vec<_> = (0..2)
        .map(|i| {
            let table = run_mse_sweep(&plan, &PencilEstimator::default()).unwrap();
            let path = dir.path().join(format!("run{i}.csv"));
            write_result_csv(&table, &path).unwrap();
            path
        })
        .collect();
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    assert_eq!(a, b, "identical plans should produce byte-identical CSV");
}

#[test]
fn snr_calibration_matches_empirical_snr() {
    // empirical received SNR matches the configured value within 0.2 dB
    let sampler = TargetSampler::for_scene(1);
    let (base, sigma2) = noisy_scenario(15.0, &sampler, 808);
    let mut signal = 0.0;
    let mut count = 0usize;
    for t in 0..200 {
        let tseed = derive_seed(808, t, "emp-trial");
        let mut rng = derive_rng(tseed, 0, "targets");
        let targets = sampler.sample(&mut rng, &base);
        let cfg = ScenarioConfig {
            noise_var: 0.0,
            rng_seed: derive_seed(tseed, 0, "sim"),
            ..base.clone()
        };
        let obs = Observation::simulate(&cfg, &targets).unwrap();
        for z in obs.rx.data() {
            signal += z.norm_sqr();
            count += 1;
        }
    }
    let snr_emp = 10.0 * ((signal / count as f64) / sigma2).log10();
    assert!(
        (snr_emp - 15.0).abs() < 0.2,
        "empirical SNR {snr_emp:.3} dB vs configured 15 dB"
    );
}

#[test]
fn nn_and_pencil_share_one_registry_surface() {
    // the registry drives both model-free strategies over the same trait
    let registry = bisar_core::estimator::EstimatorRegistry::with_builtins();
    let cfg = ScenarioConfig {
        rng_seed: 12,
        ..ScenarioConfig::default()
    };
    let target = TargetPath {
        aoa_rad: 0.2,
        aod_rad: -0.3,
        delay_s: 2.0 * cfg.bin_delay_s(),
        gain: C64::new(1.0, 0.0),
    };
    let obs = Observation::simulate(&cfg, &[target]).unwrap();
    for name in registry.names() {
        let est = registry.get(name).unwrap().estimate(&obs, 1).unwrap();
        assert_eq!(est.len(), 1, "{name}");
    }
}

#[test]
fn dataset_snr_balance_is_exact_for_divisible_totals() {
    use bisar_cli::experiments::{generate_dataset, DatasetArgs, DatasetKind};
    let args = DatasetArgs {
        kind: DatasetKind::Regression { num_targets: 1 },
        total: 700,
        snr_list_db: (0..7).map(|i| 5.0 * i as f64 + 5.0).collect(),
        seed: 2,
        scenario: bisar_core::model::ScenarioFile::from_config(&ScenarioConfig::default(), &[]),
    };
    let (_, meta) = generate_dataset(&args).unwrap();
    assert_eq!(meta.cell_counts, vec![100; 7]);
}
