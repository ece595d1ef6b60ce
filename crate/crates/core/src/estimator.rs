//! Interchangeable angle-estimation strategies behind one trait.
//!
//! Every strategy consumes a full pilot observation and produces paired
//! AoA/AoD estimates for a requested number of targets. The pencil and NN
//! strategies share the CSI front end (LS estimates, IFFT coarse timing,
//! per-peak snapshots); the MLE strategy evaluates its criterion on the raw
//! observations, pinning delays to the coarse estimates when none are given.
//!
//! Strategies register by name in [`EstimatorRegistry`] and are selected at
//! runtime from configuration.

use std::collections::BTreeMap;

use crate::csi::{detect_peaks, estimate_csi_stack, ifft_rows, snapshot_at_peak, PeakSnapshot};
use crate::error::{CoreError, Result};
use crate::mle::{mle_grid_search, GridSpec};
use crate::model::{generate_pilots, simulate_rx, ScenarioConfig, TargetPath};
use crate::nn::{classify_num_targets, flatten_snapshot, ComplexNetwork, Head};
use crate::pencil::{estimate_2d, EstimateSet, PencilConfig, TargetEstimate};
use crate::tensor::ComplexTensor;

/// One simulated (or captured) pilot block: everything an estimator may use.
#[derive(Debug, Clone)]
pub struct Observation {
    pub scenario: ScenarioConfig,
    pub rx: ComplexTensor,
    pub pilots: ComplexTensor,
}

impl Observation {
    /// Simulate a complete observation for a scenario.
    pub fn simulate(scenario: &ScenarioConfig, targets: &[TargetPath]) -> Result<Self> {
        let pilots = generate_pilots(scenario)?;
        let rx = simulate_rx(scenario, targets, &pilots)?;
        Ok(Self {
            scenario: scenario.clone(),
            rx,
            pilots,
        })
    }
}

/// A named angle-estimation strategy.
pub trait AngleEstimator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Estimate `num_targets` paired angles from one observation.
    fn estimate(&self, obs: &Observation, num_targets: usize) -> Result<EstimateSet>;
}

/// Split `total` targets over detected peaks proportionally to peak energy
/// (largest remainder, ties toward the earlier bin). Peaks may receive zero.
pub fn assign_targets_to_peaks(energies: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = energies.iter().sum();
    let usable = sum.is_finite() && sum > 0.0;
    if energies.is_empty() || !usable {
        let mut out = vec![0; energies.len()];
        if let Some(first) = out.first_mut() {
            *first = total;
        }
        return out;
    }
    let shares: Vec<f64> = energies.iter().map(|e| e / sum * total as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for idx in order.into_iter().cycle().take(total - assigned) {
        counts[idx] += 1;
    }
    counts
}

/// Run the shared front end and return per-peak snapshots with their target
/// counts filled in (zero-count peaks are dropped).
pub fn frontend_snapshots(obs: &Observation, num_targets: usize) -> Result<Vec<PeakSnapshot>> {
    let stack = estimate_csi_stack(&obs.rx, &obs.pilots)?;
    let time_domain = ifft_rows(&stack);
    let detection = detect_peaks(&time_domain, num_targets)?;
    let energies: Vec<f64> = detection
        .bins
        .iter()
        .map(|&k| {
            (0..time_domain.nrows())
                .map(|r| time_domain[(r, k)].norm_sqr())
                .sum()
        })
        .collect();
    let counts = assign_targets_to_peaks(&energies, num_targets);
    let mut snapshots = Vec::new();
    for (&bin, &count) in detection.bins.iter().zip(&counts) {
        if count == 0 {
            continue;
        }
        let mut snap = snapshot_at_peak(&stack, bin, &obs.scenario)?;
        snap.est_num_targets = count;
        snapshots.push(snap);
    }
    Ok(snapshots)
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// Block-Hankel matrix-pencil strategy.
#[derive(Debug, Clone, Default)]
pub struct PencilEstimator {
    /// Explicit sub-array sizes; `None` derives defaults per scenario.
    pub config: Option<PencilConfig>,
}

impl AngleEstimator for PencilEstimator {
    fn name(&self) -> &'static str {
        "pencil"
    }

    fn estimate(&self, obs: &Observation, num_targets: usize) -> Result<EstimateSet> {
        let scenario = &obs.scenario;
        let mut targets = Vec::with_capacity(num_targets);
        for snap in frontend_snapshots(obs, num_targets)? {
            let pc = match self.config {
                Some(mut pc) => {
                    pc.num_targets = snap.est_num_targets;
                    pc
                }
                None => {
                    PencilConfig::defaults_for(scenario.n_tx, scenario.n_rx, snap.est_num_targets)
                }
            };
            let est = estimate_2d(&snap.snapshot, &pc, scenario)?;
            targets.extend(est.targets);
        }
        targets.sort_by(|a, b| a.aod_rad.partial_cmp(&b.aod_rad).unwrap());
        Ok(EstimateSet { targets })
    }
}

/// Complex-NN strategy: one regression model per per-peak target count, plus
/// an optional classifier that overrides the energy-based count assignment.
pub struct NnEstimator {
    pub models: BTreeMap<usize, ComplexNetwork>,
    pub classifier: Option<ComplexNetwork>,
}

impl NnEstimator {
    pub fn new(models: BTreeMap<usize, ComplexNetwork>) -> Self {
        Self {
            models,
            classifier: None,
        }
    }

    pub fn with_classifier(mut self, classifier: ComplexNetwork) -> Self {
        self.classifier = Some(classifier);
        self
    }
}

impl AngleEstimator for NnEstimator {
    fn name(&self) -> &'static str {
        "nn"
    }

    fn estimate(&self, obs: &Observation, num_targets: usize) -> Result<EstimateSet> {
        let mut targets = Vec::with_capacity(num_targets);
        for snap in frontend_snapshots(obs, num_targets)? {
            let count = match &self.classifier {
                Some(clf) => classify_num_targets(clf, &snap.snapshot)?,
                None => snap.est_num_targets,
            };
            let model = self.models.get(&count).ok_or_else(|| {
                CoreError::InvalidArgument(format!("no regression model for {count} targets"))
            })?;
            match model.spec.head {
                Head::Regression { n_out } if n_out == 2 * count => {}
                _ => {
                    return Err(CoreError::InvalidArgument(format!(
                        "model for {count} targets has the wrong head"
                    )))
                }
            }
            let out = model.forward(&flatten_snapshot(&snap.snapshot))?;
            for i in 0..count {
                targets.push(TargetEstimate {
                    aoa_rad: out[i].re,
                    aod_rad: out[count + i].re,
                    gain_mag: f64::NAN,
                    phase_intercept: f64::NAN,
                    clamped: false,
                });
            }
        }
        targets.sort_by(|a, b| a.aod_rad.partial_cmp(&b.aod_rad).unwrap());
        Ok(EstimateSet { targets })
    }
}

/// Grid-search MLE strategy. When the grid pins no delays, the coarse
/// front-end estimates are pinned instead.
#[derive(Debug, Clone)]
pub struct MleEstimator {
    pub grid: GridSpec,
}

impl AngleEstimator for MleEstimator {
    fn name(&self) -> &'static str {
        "mle"
    }

    fn estimate(&self, obs: &Observation, num_targets: usize) -> Result<EstimateSet> {
        let mut grid = self.grid.clone();
        if grid.fixed_delays.is_none() {
            let mut delays = Vec::with_capacity(num_targets);
            for snap in frontend_snapshots(obs, num_targets)? {
                delays.extend(std::iter::repeat_n(snap.coarse_toa_s, snap.est_num_targets));
            }
            grid.fixed_delays = Some(delays);
        }
        mle_grid_search(&obs.rx, &obs.pilots, &grid, num_targets, &obs.scenario)
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Name-keyed strategy registry.
#[derive(Default)]
pub struct EstimatorRegistry {
    entries: BTreeMap<String, Box<dyn AngleEstimator>>,
}

impl EstimatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the model-free built-ins (`pencil`, `mle`).
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(PencilEstimator::default()));
        reg.register(Box::new(MleEstimator {
            grid: GridSpec::default(),
        }));
        reg
    }

    pub fn register(&mut self, estimator: Box<dyn AngleEstimator>) {
        self.entries.insert(estimator.name().to_string(), estimator);
    }

    pub fn get(&self, name: &str) -> Option<&dyn AngleEstimator> {
        self.entries.get(name).map(|b| b.as_ref())
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(|s| s.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::C64;
    use approx::assert_relative_eq;

    fn scenario(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            rng_seed: seed,
            ..ScenarioConfig::default()
        }
    }

    fn target(aoa_deg: f64, aod_deg: f64, bin: usize, cfg: &ScenarioConfig) -> TargetPath {
        TargetPath {
            aoa_rad: aoa_deg.to_radians(),
            aod_rad: aod_deg.to_radians(),
            delay_s: bin as f64 * cfg.bin_delay_s(),
            gain: C64::new(1.0, 0.3),
        }
    }

    #[test]
    fn assignment_is_energy_proportional() {
        assert_eq!(assign_targets_to_peaks(&[100.0, 1.0], 2), vec![2, 0]);
        assert_eq!(assign_targets_to_peaks(&[1.0, 1.0], 2), vec![1, 1]);
        assert_eq!(assign_targets_to_peaks(&[3.0, 1.0], 4), vec![3, 1]);
        assert_eq!(assign_targets_to_peaks(&[1.0], 3), vec![3]);
        assert_eq!(assign_targets_to_peaks(&[0.0, 0.0], 2), vec![2, 0]);
    }

    #[test]
    fn registry_lookup_and_names() {
        let reg = EstimatorRegistry::with_builtins();
        assert_eq!(reg.names(), vec!["mle", "pencil"]);
        assert!(reg.get("pencil").is_some());
        assert_eq!(reg.get("pencil").unwrap().name(), "pencil");
        assert!(reg.get("does-not-exist").is_none());
    }

    #[test]
    fn pencil_strategy_recovers_shared_bin_targets() {
        let cfg = scenario(41);
        let t1 = target(10.0, -20.0, 5, &cfg);
        let t2 = target(-25.0, 30.0, 5, &cfg);
        let obs = Observation::simulate(&cfg, &[t1, t2]).unwrap();
        let est = PencilEstimator::default().estimate(&obs, 2).unwrap();
        assert_eq!(est.len(), 2);
        assert_relative_eq!(est.targets[0].aod_rad, t1.aod_rad, epsilon = 1e-7);
        assert_relative_eq!(est.targets[0].aoa_rad, t1.aoa_rad, epsilon = 1e-7);
        assert_relative_eq!(est.targets[1].aod_rad, t2.aod_rad, epsilon = 1e-7);
        assert_relative_eq!(est.targets[1].aoa_rad, t2.aoa_rad, epsilon = 1e-7);
    }

    #[test]
    fn pencil_strategy_recovers_separated_bins() {
        let cfg = scenario(42);
        let t1 = target(5.0, -35.0, 3, &cfg);
        let t2 = target(-40.0, 25.0, 9, &cfg);
        let obs = Observation::simulate(&cfg, &[t1, t2]).unwrap();
        let snaps = frontend_snapshots(&obs, 2).unwrap();
        assert_eq!(snaps.len(), 2);
        assert!(snaps.iter().all(|s| s.est_num_targets == 1));
        let est = PencilEstimator::default().estimate(&obs, 2).unwrap();
        assert_relative_eq!(est.targets[0].aod_rad, t1.aod_rad, epsilon = 1e-7);
        assert_relative_eq!(est.targets[1].aod_rad, t2.aod_rad, epsilon = 1e-7);
    }

    #[test]
    fn strategies_dispatch_through_trait_objects() {
        let cfg = scenario(43);
        let t = target(12.0, -8.0, 0, &cfg);
        let obs = Observation::simulate(&cfg, &[t]).unwrap();
        let reg = EstimatorRegistry::with_builtins();
        for name in ["pencil", "mle"] {
            let est = reg.get(name).unwrap().estimate(&obs, 1).unwrap();
            assert_eq!(est.len(), 1, "{name}");
            // mle is grid-quantized: within one 1-degree step
            assert!(
                (est.targets[0].aoa_rad - t.aoa_rad).abs() < 1.1f64.to_radians(),
                "{name}: aoa"
            );
            assert!(
                (est.targets[0].aod_rad - t.aod_rad).abs() < 1.1f64.to_radians(),
                "{name}: aod"
            );
        }
    }
}
