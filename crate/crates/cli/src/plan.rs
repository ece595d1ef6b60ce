//! Experiment plans and result tables.

use serde::{Deserialize, Serialize};

use bisar_core::error::{CoreError, Result};
use bisar_core::model::{ScenarioConfig, ScenarioFile};

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MseSweep,
    CrbSweep,
    BetaSweep,
    Classify,
    Complexity,
    Train,
    MleCompare,
}

/// Everything a Monte Carlo experiment needs; hashing the plan (plus its
/// scenario) gives the config hash stamped into every result file.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub snr_list_db: Vec<f64>,
    pub trials: usize,
    pub estimator: String,
    pub num_targets: usize,
    pub seed: u64,
    pub scenario: ScenarioFile,
}

impl ExperimentPlan {
    pub fn new(kind: ExperimentKind, scenario: &ScenarioConfig) -> Self {
        Self {
            kind,
            snr_list_db: vec![20.0],
            trials: 100,
            estimator: "pencil".to_string(),
            num_targets: 1,
            seed: 0,
            scenario: ScenarioFile::from_config(scenario, &[]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(CoreError::InvalidArgument("trials must be >= 1".into()));
        }
        if self.snr_list_db.is_empty() {
            return Err(CoreError::InvalidArgument("SNR list is empty".into()));
        }
        if self.num_targets < 1 {
            return Err(CoreError::InvalidArgument(
                "num_targets must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a hash of the serialized plan, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// One measured point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Sweep variable (SNR in dB, beamwidth, ...).
    pub sweep: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Result rows plus the plan hash they were produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub config_hash: String,
}

impl ResultTable {
    pub fn metric_at(&self, metric: &str, sweep: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && (r.sweep - sweep).abs() < 1e-9)
            .map(|r| r.value)
    }

    /// All sweep values carrying a given metric, in row order.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.sweep, r.value))
            .collect()
    }
}

/// Streaming mean/variance; pushed in deterministic trial order.
#[derive(Debug, Clone, Default)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / ((self.n - 1) as f64 * self.n as f64)).sqrt()
    }
}
