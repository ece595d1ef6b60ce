//! Deterministic single-threaded training loop.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::derive_rng;

use super::adam::AdamState;
use super::layer::ComplexBatch;
use super::loss::{cross_entropy_with_grad, sorted_mse_with_grad};
use super::network::{ComplexNetwork, Head};

/// Training schedule. The learning rate starts at `base_lr` and is multiplied
/// by `factor` at each `(epoch, factor)` entry of `lr_drops` (1-based epochs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_drops: Vec<(usize, f64)>,
    pub batch_size: usize,
    /// SNRs the training set mixes; carried as metadata alongside the run.
    pub train_snrs_db: Vec<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(CoreError::InvalidArgument(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        if self
            .lr_drops
            .iter()
            .any(|&(_, f)| !f.is_finite() || f <= 0.0)
        {
            return Err(CoreError::InvalidArgument("lr factors must be > 0".into()));
        }
        Ok(())
    }

    /// Learning rate in force during a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut lr = self.base_lr;
        for &(drop_epoch, factor) in &self.lr_drops {
            if epoch >= drop_epoch {
                lr *= factor;
            }
        }
        lr
    }
}

/// In-memory dataset: complex inputs (one column per sample) and real labels.
/// Regression labels are `2q` sorted angles; classifier labels a single
/// 1-based class index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: ComplexBatch,
    pub labels: DMatrix<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn s_inp(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn label_dim(&self) -> usize {
        self.labels.nrows()
    }

    fn select(&self, indices: &[usize]) -> (ComplexBatch, DMatrix<f64>) {
        let s = self.s_inp();
        let d = self.label_dim();
        let mut batch = ComplexBatch::zeros(s, indices.len());
        let mut labels = DMatrix::zeros(d, indices.len());
        for (j, &idx) in indices.iter().enumerate() {
            for i in 0..s {
                batch.re[(i, j)] = self.inputs.re[(i, idx)];
                batch.im[(i, j)] = self.inputs.im[(i, idx)];
            }
            for i in 0..d {
                labels[(i, j)] = self.labels[(i, idx)];
            }
        }
        (batch, labels)
    }

    fn class_labels(&self) -> Vec<usize> {
        self.labels
            .row(0)
            .iter()
            .map(|&v| v.round() as usize)
            .collect()
    }
}

/// Per-epoch loss history.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Loss of a whole dataset under the current parameters.
pub fn evaluate_loss(net: &ComplexNetwork, data: &Dataset) -> Result<f64> {
    let trace = net.forward_batch(&data.inputs)?;
    let out = trace.output();
    match net.spec.head {
        Head::Regression { .. } => {
            let preds = ComplexNetwork::decode_regression(out);
            let (loss, _) = sorted_mse_with_grad(&preds, &data.labels)?;
            Ok(loss)
        }
        Head::Classifier { .. } => {
            let probs = ComplexNetwork::decode_class_probs(out);
            let (loss, _) = cross_entropy_with_grad(&probs, &data.class_labels())?;
            Ok(loss)
        }
    }
}

/// One optimizer step on one minibatch; returns the batch loss.
pub fn train_batch(
    net: &mut ComplexNetwork,
    adam: &mut AdamState,
    batch: &ComplexBatch,
    labels: &DMatrix<f64>,
    lr: f64,
) -> Result<f64> {
    let trace = net.forward_batch(batch)?;
    let out = trace.output();
    let (loss, grad_out) = match net.spec.head {
        Head::Regression { .. } => {
            let preds = ComplexNetwork::decode_regression(out);
            let (loss, grad_re) = sorted_mse_with_grad(&preds, labels)?;
            (
                loss,
                ComplexBatch {
                    im: DMatrix::zeros(grad_re.nrows(), grad_re.ncols()),
                    re: grad_re,
                },
            )
        }
        Head::Classifier { .. } => {
            let probs = ComplexNetwork::decode_class_probs(out);
            let class_labels: Vec<usize> =
                labels.row(0).iter().map(|&v| v.round() as usize).collect();
            let (loss, grad_logits) = cross_entropy_with_grad(&probs, &class_labels)?;
            let mut grad = ComplexBatch::zeros(out.nrows(), out.ncols());
            for j in 0..out.ncols() {
                for i in 0..out.nrows() {
                    let re = out.re[(i, j)];
                    let im = out.im[(i, j)];
                    let mag = (re * re + im * im).sqrt();
                    if mag > 0.0 {
                        grad.re[(i, j)] = grad_logits[(i, j)] * re / mag;
                        grad.im[(i, j)] = grad_logits[(i, j)] * im / mag;
                    }
                }
            }
            (loss, grad)
        }
    };
    let grads = net.backward(&trace, &grad_out);
    adam.step(net, &grads, lr);
    Ok(loss)
}

/// Full training run. Deterministic for a fixed `(seed, config, dataset)`.
pub fn train(
    net: &mut ComplexNetwork,
    train_data: &Dataset,
    val_data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(CoreError::InvalidArgument("empty training set".into()));
    }
    let mut adam = AdamState::new(net);
    let mut report = TrainReport::default();
    let n = train_data.len();
    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = derive_rng(config.seed, epoch as u64, "shuffle");
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let (batch, labels) = train_data.select(chunk);
            let loss = train_batch(net, &mut adam, &batch, &labels, lr)?;
            if !loss.is_finite() {
                return Err(CoreError::Diverged { epoch });
            }
        }
        let train_loss = evaluate_loss(net, train_data)?;
        let val_loss = if val_data.is_empty() {
            f64::NAN
        } else {
            evaluate_loss(net, val_data)?
        };
        if !train_loss.is_finite() {
            return Err(CoreError::Diverged { epoch });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::NetworkSpec;
    use crate::rng::{complex_gaussian, derive_rng};

    fn toy_regression_dataset(n: usize, s: usize, seed: u64) -> Dataset {
        let mut rng = derive_rng(seed, 0, "toy-data");
        let mut inputs = ComplexBatch::zeros(s, n);
        let mut labels = DMatrix::zeros(2, n);
        for j in 0..n {
            let mut sum = 0.0;
            for i in 0..s {
                let z = complex_gaussian(&mut rng, 1.0);
                inputs.re[(i, j)] = z.re;
                inputs.im[(i, j)] = z.im;
                sum += z.re;
            }
            // a deterministic smooth label pair
            labels[(0, j)] = (sum / s as f64).tanh() * 0.5;
            labels[(1, j)] = (sum / s as f64).sin() * 0.3;
        }
        Dataset { inputs, labels }
    }

    #[test]
    fn zero_lr_freezes_loss_history() {
        let data = toy_regression_dataset(32, 16, 1);
        let mut rng = derive_rng(2, 0, "net");
        let mut net = ComplexNetwork::init(NetworkSpec::regression(16, 1), &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            base_lr: 0.0,
            lr_drops: vec![],
            batch_size: 8,
            train_snrs_db: vec![],
            seed: 3,
        };
        let report = train(&mut net, &data, &data, &cfg).unwrap();
        for w in report.train_loss.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn lr_schedule_applies_drops() {
        let cfg = TrainConfig {
            epochs: 10,
            base_lr: 1e-3,
            lr_drops: vec![(4, 0.5), (8, 0.5)],
            batch_size: 8,
            train_snrs_db: vec![],
            seed: 0,
        };
        assert_eq!(cfg.lr_at(1), 1e-3);
        assert_eq!(cfg.lr_at(4), 5e-4);
        assert_eq!(cfg.lr_at(7), 5e-4);
        assert_eq!(cfg.lr_at(8), 2.5e-4);
    }

    #[test]
    fn single_sample_memorization() {
        let data = toy_regression_dataset(1, 16, 4);
        let mut rng = derive_rng(5, 0, "net");
        let mut net = ComplexNetwork::init(NetworkSpec::regression(16, 1), &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            base_lr: 3e-3,
            lr_drops: vec![],
            batch_size: 1,
            train_snrs_db: vec![],
            seed: 6,
        };
        let report = train(&mut net, &data, &data, &cfg).unwrap();
        let final_loss = *report.train_loss.last().unwrap();
        assert!(final_loss < 1e-6, "memorization loss {final_loss:.3e}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_regression_dataset(24, 16, 7);
        let cfg = TrainConfig {
            epochs: 8,
            base_lr: 1e-3,
            lr_drops: vec![(6, 0.5)],
            batch_size: 6,
            train_snrs_db: vec![5.0, 10.0],
            seed: 8,
        };
        let run = |_| {
            let mut rng = derive_rng(9, 0, "net");
            let mut net = ComplexNetwork::init(NetworkSpec::regression(16, 1), &mut rng).unwrap();
            let report = train(&mut net, &data, &data, &cfg).unwrap();
            (net, report)
        };
        let (n1, r1) = run(0);
        let (n2, r2) = run(1);
        assert_eq!(n1, n2);
        assert_eq!(r1.train_loss, r2.train_loss);
    }
}
