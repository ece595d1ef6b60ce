//! Feed-forward complex network: three CReLU hidden layers plus a linear
//! complex output layer. Backpropagation treats every complex layer as its
//! real 2x2 block form, so gradients are taken with respect to all four real
//! parameter tensors of each layer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::types::{CMatrix, CVector, C64};

use super::layer::{crelu_batch, ComplexBatch, ComplexLinearLayer};

/// Output head of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// `n_out` real outputs decoded as the real parts of the final complex
    /// neurons; for joint angle regression `n_out = 2q`, ordered
    /// `(theta_1..theta_q, phi_1..phi_q)`.
    Regression { n_out: usize },
    /// Softmax over the magnitudes of `n_classes` output neurons.
    Classifier { n_classes: usize },
}

impl Head {
    pub fn n_out(&self) -> usize {
        match *self {
            Head::Regression { n_out } => n_out,
            Head::Classifier { n_classes } => n_classes,
        }
    }
}

/// Architecture description: input size, the three hidden widths, and head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub hidden: [usize; 3],
    pub head: Head,
}

impl NetworkSpec {
    fn standard_hidden(input_size: usize) -> [usize; 3] {
        [input_size / 2, input_size / 4, input_size / 8]
    }

    /// Angle-regression network for `q` targets per peak.
    pub fn regression(input_size: usize, q: usize) -> Self {
        Self {
            input_size,
            hidden: Self::standard_hidden(input_size),
            head: Head::Regression { n_out: 2 * q },
        }
    }

    /// Target-count classifier with five classes.
    pub fn classifier(input_size: usize) -> Self {
        Self {
            input_size,
            hidden: Self::standard_hidden(input_size),
            head: Head::Classifier { n_classes: 5 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 8 {
            return Err(CoreError::InvalidArgument(
                "input too small for the /2,/4,/8 hidden chain".into(),
            ));
        }
        if self.hidden.iter().any(|&h| h < 1) || self.head.n_out() < 1 {
            return Err(CoreError::InvalidArgument(
                "layer sizes must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Layer dimension chain `(s_in, s_out)` for all four layers.
    pub fn layer_dims(&self) -> [(usize, usize); 4] {
        [
            (self.input_size, self.hidden[0]),
            (self.hidden[0], self.hidden[1]),
            (self.hidden[1], self.hidden[2]),
            (self.hidden[2], self.head.n_out()),
        ]
    }
}

/// The network itself: layers plus the spec it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexNetwork {
    pub spec: NetworkSpec,
    pub layers: Vec<ComplexLinearLayer>,
}

/// Per-layer parameter gradients, mirroring the layer storage.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w_re: DMatrix<f64>,
    pub w_im: DMatrix<f64>,
    pub b_re: DVector<f64>,
    pub b_im: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

/// Cached intermediate activations from one batch forward pass.
pub struct ForwardTrace {
    /// Layer inputs; `inputs[i]` feeds layer `i`, length `L + 1` (last is the output).
    pub inputs: Vec<ComplexBatch>,
    /// CReLU masks for each hidden layer.
    masks: Vec<(DMatrix<bool>, DMatrix<bool>)>,
}

impl ForwardTrace {
    pub fn output(&self) -> &ComplexBatch {
        self.inputs.last().expect("trace holds the output")
    }
}

impl ComplexNetwork {
    pub fn init<R: Rng>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(s_in, s_out)| ComplexLinearLayer::init(s_out, s_in, rng))
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Batch forward pass keeping everything backprop needs.
    pub fn forward_batch(&self, input: &ComplexBatch) -> Result<ForwardTrace> {
        if input.nrows() != self.spec.input_size {
            return Err(CoreError::InvalidArgument(format!(
                "input rows {} != network input size {}",
                input.nrows(),
                self.spec.input_size
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = vec![input.clone()];
        let mut masks = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(inputs.last().unwrap());
            if i < last {
                masks.push(crelu_batch(&mut z));
            }
            inputs.push(z);
        }
        Ok(ForwardTrace { inputs, masks })
    }

    /// Forward a single complex vector; returns the raw complex output neurons.
    pub fn forward(&self, input: &CVector) -> Result<CVector> {
        let trace = self.forward_batch(&ComplexBatch::from_columns(std::slice::from_ref(input)))?;
        Ok(trace.output().column(0))
    }

    /// Backpropagate output-plane gradients through the trace.
    ///
    /// `grad_out` holds `dL/d(re z_L)` and `dL/d(im z_L)`.
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &ComplexBatch) -> Gradients {
        let last = self.layers.len() - 1;
        let mut g_re = grad_out.re.clone();
        let mut g_im = grad_out.im.clone();
        let mut layers: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if i < last {
                // gradient through the CReLU of layer i's output
                let (mask_re, mask_im) = &trace.masks[i];
                g_re.zip_apply(mask_re, |g, m| {
                    if !m {
                        *g = 0.0
                    }
                });
                g_im.zip_apply(mask_im, |g, m| {
                    if !m {
                        *g = 0.0
                    }
                });
            }
            let input = &trace.inputs[i];
            let layer = &self.layers[i];
            let w_re = &g_re * input.re.transpose() + &g_im * input.im.transpose();
            let w_im = &g_im * input.re.transpose() - &g_re * input.im.transpose();
            let b_re = DVector::from_fn(g_re.nrows(), |r, _| g_re.row(r).sum());
            let b_im = DVector::from_fn(g_im.nrows(), |r, _| g_im.row(r).sum());
            if i > 0 {
                let next_re = layer.w_re.transpose() * &g_re + layer.w_im.transpose() * &g_im;
                let next_im = layer.w_re.transpose() * &g_im - layer.w_im.transpose() * &g_re;
                g_re = next_re;
                g_im = next_im;
            }
            layers.push(LayerGrads {
                w_re,
                w_im,
                b_re,
                b_im,
            });
        }
        layers.reverse();
        Gradients { layers }
    }

    /// Regression decode: real parts of the output neurons, one column per sample.
    pub fn decode_regression(output: &ComplexBatch) -> DMatrix<f64> {
        output.re.clone()
    }

    /// Classifier decode: softmax over output magnitudes, one column per sample.
    pub fn decode_class_probs(output: &ComplexBatch) -> DMatrix<f64> {
        let rows = output.nrows();
        let cols = output.ncols();
        let mut probs = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            let mags: Vec<f64> = (0..rows)
                .map(|i| C64::new(output.re[(i, j)], output.im[(i, j)]).norm())
                .collect();
            let max = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = mags.iter().map(|m| (m - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for i in 0..rows {
                probs[(i, j)] = exps[i] / sum;
            }
        }
        probs
    }

    /// Total number of real parameters.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 2 * l.w_re.len() + 2 * l.b_re.len())
            .sum()
    }

    /// Read one parameter by flat index (layer-major: w_re, w_im, b_re, b_im).
    pub fn param(&self, index: usize) -> f64 {
        let (l, off) = self.locate(index);
        let layer = &self.layers[l];
        let nw = layer.w_re.len();
        let nb = layer.b_re.len();
        if off < nw {
            layer.w_re.as_slice()[off]
        } else if off < 2 * nw {
            layer.w_im.as_slice()[off - nw]
        } else if off < 2 * nw + nb {
            layer.b_re[off - 2 * nw]
        } else {
            layer.b_im[off - 2 * nw - nb]
        }
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let (l, off) = self.locate(index);
        let layer = &mut self.layers[l];
        let nw = layer.w_re.len();
        let nb = layer.b_re.len();
        if off < nw {
            &mut layer.w_re.as_mut_slice()[off]
        } else if off < 2 * nw {
            &mut layer.w_im.as_mut_slice()[off - nw]
        } else if off < 2 * nw + nb {
            &mut layer.b_re[off - 2 * nw]
        } else {
            &mut layer.b_im[off - 2 * nw - nb]
        }
    }

    /// Gradient value under the same flat indexing as [`Self::param`].
    pub fn grad_at(grads: &Gradients, net: &ComplexNetwork, index: usize) -> f64 {
        let (l, off) = net.locate(index);
        let g = &grads.layers[l];
        let nw = g.w_re.len();
        let nb = g.b_re.len();
        if off < nw {
            g.w_re.as_slice()[off]
        } else if off < 2 * nw {
            g.w_im.as_slice()[off - nw]
        } else if off < 2 * nw + nb {
            g.b_re[off - 2 * nw]
        } else {
            g.b_im[off - 2 * nw - nb]
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let count = 2 * layer.w_re.len() + 2 * layer.b_re.len();
            if index < count {
                return (l, index);
            }
            index -= count;
        }
        panic!("parameter index out of range");
    }
}

/// Flatten a snapshot column-major into the network input vector.
pub fn flatten_snapshot(snapshot: &CMatrix) -> CVector {
    CVector::from_column_slice(snapshot.as_slice())
}

/// Argmax class (1-based) of the classifier head for one snapshot input.
/// Ties break toward the lowest index.
pub fn classify_num_targets(net: &ComplexNetwork, snapshot: &CMatrix) -> Result<usize> {
    match net.spec.head {
        Head::Classifier { .. } => {}
        _ => {
            return Err(CoreError::InvalidArgument(
                "classify_num_targets needs a classifier head".into(),
            ))
        }
    }
    let input = flatten_snapshot(snapshot);
    let trace = net.forward_batch(&ComplexBatch::from_columns(std::slice::from_ref(&input)))?;
    let probs = ComplexNetwork::decode_class_probs(trace.output());
    let mut best = 0;
    for i in 1..probs.nrows() {
        if probs[(i, 0)] > probs[(best, 0)] {
            best = i;
        }
    }
    Ok(best + 1)
}
