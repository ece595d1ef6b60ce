//! Complex-valued layers built from pairs of real tensors.
//!
//! A complex linear layer with weights `W = W^r + j W^i` and bias
//! `b = b^r + j b^i` responds to `z = x + j y` with
//! `(W^r x - W^i y + b^r) + j (W^r y + W^i x + b^i)`, which is exactly the
//! real 2x2 block form `[[W^r, -W^i], [W^i, W^r]]` acting on stacked `(x; y)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::types::{CVector, C64};

/// Real/imaginary planes of a batch of complex activations, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBatch {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl ComplexBatch {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            re: DMatrix::zeros(rows, cols),
            im: DMatrix::zeros(rows, cols),
        }
    }

    pub fn from_columns(columns: &[CVector]) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut batch = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for i in 0..rows {
                batch.re[(i, j)] = col[i].re;
                batch.im[(i, j)] = col[i].im;
            }
        }
        batch
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector::from_fn(self.re.nrows(), |i, _| {
            C64::new(self.re[(i, j)], self.im[(i, j)])
        })
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }
}

/// One complex linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexLinearLayer {
    pub w_re: DMatrix<f64>,
    pub w_im: DMatrix<f64>,
    pub b_re: DVector<f64>,
    pub b_im: DVector<f64>,
}

impl ComplexLinearLayer {
    pub fn zeros(s_out: usize, s_in: usize) -> Self {
        Self {
            w_re: DMatrix::zeros(s_out, s_in),
            w_im: DMatrix::zeros(s_out, s_in),
            b_re: DVector::zeros(s_out),
            b_im: DVector::zeros(s_out),
        }
    }

    /// Complex-uniform init scaled by `1/sqrt(S_i)`; zero bias.
    pub fn init<R: Rng>(s_out: usize, s_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (s_in as f64).sqrt();
        let mut sample = || rng.gen_range(-bound..bound);
        Self {
            w_re: DMatrix::from_fn(s_out, s_in, |_, _| sample()),
            w_im: DMatrix::from_fn(s_out, s_in, |_, _| sample()),
            b_re: DVector::zeros(s_out),
            b_im: DVector::zeros(s_out),
        }
    }

    pub fn s_in(&self) -> usize {
        self.w_re.ncols()
    }

    pub fn s_out(&self) -> usize {
        self.w_re.nrows()
    }

    /// Batch forward over the real planes.
    pub fn forward(&self, input: &ComplexBatch) -> ComplexBatch {
        let mut re = &self.w_re * &input.re - &self.w_im * &input.im;
        let mut im = &self.w_re * &input.im + &self.w_im * &input.re;
        for j in 0..re.ncols() {
            for i in 0..re.nrows() {
                re[(i, j)] += self.b_re[i];
                im[(i, j)] += self.b_im[i];
            }
        }
        ComplexBatch { re, im }
    }
}

/// Single-vector complex linear response.
pub fn complex_linear_forward(layer: &ComplexLinearLayer, z_in: &CVector) -> CVector {
    let out = layer.forward(&ComplexBatch::from_columns(std::slice::from_ref(z_in)));
    out.column(0)
}

/// Complex ReLU: ReLU applied independently to real and imaginary parts.
pub fn crelu(z: &CVector) -> CVector {
    z.map(|v| C64::new(v.re.max(0.0), v.im.max(0.0)))
}

/// In-place batch CReLU; returns the masks needed for backprop.
pub fn crelu_batch(batch: &mut ComplexBatch) -> (DMatrix<bool>, DMatrix<bool>) {
    let mask_re = batch.re.map(|v| v > 0.0);
    let mask_im = batch.im.map(|v| v > 0.0);
    batch.re.apply(|v| *v = v.max(0.0));
    batch.im.apply(|v| *v = v.max(0.0));
    (mask_re, mask_im)
}

/// Valid-mode complex convolution realized as four real convolutions:
/// `W*h = (W^r*x - W^i*y) + j(W^i*x + W^r*y)`.
///
/// Output length is `signal_len - filter_len + 1`; output element `i` sums
/// `filter[m] * signal[i + F - 1 - m]` (flipped-kernel convolution).
pub fn complex_conv_forward(filter: &CVector, signal: &CVector) -> CVector {
    let f = filter.len();
    let n = signal.len();
    assert!(f >= 1 && f <= n, "filter must be no longer than the signal");
    let out_len = n - f + 1;

    let conv_real = |a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..out_len)
            .map(|i| (0..f).map(|m| a(m) * b(i + f - 1 - m)).sum())
            .collect()
    };
    let wr = |m: usize| filter[m].re;
    let wi = |m: usize| filter[m].im;
    let x = |k: usize| signal[k].re;
    let y = |k: usize| signal[k].im;

    let rr = conv_real(&wr, &x);
    let ii = conv_real(&wi, &y);
    let ir = conv_real(&wi, &x);
    let ri = conv_real(&wr, &y);

    CVector::from_fn(out_len, |i, _| C64::new(rr[i] - ii[i], ir[i] + ri[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, derive_rng};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_vector(len: usize, seed: u64) -> CVector {
        let mut rng = derive_rng(seed, 0, "layer-test");
        CVector::from_fn(len, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    #[test]
    fn identity_layer_passes_through() {
        let mut layer = ComplexLinearLayer::zeros(3, 3);
        layer.w_re = DMatrix::identity(3, 3);
        let z = random_vector(3, 1);
        let out = complex_linear_forward(&layer, &z);
        assert!((out - z).norm() < 1e-15);
    }

    #[test]
    fn imaginary_identity_rotates_by_ninety_degrees() {
        let mut layer = ComplexLinearLayer::zeros(3, 3);
        layer.w_im = DMatrix::identity(3, 3);
        let z = random_vector(3, 2);
        let out = complex_linear_forward(&layer, &z);
        let want = z.map(|v| v * C64::new(0.0, 1.0));
        assert!((out - want).norm() < 1e-15);
    }

    #[test]
    fn layer_matches_real_block_form() {
        let mut rng = derive_rng(3, 0, "layer-test");
        let (s_out, s_in) = (5, 4);
        let layer = ComplexLinearLayer::init(s_out, s_in, &mut rng);
        let z = random_vector(s_in, 4);
        let out = complex_linear_forward(&layer, &z);

        // block-form oracle: [[Wr, -Wi], [Wi, Wr]] (x; y) + (br; bi)
        let mut block = DMatrix::zeros(2 * s_out, 2 * s_in);
        block.view_mut((0, 0), (s_out, s_in)).copy_from(&layer.w_re);
        block
            .view_mut((0, s_in), (s_out, s_in))
            .copy_from(&(-layer.w_im.clone()));
        block
            .view_mut((s_out, 0), (s_out, s_in))
            .copy_from(&layer.w_im);
        block
            .view_mut((s_out, s_in), (s_out, s_in))
            .copy_from(&layer.w_re);
        let stacked = DVector::from_fn(
            2 * s_in,
            |i, _| if i < s_in { z[i].re } else { z[i - s_in].im },
        );
        let mut want = block * stacked;
        for i in 0..s_out {
            want[i] += layer.b_re[i];
            want[i + s_out] += layer.b_im[i];
        }
        for i in 0..s_out {
            assert_relative_eq!(out[i].re, want[i], max_relative = 1e-12);
            assert_relative_eq!(out[i].im, want[i + s_out], max_relative = 1e-12);
        }
    }

    #[test]
    fn crelu_cases() {
        let z = CVector::from_vec(vec![
            C64::new(1.0, 2.0),
            C64::new(-1.0, -2.0),
            C64::new(-1.0, 2.0),
        ]);
        let out = crelu(&z);
        assert_eq!(out[0], C64::new(1.0, 2.0));
        assert_eq!(out[1], C64::new(0.0, 0.0));
        assert_eq!(out[2], C64::new(0.0, 2.0));
        // idempotent
        assert_eq!(crelu(&out), out);
    }

    #[test]
    fn conv_with_unit_filter_is_identity() {
        let signal = random_vector(6, 5);
        let filter = CVector::from_vec(vec![C64::new(1.0, 0.0)]);
        let out = complex_conv_forward(&filter, &signal);
        assert!((out - signal).norm() < 1e-15);
    }

    #[test]
    fn real_conv_of_real_signal_stays_real() {
        let mut rng = derive_rng(6, 0, "conv");
        let signal = CVector::from_fn(8, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0));
        let filter = CVector::from_fn(3, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0));
        let out = complex_conv_forward(&filter, &signal);
        for v in out.iter() {
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn conv_matches_naive_complex_sum() {
        let signal = random_vector(8, 7);
        let filter = random_vector(3, 8);
        let out = complex_conv_forward(&filter, &signal);
        let f = filter.len();
        for i in 0..out.len() {
            let mut want = C64::new(0.0, 0.0);
            for m in 0..f {
                want += filter[m] * signal[i + f - 1 - m];
            }
            assert!((out[i] - want).norm() < 1e-12);
        }
    }
}
