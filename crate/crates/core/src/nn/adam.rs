//! Adam optimizer over the network's real parameter tensors.

use nalgebra::{DMatrix, DVector};

use super::network::{ComplexNetwork, Gradients};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// One scalar Adam update. Returns the new moments and the parameter delta.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    m: f64,
    v: f64,
    grad: f64,
    step: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> (f64, f64, f64) {
    let m = beta1 * m + (1.0 - beta1) * grad;
    let v = beta2 * v + (1.0 - beta2) * grad * grad;
    let m_hat = m / (1.0 - beta1.powi(step as i32));
    let v_hat = v / (1.0 - beta2.powi(step as i32));
    (m, v, -lr * m_hat / (v_hat.sqrt() + epsilon))
}

#[derive(Debug, Clone)]
struct Moments {
    w_re: DMatrix<f64>,
    w_im: DMatrix<f64>,
    b_re: DVector<f64>,
    b_im: DVector<f64>,
}

/// First/second moment state with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: usize,
    m: Vec<Moments>,
    v: Vec<Moments>,
}

impl AdamState {
    pub fn new(net: &ComplexNetwork) -> Self {
        let zeros: Vec<Moments> = net
            .layers
            .iter()
            .map(|l| Moments {
                w_re: DMatrix::zeros(l.w_re.nrows(), l.w_re.ncols()),
                w_im: DMatrix::zeros(l.w_im.nrows(), l.w_im.ncols()),
                b_re: DVector::zeros(l.b_re.len()),
                b_im: DVector::zeros(l.b_im.len()),
            })
            .collect();
        Self {
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Apply one Adam step to every parameter of the network.
    pub fn step(&mut self, net: &mut ComplexNetwork, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (l, grad) in grads.layers.iter().enumerate() {
            let layer = &mut net.layers[l];
            let m = &mut self.m[l];
            let v = &mut self.v[l];
            let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                let (nm, nv, delta) = adam_update(*m, *v, g, t, lr, b1, b2, eps);
                *m = nm;
                *v = nv;
                *p += delta;
            };
            for i in 0..layer.w_re.len() {
                apply(
                    &mut layer.w_re.as_mut_slice()[i],
                    &mut m.w_re.as_mut_slice()[i],
                    &mut v.w_re.as_mut_slice()[i],
                    grad.w_re.as_slice()[i],
                );
                apply(
                    &mut layer.w_im.as_mut_slice()[i],
                    &mut m.w_im.as_mut_slice()[i],
                    &mut v.w_im.as_mut_slice()[i],
                    grad.w_im.as_slice()[i],
                );
            }
            for i in 0..layer.b_re.len() {
                apply(
                    &mut layer.b_re[i],
                    &mut m.b_re[i],
                    &mut v.b_re[i],
                    grad.b_re[i],
                );
                apply(
                    &mut layer.b_im[i],
                    &mut m.b_im[i],
                    &mut v.b_im[i],
                    grad.b_im[i],
                );
            }
        }
    }
}
