//! Fisher information matrix and Cramér-Rao bounds for the joint
//! angle/delay/gain estimation problem.
//!
//! The unknown vector is ordered `[sigma2, Theta, Phi, tau, Re(gain), Im(gain)]`
//! with `q` entries per sensing block, `1 + 5q` parameters total. The noise
//! entry is the complex noise variance; it decouples exactly from the sensing
//! parameters, so its only effects are the `N_r N_P K_P / sigma^4` corner and
//! zero cross blocks.
//!
//! Every sensing block has the common form
//! `(2/sigma^2) * sum_{n,k} Re(s^H P_i^H Q_j s)` where `P_i`, `Q_j` are the
//! per-parameter derivatives of the mean `H_n s`; radiation patterns enter
//! only through the composite gains, never through an angle derivative.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::model::{steering_vector, ScenarioConfig, TargetPath};
use crate::tensor::ComplexTensor;
use crate::types::{cis, CVector, C64};

/// Dense real symmetric FIM plus the block layout it was assembled under.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub num_targets: usize,
}

/// Parameter blocks in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    NoiseVar,
    Aoa,
    Aod,
    Delay,
    GainRe,
    GainIm,
}

impl ParamBlock {
    pub fn label(&self) -> &'static str {
        match self {
            ParamBlock::NoiseVar => "sigma2",
            ParamBlock::Aoa => "aoa",
            ParamBlock::Aod => "aod",
            ParamBlock::Delay => "delay",
            ParamBlock::GainRe => "gain_re",
            ParamBlock::GainIm => "gain_im",
        }
    }
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        1 + 5 * self.num_targets
    }

    /// Which block a flat parameter index belongs to.
    pub fn block_of(&self, index: usize) -> ParamBlock {
        let q = self.num_targets;
        match index {
            0 => ParamBlock::NoiseVar,
            i if i <= q => ParamBlock::Aoa,
            i if i <= 2 * q => ParamBlock::Aod,
            i if i <= 3 * q => ParamBlock::Delay,
            i if i <= 4 * q => ParamBlock::GainRe,
            _ => ParamBlock::GainIm,
        }
    }
}

/// Angle derivative of the steering vector: element `m` is
/// `(-j 2 pi m spacing cos(angle)) * a_m(angle)`. Element 0 is always zero.
pub fn steering_derivative(
    angle_rad: f64,
    n_elems: usize,
    spacing_wavelengths: f64,
) -> Result<CVector> {
    let a = steering_vector(angle_rad, n_elems, spacing_wavelengths)?;
    let factor = -std::f64::consts::TAU * spacing_wavelengths * angle_rad.cos();
    Ok(CVector::from_fn(n_elems, |m, _| {
        C64::new(0.0, factor * m as f64) * a[m]
    }))
}

/// Assemble the `(1 + 5q)` Fisher information matrix for a scenario.
pub fn fim_assemble(
    config: &ScenarioConfig,
    targets: &[TargetPath],
    pilots: &ComplexTensor,
) -> Result<FisherMatrix> {
    config.validate()?;
    let noise_ok = config.noise_var.is_finite() && config.noise_var > 0.0;
    if !noise_ok {
        return Err(CoreError::InvalidArgument(
            "FIM needs a positive noise variance".into(),
        ));
    }
    if targets.is_empty() {
        return Err(CoreError::InvalidArgument("no targets".into()));
    }
    let q = targets.len();
    let (n_p, k_p) = (config.n_subcarriers, config.n_symbols);
    let sigma2 = config.noise_var;

    // per-target steering vectors, derivatives and composite gains
    let mut a_r = Vec::with_capacity(q);
    let mut d_r = Vec::with_capacity(q);
    let mut a_t = Vec::with_capacity(q);
    let mut d_t = Vec::with_capacity(q);
    let mut gains = Vec::with_capacity(q);
    for t in targets {
        t.validate(config)?;
        a_r.push(steering_vector(
            t.aoa_rad,
            config.n_rx,
            config.element_spacing_rx,
        )?);
        d_r.push(steering_derivative(
            t.aoa_rad,
            config.n_rx,
            config.element_spacing_rx,
        )?);
        a_t.push(steering_vector(
            t.aod_rad,
            config.n_tx,
            config.element_spacing_tx,
        )?);
        d_t.push(steering_derivative(
            t.aod_rad,
            config.n_tx,
            config.element_spacing_tx,
        )?);
        gains.push(t.composite_gain(config));
    }

    // receive-side inner products, independent of (n, k):
    // aa[i][j] = a_r_i^H a_r_j, ad[i][j] = a_r_i^H d_r_j, dd[i][j] = d_r_i^H d_r_j
    let dotc = |x: &CVector, y: &CVector| -> C64 { x.dotc(y) };
    let table = |xs: &[CVector], ys: &[CVector]| -> Vec<Vec<C64>> {
        xs.iter()
            .map(|x| ys.iter().map(|y| dotc(x, y)).collect())
            .collect()
    };
    let aa = table(&a_r, &a_r);
    let ad = table(&a_r, &d_r);
    let da = table(&d_r, &a_r);
    let dd = table(&d_r, &d_r);

    // parameter index -> (scalar factor for this (n,k), receive-vector kind)
    #[derive(Clone, Copy, PartialEq)]
    enum RxVec {
        Steering(usize),
        Derivative(usize),
    }
    let inner = |a: RxVec, b: RxVec| -> C64 {
        match (a, b) {
            (RxVec::Steering(i), RxVec::Steering(j)) => aa[i][j],
            (RxVec::Steering(i), RxVec::Derivative(j)) => ad[i][j],
            (RxVec::Derivative(i), RxVec::Steering(j)) => da[i][j],
            (RxVec::Derivative(i), RxVec::Derivative(j)) => dd[i][j],
        }
    };

    let dim = 5 * q;
    let mut sensing = DMatrix::<f64>::zeros(dim, dim);
    let tau_factor = -std::f64::consts::TAU * config.subcarrier_spacing_hz;
    let jj = C64::new(0.0, 1.0);

    let mut scalars = vec![C64::new(0.0, 0.0); dim];
    let mut kinds = vec![RxVec::Steering(0); dim];
    for n in 1..=n_p {
        for k in 0..k_p {
            let s = CVector::from_fn(config.n_tx, |t, _| pilots.get(&[n - 1, k, t]));
            for i in 0..q {
                let p = a_t[i].transpose() * &s;
                let pd = d_t[i].transpose() * &s;
                let (p, pd) = (p[(0, 0)], pd[(0, 0)]);
                let c_n = cis(tau_factor * n as f64 * targets[i].delay_s);
                let d_n = jj * (tau_factor * n as f64) * c_n;
                scalars[i] = gains[i] * c_n * p; // AoA row, vec d_r
                kinds[i] = RxVec::Derivative(i);
                scalars[q + i] = gains[i] * c_n * pd; // AoD row, vec a_r
                kinds[q + i] = RxVec::Steering(i);
                scalars[2 * q + i] = gains[i] * d_n * p; // delay row
                kinds[2 * q + i] = RxVec::Steering(i);
                scalars[3 * q + i] = c_n * p; // Re gain row
                kinds[3 * q + i] = RxVec::Steering(i);
                scalars[4 * q + i] = jj * c_n * p; // Im gain row
                kinds[4 * q + i] = RxVec::Steering(i);
            }
            for a in 0..dim {
                for b in a..dim {
                    let v = (scalars[a].conj() * scalars[b] * inner(kinds[a], kinds[b])).re;
                    sensing[(a, b)] += v;
                }
            }
        }
    }

    let mut matrix = DMatrix::<f64>::zeros(1 + dim, 1 + dim);
    matrix[(0, 0)] = (config.n_rx * n_p * k_p) as f64 / (sigma2 * sigma2);
    for a in 0..dim {
        for b in a..dim {
            let v = 2.0 / sigma2 * sensing[(a, b)];
            matrix[(1 + a, 1 + b)] = v;
            matrix[(1 + b, 1 + a)] = v;
        }
    }
    Ok(FisherMatrix {
        matrix,
        num_targets: q,
    })
}

/// Extract the angle CRBs: the AoA and AoD diagonal blocks of the FIM inverse.
///
/// Delays are seconds and gains dimensionless, so the raw FIM mixes scales
/// that differ by ~1e17 at megahertz subcarrier spacings. The inversion goes
/// through Jacobi equilibration; condition monitoring applies to the
/// unit-diagonal scaled matrix, the scale-free identifiability measure.
pub fn crb_angles(fim: &FisherMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = fim.num_targets;
    let dim = fim.dim();
    let mut scale = vec![0.0; dim];
    for (i, s) in scale.iter_mut().enumerate() {
        let d = fim.matrix[(i, i)];
        let positive = d.is_finite() && d > 0.0;
        if !positive {
            return Err(CoreError::UnidentifiableScenario {
                cond: f64::INFINITY,
            });
        }
        *s = 1.0 / d.sqrt();
    }
    let balanced =
        DMatrix::<f64>::from_fn(dim, dim, |r, c| fim.matrix[(r, c)] * scale[r] * scale[c]);
    let eig = balanced.symmetric_eigen();
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !cond.is_finite() || cond >= 1e12 {
        return Err(CoreError::UnidentifiableScenario { cond });
    }
    let mut inv = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let vi = eig.eigenvectors.column(i);
        let w = 1.0 / eig.eigenvalues[i];
        for r in 0..dim {
            for c in 0..dim {
                inv[(r, c)] += w * vi[r] * vi[c];
            }
        }
    }
    // undo the equilibration: inv(F) = D inv(B) D
    let crb_theta = DMatrix::from_fn(q, q, |r, c| {
        inv[(1 + r, 1 + c)] * scale[1 + r] * scale[1 + c]
    });
    let crb_phi = DMatrix::from_fn(q, q, |r, c| {
        inv[(1 + q + r, 1 + q + c)] * scale[1 + q + r] * scale[1 + q + c]
    });
    Ok((crb_theta, crb_phi))
}
