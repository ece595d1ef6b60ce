//! Parameterized 2-D matrix-pencil estimator.
//!
//! From one `N_r x N_t` channel snapshot, jointly estimates per-target angle
//! of departure and angle of arrival:
//!
//! 1. rearrange the snapshot into a block-Hankel matrix over transmit and
//!    receive sub-arrays,
//! 2. split it into two column-overlapped matrices whose pencil encodes the
//!    AoD phase factors,
//! 3. truncated SVD of the first + eigenvalues of a small `q x q` matrix give
//!    the AoDs,
//! 4. a two-stage least-squares fit against the AoD manifold plus a linear
//!    regression on unwrapped phases gives the paired AoAs.
//!
//! Pairing is free: eigenvalue `i` owns column `i` of the manifold fit.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{steering_vector, ScenarioConfig};
use crate::types::{CMatrix, CVector, C64};

/// Sub-array sizes for the block-Hankel rearrangement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PencilConfig {
    /// Number of transmit sub-arrays stacked in block rows (M_t).
    pub m_tx: usize,
    /// Receive sub-array length (M_r).
    pub m_rx: usize,
    /// Number of targets the pencil resolves (q).
    pub num_targets: usize,
    /// CORDIC iteration count, used only by the complexity ledger.
    pub cordic_iters: usize,
}

impl PencilConfig {
    /// Default split: `M = ceil((N+1)/2)`, clamped so at least two transmit
    /// sub-arrays remain.
    pub fn defaults_for(n_tx: usize, n_rx: usize, num_targets: usize) -> Self {
        let m_tx = ((n_tx + 1).div_ceil(2)).min(n_tx.saturating_sub(1)).max(1);
        let m_rx = ((n_rx + 1).div_ceil(2)).min(n_rx).max(1);
        Self {
            m_tx,
            m_rx,
            num_targets,
            cordic_iters: 16,
        }
    }

    /// Number of transmit sub-arrays, `K_t = N_t - M_t + 1`.
    pub fn k_tx(&self, n_tx: usize) -> usize {
        n_tx - self.m_tx + 1
    }

    /// Number of receive sub-arrays, `K_r = N_r - M_r + 1`.
    pub fn k_rx(&self, n_rx: usize) -> usize {
        n_rx - self.m_rx + 1
    }

    pub fn validate(&self, n_tx: usize, n_rx: usize) -> Result<()> {
        if self.m_tx < 1 || self.m_tx > n_tx || self.m_rx < 1 || self.m_rx > n_rx {
            return Err(CoreError::InvalidPencilConfig(format!(
                "sub-array sizes ({}, {}) outside the arrays ({n_tx}, {n_rx})",
                self.m_tx, self.m_rx
            )));
        }
        let k_t = self.k_tx(n_tx);
        let k_r = self.k_rx(n_rx);
        if k_t < 2 {
            return Err(CoreError::InvalidPencilConfig(
                "need K_t >= 2 transmit sub-arrays for the overlap split".into(),
            ));
        }
        let q = self.num_targets;
        if q < 1 || (self.m_rx * self.m_tx).min(k_r * (k_t - 1)) < q {
            return Err(CoreError::InvalidPencilConfig(format!(
                "q = {q} exceeds min(M_r M_t, K_r (K_t - 1)) = {}",
                (self.m_rx * self.m_tx).min(k_r * (k_t - 1))
            )));
        }
        Ok(())
    }
}

/// One estimated target.
#[derive(Debug, Clone, Copy)]
pub struct TargetEstimate {
    pub aoa_rad: f64,
    pub aod_rad: f64,
    /// Magnitude of the composite gain, `|X column| / sqrt(N_r)`.
    pub gain_mag: f64,
    /// Raw phase-regression intercept.
    pub phase_intercept: f64,
    /// Set when an asin argument had to be clamped into [-1, 1].
    pub clamped: bool,
}

/// Paired estimates, sorted by AoD ascending.
#[derive(Debug, Clone, Default)]
pub struct EstimateSet {
    pub targets: Vec<TargetEstimate>,
}

impl EstimateSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// An AoD pulled out of one pencil eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct AodEstimate {
    pub aod_rad: f64,
    pub clamped: bool,
}

/// Block-Hankel rearrangement of a snapshot.
///
/// Output is `(M_r M_t) x (K_r K_t)`; block `(j, l)` is the `M_r x K_r`
/// receive-Hankel of transmit antenna `j + l - 1` (1-based), i.e. entry
/// `(j*M_r + m, l*K_r + n) = snapshot[m + n, j + l]` in 0-based indices.
pub fn build_block_hankel(snapshot: &CMatrix, pc: &PencilConfig) -> Result<CMatrix> {
    let (n_rx, n_tx) = snapshot.shape();
    pc.validate(n_tx, n_rx)?;
    let (m_t, m_r) = (pc.m_tx, pc.m_rx);
    let (k_t, k_r) = (pc.k_tx(n_tx), pc.k_rx(n_rx));
    let mut h = CMatrix::zeros(m_r * m_t, k_r * k_t);
    for j in 0..m_t {
        for l in 0..k_t {
            for m in 0..m_r {
                for n in 0..k_r {
                    h[(j * m_r + m, l * k_r + n)] = snapshot[(m + n, j + l)];
                }
            }
        }
    }
    Ok(h)
}

/// Extract the two column-overlapped matrices: `H1` drops the last transmit
/// block column, `H2` drops the first. Both are `(M_r M_t) x (K_r (K_t - 1))`.
pub fn split_overlap(hankel: &CMatrix, k_rx: usize) -> (CMatrix, CMatrix) {
    let cols = hankel.ncols();
    assert!(cols >= 2 * k_rx, "overlap split needs K_t >= 2");
    let keep = cols - k_rx;
    let h1 = hankel.columns(0, keep).into_owned();
    let h2 = hankel.columns(k_rx, keep).into_owned();
    (h1, h2)
}

/// Rank-q pencil matrix `T = S^-1 U^H H2 V` from the truncated SVD
/// `H1 ~= U S V^H`. Its eigenvalues are the per-target AoD phase factors.
pub fn pencil_matrix(h1: &CMatrix, h2: &CMatrix, q: usize) -> Result<CMatrix> {
    let svd = h1.clone().svd(true, true);
    let sv = &svd.singular_values;
    if q < 1 || q > sv.len() {
        return Err(CoreError::InvalidArgument(format!(
            "pencil rank {q} outside 1..={}",
            sv.len()
        )));
    }
    let ratio = sv[q - 1] / sv[0];
    let resolvable = ratio.is_finite() && ratio > 1e-12;
    if !resolvable {
        return Err(CoreError::RankDeficient { q, ratio });
    }
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let u_q = u.columns(0, q);
    let v_q = v_t.rows(0, q).adjoint();
    let mut t = u_q.adjoint() * h2 * v_q;
    for i in 0..q {
        let scale = C64::new(1.0 / sv[i], 0.0);
        for c in 0..q {
            t[(i, c)] *= scale;
        }
    }
    Ok(t)
}

/// Eigenvalues of a small general complex matrix via its Schur form.
pub fn small_eigenvalues(t: &CMatrix) -> Result<Vec<C64>> {
    if t.nrows() == 1 {
        return Ok(vec![t[(0, 0)]]);
    }
    t.clone()
        .schur()
        .eigenvalues()
        .map(|e| e.iter().copied().collect())
        .ok_or_else(|| CoreError::Numerical("complex Schur iteration did not converge".into()))
}

/// Map pencil eigenvalues to angles of departure:
/// `phi_i = -asin(arg(gamma_i) / (2 pi spacing))`. Arguments outside the asin
/// domain (possible under noise) are clamped and flagged.
pub fn aod_from_eigenvalues(eigs: &[C64], spacing_wavelengths: f64) -> Vec<AodEstimate> {
    eigs.iter()
        .map(|g| {
            let raw = g.arg() / (std::f64::consts::TAU * spacing_wavelengths);
            let clamped = raw.abs() > 1.0;
            AodEstimate {
                aod_rad: -raw.clamp(-1.0, 1.0).asin(),
                clamped,
            }
        })
        .collect()
}

/// First-stage LS fit of the AoA manifold:
/// `X = H A_t^*(Phi) (A_t^T(Phi) A_t^*(Phi))^-1`, one column per target.
pub fn ls_fit_aoa_manifold(
    snapshot: &CMatrix,
    aods: &[f64],
    spacing_tx_wavelengths: f64,
) -> Result<CMatrix> {
    let n_tx = snapshot.ncols();
    let q = aods.len();
    if q > n_tx {
        return Err(CoreError::InvalidArgument(format!(
            "cannot fit {q} targets with {n_tx} transmit antennas"
        )));
    }
    let mut a_t = CMatrix::zeros(n_tx, q);
    for (i, &phi) in aods.iter().enumerate() {
        a_t.set_column(i, &steering_vector(phi, n_tx, spacing_tx_wavelengths)?);
    }
    let a_conj = a_t.map(|z| z.conj());
    let gram = a_t.transpose() * &a_conj;
    let sv = gram.clone().singular_values();
    let cond = sv.max() / sv.min().max(f64::MIN_POSITIVE);
    if !cond.is_finite() || cond > 1e10 {
        return Err(CoreError::DegenerateAod { cond });
    }
    let inv = gram
        .try_inverse()
        .ok_or(CoreError::DegenerateAod { cond })?;
    Ok(snapshot * a_conj * inv)
}

/// Second-stage per-column normalization: unit-norm steering estimates and
/// composite gain magnitudes `|col| / sqrt(N_r)`.
pub fn normalize_columns(x: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    let n_r = x.nrows();
    let mut unit = x.clone();
    let mut mags = Vec::with_capacity(x.ncols());
    for i in 0..x.ncols() {
        let norm = x.column(i).norm();
        let positive = norm.is_finite() && norm > 0.0;
        if !positive {
            return Err(CoreError::ZeroEnergyTarget { index: i });
        }
        let scale = C64::new(1.0 / norm, 0.0);
        for r in 0..n_r {
            unit[(r, i)] *= scale;
        }
        mags.push(norm / (n_r as f64).sqrt());
    }
    Ok((unit, mags))
}

/// Sequential phase unwrap: add or subtract 2 pi whenever a consecutive
/// difference exceeds pi in magnitude.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let diff = p - phases[i - 1];
            if diff > std::f64::consts::PI {
                offset -= std::f64::consts::TAU;
            } else if diff < -std::f64::consts::PI {
                offset += std::f64::consts::TAU;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Linear regression on the unwrapped phases of a steering estimate.
///
/// Design matrix columns are `1..=N_r` and all-ones; the slope maps to the
/// AoA as `theta = -asin(slope / (2 pi spacing))` and the raw intercept is
/// returned as the phase offset estimate.
pub fn aoa_phase_regression(
    unit_vector: &CVector,
    spacing_rx_wavelengths: f64,
) -> Result<(f64, f64, bool)> {
    let n_r = unit_vector.len();
    if n_r < 2 {
        return Err(CoreError::InvalidArgument(
            "phase regression needs at least two receive antennas".into(),
        ));
    }
    let phases = unwrap_phases(&unit_vector.iter().map(|z| z.arg()).collect::<Vec<_>>());
    let n = n_r as f64;
    let x_mean = (n + 1.0) / 2.0; // mean of 1..=N_r
    let y_mean = phases.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (m, &y) in phases.iter().enumerate() {
        let dx = (m + 1) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let raw = slope / (std::f64::consts::TAU * spacing_rx_wavelengths);
    let clamped = raw.abs() > 1.0;
    Ok((-raw.clamp(-1.0, 1.0).asin(), intercept, clamped))
}

/// Full pencil pipeline on one snapshot.
pub fn estimate_2d(
    snapshot: &CMatrix,
    pc: &PencilConfig,
    scenario: &ScenarioConfig,
) -> Result<EstimateSet> {
    let q = pc.num_targets;
    let hankel = build_block_hankel(snapshot, pc)?;
    let (h1, h2) = split_overlap(&hankel, pc.k_rx(snapshot.nrows()));
    let t = pencil_matrix(&h1, &h2, q)?;
    let eigs = small_eigenvalues(&t)?;
    let aods = aod_from_eigenvalues(&eigs, scenario.element_spacing_tx);
    let aod_values: Vec<f64> = aods.iter().map(|a| a.aod_rad).collect();
    let x = ls_fit_aoa_manifold(snapshot, &aod_values, scenario.element_spacing_tx)?;
    let (unit, mags) = normalize_columns(&x)?;
    let mut targets = Vec::with_capacity(q);
    for i in 0..q {
        let (aoa_rad, phase_intercept, aoa_clamped) =
            aoa_phase_regression(&unit.column(i).into_owned(), scenario.element_spacing_rx)?;
        targets.push(TargetEstimate {
            aoa_rad,
            aod_rad: aod_values[i],
            gain_mag: mags[i],
            phase_intercept,
            clamped: aods[i].clamped || aoa_clamped,
        });
    }
    targets.sort_by(|a, b| a.aod_rad.partial_cmp(&b.aod_rad).unwrap());
    Ok(EstimateSet { targets })
}
