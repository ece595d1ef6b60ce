//! CSI front end: least-squares channel estimation, CSI stacking, IFFT-based
//! coarse timing and per-peak snapshot extraction.
//!
//! The stack `H` holds one row per (rx, tx) antenna pair and one column per
//! subcarrier; rows are the frequency response of that pair. Taking the
//! inverse DFT along rows turns target delays into peaks whose bin index is a
//! coarse time-of-arrival, and the selected IFFT row reshapes back into an
//! `N_r x N_t` snapshot carrying all angle information for the paths in that
//! delay bin.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};
use crate::model::ScenarioConfig;
use crate::tensor::ComplexTensor;
use crate::types::{cis, CMatrix, C64};

/// Stacked CSI estimates: row `r` is one antenna pair, column `n` one subcarrier.
/// Column `n` is the column-major vectorization of the per-subcarrier estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiStack {
    pub matrix: CMatrix,
}

/// One coarse-timing peak and its reshaped channel snapshot.
#[derive(Debug, Clone)]
pub struct PeakSnapshot {
    /// IFFT bin of the peak.
    pub bin_index: usize,
    /// Coarse time of arrival, `bin_index / (N_P * delta_f)`.
    pub coarse_toa_s: f64,
    /// `N_r x N_t` channel snapshot at the peak.
    pub snapshot: CMatrix,
    /// Estimated number of targets sharing this peak.
    pub est_num_targets: usize,
}

/// Peak bins plus a flag set when fewer than the requested number of local
/// maxima existed and plain top-energy bins were substituted.
#[derive(Debug, Clone)]
pub struct PeakDetection {
    pub bins: Vec<usize>,
    pub degraded: bool,
}

/// Least-squares channel estimate for one subcarrier (1-based index):
/// `H_n = Y_n S^H (S S^H)^{-1}`.
pub fn ls_channel_estimate(
    rx: &ComplexTensor,
    pilots: &ComplexTensor,
    subcarrier_index: usize,
) -> Result<CMatrix> {
    let n_p = pilots
        .extent("subcarrier")
        .ok_or_else(|| CoreError::InvalidArgument("pilot tensor lacks subcarrier dim".into()))?;
    if subcarrier_index < 1 || subcarrier_index > n_p {
        return Err(CoreError::InvalidArgument(format!(
            "subcarrier index {subcarrier_index} outside 1..={n_p}"
        )));
    }
    let y = rx.subcarrier_matrix(subcarrier_index - 1);
    let s = pilots.subcarrier_matrix(subcarrier_index - 1);
    let gram = &s * s.adjoint();
    let gram_norm = gram.norm();
    let inv = gram.try_inverse().ok_or(CoreError::IllConditionedPilots {
        cond: f64::INFINITY,
    })?;
    // Frobenius estimate ||G|| ||G^-1|| upper-bounds the spectral condition
    // number within a factor of N_t; cheap enough to guard every call
    let cond = gram_norm * inv.norm();
    if !cond.is_finite() || cond > 1e12 {
        return Err(CoreError::IllConditionedPilots { cond });
    }
    Ok(y * s.adjoint() * inv)
}

/// Stack per-subcarrier estimates into the `(N_r N_t) x N_P` CSI matrix.
/// Row order is the column-major vectorization: `r = t * N_r + a`.
pub fn stack_csi(estimates: &[CMatrix]) -> Result<CsiStack> {
    let first = estimates
        .first()
        .ok_or_else(|| CoreError::InvalidArgument("no estimates to stack".into()))?;
    let (n_r, n_t) = first.shape();
    if estimates.iter().any(|e| e.shape() != (n_r, n_t)) {
        return Err(CoreError::InvalidArgument(
            "per-subcarrier estimates differ in shape".into(),
        ));
    }
    let mut matrix = CMatrix::zeros(n_r * n_t, estimates.len());
    for (n, est) in estimates.iter().enumerate() {
        for t in 0..n_t {
            for a in 0..n_r {
                matrix[(t * n_r + a, n)] = est[(a, t)];
            }
        }
    }
    Ok(CsiStack { matrix })
}

/// Undo [`stack_csi`] for one column.
pub fn unstack_column(stack: &CsiStack, n: usize, n_rx: usize) -> CMatrix {
    let rows = stack.matrix.nrows();
    let n_tx = rows / n_rx;
    CMatrix::from_fn(n_rx, n_tx, |a, t| stack.matrix[(t * n_rx + a, n)])
}

/// Row-wise scaled inverse DFT of the stack.
///
/// Output entry `(r, k) = (1/N_P) * sum_{n=1..N_P} H[r, n-1] * e^{+j 2 pi n k / N_P}`.
/// The phase reference sits on the 1-based subcarrier index so that an on-bin
/// delay produces a real-gain impulse with no residual phase; the
/// normalization itself only moves a global constant.
pub fn ifft_rows(stack: &CsiStack) -> CMatrix {
    let n_p = stack.matrix.ncols();
    let scale = 1.0 / n_p as f64;
    // transform[c][k] = e^{+j 2 pi (c+1) k / N_P} / N_P
    let transform = CMatrix::from_fn(n_p, n_p, |c, k| {
        cis(std::f64::consts::TAU * (((c + 1) * k) % n_p) as f64 / n_p as f64) * scale
    });
    &stack.matrix * transform
}

/// Find the `q` delay bins with the largest aggregate energy
/// `E[k] = sum_pairs |h[r, k]|^2`, restricted to cyclic local maxima.
/// Bins are returned sorted ascending. When fewer than `q` local maxima
/// exist, the remaining slots are filled with the highest-energy bins overall
/// and `degraded` is set.
pub fn detect_peaks(time_domain: &CMatrix, q: usize) -> Result<PeakDetection> {
    let (rows, n_p) = time_domain.shape();
    if q < 1 || q > n_p {
        return Err(CoreError::InvalidArgument(format!(
            "peak count {q} outside 1..={n_p}"
        )));
    }
    let energy: Vec<f64> = (0..n_p)
        .map(|k| (0..rows).map(|r| time_domain[(r, k)].norm_sqr()).sum())
        .collect();
    let mut maxima: Vec<usize> = (0..n_p)
        .filter(|&k| {
            let prev = energy[(k + n_p - 1) % n_p];
            let next = energy[(k + 1) % n_p];
            energy[k] >= prev && energy[k] >= next
        })
        .collect();
    maxima.sort_by(|&a, &b| energy[b].partial_cmp(&energy[a]).unwrap().then(a.cmp(&b)));
    let mut bins: Vec<usize> = maxima.iter().take(q).copied().collect();
    let degraded = bins.len() < q;
    if degraded {
        let mut by_energy: Vec<usize> = (0..n_p).collect();
        by_energy.sort_by(|&a, &b| energy[b].partial_cmp(&energy[a]).unwrap().then(a.cmp(&b)));
        for k in by_energy {
            if bins.len() == q {
                break;
            }
            if !bins.contains(&k) {
                bins.push(k);
            }
        }
    }
    bins.sort_unstable();
    Ok(PeakDetection { bins, degraded })
}

/// Extract the `N_r x N_t` snapshot at one delay bin: the column-major reshape
/// of the selected IFFT row. `est_num_targets` starts at 1; callers that know
/// more (classifier output, peak assignment) overwrite it.
pub fn snapshot_at_peak(
    stack: &CsiStack,
    bin_index: usize,
    config: &ScenarioConfig,
) -> Result<PeakSnapshot> {
    let (rows, n_p) = stack.matrix.shape();
    if bin_index >= n_p {
        return Err(CoreError::InvalidArgument(format!(
            "bin index {bin_index} outside 0..{n_p}"
        )));
    }
    if rows != config.n_rx * config.n_tx {
        return Err(CoreError::InvalidArgument(
            "stack row count does not match the scenario antennas".into(),
        ));
    }
    let scale = 1.0 / n_p as f64;
    let twiddle = crate::types::CVector::from_fn(n_p, |c, _| {
        cis(std::f64::consts::TAU * ((c + 1) * bin_index % n_p) as f64 / n_p as f64) * scale
    });
    let row = &stack.matrix * twiddle;
    let snapshot = CMatrix::from_fn(config.n_rx, config.n_tx, |a, t| row[t * config.n_rx + a]);
    Ok(PeakSnapshot {
        bin_index,
        coarse_toa_s: bin_index as f64 * config.bin_delay_s(),
        snapshot,
        est_num_targets: 1,
    })
}

// ---------------------------------------------------------------------------
// Binary export: magic "CSIS", u32 rows, u32 cols, then row-major re/im f64,
// all little-endian.
// ---------------------------------------------------------------------------

const CSIS_MAGIC: &[u8; 4] = b"CSIS";

impl CsiStack {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let (rows, cols) = self.matrix.shape();
        w.write_all(CSIS_MAGIC)?;
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        for r in 0..rows {
            for c in 0..cols {
                let z = self.matrix[(r, c)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CSIS_MAGIC {
            return Err(CoreError::BadFormat("missing CSIS magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let rows = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let cols = u32::from_le_bytes(word) as usize;
        let mut buf = [0u8; 8];
        let mut matrix = CMatrix::zeros(rows, cols);
        for row in 0..rows {
            for col in 0..cols {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf);
                r.read_exact(&mut buf)?;
                let im = f64::from_le_bytes(buf);
                matrix[(row, col)] = C64::new(re, im);
            }
        }
        Ok(Self { matrix })
    }
}

/// Run the whole front end: per-subcarrier LS estimates, stacking, and IFFT.
pub fn estimate_csi_stack(rx: &ComplexTensor, pilots: &ComplexTensor) -> Result<CsiStack> {
    let n_p = pilots
        .extent("subcarrier")
        .ok_or_else(|| CoreError::InvalidArgument("pilot tensor lacks subcarrier dim".into()))?;
    let estimates: Vec<CMatrix> = (1..=n_p)
        .map(|n| ls_channel_estimate(rx, pilots, n))
        .collect::<Result<_>>()?;
    stack_csi(&estimates)
}
