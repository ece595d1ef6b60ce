//! Desk-scale grid search over the deterministic maximum-likelihood
//! criterion, kept as a correctness and complexity benchmark.
//!
//! The criterion minimizes `sum_{n,k} ||y_{n,k} - H_n(params) s_{n,k}||^2`
//! over per-target `(theta, phi, tau, gain)`. Composite gains are solved in
//! closed form per hypothesis unless pinned to known values; delays come from
//! a grid or are pinned the same way. The scoring uses precomputed
//! projections so each hypothesis costs O(q^3) instead of a pass over the
//! whole observation tensor.

use num_bigint::BigUint;

use crate::error::{CoreError, Result};
use crate::model::{steering_vector, ScenarioConfig};
use crate::pencil::{EstimateSet, TargetEstimate};
use crate::tensor::ComplexTensor;
use crate::types::{cis, CVector, C64};

/// Grid geometry and known-parameter pins.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub g_theta: usize,
    pub g_phi: usize,
    pub g_tau: usize,
    /// Gain grid size; enters only the cost formula. The search always solves
    /// gains in closed form (or uses [`Self::fixed_gains`]).
    pub g_alpha: usize,
    pub theta_range_rad: (f64, f64),
    pub phi_range_rad: (f64, f64),
    pub tau_range_s: (f64, f64),
    /// Pin per-target delays to known values (emulates `G_tau = 1`).
    pub fixed_delays: Option<Vec<f64>>,
    /// Pin per-target composite gains to known values (emulates `G_alpha = 1`).
    pub fixed_gains: Option<Vec<C64>>,
}

impl Default for GridSpec {
    /// 180-point angle grids over (-90, 90) degrees, about 1 degree per step;
    /// delay pinned at zero unless configured.
    fn default() -> Self {
        Self {
            g_theta: 180,
            g_phi: 180,
            g_tau: 1,
            g_alpha: 1,
            theta_range_rad: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            phi_range_rad: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            tau_range_s: (0.0, 0.0),
            fixed_delays: None,
            fixed_gains: None,
        }
    }
}

/// Midpoint grid over `[lo, hi]`: `lo + (i + 0.5) (hi - lo) / g`.
pub fn grid_points(range: (f64, f64), g: usize) -> Vec<f64> {
    let (lo, hi) = range;
    let step = (hi - lo) / g as f64;
    (0..g).map(|i| lo + (i as f64 + 0.5) * step).collect()
}

struct Tables {
    /// `rhs[theta][tau][phi]`: model-vector inner product with the data.
    rhs: Vec<Vec<Vec<C64>>>,
    /// `cross[tau1][phi1][tau2][phi2]`: frequency-plane model inner products.
    cross: Vec<Vec<Vec<Vec<C64>>>>,
    /// `rho[theta1][theta2]`: receive-steering inner products.
    rho: Vec<Vec<C64>>,
    energy: f64,
}

fn build_tables(
    observations: &ComplexTensor,
    pilots: &ComplexTensor,
    config: &ScenarioConfig,
    thetas: &[f64],
    phis: &[f64],
    taus: &[f64],
) -> Result<Tables> {
    let (n_p, k_p) = (config.n_subcarriers, config.n_symbols);
    let nk = n_p * k_p;
    let n_r = config.n_rx;
    let n_t = config.n_tx;

    let mut energy = 0.0;
    let mut y: Vec<CVector> = Vec::with_capacity(nk);
    let mut s: Vec<CVector> = Vec::with_capacity(nk);
    for n in 0..n_p {
        for k in 0..k_p {
            let yv = CVector::from_fn(n_r, |r, _| observations.get(&[n, k, r]));
            energy += yv.norm_squared();
            y.push(yv);
            s.push(CVector::from_fn(n_t, |t, _| pilots.get(&[n, k, t])));
        }
    }

    // u[theta][nk] = a_r(theta)^H y_{n,k}
    let mut u = vec![vec![C64::new(0.0, 0.0); nk]; thetas.len()];
    for (ti, &theta) in thetas.iter().enumerate() {
        let a_r = steering_vector(theta, n_r, config.element_spacing_rx)?;
        for (i, yv) in y.iter().enumerate() {
            u[ti][i] = a_r.dotc(yv);
        }
    }

    // w[tau][phi][nk] = c_n(tau) * a_t(phi)^T s_{n,k}
    let tau_factor = -std::f64::consts::TAU * config.subcarrier_spacing_hz;
    let mut w = vec![vec![vec![C64::new(0.0, 0.0); nk]; phis.len()]; taus.len()];
    for (gi, &tau) in taus.iter().enumerate() {
        for (pi, &phi) in phis.iter().enumerate() {
            let a_t = steering_vector(phi, n_t, config.element_spacing_tx)?;
            let mut idx = 0;
            for n in 1..=n_p {
                let c_n = cis(tau_factor * n as f64 * tau);
                for _ in 0..k_p {
                    let v = (a_t.transpose() * &s[idx])[(0, 0)];
                    w[gi][pi][idx] = c_n * v;
                    idx += 1;
                }
            }
        }
    }

    let mut rhs = vec![vec![vec![C64::new(0.0, 0.0); phis.len()]; taus.len()]; thetas.len()];
    for ti in 0..thetas.len() {
        for gi in 0..taus.len() {
            for pi in 0..phis.len() {
                let acc: C64 = w[gi][pi]
                    .iter()
                    .zip(&u[ti])
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                rhs[ti][gi][pi] = acc;
            }
        }
    }

    let mut cross =
        vec![vec![vec![vec![C64::new(0.0, 0.0); phis.len()]; taus.len()]; phis.len()]; taus.len()];
    for g1 in 0..taus.len() {
        for p1 in 0..phis.len() {
            for g2 in 0..taus.len() {
                for p2 in 0..phis.len() {
                    let acc: C64 = w[g1][p1]
                        .iter()
                        .zip(&w[g2][p2])
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    cross[g1][p1][g2][p2] = acc;
                }
            }
        }
    }

    let mut rho = vec![vec![C64::new(0.0, 0.0); thetas.len()]; thetas.len()];
    let steers: Vec<CVector> = thetas
        .iter()
        .map(|&t| steering_vector(t, n_r, config.element_spacing_rx))
        .collect::<Result<_>>()?;
    for i in 0..thetas.len() {
        for j in 0..thetas.len() {
            rho[i][j] = steers[i].dotc(&steers[j]);
        }
    }

    Ok(Tables {
        rhs,
        cross,
        rho,
        energy,
    })
}

/// One per-target hypothesis: indices into the theta/phi/tau catalogs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    theta: usize,
    phi: usize,
    tau: usize,
}

fn residual(tables: &Tables, slots: &[Cand], fixed_gains: Option<&[C64]>) -> (f64, Vec<C64>) {
    let q = slots.len();
    let r: Vec<C64> = slots
        .iter()
        .map(|c| tables.rhs[c.theta][c.tau][c.phi])
        .collect();
    let m = |a: &Cand, b: &Cand| -> C64 {
        tables.cross[a.tau][a.phi][b.tau][b.phi] * tables.rho[a.theta][b.theta]
    };
    match fixed_gains {
        Some(gains) => {
            let mut res = tables.energy;
            for j in 0..q {
                res -= 2.0 * (gains[j].conj() * r[j]).re;
                for l in 0..q {
                    res += (gains[j].conj() * gains[l] * m(&slots[j], &slots[l])).re;
                }
            }
            (res, gains.to_vec())
        }
        None => {
            // closed-form gain LS through the q x q normal equations
            let gains = match q {
                1 => {
                    let m11 = m(&slots[0], &slots[0]).re;
                    if m11 <= 0.0 {
                        return (f64::INFINITY, vec![]);
                    }
                    vec![r[0] / m11]
                }
                2 => {
                    let m11 = m(&slots[0], &slots[0]).re;
                    let m22 = m(&slots[1], &slots[1]).re;
                    let m12 = m(&slots[0], &slots[1]);
                    let det = m11 * m22 - m12.norm_sqr();
                    if det <= 1e-9 * (m11 * m22).max(f64::MIN_POSITIVE) {
                        return (f64::INFINITY, vec![]);
                    }
                    vec![
                        (r[0] * m22 - m12 * r[1]) / det,
                        (r[1] * m11 - m12.conj() * r[0]) / det,
                    ]
                }
                _ => unreachable!("search is limited to q <= 2"),
            };
            let mut res = tables.energy;
            for j in 0..q {
                res -= (gains[j].conj() * r[j]).re;
            }
            (res, gains)
        }
    }
}

/// Exhaustive search over the grid. Supports one or two targets; the
/// hypothesis budget is capped at 1e7 grid points.
pub fn mle_grid_search(
    observations: &ComplexTensor,
    pilots: &ComplexTensor,
    grid: &GridSpec,
    q: usize,
    config: &ScenarioConfig,
) -> Result<EstimateSet> {
    if !(1..=2).contains(&q) {
        return Err(CoreError::InvalidArgument(
            "exhaustive MLE search supports q in {1, 2}".into(),
        ));
    }
    if let Some(d) = &grid.fixed_delays {
        if d.len() != q {
            return Err(CoreError::InvalidArgument(
                "fixed_delays length != q".into(),
            ));
        }
    }
    if let Some(g) = &grid.fixed_gains {
        if g.len() != q {
            return Err(CoreError::InvalidArgument("fixed_gains length != q".into()));
        }
    }

    let thetas = grid_points(grid.theta_range_rad, grid.g_theta.max(1));
    let phis = grid_points(grid.phi_range_rad, grid.g_phi.max(1));

    // delay catalog: pinned values (deduplicated) or a midpoint grid
    let (taus, slot_tau_ids): (Vec<f64>, Vec<Vec<usize>>) = match &grid.fixed_delays {
        Some(fixed) => {
            let mut taus: Vec<f64> = Vec::new();
            let mut ids = Vec::with_capacity(q);
            for &d in fixed {
                let id = match taus.iter().position(|&t| t == d) {
                    Some(i) => i,
                    None => {
                        taus.push(d);
                        taus.len() - 1
                    }
                };
                ids.push(vec![id]);
            }
            (taus, ids)
        }
        None => {
            let taus = grid_points(grid.tau_range_s, grid.g_tau.max(1));
            let all: Vec<usize> = (0..taus.len()).collect();
            (taus, vec![all; q])
        }
    };

    // per-slot candidate spaces
    let slot_cands: Vec<Vec<Cand>> = slot_tau_ids
        .iter()
        .map(|tau_ids| {
            let mut cands = Vec::with_capacity(thetas.len() * phis.len() * tau_ids.len());
            for &tau in tau_ids {
                for theta in 0..thetas.len() {
                    for phi in 0..phis.len() {
                        cands.push(Cand { theta, phi, tau });
                    }
                }
            }
            cands
        })
        .collect();

    let exchangeable = q == 2 && slot_cands[0] == slot_cands[1];
    let points: u128 = slot_cands
        .iter()
        .map(|c| c.len() as u128)
        .try_fold(1u128, |acc, n| acc.checked_mul(n))
        .ok_or(CoreError::GridTooLarge { points: u128::MAX })?;
    if points > 10_000_000 {
        return Err(CoreError::GridTooLarge { points });
    }

    let tables = build_tables(observations, pilots, config, &thetas, &phis, &taus)?;
    let fixed_gains = grid.fixed_gains.as_deref();

    let mut best: Option<(f64, Vec<Cand>, Vec<C64>)> = None;
    let mut consider = |slots: &[Cand]| {
        let (res, gains) = residual(&tables, slots, fixed_gains);
        if best.as_ref().is_none_or(|(b, _, _)| res < *b) {
            best = Some((res, slots.to_vec(), gains));
        }
    };

    match q {
        1 => {
            for c in &slot_cands[0] {
                consider(std::slice::from_ref(c));
            }
        }
        2 if exchangeable => {
            // targets share one candidate list: combinations i < j
            let cands = &slot_cands[0];
            for i in 0..cands.len() {
                for j in (i + 1)..cands.len() {
                    consider(&[cands[i], cands[j]]);
                }
            }
        }
        _ => {
            for a in &slot_cands[0] {
                for b in &slot_cands[1] {
                    consider(&[*a, *b]);
                }
            }
        }
    }

    let (_, slots, gains) =
        best.ok_or_else(|| CoreError::InvalidArgument("empty hypothesis space".into()))?;
    let mut targets: Vec<TargetEstimate> = slots
        .iter()
        .enumerate()
        .map(|(j, c)| TargetEstimate {
            aoa_rad: thetas[c.theta],
            aod_rad: phis[c.phi],
            gain_mag: gains.get(j).map_or(f64::NAN, |g| g.norm()),
            phase_intercept: gains.get(j).map_or(f64::NAN, |g| g.arg()),
            clamped: false,
        })
        .collect();
    targets.sort_by(|a, b| a.aod_rad.partial_cmp(&b.aod_rad).unwrap());
    Ok(EstimateSet { targets })
}

/// Literal big-O cost of the grid search:
/// `G_tau^q G_theta^q G_phi^q G_alpha^{2q} (N_r N_P q^2 N_P^3 N_t + N_r N_P^2 N_P K_P)`.
pub fn mle_grid_cost(grid: &GridSpec, config: &ScenarioConfig, q: usize) -> BigUint {
    let qb = q as u32;
    let grid_product = BigUint::from(grid.g_tau).pow(qb)
        * BigUint::from(grid.g_theta).pow(qb)
        * BigUint::from(grid.g_phi).pow(qb)
        * BigUint::from(grid.g_alpha).pow(2 * qb);
    let n_p = BigUint::from(config.n_subcarriers);
    let bracket = BigUint::from(config.n_rx)
        * &n_p
        * BigUint::from(q * q)
        * n_p.pow(3)
        * BigUint::from(config.n_tx)
        + BigUint::from(config.n_rx) * n_p.pow(3) * BigUint::from(config.n_symbols);
    grid_product * bracket
}
