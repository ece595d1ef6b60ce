//! Closed-form operation counting for the pencil pipeline, the MLP, and the
//! grid-search MLE, all in exact integer arithmetic.
//!
//! Two conventions exist for the eigenvalue step: the summary convention
//! (default) charges only the CORDIC square roots, while
//! [`EvdVariant::Detailed`] adds the QZ sweep itself. Every other block has a
//! single closed form.

use num_bigint::BigUint;

use crate::error::Result;
use crate::mle::{mle_grid_cost, GridSpec};
use crate::model::ScenarioConfig;
use crate::nn::{mlp_op_counts, NetworkSpec};
use crate::pencil::PencilConfig;

/// One ledger row.
#[derive(Debug, Clone)]
pub struct BlockCount {
    pub block: &'static str,
    pub mults: BigUint,
    pub adds: BigUint,
}

/// Exact totals plus the per-block breakdown they sum from.
#[derive(Debug, Clone)]
pub struct OpCount {
    pub mults: BigUint,
    pub adds: BigUint,
    pub breakdown: Vec<BlockCount>,
}

impl OpCount {
    fn from_rows(breakdown: Vec<BlockCount>) -> Self {
        let mults = breakdown.iter().map(|r| &r.mults).sum();
        let adds = breakdown.iter().map(|r| &r.adds).sum();
        Self {
            mults,
            adds,
            breakdown,
        }
    }

    /// Sum of multiplications and additions.
    pub fn total(&self) -> BigUint {
        &self.mults + &self.adds
    }
}

/// Eigenvalue-step cost convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvdVariant {
    /// CORDIC square roots only: `2q(q-1)` mults, `4q(q-1)N_cord` adds.
    #[default]
    Summary,
    /// Adds the QZ sweep `6q^2(q-1)` to both sides.
    Detailed,
}

fn big(v: u128) -> BigUint {
    BigUint::from(v)
}

/// Operation counts of the 2-D pencil algorithm. With `include_frontend` the
/// channel-estimation and coarse-timing rows are added; otherwise the totals
/// cover the sensing-estimation steps only.
pub fn count_2d(
    config: &ScenarioConfig,
    pencil: &PencilConfig,
    q: usize,
    include_frontend: bool,
) -> Result<OpCount> {
    count_2d_with(config, pencil, q, include_frontend, EvdVariant::Summary)
}

pub fn count_2d_with(
    config: &ScenarioConfig,
    pencil: &PencilConfig,
    q: usize,
    include_frontend: bool,
    variant: EvdVariant,
) -> Result<OpCount> {
    pencil.validate(config.n_tx, config.n_rx)?;
    let nt = config.n_tx as u128;
    let nr = config.n_rx as u128;
    let np = config.n_subcarriers as u128;
    let kp = config.n_symbols as u128;
    let nc = pencil.cordic_iters as u128;
    let a = (pencil.m_rx * pencil.m_tx) as u128;
    let b = (pencil.k_rx(config.n_rx) * (pencil.k_tx(config.n_tx) - 1)) as u128;
    let q = q as u128;

    let mut rows = Vec::new();
    if include_frontend {
        rows.push(BlockCount {
            block: "channel estimation",
            mults: big(nt * nt * nt + 2 * np * kp * nt * nt + nr * np * kp * nt),
            adds: big(nt * (np * kp - 1) * nt
                + nt * (nt - 1) * (nt - 1)
                + np * kp * (nt - 1) * nt
                + nr * (np * kp - 1) * nt),
        });
        rows.push(BlockCount {
            block: "coarse timing",
            mults: big(np * np * nt * nr),
            adds: big(np * (np - 1) * nt * nr),
        });
    }
    rows.push(BlockCount {
        block: "rearrangement (steps 0-2)",
        mults: big(0),
        adds: big(0),
    });
    let svd = big(4 * a * a * b + 8 * a * b * b + 9 * b * b * b);
    rows.push(BlockCount {
        block: "svd (step 3)",
        mults: svd.clone(),
        adds: svd,
    });
    rows.push(BlockCount {
        block: "pencil matrix (step 4)",
        mults: big(a * b * q + a * q * q + q * q),
        adds: big(a * (b - 1) * q + (a - 1) * q * q),
    });
    let qz = 6 * q * q * (q.saturating_sub(1));
    rows.push(BlockCount {
        block: "eigenvalues (step 5)",
        mults: match variant {
            EvdVariant::Summary => big(2 * q * (q.saturating_sub(1))),
            EvdVariant::Detailed => big(qz + 2 * q * (q.saturating_sub(1))),
        },
        adds: match variant {
            EvdVariant::Summary => big(4 * q * (q.saturating_sub(1)) * nc),
            EvdVariant::Detailed => big(qz + 4 * q * (q.saturating_sub(1)) * nc),
        },
    });
    rows.push(BlockCount {
        block: "aod estimation (step 6)",
        mults: big(3 * q),
        adds: big(4 * nc * q),
    });
    rows.push(BlockCount {
        block: "ls fit (step 7)",
        mults: big(q * q * nt + q * q * q + q * q * nt + q * nr * nt),
        // q^3 - 2q^2 + q = q(q-1)^2
        adds: big(q * q * (nt - 1)
            + q * (q.saturating_sub(1)) * (q.saturating_sub(1))
            + nt * (q.saturating_sub(1)) * q
            + nr * (nt - 1) * q),
    });
    rows.push(BlockCount {
        block: "column normalization (step 8)",
        mults: big(0),
        adds: big(0),
    });
    rows.push(BlockCount {
        block: "aoa regression (step 9)",
        mults: big(q * (nr + 2)),
        adds: big(q * (2 * nr - 1)),
    });
    Ok(OpCount::from_rows(rows))
}

/// MLP inference counts for a scene with `q` well-resolved targets: the
/// per-peak network (`N_out = 2`) runs once per target.
pub fn count_mlp(config: &ScenarioConfig, q: usize) -> Result<OpCount> {
    let spec = NetworkSpec::regression(config.n_tx * config.n_rx, 1);
    let (mul, add) = mlp_op_counts(&spec)?;
    let rows = vec![BlockCount {
        block: "mlp forward x q",
        mults: big(mul as u128 * q as u128),
        adds: big(add as u128 * q as u128),
    }];
    Ok(OpCount::from_rows(rows))
}

/// Complexity gain of the pencil algorithm over the grid-search MLE:
/// grid cost divided by the sensing-only `T_add + T_mul`.
pub fn speedup_vs_mle(
    grid: &GridSpec,
    config: &ScenarioConfig,
    pencil: &PencilConfig,
    q: usize,
) -> Result<f64> {
    let numerator = mle_grid_cost(grid, config, q);
    let denominator = count_2d(config, pencil, q, false)?.total();
    Ok(big_to_f64(&numerator) / big_to_f64(&denominator))
}

/// Ratio of pencil to MLP multiplications (sensing only), as plotted in the
/// complexity study.
pub fn mult_ratio_2d_over_mlp(
    config: &ScenarioConfig,
    pencil: &PencilConfig,
    q: usize,
) -> Result<f64> {
    let pencil_mults = count_2d(config, pencil, q, false)?.mults;
    let mlp_mults = count_mlp(config, q)?.mults;
    Ok(big_to_f64(&pencil_mults) / big_to_f64(&mlp_mults))
}

fn big_to_f64(v: &BigUint) -> f64 {
    v.to_string().parse::<f64>().unwrap_or(f64::INFINITY)
}
