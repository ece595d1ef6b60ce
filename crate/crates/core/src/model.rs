//! Scenario/target data types and the frequency-domain observation model.
//!
//! A scenario is a bistatic OFDM link: a base station with `n_tx` antennas
//! sends pilot symbols on `n_subcarriers` subcarriers over `n_symbols` OFDM
//! symbols; a radar unit with `n_rx` antennas reads the backscatter. Targets
//! are fixed point reflectors, each described by an angle of departure, an
//! angle of arrival, a delay and a complex gain. Antenna radiation patterns
//! scale each path by a direction-dependent gain that is folded into a
//! composite path gain.
//!
//! All angles are radians internally; degrees appear only in scenario files.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{complex_gaussian, derive_rng, qpsk_symbol};
use crate::tensor::ComplexTensor;
use crate::types::{cis, CMatrix, CVector, C64};

/// Direction-dependent complex antenna gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiationPattern {
    /// Unit gain in every direction.
    Isotropic,
    /// Gaussian-shaped main beam: `g(phi) = gain * exp(-wrap(phi - boresight)^2 / beamwidth^2)`.
    Gaussian {
        gain: f64,
        boresight_rad: f64,
        beamwidth: f64,
    },
}

impl RadiationPattern {
    pub fn validate(&self) -> Result<()> {
        if let RadiationPattern::Gaussian {
            gain, beamwidth, ..
        } = *self
        {
            if gain <= 0.0 {
                return Err(CoreError::InvalidArgument(
                    "pattern gain must be > 0".into(),
                ));
            }
            if beamwidth <= 0.0 {
                return Err(CoreError::InvalidArgument(
                    "pattern beamwidth must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Simulation scenario; single source of truth for array geometry, pilots and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    /// Transmit element spacing in wavelengths.
    pub element_spacing_tx: f64,
    /// Receive element spacing in wavelengths.
    pub element_spacing_rx: f64,
    /// Total complex noise variance per received sample.
    pub noise_var: f64,
    pub tx_pattern: RadiationPattern,
    pub rx_pattern: RadiationPattern,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    /// 8x10 half-wavelength arrays, 64 subcarriers over 61.44 MHz, 10 symbols.
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 10,
            n_subcarriers: 64,
            n_symbols: 10,
            subcarrier_spacing_hz: 61.44e6 / 64.0,
            element_spacing_tx: 0.5,
            element_spacing_rx: 0.5,
            noise_var: 0.0,
            tx_pattern: RadiationPattern::Isotropic,
            rx_pattern: RadiationPattern::Isotropic,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx < 1 || self.n_rx < 1 {
            return Err(CoreError::InvalidArgument(
                "need at least one antenna per side".into(),
            ));
        }
        if self.n_symbols < self.n_tx {
            return Err(CoreError::InvalidArgument(format!(
                "n_symbols {} < n_tx {}: pilot Gram matrix would be singular",
                self.n_symbols, self.n_tx
            )));
        }
        let spacing_ok = self.subcarrier_spacing_hz.is_finite() && self.subcarrier_spacing_hz > 0.0;
        if !spacing_ok {
            return Err(CoreError::InvalidArgument(
                "subcarrier spacing must be > 0".into(),
            ));
        }
        if self.noise_var < 0.0 {
            return Err(CoreError::InvalidArgument(
                "noise variance must be >= 0".into(),
            ));
        }
        let elements_ok = [self.element_spacing_tx, self.element_spacing_rx]
            .iter()
            .all(|d| d.is_finite() && *d > 0.0);
        if !elements_ok {
            return Err(CoreError::InvalidArgument(
                "element spacing must be > 0".into(),
            ));
        }
        self.tx_pattern.validate()?;
        self.rx_pattern.validate()
    }

    /// Longest delay the unaliased frequency-domain model supports.
    pub fn max_delay_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// Delay of one coarse-timing bin, `1/(N_P * delta_f)`.
    pub fn bin_delay_s(&self) -> f64 {
        1.0 / (self.n_subcarriers as f64 * self.subcarrier_spacing_hz)
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPath {
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub delay_s: f64,
    pub gain: C64,
}

impl TargetPath {
    pub fn validate(&self, config: &ScenarioConfig) -> Result<()> {
        let in_hemisphere = self.aoa_rad.abs() < std::f64::consts::FRAC_PI_2
            && self.aod_rad.abs() < std::f64::consts::FRAC_PI_2;
        if !in_hemisphere {
            return Err(CoreError::InvalidArgument(
                "target angles must lie strictly inside (-pi/2, pi/2)".into(),
            ));
        }
        if self.delay_s < 0.0 || self.delay_s >= config.max_delay_s() {
            return Err(CoreError::InvalidArgument(format!(
                "target delay {} outside [0, {})",
                self.delay_s,
                config.max_delay_s()
            )));
        }
        Ok(())
    }

    /// Composite gain: path gain times both pattern gains at the path angles.
    pub fn composite_gain(&self, config: &ScenarioConfig) -> C64 {
        self.gain
            * radiation_gain(&config.tx_pattern, self.aod_rad)
            * radiation_gain(&config.rx_pattern, self.aoa_rad)
    }
}

/// ULA steering vector. Element `m` carries phase `-2*pi*m*spacing*sin(angle)`,
/// `m = 0..n_elems-1`; element 0 is exactly `1 + 0j`. This sign convention is
/// shared by every module so the pencil eigenvalue inversion recovers angles
/// with a leading `-asin`.
pub fn steering_vector(
    angle_rad: f64,
    n_elems: usize,
    spacing_wavelengths: f64,
) -> Result<CVector> {
    if !angle_rad.is_finite() {
        return Err(CoreError::InvalidArgument(
            "non-finite steering angle".into(),
        ));
    }
    let spacing_ok = spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0;
    if n_elems < 1 || !spacing_ok {
        return Err(CoreError::InvalidArgument(
            "steering vector needs n_elems >= 1 and spacing > 0".into(),
        ));
    }
    let step = -std::f64::consts::TAU * spacing_wavelengths * angle_rad.sin();
    Ok(CVector::from_fn(n_elems, |m, _| cis(step * m as f64)))
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Pattern gain at an angle. Isotropic patterns return exactly 1.
pub fn radiation_gain(pattern: &RadiationPattern, angle_rad: f64) -> C64 {
    match *pattern {
        RadiationPattern::Isotropic => C64::new(1.0, 0.0),
        RadiationPattern::Gaussian {
            gain,
            boresight_rad,
            beamwidth,
        } => {
            let off = wrap_angle(angle_rad - boresight_rad);
            C64::new(gain * (-(off * off) / (beamwidth * beamwidth)).exp(), 0.0)
        }
    }
}

/// Per-subcarrier delay phase, `c_n(tau) = e^{-j 2 pi n delta_f tau}` with the
/// 1-based subcarrier index `n`.
pub fn delay_phase(subcarrier_index: usize, spacing_hz: f64, delay_s: f64) -> C64 {
    cis(-std::f64::consts::TAU * subcarrier_index as f64 * spacing_hz * delay_s)
}

/// Frequency-domain channel on one subcarrier:
/// `H_n = sum_k composite_gain_k * c_n(tau_k) * a_r(theta_k) a_t^T(phi_k)`.
///
/// `subcarrier_index` is 1-based, `1..=n_subcarriers`.
pub fn channel_matrix(
    config: &ScenarioConfig,
    targets: &[TargetPath],
    subcarrier_index: usize,
) -> Result<CMatrix> {
    if subcarrier_index < 1 || subcarrier_index > config.n_subcarriers {
        return Err(CoreError::InvalidArgument(format!(
            "subcarrier index {subcarrier_index} outside 1..={}",
            config.n_subcarriers
        )));
    }
    let geometry = TargetGeometry::prepare(config, targets)?;
    Ok(geometry.channel_at(subcarrier_index))
}

/// Per-target steering vectors and gains, computed once and reused across
/// subcarriers.
pub struct TargetGeometry<'a> {
    config: &'a ScenarioConfig,
    targets: &'a [TargetPath],
    steer_rx: Vec<CVector>,
    steer_tx: Vec<CVector>,
    gains: Vec<C64>,
}

impl<'a> TargetGeometry<'a> {
    pub fn prepare(config: &'a ScenarioConfig, targets: &'a [TargetPath]) -> Result<Self> {
        config.validate()?;
        if targets.is_empty() {
            return Err(CoreError::InvalidArgument("no targets".into()));
        }
        let mut steer_rx = Vec::with_capacity(targets.len());
        let mut steer_tx = Vec::with_capacity(targets.len());
        let mut gains = Vec::with_capacity(targets.len());
        for target in targets {
            target.validate(config)?;
            steer_rx.push(steering_vector(
                target.aoa_rad,
                config.n_rx,
                config.element_spacing_rx,
            )?);
            steer_tx.push(steering_vector(
                target.aod_rad,
                config.n_tx,
                config.element_spacing_tx,
            )?);
            gains.push(target.composite_gain(config));
        }
        Ok(Self {
            config,
            targets,
            steer_rx,
            steer_tx,
            gains,
        })
    }

    /// `H_n` for a 1-based subcarrier index.
    pub fn channel_at(&self, subcarrier_index: usize) -> CMatrix {
        let cfg = self.config;
        let mut h = CMatrix::zeros(cfg.n_rx, cfg.n_tx);
        for (i, target) in self.targets.iter().enumerate() {
            let scale = self.gains[i]
                * delay_phase(subcarrier_index, cfg.subcarrier_spacing_hz, target.delay_s);
            let a_r = &self.steer_rx[i];
            let a_t = &self.steer_tx[i];
            for t in 0..cfg.n_tx {
                let col = scale * a_t[t];
                for r in 0..cfg.n_rx {
                    h[(r, t)] += col * a_r[r];
                }
            }
        }
        h
    }
}

/// Random unit-power QPSK pilots, `(subcarrier, symbol, tx)`.
///
/// Each subcarrier's symbol block is redrawn until its Gram matrix
/// `S S^H` has condition number <= 1e6, so the least-squares channel
/// estimator is always well posed.
pub fn generate_pilots(config: &ScenarioConfig) -> Result<ComplexTensor> {
    config.validate()?;
    let (n_p, k_p, n_t) = (config.n_subcarriers, config.n_symbols, config.n_tx);
    let mut rng = derive_rng(config.rng_seed, 0, "pilots");
    let mut tensor = ComplexTensor::zeros(vec![
        ("subcarrier".into(), n_p),
        ("symbol".into(), k_p),
        ("tx".into(), n_t),
    ])?;
    for n in 0..n_p {
        let mut attempts = 0;
        loop {
            let block = CMatrix::from_fn(n_t, k_p, |_, _| qpsk_symbol(&mut rng));
            // Frobenius bound on the Gram condition number; resampling a hair
            // too eagerly is harmless
            let gram = &block * block.adjoint();
            let cond_gram = match gram.clone().try_inverse() {
                Some(inv) => gram.norm() * inv.norm(),
                None => f64::INFINITY,
            };
            if cond_gram <= 1e6 {
                for k in 0..k_p {
                    for t in 0..n_t {
                        tensor.set(&[n, k, t], block[(t, k)]);
                    }
                }
                break;
            }
            attempts += 1;
            if attempts > 100 {
                return Err(CoreError::IllConditionedPilots { cond: cond_gram });
            }
        }
    }
    Ok(tensor)
}

/// Noisy received pilots, `(subcarrier, symbol, rx)`:
/// `y_{n,k} = H_n s_{n,k} + w_{n,k}` with `w ~ CN(0, noise_var I)`.
///
/// The channel is time invariant: one `H_n` serves all symbols of a subcarrier.
pub fn simulate_rx(
    config: &ScenarioConfig,
    targets: &[TargetPath],
    pilots: &ComplexTensor,
) -> Result<ComplexTensor> {
    let (n_p, k_p, n_r) = (config.n_subcarriers, config.n_symbols, config.n_rx);
    let dims_ok = pilots.extent("subcarrier") == Some(n_p)
        && pilots.extent("symbol") == Some(k_p)
        && pilots.extent("tx") == Some(config.n_tx);
    if !dims_ok {
        return Err(CoreError::InvalidArgument(
            "pilot tensor dimensions do not match the scenario".into(),
        ));
    }
    let mut rng = derive_rng(config.rng_seed, 0, "noise");
    let mut rx = ComplexTensor::zeros(vec![
        ("subcarrier".into(), n_p),
        ("symbol".into(), k_p),
        ("rx".into(), n_r),
    ])?;
    let geometry = TargetGeometry::prepare(config, targets)?;
    for n in 0..n_p {
        let h = geometry.channel_at(n + 1);
        let s = pilots.subcarrier_matrix(n);
        let y = &h * &s;
        for k in 0..k_p {
            for r in 0..n_r {
                let noise = if config.noise_var > 0.0 {
                    complex_gaussian(&mut rng, config.noise_var)
                } else {
                    C64::new(0.0, 0.0)
                };
                rx.set(&[n, k, r], y[(r, k)] + noise);
            }
        }
    }
    Ok(rx)
}

// ---------------------------------------------------------------------------
// Scenario files (JSON, angles in degrees)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PatternFile {
    Isotropic,
    Gaussian {
        gain: f64,
        boresight_deg: f64,
        beamwidth: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetFile {
    pub aoa_deg: f64,
    pub aod_deg: f64,
    pub delay_s: f64,
    pub gain_re: f64,
    pub gain_im: f64,
}

/// On-disk scenario schema. Keys mirror [`ScenarioConfig`]; angles are degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub element_spacing_tx: f64,
    pub element_spacing_rx: f64,
    pub noise_var: f64,
    pub tx_pattern: PatternFile,
    pub rx_pattern: PatternFile,
    pub rng_seed: u64,
    #[serde(default)]
    pub targets: Vec<TargetFile>,
}

impl From<&PatternFile> for RadiationPattern {
    fn from(p: &PatternFile) -> Self {
        match *p {
            PatternFile::Isotropic => RadiationPattern::Isotropic,
            PatternFile::Gaussian {
                gain,
                boresight_deg,
                beamwidth,
            } => RadiationPattern::Gaussian {
                gain,
                boresight_rad: boresight_deg.to_radians(),
                beamwidth,
            },
        }
    }
}

impl From<&RadiationPattern> for PatternFile {
    fn from(p: &RadiationPattern) -> Self {
        match *p {
            RadiationPattern::Isotropic => PatternFile::Isotropic,
            RadiationPattern::Gaussian {
                gain,
                boresight_rad,
                beamwidth,
            } => PatternFile::Gaussian {
                gain,
                boresight_deg: boresight_rad.to_degrees(),
                beamwidth,
            },
        }
    }
}

impl ScenarioFile {
    pub fn to_config(&self) -> Result<(ScenarioConfig, Vec<TargetPath>)> {
        let config = ScenarioConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_subcarriers: self.n_subcarriers,
            n_symbols: self.n_symbols,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
            element_spacing_tx: self.element_spacing_tx,
            element_spacing_rx: self.element_spacing_rx,
            noise_var: self.noise_var,
            tx_pattern: (&self.tx_pattern).into(),
            rx_pattern: (&self.rx_pattern).into(),
            rng_seed: self.rng_seed,
        };
        config.validate()?;
        let targets: Vec<TargetPath> = self
            .targets
            .iter()
            .map(|t| TargetPath {
                aoa_rad: t.aoa_deg.to_radians(),
                aod_rad: t.aod_deg.to_radians(),
                delay_s: t.delay_s,
                gain: C64::new(t.gain_re, t.gain_im),
            })
            .collect();
        for t in &targets {
            t.validate(&config)?;
        }
        Ok((config, targets))
    }

    pub fn from_config(config: &ScenarioConfig, targets: &[TargetPath]) -> Self {
        Self {
            n_tx: config.n_tx,
            n_rx: config.n_rx,
            n_subcarriers: config.n_subcarriers,
            n_symbols: config.n_symbols,
            subcarrier_spacing_hz: config.subcarrier_spacing_hz,
            element_spacing_tx: config.element_spacing_tx,
            element_spacing_rx: config.element_spacing_rx,
            noise_var: config.noise_var,
            tx_pattern: (&config.tx_pattern).into(),
            rx_pattern: (&config.rx_pattern).into(),
            rng_seed: config.rng_seed,
            targets: targets
                .iter()
                .map(|t| TargetFile {
                    aoa_deg: t.aoa_rad.to_degrees(),
                    aod_deg: t.aod_rad.to_degrees(),
                    delay_s: t.delay_s,
                    gain_re: t.gain.re,
                    gain_im: t.gain.im,
                })
                .collect(),
        }
    }
}
