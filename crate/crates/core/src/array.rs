//! Uniform linear array geometry, far-field source scenarios and synthetic
//! snapshot generation.
//!
//! Angles cross the API in degrees and are measured from broadside. Element
//! `m` (zero-based) of the steering vector is `exp(j·2π·(d/λ)·m·sin θ)`, so the
//! first element is the phase reference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::{CMatrix, CVector};

/// Geometry of a uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    num_elements: usize,
    spacing_wavelengths: f64,
}

impl UlaGeometry {
    pub const DEFAULT_SPACING: f64 = 0.5;

    pub fn new(num_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        if num_elements < 2 {
            return Err(DoaError::domain(format!(
                "array needs at least 2 elements, got {num_elements}"
            )));
        }
        if !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
            return Err(DoaError::domain(format!(
                "element spacing must be positive, got {spacing_wavelengths}"
            )));
        }
        Ok(Self {
            num_elements,
            spacing_wavelengths,
        })
    }

    /// Half-wavelength array with `num_elements` sensors.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, Self::DEFAULT_SPACING)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }

    /// Electrical angle `2π·(d/λ)·sin θ` for `theta_rad`.
    pub(crate) fn spatial_frequency(&self, theta_rad: f64) -> f64 {
        2.0 * PI * self.spacing_wavelengths * theta_rad.sin()
    }

    /// Inverse of [`spatial_frequency`](Self::spatial_frequency), in degrees.
    /// The arcsine argument is clipped to `[-1, 1]`.
    pub(crate) fn angle_from_phase_deg(&self, phase: f64) -> f64 {
        let s = phase / (2.0 * PI * self.spacing_wavelengths);
        s.clamp(-1.0, 1.0).asin().to_degrees()
    }
}

/// A set of equal-power uncorrelated narrowband sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScenario {
    doas_deg: Vec<f64>,
    snr_db: f64,
    noise_power: f64,
}

impl SourceScenario {
    /// Builds a scenario with unit noise power. `snr_db` is the per-source
    /// power over the noise power; `-inf` suppresses the sources entirely.
    pub fn new(doas_deg: Vec<f64>, snr_db: f64) -> Result<Self> {
        if doas_deg.is_empty() {
            return Err(DoaError::domain("scenario needs at least one source"));
        }
        for &theta in &doas_deg {
            if !(theta > -90.0 && theta < 90.0) {
                return Err(DoaError::domain(format!(
                    "source direction {theta} deg outside (-90, 90)"
                )));
            }
        }
        check_distinct(&doas_deg)?;
        if snr_db.is_nan() || snr_db == f64::INFINITY {
            return Err(DoaError::domain(format!("invalid SNR {snr_db} dB")));
        }
        Ok(Self {
            doas_deg,
            snr_db,
            noise_power: 1.0,
        })
    }

    /// Overrides the noise power. Zero gives noiseless snapshots; the source
    /// power is unaffected.
    pub fn with_noise_power(mut self, noise_power: f64) -> Result<Self> {
        if !(noise_power.is_finite() && noise_power >= 0.0) {
            return Err(DoaError::domain(format!(
                "noise power must be finite and non-negative, got {noise_power}"
            )));
        }
        self.noise_power = noise_power;
        Ok(self)
    }

    /// Same sources at a different SNR.
    pub fn with_snr_db(&self, snr_db: f64) -> Result<Self> {
        Self::new(self.doas_deg.clone(), snr_db)?.with_noise_power(self.noise_power)
    }

    pub fn doas_deg(&self) -> &[f64] {
        &self.doas_deg
    }

    pub fn num_sources(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Per-source power `10^(snr/10)`.
    pub fn source_power(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Checks `1 <= P < M` for the given array.
    pub fn validate_for(&self, geometry: &UlaGeometry) -> Result<()> {
        let p = self.num_sources();
        if p >= geometry.num_elements() {
            return Err(DoaError::domain(format!(
                "{p} sources need more than {p} elements, array has {}",
                geometry.num_elements()
            )));
        }
        Ok(())
    }
}

fn check_distinct(angles: &[f64]) -> Result<()> {
    for (i, a) in angles.iter().enumerate() {
        if angles[..i].contains(a) {
            return Err(DoaError::domain(format!("duplicate direction {a} deg")));
        }
    }
    Ok(())
}

fn check_angle(theta_deg: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&theta_deg) {
        return Err(DoaError::domain(format!(
            "angle {theta_deg} deg outside [-90, 90]"
        )));
    }
    Ok(())
}

/// Master seed for all randomness in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    /// Seed for one trial at one sweep point:
    /// `splitmix64(master ^ splitmix64((sweep << 32) ^ trial))`.
    ///
    /// Every trial can be replayed on its own from `(master, sweep, trial)`.
    pub fn derive(self, sweep_index: u64, trial_index: u64) -> RandomSeed {
        let position = splitmix64((sweep_index << 32) ^ trial_index);
        RandomSeed(splitmix64(self.0 ^ position))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Received data, one column per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: CMatrix,
}

impl SnapshotMatrix {
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(DoaError::domain("snapshot matrix must be non-empty"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn num_elements(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

pub fn steering_vector(geometry: &UlaGeometry, theta_deg: f64) -> Result<CVector> {
    check_angle(theta_deg)?;
    Ok(steering_vector_unchecked(geometry, theta_deg))
}

pub(crate) fn steering_vector_unchecked(geometry: &UlaGeometry, theta_deg: f64) -> CVector {
    let w = geometry.spatial_frequency(theta_deg.to_radians());
    DVector::from_iterator(
        geometry.num_elements(),
        (0..geometry.num_elements()).map(|m| Complex64::from_polar(1.0, w * m as f64)),
    )
}

/// Derivative of the steering vector with respect to θ in radians.
pub fn steering_derivative(geometry: &UlaGeometry, theta_deg: f64) -> Result<CVector> {
    check_angle(theta_deg)?;
    let theta = theta_deg.to_radians();
    let dw = 2.0 * PI * geometry.spacing_wavelengths() * theta.cos();
    let a = steering_vector_unchecked(geometry, theta_deg);
    Ok(DVector::from_iterator(
        a.len(),
        a.iter()
            .enumerate()
            .map(|(m, &am)| Complex64::new(0.0, dw * m as f64) * am),
    ))
}

/// Array manifold `A = [a(θ_1), …, a(θ_P)]`.
pub fn steering_matrix(geometry: &UlaGeometry, doas_deg: &[f64]) -> Result<CMatrix> {
    check_distinct(doas_deg)?;
    let columns = doas_deg
        .iter()
        .map(|&theta| steering_vector(geometry, theta))
        .collect::<Result<Vec<_>>>()?;
    if columns.is_empty() {
        return Ok(DMatrix::zeros(geometry.num_elements(), 0));
    }
    Ok(DMatrix::from_columns(&columns))
}

fn circular_gaussian(rng: &mut impl Rng, power: f64) -> Complex64 {
    let scale = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

/// Source waveforms and the resulting array snapshots `X = A·S + N`.
///
/// All source samples are drawn before any noise sample, so changing the
/// noise power leaves `S` untouched.
pub(crate) fn generate_with_sources(
    geometry: &UlaGeometry,
    scenario: &SourceScenario,
    num_snapshots: usize,
    seed: RandomSeed,
) -> Result<(SnapshotMatrix, CMatrix)> {
    scenario.validate_for(geometry)?;
    if num_snapshots == 0 {
        return Err(DoaError::domain("need at least one snapshot"));
    }
    let m = geometry.num_elements();
    let p = scenario.num_sources();
    let mut rng = ChaCha12Rng::seed_from_u64(seed.0);

    let source_power = scenario.source_power();
    let sources = DMatrix::from_fn(p, num_snapshots, |_, _| {
        circular_gaussian(&mut rng, source_power)
    });
    let noise_power = scenario.noise_power();
    let noise = DMatrix::from_fn(m, num_snapshots, |_, _| {
        circular_gaussian(&mut rng, noise_power)
    });

    let a = steering_matrix(geometry, scenario.doas_deg())?;
    let x = &a * &sources + noise;
    Ok((SnapshotMatrix::new(x)?, sources))
}

/// Draws `num_snapshots` snapshots of the scenario. A pure function of its
/// arguments.
pub fn generate_snapshots(
    geometry: &UlaGeometry,
    scenario: &SourceScenario,
    num_snapshots: usize,
    seed: RandomSeed,
) -> Result<SnapshotMatrix> {
    generate_with_sources(geometry, scenario, num_snapshots, seed).map(|(x, _)| x)
}
