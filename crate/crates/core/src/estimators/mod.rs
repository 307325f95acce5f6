//! Spectral MUSIC over a search grid, peak picking, and the polynomial and
//! shift-invariance baselines.

mod esprit;
mod polynomial;
mod root_music;

pub use esprit::esprit;
pub use polynomial::{polynomial_roots, relative_residual};
pub use root_music::{root_music, root_music_polynomial, root_music_solve, RootMusicSolution};

use serde::{Deserialize, Serialize};

use crate::array::{steering_vector_unchecked, UlaGeometry};
use crate::error::{DoaError, Result};
use crate::subspace::column_energies;
use crate::CMatrix;

/// Floor applied to spectrum denominators before taking the reciprocal.
pub const SPECTRUM_CLAMP: f64 = 1e-12;

/// Uniform search grid in degrees, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            start_deg: -90.0,
            stop_deg: 90.0,
            step_deg: 0.1,
        }
    }
}

impl GridSpec {
    pub fn new(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self> {
        let grid = Self {
            start_deg,
            stop_deg,
            step_deg,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_deg.is_finite() && self.stop_deg.is_finite() && self.step_deg.is_finite()) {
            return Err(DoaError::domain("grid bounds must be finite"));
        }
        if self.start_deg >= self.stop_deg {
            return Err(DoaError::domain(format!(
                "grid start {} must be below stop {}",
                self.start_deg, self.stop_deg
            )));
        }
        if self.step_deg <= 0.0 {
            return Err(DoaError::domain(format!(
                "grid step must be positive, got {}",
                self.step_deg
            )));
        }
        if self.start_deg < -90.0 || self.stop_deg > 90.0 {
            return Err(DoaError::domain("grid must lie within [-90, 90] degrees"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid angles `start + i·step`, snapped to 1e-9 degrees so that decimal
    /// grid points such as 5.0 come out exact.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let raw = self.start_deg + i as f64 * self.step_deg;
                ((raw * 1e9).round() / 1e9).min(self.stop_deg)
            })
            .collect()
    }
}

/// A pseudo-spectrum `F(θ) = 1 / max(denominator, ε)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub angles_deg: Vec<f64>,
    pub values: Vec<f64>,
    pub denominators: Vec<f64>,
}

impl SpectrumGrid {
    pub fn from_denominators(angles_deg: Vec<f64>, denominators: Vec<f64>) -> Result<Self> {
        if angles_deg.len() != denominators.len() {
            return Err(DoaError::domain("angle and denominator lengths differ"));
        }
        let values = denominators
            .iter()
            .map(|&d| 1.0 / d.max(SPECTRUM_CLAMP))
            .collect();
        Ok(Self {
            angles_deg,
            values,
            denominators,
        })
    }

    /// Builds a spectrum from its values; denominators are their reciprocals.
    pub fn from_values(angles_deg: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if angles_deg.len() != values.len() {
            return Err(DoaError::domain("angle and value lengths differ"));
        }
        if values.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(DoaError::domain("spectrum values must be positive"));
        }
        let denominators = values.iter().map(|&v| 1.0 / v).collect();
        Ok(Self {
            angles_deg,
            values,
            denominators,
        })
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Direction estimates in degrees, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    angles_deg: Vec<f64>,
}

impl DoaEstimate {
    pub fn new(mut angles_deg: Vec<f64>) -> Self {
        angles_deg.sort_by(f64::total_cmp);
        Self { angles_deg }
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

fn check_orthonormal(u: &CMatrix, tol: f64) -> Result<()> {
    let gram = u.adjoint() * u;
    let k = gram.nrows();
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            if (gram[(i, j)].re - target).abs() > tol || gram[(i, j)].im.abs() > tol {
                return Err(DoaError::domain(format!(
                    "subspace columns are not orthonormal at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// MUSIC pseudo-spectrum of the subspace spanned by `u_k`:
/// `F(θ) = 1 / ‖u_k^H a(θ)‖²`. With the full noise subspace this is classic
/// MUSIC; with a column subset it is the partial-subspace spectrum.
pub fn music_spectrum(
    u_k: &CMatrix,
    geometry: &UlaGeometry,
    grid: &GridSpec,
) -> Result<SpectrumGrid> {
    if u_k.ncols() == 0 {
        return Err(DoaError::domain("subspace must have at least one column"));
    }
    if u_k.nrows() != geometry.num_elements() {
        return Err(DoaError::domain(format!(
            "subspace has {} rows, array has {} elements",
            u_k.nrows(),
            geometry.num_elements()
        )));
    }
    grid.validate()?;
    check_orthonormal(u_k, 1e-8)?;
    let angles = grid.angles();
    if angles.is_empty() {
        return Err(DoaError::domain("empty search grid"));
    }
    let denominators = angles
        .iter()
        .map(|&theta| {
            let a = steering_vector_unchecked(geometry, theta);
            column_energies(u_k, &a).fold(0.0, |acc, e| acc + e)
        })
        .collect();
    SpectrumGrid::from_denominators(angles, denominators)
}

/// Indices of the `p` strongest peaks (smallest denominators), ascending by
/// index. Local maxima are strict on the left and weak on the right so a flat
/// plateau contributes only its first point; endpoints are eligible. Missing
/// peaks are filled from the remaining grid points by height.
pub(crate) fn peak_indices(denominators: &[f64], p: usize, out: &mut Vec<usize>) {
    let g = denominators.len();
    out.clear();
    for i in 0..g {
        let d = denominators[i];
        let left = i == 0 || d < denominators[i - 1];
        let right = i + 1 == g || d <= denominators[i + 1];
        if left && right {
            out.push(i);
        }
    }
    let by_height =
        |&i: &usize, &j: &usize| denominators[i].total_cmp(&denominators[j]).then(i.cmp(&j));
    out.sort_by(by_height);
    if out.len() >= p {
        out.truncate(p);
    } else {
        let mut rest: Vec<usize> = (0..g).filter(|i| !out.contains(i)).collect();
        rest.sort_by(by_height);
        out.extend(rest.into_iter().take(p - out.len()));
    }
    out.sort_unstable();
}

/// Picks the `num_sources` highest local maxima of the spectrum.
///
/// Heights are compared through the unclamped denominators, and equal heights
/// resolve to the lower angle.
pub fn find_peaks(spectrum: &SpectrumGrid, num_sources: usize) -> Result<DoaEstimate> {
    let g = spectrum.len();
    if g < 3 {
        return Err(DoaError::domain(format!(
            "peak search needs at least 3 grid points, got {g}"
        )));
    }
    if num_sources == 0 || num_sources > g {
        return Err(DoaError::domain(format!(
            "cannot pick {num_sources} peaks from {g} grid points"
        )));
    }
    let mut idx = Vec::with_capacity(num_sources);
    peak_indices(&spectrum.denominators, num_sources, &mut idx);
    Ok(DoaEstimate::new(
        idx.iter().map(|&i| spectrum.angles_deg[i]).collect(),
    ))
}
