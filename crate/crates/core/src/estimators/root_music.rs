//! Root-MUSIC for uniform linear arrays.

use num_complex::Complex64;

use super::polynomial::polynomial_roots;
use super::DoaEstimate;
use crate::array::UlaGeometry;
use crate::error::{DoaError, Result};
use crate::CMatrix;

/// Roots closer than this to the unit circle are treated as lying on it.
const ON_CIRCLE_BAND: f64 = 1e-6;
/// Two on-circle roots closer than this are one split multiple root.
const MERGE_DISTANCE: f64 = 1e-3;

/// Intermediate results of a Root-MUSIC solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RootMusicSolution {
    /// Polynomial coefficients in ascending powers of `z`.
    pub coefficients: Vec<Complex64>,
    pub roots: Vec<Complex64>,
    /// The roots that produced the estimate, in estimate order.
    pub selected: Vec<Complex64>,
    pub estimate: DoaEstimate,
}

/// Coefficients of `z^(M-1)·a^H(z)·C·a(z)` with `C = U·U^H`, ascending powers.
///
/// The coefficient of `z^(k+M-1)` is the sum of the `k`-th diagonal of `C`.
/// Negative diagonals are set to the conjugates of the positive ones so the
/// polynomial is exactly conjugate self-reciprocal.
pub fn root_music_polynomial(u_n: &CMatrix) -> Vec<Complex64> {
    let m = u_n.nrows();
    let c = u_n * u_n.adjoint();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
    for k in 0..m {
        let diag: Complex64 = (0..m - k).map(|i| c[(i, i + k)]).sum();
        coeffs[m - 1 + k] = diag;
        coeffs[m - 1 - k] = diag.conj();
    }
    coeffs[m - 1].im = 0.0;
    coeffs
}

pub fn root_music_solve(
    u_n: &CMatrix,
    geometry: &UlaGeometry,
    num_sources: usize,
) -> Result<RootMusicSolution> {
    if geometry.spacing_wavelengths() > 0.5 {
        return Err(DoaError::domain(
            "Root-MUSIC needs element spacing of at most half a wavelength",
        ));
    }
    if u_n.ncols() == 0 || u_n.nrows() != geometry.num_elements() {
        return Err(DoaError::domain(format!(
            "noise subspace shape {:?} does not fit a {}-element array",
            u_n.shape(),
            geometry.num_elements()
        )));
    }
    if num_sources == 0 {
        return Err(DoaError::domain("need at least one source"));
    }
    let coefficients = root_music_polynomial(u_n);
    let roots = polynomial_roots(&coefficients)?;

    // Conjugate-reciprocal pairs straddle the circle; keep the inside member.
    // Near the circle the two members can split tangentially instead, so
    // nearby on-circle roots are merged into their mean.
    let mut on_circle: Vec<Complex64> = roots
        .iter()
        .copied()
        .filter(|z| (z.norm() - 1.0).abs() < ON_CIRCLE_BAND)
        .collect();
    let mut candidates: Vec<Complex64> = roots
        .iter()
        .copied()
        .filter(|z| z.norm() <= 1.0 - ON_CIRCLE_BAND)
        .collect();
    while on_circle.len() >= 2 {
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..on_circle.len() {
            for j in (i + 1)..on_circle.len() {
                let d = (on_circle[i] - on_circle[j]).norm();
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        if best.2 >= MERGE_DISTANCE {
            break;
        }
        let (i, j, _) = best;
        let merged = (on_circle[i] + on_circle[j]) * 0.5;
        on_circle.swap_remove(j);
        on_circle.swap_remove(i);
        candidates.push(merged);
    }
    candidates.extend(on_circle);

    if candidates.len() < num_sources {
        return Err(DoaError::EstimationFailure(format!(
            "Root-MUSIC found {} candidate roots inside the unit circle, need {num_sources}",
            candidates.len()
        )));
    }
    candidates.sort_by(|a, b| {
        (1.0 - a.norm())
            .abs()
            .total_cmp(&(1.0 - b.norm()).abs())
            .then(a.arg().total_cmp(&b.arg()))
    });
    candidates.truncate(num_sources);
    let estimate = DoaEstimate::new(
        candidates
            .iter()
            .map(|z| geometry.angle_from_phase_deg(z.arg()))
            .collect(),
    );
    Ok(RootMusicSolution {
        coefficients,
        roots,
        selected: candidates,
        estimate,
    })
}

/// Root-MUSIC estimate from a noise subspace `u_n`.
pub fn root_music(
    u_n: &CMatrix,
    geometry: &UlaGeometry,
    num_sources: usize,
) -> Result<DoaEstimate> {
    root_music_solve(u_n, geometry, num_sources).map(|s| s.estimate)
}
