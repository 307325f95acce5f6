//! Least-squares ESPRIT for uniform linear arrays.

use super::DoaEstimate;
use crate::array::UlaGeometry;
use crate::error::{DoaError, Result};
use crate::CMatrix;

/// Smallest accepted ratio of extreme singular values of the first subarray.
const RANK_TOL: f64 = 1e-10;

/// ESPRIT estimate from a signal subspace `u_s` (M×P).
///
/// Solves `U₁·Ψ ≈ U₂` in the least-squares sense, where `U₁` and `U₂` drop the
/// last and first row of `u_s`; the eigenvalues of `Ψ` carry the
/// inter-element phase shift of each source.
pub fn esprit(u_s: &CMatrix, geometry: &UlaGeometry) -> Result<DoaEstimate> {
    esprit_rotations(u_s, geometry).map(|phi| {
        DoaEstimate::new(
            phi.iter()
                .map(|z| geometry.angle_from_phase_deg(z.arg()))
                .collect(),
        )
    })
}

/// Eigenvalues of the rotation operator `Ψ`.
pub(crate) fn esprit_rotations(
    u_s: &CMatrix,
    geometry: &UlaGeometry,
) -> Result<Vec<num_complex::Complex64>> {
    let (m, p) = u_s.shape();
    if geometry.spacing_wavelengths() > 0.5 {
        return Err(DoaError::domain(
            "ESPRIT needs element spacing of at most half a wavelength",
        ));
    }
    if m != geometry.num_elements() || p == 0 || m < p + 1 {
        return Err(DoaError::domain(format!(
            "signal subspace shape {:?} does not fit a {}-element array",
            u_s.shape(),
            geometry.num_elements()
        )));
    }
    let u1 = u_s.rows(0, m - 1).into_owned();
    let u2 = u_s.rows(1, m - 1).into_owned();
    let svd = u1.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax.is_nan() || smax <= 0.0 || smin / smax < RANK_TOL {
        return Err(DoaError::numerical(
            "esprit",
            format!("subarray is rank deficient: singular values {smin:e} / {smax:e}"),
        ));
    }
    let psi = svd
        .solve(&u2, 0.0)
        .map_err(|e| DoaError::numerical("esprit", e.to_string()))?;
    let eigenvalues = psi
        .schur()
        .eigenvalues()
        .ok_or_else(|| DoaError::numerical("esprit", "Schur form of Ψ is not triangular"))?;
    Ok(eigenvalues.iter().copied().collect())
}
