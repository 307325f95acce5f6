//! Simultaneous polynomial root finding (Aberth–Ehrlich).

use num_complex::Complex64;

use crate::error::{DoaError, Result};

const MAX_ITERATIONS: usize = 2000;

/// `p(z)` and `p'(z)` by Horner's rule; coefficients in ascending powers.
fn eval_with_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Backward error `|p(z)| / Σ_k |c_k|·|z|^k`. On the unit circle this is
/// `|p(z)| / ‖c‖₁`.
pub fn relative_residual(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    let mut p = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for &c in coeffs.iter().rev() {
        p = p * z + c;
        scale = scale * r + c.norm();
    }
    if scale == 0.0 {
        0.0
    } else {
        p.norm() / scale
    }
}

/// All roots of `Σ_k coeffs[k]·z^k`, with multiplicity.
///
/// Leading zero coefficients lower the degree; trailing zeros contribute roots
/// at the origin. Iteration stops per root once its Aberth correction is at
/// the rounding floor or its backward error is a few ulps.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let hi = coeffs
        .iter()
        .rposition(|c| *c != Complex64::new(0.0, 0.0))
        .ok_or_else(|| DoaError::domain("zero polynomial has no finite root set"))?;
    let lo = coeffs
        .iter()
        .position(|c| *c != Complex64::new(0.0, 0.0))
        .unwrap_or(0);
    let mut roots = vec![Complex64::new(0.0, 0.0); lo];
    let core = &coeffs[lo..=hi];
    let n = core.len() - 1;
    if n == 0 {
        return Ok(roots);
    }
    if n == 1 {
        roots.push(-core[0] / core[1]);
        return Ok(roots);
    }

    let radius = (core[0].norm() / core[n].norm()).powf(1.0 / n as f64);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            Complex64::from_polar(
                radius,
                2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
            )
        })
        .collect();
    let mut done = vec![false; n];
    let tiny = 8.0 * f64::EPSILON;

    for _ in 0..MAX_ITERATIONS {
        if done.iter().all(|&d| d) {
            break;
        }
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (p, dp) = eval_with_derivative(core, z[i]);
            if p == Complex64::new(0.0, 0.0) || relative_residual(core, z[i]) <= tiny {
                done[i] = true;
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                continue;
            }
            z[i] -= step;
            if step.norm() <= f64::EPSILON * z[i].norm().max(1.0) {
                done[i] = true;
            }
        }
    }

    let worst = z
        .iter()
        .map(|&r| relative_residual(core, r))
        .fold(0.0, f64::max);
    if !z.iter().all(|r| r.is_finite()) || worst > 1e-8 {
        return Err(DoaError::numerical(
            "polynomial_roots",
            format!(
                "degree {n}: {} of {n} roots unconverged after {MAX_ITERATIONS} iterations, \
                 worst backward error {worst:e}",
                done.iter().filter(|&&d| !d).count()
            ),
        ));
    }
    roots.extend(z);
    Ok(roots)
}
