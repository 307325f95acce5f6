//! Covariance estimation, Hermitian eigendecomposition and the signal/noise
//! subspace split, plus the Boolean column selection that forms a partial
//! noise subspace.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::array::{
    steering_matrix, steering_vector_unchecked, SnapshotMatrix, SourceScenario, UlaGeometry,
};
use crate::error::{DoaError, Result};
use crate::estimators::GridSpec;
use crate::CMatrix;

const HERMITIAN_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;

/// A Hermitian positive semidefinite array covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    data: CMatrix,
}

impl CovarianceMatrix {
    /// Wraps `data` after checking it is square and Hermitian (relative to its
    /// largest entry) with a non-negative real diagonal.
    pub fn new(data: CMatrix) -> Result<Self> {
        if !data.is_square() || data.nrows() == 0 {
            return Err(DoaError::domain(format!(
                "covariance must be square and non-empty, got {:?}",
                data.shape()
            )));
        }
        let scale = data.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let n = data.nrows();
        for i in 0..n {
            if data[(i, i)].re < -1e-10 * scale {
                return Err(DoaError::domain("covariance diagonal must be non-negative"));
            }
            for j in i..n {
                if (data[(i, j)] - data[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                    return Err(DoaError::domain(format!(
                        "covariance is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    /// `A·R_s·A^H + σ²·I` for uncorrelated equal-power sources, with no
    /// sampling error.
    pub fn exact(geometry: &UlaGeometry, scenario: &SourceScenario) -> Result<Self> {
        scenario.validate_for(geometry)?;
        let a = steering_matrix(geometry, scenario.doas_deg())?;
        let m = geometry.num_elements();
        let ps = Complex64::new(scenario.source_power(), 0.0);
        let mut r = &a * a.adjoint() * ps;
        for i in 0..m {
            r[(i, i)] += scenario.noise_power();
        }
        Ok(Self { data: hermitize(r) })
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

fn hermitize(mut r: CMatrix) -> CMatrix {
    let n = r.nrows();
    for i in 0..n {
        r[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (r[(i, j)] + r[(j, i)].conj()) * 0.5;
            r[(i, j)] = avg;
            r[(j, i)] = avg.conj();
        }
    }
    r
}

/// `R̂ = (1/N)·Σ x(t)·x(t)^H`. Only the upper triangle is accumulated and the
/// lower one mirrored, so the result is exactly Hermitian.
pub fn sample_covariance(x: &SnapshotMatrix) -> CovarianceMatrix {
    let data = x.data();
    let m = data.nrows();
    let n = data.ncols() as f64;
    let mut r = DMatrix::<Complex64>::zeros(m, m);
    for col in data.column_iter() {
        for i in 0..m {
            let xi = col[i];
            for j in i..m {
                r[(i, j)] += xi * col[j].conj();
            }
        }
    }
    for i in 0..m {
        r[(i, i)] = Complex64::new(r[(i, i)].re / n, 0.0);
        for j in (i + 1)..m {
            r[(i, j)] /= n;
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    CovarianceMatrix { data: r }
}

/// Eigenpairs sorted by descending eigenvalue; column `k` of `eigenvectors`
/// pairs with `eigenvalues[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

/// Cyclic complex Jacobi eigensolver for Hermitian matrices.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary and then applies a real Jacobi rotation, so the combined transform
/// is `G = Φ·P`. Sweeps continue until the off-diagonal mass stops shrinking
/// at the rounding floor.
pub fn hermitian_eig(r: &CovarianceMatrix) -> Result<EigenDecomposition> {
    let n = r.dim();
    let mut a = r.data.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let frob = a.norm();

    let off_norm = |a: &CMatrix| {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += a[(p, q)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };

    let mut off = off_norm(&a);
    let mut sweeps = 0;
    while off > f64::EPSILON * frob {
        if sweeps == MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        let next = off_norm(&a);
        if next >= off && next <= 1e-12 * frob {
            off = next;
            break;
        }
        off = next;
    }
    if off > 1e-12 * frob {
        return Err(DoaError::numerical(
            "hermitian_eig",
            format!(
                "no convergence after {sweeps} sweeps: off-diagonal norm {off:e}, \
                 matrix norm {frob:e}"
            ),
        ));
    }

    // Stable sort keeps ascending original index among equal eigenvalues.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |row, k| v[(row, order[k])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta.is_infinite() {
        0.0
    } else {
        let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    if t == 0.0 {
        return;
    }
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.nrows();

    // G_pp = c, G_pq = s, G_qp = -s·conj(e), G_qq = c·conj(e)
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * g_qp;
        a[(k, q)] = akp * s + akq * g_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * g_qp.conj();
        a[(q, k)] = apk * s + aqk * g_qq.conj();
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * g_qp;
        v[(k, q)] = vkp * s + vkq * g_qq;
    }
}

/// Signal subspace (P largest eigenvalues) and noise subspace (the rest).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePartition {
    pub signal_subspace: CMatrix,
    pub noise_subspace: CMatrix,
    pub signal_eigenvalues: Vec<f64>,
    pub noise_eigenvalues: Vec<f64>,
}

impl SubspacePartition {
    pub fn num_sources(&self) -> usize {
        self.signal_subspace.ncols()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_subspace.ncols()
    }
}

pub fn partition_subspaces(
    eig: &EigenDecomposition,
    num_sources: usize,
) -> Result<SubspacePartition> {
    let m = eig.eigenvalues.len();
    if num_sources == 0 || num_sources >= m {
        return Err(DoaError::domain(format!(
            "number of sources must be in [1, {}), got {num_sources}",
            m
        )));
    }
    Ok(SubspacePartition {
        signal_subspace: eig.eigenvectors.columns(0, num_sources).into_owned(),
        noise_subspace: eig
            .eigenvectors
            .columns(num_sources, m - num_sources)
            .into_owned(),
        signal_eigenvalues: eig.eigenvalues[..num_sources].to_vec(),
        noise_eigenvalues: eig.eigenvalues[num_sources..].to_vec(),
    })
}

/// Boolean selection over the noise eigenvectors; bit `j` keeps column `j` of
/// `U_n` (columns ordered by descending eigenvalue).
///
/// The binary value of a mask reads the bits as a numeral with bit 0 as the
/// most significant digit, which is also how masks are written as strings:
/// `"001"` selects only the smallest-eigenvalue column of a 3-dimensional
/// noise subspace and has binary value 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionMask {
    bits: Vec<bool>,
}

impl SelectionMask {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(DoaError::domain(
                "selection mask must keep at least one column",
            ));
        }
        Ok(Self { bits })
    }

    pub fn full(dim: usize) -> Result<Self> {
        Self::new(vec![true; dim])
    }

    /// Mask whose binary value is `code` (see the type docs), for `dim <= 64`.
    pub fn from_code(dim: usize, code: u64) -> Result<Self> {
        if dim == 0 || dim > 64 || (dim < 64 && code >> dim != 0) {
            return Err(DoaError::domain(format!(
                "code {code:#b} does not fit {dim} bits"
            )));
        }
        Self::new((0..dim).map(|j| code >> (dim - 1 - j) & 1 == 1).collect())
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(DoaError::domain(format!(
                    "invalid mask character {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(DoaError::domain("empty mask string"));
        }
        Self::new(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected columns `K`.
    pub fn k(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn code(&self) -> u64 {
        self.bits
            .iter()
            .fold(0, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| j)
    }
}

impl std::fmt::Display for SelectionMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// `U_K`: the mask-selected columns of `U_n`, in order.
pub fn partial_subspace(partition: &SubspacePartition, mask: &SelectionMask) -> Result<CMatrix> {
    if mask.len() != partition.noise_dim() {
        return Err(DoaError::domain(format!(
            "mask length {} does not match noise subspace dimension {}",
            mask.len(),
            partition.noise_dim()
        )));
    }
    let columns: Vec<_> = mask
        .selected()
        .map(|j| partition.noise_subspace.column(j).into_owned())
        .collect();
    Ok(DMatrix::from_columns(&columns))
}

/// `|u_j^H a|²` for every column of `u`, in column order.
pub(crate) fn column_energies<'a>(
    u: &'a CMatrix,
    a: &'a nalgebra::DVector<Complex64>,
) -> impl Iterator<Item = f64> + 'a {
    u.column_iter().map(move |col| {
        let mut dot = Complex64::new(0.0, 0.0);
        for (um, am) in col.iter().zip(a.iter()) {
            dot += um.conj() * am;
        }
        dot.norm_sqr()
    })
}

/// Per-eigenvector projection energies `e_j(θ_g) = |u_j^H a(θ_g)|²` over a grid.
///
/// For any Boolean mask the partial-subspace MUSIC denominator at `θ_g` is the
/// sum of `e_j(θ_g)` over the selected columns, so a subset search only needs
/// these energies once per decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEnergies {
    grid_angles_deg: Vec<f64>,
    dim: usize,
    energies: Vec<f64>,
}

impl ProjectionEnergies {
    pub fn grid_angles_deg(&self) -> &[f64] {
        &self.grid_angles_deg
    }

    pub fn noise_dim(&self) -> usize {
        self.dim
    }

    pub fn num_angles(&self) -> usize {
        self.grid_angles_deg.len()
    }

    /// Energies at grid point `g`, one per noise eigenvector.
    pub fn row(&self, g: usize) -> &[f64] {
        &self.energies[g * self.dim..(g + 1) * self.dim]
    }

    pub fn get(&self, g: usize, j: usize) -> f64 {
        self.energies[g * self.dim + j]
    }

    /// Denominator at each grid point for `mask`, summing selected columns in
    /// ascending column order.
    pub fn masked_denominators(&self, mask: &SelectionMask) -> Result<Vec<f64>> {
        if mask.len() != self.dim {
            return Err(DoaError::domain(format!(
                "mask length {} does not match noise subspace dimension {}",
                mask.len(),
                self.dim
            )));
        }
        let cols: Vec<usize> = mask.selected().collect();
        Ok(self.sum_columns(&cols))
    }

    pub(crate) fn sum_columns(&self, cols: &[usize]) -> Vec<f64> {
        self.energies
            .chunks_exact(self.dim)
            .map(|row| cols.iter().fold(0.0, |acc, &j| acc + row[j]))
            .collect()
    }
}

pub fn projection_energies(
    partition: &SubspacePartition,
    geometry: &UlaGeometry,
    grid: &GridSpec,
) -> Result<ProjectionEnergies> {
    if partition.noise_subspace.nrows() != geometry.num_elements() {
        return Err(DoaError::domain("partition does not match array size"));
    }
    let angles = grid.angles();
    let dim = partition.noise_dim();
    let mut energies = Vec::with_capacity(angles.len() * dim);
    for &theta in &angles {
        let a = steering_vector_unchecked(geometry, theta);
        energies.extend(column_energies(&partition.noise_subspace, &a));
    }
    Ok(ProjectionEnergies {
        grid_angles_deg: angles,
        dim,
        energies,
    })
}
