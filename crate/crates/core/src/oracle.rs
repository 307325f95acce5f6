//! Exhaustive search over partial noise subspaces and simple heuristic
//! selection rules.
//!
//! The oracle scores every non-empty column subset of `U_n` against the true
//! directions. Scoring uses the projection-energy decomposition: the
//! partial-subspace denominator is a subset sum of per-eigenvector energies,
//! so each mask costs one pass over the grid instead of a fresh spectrum.

use serde::{Deserialize, Serialize};

use crate::array::UlaGeometry;
use crate::error::{DoaError, Result};
use crate::estimators::{find_peaks, music_spectrum, peak_indices, DoaEstimate, GridSpec};
use crate::subspace::{
    partial_subspace, projection_energies, ProjectionEnergies, SelectionMask, SubspacePartition,
};

/// Largest noise-subspace dimension the exhaustive search accepts.
pub const MAX_ENUMERATION_DIM: usize = 24;

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_ENUMERATION_DIM {
        return Err(DoaError::domain(format!(
            "mask enumeration dimension must be in [1, {MAX_ENUMERATION_DIM}], got {dim}"
        )));
    }
    Ok(())
}

/// All `2^dim - 1` non-empty masks in ascending binary order.
pub fn enumerate_masks(dim: usize) -> Result<impl Iterator<Item = SelectionMask>> {
    check_dim(dim)?;
    Ok((1u64..(1u64 << dim))
        .map(move |code| SelectionMask::from_code(dim, code).expect("non-zero code fits")))
}

/// RMS error in degrees between sort-paired estimate and truth.
pub fn trial_error(estimate: &DoaEstimate, truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(DoaError::domain(format!(
            "estimate has {} angles, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let mut sorted = truth.to_vec();
    sorted.sort_by(f64::total_cmp);
    squared_error_sum(estimate.angles_deg(), &sorted).map(|s| (s / truth.len() as f64).sqrt())
}

/// `Σ (est_p - truth_p)²` for lists already sorted ascending.
pub(crate) fn squared_error_sum(estimate: &[f64], sorted_truth: &[f64]) -> Result<f64> {
    if estimate.len() != sorted_truth.len() {
        return Err(DoaError::domain("estimate and truth lengths differ"));
    }
    Ok(estimate
        .iter()
        .zip(sorted_truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSearchResult {
    pub best_mask: SelectionMask,
    pub best_estimate: DoaEstimate,
    pub best_error_deg: f64,
    pub masks_evaluated: usize,
}

/// Ordering used to pick the winning mask: error, then `K`, then binary value.
fn better(a: (f64, u32, u64), b: (f64, u32, u64)) -> bool {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .is_lt()
}

/// Per-mask trial errors from precomputed energies; entry `code - 1` belongs
/// to the mask with binary value `code`.
///
/// Masks are visited depth-first by ascending column index and each child adds
/// one column to its parent's running sum, so every denominator is accumulated
/// in ascending column order, exactly as a direct spectrum would be.
pub fn mask_errors(energies: &ProjectionEnergies, truth: &[f64]) -> Result<Vec<f64>> {
    let dim = energies.noise_dim();
    check_dim(dim)?;
    let p = truth.len();
    let g = energies.num_angles();
    if p == 0 || p > g || g < 3 {
        return Err(DoaError::domain(format!(
            "cannot pick {p} peaks from {g} grid points"
        )));
    }
    let mut sorted_truth = truth.to_vec();
    sorted_truth.sort_by(f64::total_cmp);

    let angles = energies.grid_angles_deg();
    let mut errors = vec![f64::NAN; (1usize << dim) - 1];
    let mut stack = vec![vec![0.0; g]; dim + 1];
    let mut peaks = Vec::with_capacity(p);
    let mut est = vec![0.0; p];

    // Explicit DFS: frames (depth, next column to try, code so far).
    let mut frames: Vec<(usize, usize, u64)> = vec![(0, 0, 0)];
    while let Some(frame) = frames.last_mut() {
        let (depth, j, code) = *frame;
        if j == dim {
            frames.pop();
            continue;
        }
        frame.1 += 1;
        let (parent, child) = stack.split_at_mut(depth + 1);
        let parent = &parent[depth];
        let child = &mut child[0];
        for (gi, (c, &base)) in child.iter_mut().zip(parent.iter()).enumerate() {
            *c = base + energies.get(gi, j);
        }
        let child_code = code | 1 << (dim - 1 - j);
        peak_indices(child, p, &mut peaks);
        for (e, &i) in est.iter_mut().zip(&peaks) {
            *e = angles[i];
        }
        let sse = squared_error_sum(&est, &sorted_truth)?;
        errors[child_code as usize - 1] = (sse / p as f64).sqrt();
        frames.push((depth + 1, j + 1, child_code));
    }
    Ok(errors)
}

fn pick_best(errors: &[f64]) -> (u64, f64) {
    let mut best: Option<(f64, u32, u64)> = None;
    for (i, &err) in errors.iter().enumerate() {
        let code = i as u64 + 1;
        let key = (err, code.count_ones(), code);
        if best.is_none_or(|b| better(key, b)) {
            best = Some(key);
        }
    }
    let (err, _, code) = best.expect("at least one mask");
    (code, err)
}

/// Best partial noise subspace for one trial, scored by [`trial_error`]
/// against the true directions.
pub fn oracle_best_subset(
    partition: &SubspacePartition,
    geometry: &UlaGeometry,
    grid: &GridSpec,
    truth: &[f64],
) -> Result<SubsetSearchResult> {
    check_dim(partition.noise_dim())?;
    let energies = projection_energies(partition, geometry, grid)?;
    oracle_from_energies(&energies, truth)
}

pub fn oracle_from_energies(
    energies: &ProjectionEnergies,
    truth: &[f64],
) -> Result<SubsetSearchResult> {
    let dim = energies.noise_dim();
    let errors = mask_errors(energies, truth)?;
    let (code, best_error_deg) = pick_best(&errors);
    let best_mask = SelectionMask::from_code(dim, code)?;
    let denominators = energies.masked_denominators(&best_mask)?;
    let mut peaks = Vec::new();
    peak_indices(&denominators, truth.len(), &mut peaks);
    let best_estimate = DoaEstimate::new(
        peaks
            .iter()
            .map(|&i| energies.grid_angles_deg()[i])
            .collect(),
    );
    Ok(SubsetSearchResult {
        best_mask,
        best_estimate,
        best_error_deg,
        masks_evaluated: errors.len(),
    })
}

/// Reference oracle that rebuilds `U_K` and its spectrum for every mask.
/// Same result as [`oracle_best_subset`], at far higher cost.
pub fn oracle_best_subset_naive(
    partition: &SubspacePartition,
    geometry: &UlaGeometry,
    grid: &GridSpec,
    truth: &[f64],
) -> Result<SubsetSearchResult> {
    let dim = partition.noise_dim();
    let mut best: Option<((f64, u32, u64), SelectionMask, DoaEstimate)> = None;
    let mut evaluated = 0;
    for mask in enumerate_masks(dim)? {
        let uk = partial_subspace(partition, &mask)?;
        let estimate = find_peaks(&music_spectrum(&uk, geometry, grid)?, truth.len())?;
        let err = trial_error(&estimate, truth)?;
        evaluated += 1;
        let key = (err, mask.k() as u32, mask.code());
        if best.as_ref().is_none_or(|(b, _, _)| better(key, *b)) {
            best = Some((key, mask, estimate));
        }
    }
    let ((best_error_deg, _, _), best_mask, best_estimate) = best.expect("at least one mask");
    Ok(SubsetSearchResult {
        best_mask,
        best_estimate,
        best_error_deg,
        masks_evaluated: evaluated,
    })
}

/// Rules for choosing noise eigenvectors without knowledge of the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum HeuristicStrategy {
    /// The `k` eigenvectors with the smallest eigenvalues.
    FixedKSmallest { k: usize },
    /// The `k` eigenvectors with the largest eigenvalues inside the noise block.
    FixedKLargest { k: usize },
    /// Everything below the largest ratio between consecutive noise eigenvalues.
    EigenvalueGap,
}

impl HeuristicStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FixedKSmallest { .. } => "fixed-k-smallest",
            Self::FixedKLargest { .. } => "fixed-k-largest",
            Self::EigenvalueGap => "eigenvalue-gap",
        }
    }

    /// Parses `fixed-k-smallest`, `fixed-k-largest` or `eigenvalue-gap`; the
    /// fixed strategies take `k` from the argument.
    pub fn from_name(name: &str, k: Option<usize>) -> Result<Self> {
        let need_k = || k.ok_or_else(|| DoaError::domain(format!("strategy {name} needs k")));
        match name {
            "fixed-k-smallest" => Ok(Self::FixedKSmallest { k: need_k()? }),
            "fixed-k-largest" => Ok(Self::FixedKLargest { k: need_k()? }),
            "eigenvalue-gap" => Ok(Self::EigenvalueGap),
            other => Err(DoaError::domain(format!(
                "unknown selection strategy {other:?}"
            ))),
        }
    }
}

/// Mask chosen by `strategy` from the noise eigenvalues (descending order).
pub fn heuristic_select(
    noise_eigenvalues: &[f64],
    strategy: HeuristicStrategy,
) -> Result<SelectionMask> {
    let dim = noise_eigenvalues.len();
    if dim == 0 {
        return Err(DoaError::domain("noise subspace is empty"));
    }
    let check_k = |k: usize| {
        if k == 0 || k > dim {
            Err(DoaError::domain(format!(
                "k must be in [1, {dim}], got {k}"
            )))
        } else {
            Ok(k)
        }
    };
    let bits = match strategy {
        HeuristicStrategy::FixedKSmallest { k } => {
            let k = check_k(k)?;
            (0..dim).map(|j| j >= dim - k).collect()
        }
        HeuristicStrategy::FixedKLargest { k } => {
            let k = check_k(k)?;
            (0..dim).map(|j| j < k).collect()
        }
        HeuristicStrategy::EigenvalueGap => {
            let mut cut = 0;
            let mut best_ratio = f64::NEG_INFINITY;
            for i in 0..dim.saturating_sub(1) {
                let ratio = noise_eigenvalues[i] / noise_eigenvalues[i + 1];
                let ratio = if ratio.is_nan() { 1.0 } else { ratio };
                if ratio > best_ratio {
                    best_ratio = ratio;
                    cut = i + 1;
                }
            }
            (0..dim).map(|j| j >= cut).collect()
        }
    };
    SelectionMask::new(bits)
}

/// Distribution of selected subspace dimensions over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub mean_k: f64,
    /// Population standard deviation.
    pub std_k: f64,
    /// `k_histogram[k - 1]` counts trials that selected `K = k`.
    pub k_histogram: Vec<usize>,
}

impl SelectionStats {
    pub fn from_ks(ks: &[usize], dim: usize) -> Result<Self> {
        let mut hist = vec![0; dim];
        for &k in ks {
            if k == 0 || k > dim {
                return Err(DoaError::domain(format!("K = {k} outside [1, {dim}]")));
            }
            hist[k - 1] += 1;
        }
        Self::from_histogram(hist)
    }

    pub fn from_histogram(k_histogram: Vec<usize>) -> Result<Self> {
        let n: usize = k_histogram.iter().sum();
        if n == 0 {
            return Err(DoaError::domain("no trials in histogram"));
        }
        let mean_k = k_histogram
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + 1) as f64 * c as f64)
            .sum::<f64>()
            / n as f64;
        let var = k_histogram
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * ((i + 1) as f64 - mean_k).powi(2))
            .sum::<f64>()
            / n as f64;
        Ok(Self {
            mean_k,
            std_k: var.sqrt(),
            k_histogram,
        })
    }

    pub fn num_trials(&self) -> usize {
        self.k_histogram.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{generate_snapshots, RandomSeed, SourceScenario};
    use crate::subspace::{
        hermitian_eig, partition_subspaces, sample_covariance, CovarianceMatrix,
    };

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(enumerate_masks(3).unwrap().count(), 7);
        assert_eq!(enumerate_masks(9).unwrap().count(), 511);
        let one: Vec<_> = enumerate_masks(1).unwrap().collect();
        assert_eq!(one, vec![SelectionMask::parse("1").unwrap()]);
        let codes: Vec<u64> = enumerate_masks(4).unwrap().map(|m| m.code()).collect();
        assert!(codes.windows(2).all(|w| w[0] < w[1]));
        assert!(enumerate_masks(0).is_err());
        assert!(enumerate_masks(25).is_err());
    }

    #[test]
    fn trial_error_examples() {
        let e = DoaEstimate::new(vec![5.0, 10.0]);
        assert_eq!(trial_error(&e, &[10.0, 5.0]).unwrap(), 0.0);
        assert_eq!(
            trial_error(&DoaEstimate::new(vec![12.0]), &[10.0]).unwrap(),
            2.0
        );
        let err = trial_error(&DoaEstimate::new(vec![3.0, 6.0]), &[0.0, 10.0]).unwrap();
        assert!((err - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(trial_error(&e, &[1.0]).is_err());
    }

    #[test]
    fn heuristic_examples() {
        let evs = vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let all = heuristic_select(&evs, HeuristicStrategy::FixedKSmallest { k: 9 }).unwrap();
        assert_eq!(all.to_string(), "111111111");
        let last3 = heuristic_select(&evs, HeuristicStrategy::FixedKSmallest { k: 3 }).unwrap();
        assert_eq!(last3.to_string(), "000000111");
        let first2 = heuristic_select(&evs, HeuristicStrategy::FixedKLargest { k: 2 }).unwrap();
        assert_eq!(first2.to_string(), "110000000");
        let gap = heuristic_select(
            &[1.0, 0.98, 0.96, 0.5, 0.49],
            HeuristicStrategy::EigenvalueGap,
        )
        .unwrap();
        assert_eq!(gap.to_string(), "00011");
        assert!(heuristic_select(&evs, HeuristicStrategy::FixedKSmallest { k: 0 }).is_err());
        assert!(heuristic_select(&evs, HeuristicStrategy::FixedKLargest { k: 10 }).is_err());
        assert_eq!(
            heuristic_select(&[2.0], HeuristicStrategy::EigenvalueGap)
                .unwrap()
                .to_string(),
            "1"
        );
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            HeuristicStrategy::FixedKSmallest { k: 3 },
            HeuristicStrategy::FixedKLargest { k: 2 },
            HeuristicStrategy::EigenvalueGap,
        ] {
            let k = match s {
                HeuristicStrategy::FixedKSmallest { k }
                | HeuristicStrategy::FixedKLargest { k } => Some(k),
                HeuristicStrategy::EigenvalueGap => None,
            };
            assert_eq!(HeuristicStrategy::from_name(s.name(), k).unwrap(), s);
        }
        assert!(HeuristicStrategy::from_name("fixed-k-smallest", None).is_err());
        assert!(HeuristicStrategy::from_name("best", None).is_err());
    }

    #[test]
    fn stats_from_histogram() {
        let ks = [1, 3, 3, 4, 9, 2];
        let s = SelectionStats::from_ks(&ks, 9).unwrap();
        assert_eq!(s.num_trials(), 6);
        let mean = ks.iter().sum::<usize>() as f64 / 6.0;
        let var = ks.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / 6.0;
        assert!((s.mean_k - mean).abs() < 1e-12);
        assert!((s.std_k - var.sqrt()).abs() < 1e-12);
        assert!(SelectionStats::from_ks(&[0], 9).is_err());
        assert!(SelectionStats::from_ks(&[], 9).is_err());
    }

    #[test]
    fn noiseless_oracle_is_exact() {
        let g = UlaGeometry::half_wavelength(12).unwrap();
        let truth = [5.0, 10.0, 30.0];
        let s = SourceScenario::new(truth.to_vec(), 0.0).unwrap();
        let eig = hermitian_eig(&CovarianceMatrix::exact(&g, &s).unwrap()).unwrap();
        let part = partition_subspaces(&eig, 3).unwrap();
        let res = oracle_best_subset(&part, &g, &GridSpec::default(), &truth).unwrap();
        assert_eq!(res.best_error_deg, 0.0);
        assert_eq!(res.best_estimate.angles_deg(), &truth);
        assert_eq!(res.masks_evaluated, 511);
    }

    #[test]
    fn fast_path_matches_naive_and_dominates_music() {
        let g = UlaGeometry::half_wavelength(6).unwrap();
        let truth = [-8.0, 14.0];
        let s = SourceScenario::new(truth.to_vec(), -4.0).unwrap();
        let grid = GridSpec::new(-90.0, 90.0, 0.5).unwrap();
        for trial in 0..20 {
            let x = generate_snapshots(&g, &s, 20, RandomSeed(1000 + trial)).unwrap();
            let part =
                partition_subspaces(&hermitian_eig(&sample_covariance(&x)).unwrap(), 2).unwrap();
            let fast = oracle_best_subset(&part, &g, &grid, &truth).unwrap();
            let naive = oracle_best_subset_naive(&part, &g, &grid, &truth).unwrap();
            assert_eq!(fast.best_mask, naive.best_mask);
            assert_eq!(fast.best_estimate, naive.best_estimate);
            assert!((fast.best_error_deg - naive.best_error_deg).abs() < 1e-10);
            assert_eq!(fast.masks_evaluated, 15);

            let music =
                find_peaks(&music_spectrum(&part.noise_subspace, &g, &grid).unwrap(), 2).unwrap();
            assert!(fast.best_error_deg <= trial_error(&music, &truth).unwrap());
        }
    }

    #[test]
    fn full_mask_error_matches_music_bitwise() {
        let g = UlaGeometry::half_wavelength(8).unwrap();
        let truth = [0.0, 20.0];
        let s = SourceScenario::new(truth.to_vec(), -10.0).unwrap();
        let x = generate_snapshots(&g, &s, 30, RandomSeed(77)).unwrap();
        let part = partition_subspaces(&hermitian_eig(&sample_covariance(&x)).unwrap(), 2).unwrap();
        let grid = GridSpec::default();
        let energies = projection_energies(&part, &g, &grid).unwrap();
        let errors = mask_errors(&energies, &truth).unwrap();
        let music =
            find_peaks(&music_spectrum(&part.noise_subspace, &g, &grid).unwrap(), 2).unwrap();
        assert_eq!(
            errors[errors.len() - 1],
            trial_error(&music, &truth).unwrap()
        );
    }
}
