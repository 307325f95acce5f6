//! Direction-of-arrival estimation with partial noise subspaces.
//!
//! MUSIC builds its pseudo-spectrum from every noise eigenvector of the array
//! covariance. This crate also forms spectra from arbitrary column subsets of
//! the noise subspace, searches all subsets exhaustively against ground truth,
//! and compares the result to MUSIC, Root-MUSIC, ESPRIT and the stochastic
//! Cramér–Rao bound in a seeded Monte Carlo harness.

pub mod array;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod oracle;
pub mod subspace;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub use array::{
    generate_snapshots, steering_matrix, steering_vector, RandomSeed, SnapshotMatrix,
    SourceScenario, UlaGeometry,
};
pub use error::{DoaError, Result};
pub use estimators::{
    esprit, find_peaks, music_spectrum, root_music, DoaEstimate, GridSpec, SpectrumGrid,
};
pub use oracle::{
    heuristic_select, oracle_best_subset, trial_error, HeuristicStrategy, SelectionStats,
    SubsetSearchResult,
};
pub use subspace::{
    hermitian_eig, partial_subspace, partition_subspaces, projection_energies, sample_covariance,
    CovarianceMatrix, EigenDecomposition, ProjectionEnergies, SelectionMask, SubspacePartition,
};
