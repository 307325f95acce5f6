//! RMSE aggregation, the stochastic Cramér–Rao bound and the seeded Monte Carlo
//! harness that sweeps SNR or snapshot count.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{
    generate_snapshots, steering_derivative, steering_matrix, RandomSeed, SourceScenario,
    UlaGeometry,
};
use crate::error::{DoaError, Result};
use crate::estimators::{esprit, find_peaks, music_spectrum, root_music, DoaEstimate, GridSpec};
use crate::oracle::{
    heuristic_select, mask_errors, oracle_from_energies, HeuristicStrategy, SelectionStats,
};
use crate::subspace::{
    hermitian_eig, partial_subspace, partition_subspaces, projection_energies, sample_covariance,
};

/// Joint RMSE in degrees over all trials and sources, sort-pairing the angles
/// of each trial with the truth.
pub fn rmse(estimates: &[DoaEstimate], truth: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(DoaError::domain("RMSE needs at least one estimate"));
    }
    let mut sorted = truth.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    for est in estimates {
        if est.len() != sorted.len() {
            return Err(DoaError::domain(format!(
                "estimate has {} angles, truth has {}",
                est.len(),
                sorted.len()
            )));
        }
        sum += crate::oracle::squared_error_sum(est.angles_deg(), &sorted)?;
    }
    Ok((sum / (estimates.len() * sorted.len()) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbResult {
    pub per_source_std_deg: Vec<f64>,
    pub aggregate_rmse_deg: f64,
}

/// Stochastic (unconditional) CRB for uncorrelated equal-power sources:
///
/// `CRB = σ²/(2N) · {Re[(D^H Π⊥ D) ⊙ (R_s A^H R⁻¹ A R_s)^T]}⁻¹`
///
/// with `D` the steering derivatives in radians and `Π⊥ = I - A(A^H A)⁻¹A^H`.
pub fn stochastic_crb(
    geometry: &UlaGeometry,
    scenario: &SourceScenario,
    num_snapshots: usize,
) -> Result<CrbResult> {
    scenario.validate_for(geometry)?;
    if num_snapshots == 0 {
        return Err(DoaError::domain("need at least one snapshot"));
    }
    let sigma2 = scenario.noise_power();
    if sigma2 <= 0.0 {
        return Err(DoaError::domain("the bound needs positive noise power"));
    }
    let m = geometry.num_elements();
    let p = scenario.num_sources();
    let a = steering_matrix(geometry, scenario.doas_deg())?;
    let d_cols = scenario
        .doas_deg()
        .iter()
        .map(|&t| steering_derivative(geometry, t))
        .collect::<Result<Vec<_>>>()?;
    let d = DMatrix::from_columns(&d_cols);
    let ps = Complex64::new(scenario.source_power(), 0.0);

    let gram = a.adjoint() * &a;
    let sv = gram.clone().singular_values();
    if sv.min() <= 1e-12 * sv.max() {
        return Err(DoaError::numerical(
            "stochastic_crb",
            "steering matrix is rank deficient",
        ));
    }
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| DoaError::numerical("stochastic_crb", "A^H A is singular"))?;
    let proj_perp = DMatrix::<Complex64>::identity(m, m) - &a * gram_inv * a.adjoint();

    let mut r = &a * a.adjoint() * ps;
    for i in 0..m {
        r[(i, i)] += sigma2;
    }
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| DoaError::numerical("stochastic_crb", "array covariance is singular"))?;

    let h = d.adjoint() * proj_perp * &d;
    let g = (a.adjoint() * r_inv * &a) * (ps * ps);
    let fim = DMatrix::<f64>::from_fn(p, p, |i, j| (h[(i, j)] * g[(j, i)]).re);
    let fim_inv = fim
        .try_inverse()
        .ok_or_else(|| DoaError::numerical("stochastic_crb", "Fisher information is singular"))?;
    let scale = sigma2 / (2.0 * num_snapshots as f64);
    let variances: Vec<f64> = (0..p).map(|i| scale * fim_inv[(i, i)]).collect();
    if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(DoaError::numerical(
            "stochastic_crb",
            format!("non-positive bound {variances:?}"),
        ));
    }
    let mean_var = variances.iter().sum::<f64>() / p as f64;
    Ok(CrbResult {
        per_source_std_deg: variances.iter().map(|v| v.sqrt().to_degrees()).collect(),
        aggregate_rmse_deg: mean_var.sqrt().to_degrees(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Music,
    PartialOracle,
    RootMusic,
    Esprit,
    Heuristic,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Music,
        Method::PartialOracle,
        Method::RootMusic,
        Method::Esprit,
        Method::Heuristic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Music => "music",
            Method::PartialOracle => "partial-oracle",
            Method::RootMusic => "root-music",
            Method::Esprit => "esprit",
            Method::Heuristic => "heuristic",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| DoaError::domain(format!("unknown method {name:?}")))
    }
}

/// How the exhaustive oracle picks its mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Best mask for each trial separately.
    #[default]
    PerTrial,
    /// One mask per operating point, minimizing the aggregate RMSE.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    SnrDb(Vec<f64>),
    Snapshots(Vec<usize>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::SnrDb(v) => v.len(),
            Sweep::Snapshots(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub geometry: UlaGeometry,
    /// Source directions; the SNR of this template is replaced by SNR sweeps.
    pub scenario: SourceScenario,
    /// Snapshot count used when the sweep is over SNR.
    pub num_snapshots: usize,
    pub sweep: Sweep,
    pub num_trials: usize,
    pub grid: GridSpec,
    pub methods: Vec<Method>,
    pub heuristic: Option<HeuristicStrategy>,
    pub oracle_mode: OracleMode,
    pub seed: RandomSeed,
    /// Worker threads; `None` uses the global pool.
    pub parallelism: Option<usize>,
}

impl ExperimentConfig {
    /// RMSE versus SNR: 12-element half-wavelength array, sources at 5°, 10°
    /// and 30°, 100 snapshots, SNR from -20 to 5 dB in 1 dB steps, 100 trials.
    pub fn snr_sweep_default() -> Self {
        Self {
            geometry: UlaGeometry::half_wavelength(12).expect("valid geometry"),
            scenario: SourceScenario::new(vec![5.0, 10.0, 30.0], -10.0).expect("valid scenario"),
            num_snapshots: 100,
            sweep: Sweep::SnrDb((-20..=5).map(f64::from).collect()),
            num_trials: 100,
            grid: GridSpec::default(),
            methods: vec![
                Method::Music,
                Method::PartialOracle,
                Method::RootMusic,
                Method::Esprit,
            ],
            heuristic: None,
            oracle_mode: OracleMode::PerTrial,
            seed: RandomSeed(20210),
            parallelism: None,
        }
    }

    /// RMSE versus snapshot count at -10 dB, 20 to 100 snapshots in steps of 10.
    pub fn snapshot_sweep_default() -> Self {
        Self {
            sweep: Sweep::Snapshots((2..=10).map(|k| k * 10).collect()),
            ..Self::snr_sweep_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate_for(&self.geometry)?;
        self.grid.validate()?;
        if self.num_trials == 0 {
            return Err(DoaError::domain("need at least one trial"));
        }
        if self.sweep.is_empty() {
            return Err(DoaError::domain("sweep must have at least one value"));
        }
        if let Sweep::Snapshots(ns) = &self.sweep {
            if ns.contains(&0) {
                return Err(DoaError::domain("snapshot counts must be positive"));
            }
        } else if self.num_snapshots == 0 {
            return Err(DoaError::domain("snapshot count must be positive"));
        }
        if let Sweep::SnrDb(snrs) = &self.sweep {
            if snrs.iter().any(|s| !s.is_finite()) {
                return Err(DoaError::domain("SNR values must be finite"));
            }
        }
        if self.methods.is_empty() {
            return Err(DoaError::domain("no methods selected"));
        }
        if self.methods.contains(&Method::Heuristic) && self.heuristic.is_none() {
            return Err(DoaError::domain(
                "heuristic method selected without a strategy",
            ));
        }
        if self.methods.contains(&Method::PartialOracle) {
            let dim = self.geometry.num_elements() - self.scenario.num_sources();
            if dim > crate::oracle::MAX_ENUMERATION_DIM {
                return Err(DoaError::domain(format!(
                    "noise subspace dimension {dim} too large for the oracle"
                )));
            }
        }
        if self.parallelism == Some(0) {
            return Err(DoaError::domain("parallelism must be at least 1"));
        }
        Ok(())
    }

    /// Scenario and snapshot count at sweep position `index`.
    pub fn operating_point(&self, index: usize) -> Result<(SourceScenario, usize)> {
        match &self.sweep {
            Sweep::SnrDb(v) => Ok((self.scenario.with_snr_db(v[index])?, self.num_snapshots)),
            Sweep::Snapshots(v) => Ok((self.scenario.clone(), v[index])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// `None` when every trial failed.
    pub rmse_deg: Option<f64>,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointResult {
    pub sweep_value: f64,
    pub snr_db: f64,
    pub num_snapshots: usize,
    pub methods: Vec<MethodResult>,
    pub crb_rmse_deg: f64,
    pub oracle_k_stats: Option<SelectionStats>,
    /// Oracle `K` per trial, in trial order.
    pub oracle_ks: Vec<usize>,
}

impl OperatingPointResult {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn rmse(&self, method: Method) -> Option<f64> {
        self.method(method).and_then(|m| m.rmse_deg)
    }
}

#[derive(Default)]
struct TrialOutcome {
    estimates: Vec<(Method, Result<DoaEstimate>)>,
    oracle_k: Option<usize>,
    oracle_error: Option<f64>,
    music_error: Option<f64>,
    mask_errors: Option<Vec<f64>>,
}

fn run_trial(
    config: &ExperimentConfig,
    scenario: &SourceScenario,
    num_snapshots: usize,
    seed: RandomSeed,
) -> Result<TrialOutcome> {
    let geometry = &config.geometry;
    let truth = scenario.doas_deg();
    let p = scenario.num_sources();
    let x = generate_snapshots(geometry, scenario, num_snapshots, seed)?;
    let eig = hermitian_eig(&sample_covariance(&x))?;
    let partition = partition_subspaces(&eig, p)?;
    let mut out = TrialOutcome::default();

    for &method in &config.methods {
        let estimate = match method {
            Method::Music => {
                let est = music_spectrum(&partition.noise_subspace, geometry, &config.grid)
                    .and_then(|s| find_peaks(&s, p));
                if let Ok(e) = &est {
                    out.music_error = Some(crate::oracle::trial_error(e, truth)?);
                }
                est
            }
            Method::PartialOracle => {
                let energies = projection_energies(&partition, geometry, &config.grid)?;
                match config.oracle_mode {
                    OracleMode::PerTrial => {
                        let res = oracle_from_energies(&energies, truth)?;
                        out.oracle_k = Some(res.best_mask.k());
                        out.oracle_error = Some(res.best_error_deg);
                        Ok(res.best_estimate)
                    }
                    OracleMode::PerPoint => {
                        out.mask_errors = Some(mask_errors(&energies, truth)?);
                        continue;
                    }
                }
            }
            Method::RootMusic => root_music(&partition.noise_subspace, geometry, p),
            Method::Esprit => esprit(&partition.signal_subspace, geometry),
            Method::Heuristic => {
                let strategy = config.heuristic.ok_or_else(|| {
                    DoaError::domain("heuristic method selected without a strategy")
                })?;
                heuristic_select(&partition.noise_eigenvalues, strategy)
                    .and_then(|mask| partial_subspace(&partition, &mask))
                    .and_then(|uk| music_spectrum(&uk, geometry, &config.grid))
                    .and_then(|s| find_peaks(&s, p))
            }
        };
        out.estimates.push((method, estimate));
    }

    if let (Some(o), Some(m)) = (out.oracle_error, out.music_error) {
        if o > m {
            return Err(DoaError::numerical(
                "run_monte_carlo",
                format!(
                    "oracle error {o} exceeds full-mask MUSIC error {m} for seed {}",
                    seed.0
                ),
            ));
        }
    }
    Ok(out)
}

fn run_point(config: &ExperimentConfig, index: usize) -> Result<OperatingPointResult> {
    let (scenario, num_snapshots) = config.operating_point(index)?;
    let truth = scenario.doas_deg();
    let outcomes = (0..config.num_trials)
        .into_par_iter()
        .map(|trial| {
            run_trial(
                config,
                &scenario,
                num_snapshots,
                config.seed.derive(index as u64, trial as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let dim = config.geometry.num_elements() - scenario.num_sources();
    let mut methods = Vec::new();
    let mut oracle_ks = Vec::new();
    for &method in &config.methods {
        if method == Method::PartialOracle && config.oracle_mode == OracleMode::PerPoint {
            let (rmse_deg, k) = per_point_oracle(&outcomes, dim)?;
            oracle_ks = vec![k; outcomes.len()];
            methods.push(MethodResult {
                method,
                rmse_deg: Some(rmse_deg),
                trials_failed: 0,
            });
            continue;
        }
        let mut ok = Vec::new();
        let mut failed = 0;
        for outcome in &outcomes {
            match outcome
                .estimates
                .iter()
                .find(|(m, _)| *m == method)
                .map(|(_, e)| e)
            {
                Some(Ok(e)) => ok.push(e.clone()),
                Some(Err(DoaError::Domain(msg))) => return Err(DoaError::Domain(msg.clone())),
                _ => failed += 1,
            }
        }
        let rmse_deg = if ok.is_empty() {
            None
        } else {
            Some(rmse(&ok, truth)?)
        };
        methods.push(MethodResult {
            method,
            rmse_deg,
            trials_failed: failed,
        });
        if method == Method::PartialOracle {
            oracle_ks = outcomes.iter().filter_map(|o| o.oracle_k).collect();
        }
    }
    let oracle_k_stats = if oracle_ks.is_empty() {
        None
    } else {
        Some(SelectionStats::from_ks(&oracle_ks, dim)?)
    };
    let crb = stochastic_crb(&config.geometry, &scenario, num_snapshots)?;
    let sweep_value = match &config.sweep {
        Sweep::SnrDb(v) => v[index],
        Sweep::Snapshots(v) => v[index] as f64,
    };
    Ok(OperatingPointResult {
        sweep_value,
        snr_db: scenario.snr_db(),
        num_snapshots,
        methods,
        crb_rmse_deg: crb.aggregate_rmse_deg,
        oracle_k_stats,
        oracle_ks,
    })
}

/// Single mask minimizing the mean squared trial error over all trials.
fn per_point_oracle(outcomes: &[TrialOutcome], dim: usize) -> Result<(f64, usize)> {
    let n_masks = (1usize << dim) - 1;
    let mut totals = vec![0.0; n_masks];
    for outcome in outcomes {
        let errs = outcome
            .mask_errors
            .as_ref()
            .ok_or_else(|| DoaError::numerical("run_monte_carlo", "missing per-mask errors"))?;
        for (t, e) in totals.iter_mut().zip(errs) {
            *t += e * e;
        }
    }
    let mut best = (f64::INFINITY, u32::MAX, 0u64);
    for (i, &total) in totals.iter().enumerate() {
        let code = i as u64 + 1;
        let key = (total, code.count_ones(), code);
        if key
            .0
            .total_cmp(&best.0)
            .then(key.1.cmp(&best.1))
            .then(key.2.cmp(&best.2))
            .is_lt()
        {
            best = key;
        }
    }
    Ok(((best.0 / outcomes.len() as f64).sqrt(), best.1 as usize))
}

/// Runs every configured method on the same seeded data at each sweep point.
///
/// Trial `t` at sweep position `i` draws its data from
/// `seed.derive(i, t)`, and all sums run in trial order, so the result does
/// not depend on scheduling or thread count. Trials where a method fails
/// numerically are excluded from that method's RMSE and counted.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<Vec<OperatingPointResult>> {
    config.validate()?;
    let run = || {
        (0..config.sweep.len())
            .map(|i| run_point(config, i))
            .collect()
    };
    match config.parallelism {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| DoaError::numerical("run_monte_carlo", e.to_string()))?
            .install(run),
        None => run(),
    }
}
