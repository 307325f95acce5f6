//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use doa_core::estimators::{
    polynomial_roots, relative_residual, root_music_polynomial, root_music_solve,
};
use doa_core::evaluation::{
    run_monte_carlo, stochastic_crb, ExperimentConfig, Method, OperatingPointResult,
};
use doa_core::oracle::oracle_best_subset_naive;
use doa_core::subspace::projection_energies;
use doa_core::{
    esprit, find_peaks, generate_snapshots, hermitian_eig, music_spectrum, oracle_best_subset,
    partial_subspace, partition_subspaces, root_music, sample_covariance, steering_vector, CMatrix,
    CovarianceMatrix, GridSpec, RandomSeed, SelectionMask, SourceScenario, UlaGeometry,
};
use statrs::distribution::{ContinuousCDF, StudentsT};

const BIN: &str = env!("CARGO_BIN_EXE_doa-sim");
const TRUTH: [f64; 3] = [5.0, 10.0, 30.0];

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn rmse_of(points: &[OperatingPointResult], m: Method) -> Vec<f64> {
    points
        .iter()
        .map(|p| p.rmse(m).expect("method ran"))
        .collect()
}

fn oracle_dominance(sim1: &[OperatingPointResult]) -> Outcome {
    let mut violations = Vec::new();
    let (mut low, mut strict) = (0, 0);
    for p in sim1 {
        let (music, oracle) = (
            p.rmse(Method::Music).unwrap(),
            p.rmse(Method::PartialOracle).unwrap(),
        );
        if oracle > music {
            violations.push(p.snr_db);
        }
        if p.snr_db <= -5.0 {
            low += 1;
            if oracle < music {
                strict += 1;
            }
        }
    }
    let frac = strict as f64 / low as f64;
    check(
        violations.is_empty() && frac >= 0.8,
        format!("{} points, violations at {violations:?}, strict at {strict}/{low} points with SNR <= -5 dB", sim1.len()),
    )
}

fn oracle_dimension(sim1: &[OperatingPointResult]) -> Outcome {
    let p = sim1
        .iter()
        .find(|p| p.snr_db == -10.0)
        .expect("-10 dB point");
    let ks: Vec<f64> = p.oracle_ks.iter().map(|&k| k as f64).collect();
    let n = ks.len() as f64;
    let mean = ks.iter().sum::<f64>() / n;
    let sd = (ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = (mean - 9.0) / (sd / n.sqrt());
    let p_value = StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t);
    check(
        (2.0..=5.0).contains(&mean) && p_value < 0.01,
        format!(
            "{} trials at N = {}: mean K = {mean:.3}, t = {t:.2}, p = {p_value:.3e}",
            ks.len(),
            p.num_snapshots
        ),
    )
}

fn noiseless_recovery() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let cases: [(usize, &[f64]); 3] = [(12, &TRUTH), (6, &[-20.0, 15.0]), (8, &[-45.5, 0.0, 60.2])];
    for (m, doas) in cases {
        for snr in [-10.0, 0.0, 10.0] {
            let g = UlaGeometry::half_wavelength(m).unwrap();
            let s = SourceScenario::new(doas.to_vec(), snr)
                .unwrap()
                .with_noise_power(0.0)
                .unwrap();
            let r = CovarianceMatrix::exact(&g, &s).unwrap();
            let part = partition_subspaces(&hermitian_eig(&r).unwrap(), doas.len()).unwrap();
            let grid = GridSpec::default();
            let music = find_peaks(
                &music_spectrum(&part.noise_subspace, &g, &grid).unwrap(),
                doas.len(),
            )
            .unwrap();
            let oracle = oracle_best_subset(&part, &g, &grid, doas).unwrap();
            let rm = root_music(&part.noise_subspace, &g, doas.len()).unwrap();
            let es = esprit(&part.signal_subspace, &g).unwrap();
            let max_dev = |est: &[f64]| {
                est.iter()
                    .zip(doas)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            };
            let exact = music.angles_deg() == doas && oracle.best_estimate.angles_deg() == doas;
            let (drm, des) = (max_dev(rm.angles_deg()), max_dev(es.angles_deg()));
            if !(exact && drm <= 1e-6 && des <= 1e-6) {
                ok = false;
                notes.push(format!(
                    "M={m} SNR={snr}: music {:?} oracle {:?} root {drm:.1e} esprit {des:.1e}",
                    music.angles_deg(),
                    oracle.best_estimate.angles_deg()
                ));
            }
            notes.push(format!("{drm:.1e}/{des:.1e}"));
        }
    }
    let worst = notes.join(" ");
    check(
        ok,
        format!("grid estimates exact; root-music/esprit max deviation per case: {worst}"),
    )
}

fn fast_path_equivalence() -> Outcome {
    let mut total = 0;
    let mut worst = 0.0f64;
    let mut mismatches = Vec::new();
    for (m, doas, trials, snr) in [
        (6, vec![5.0, 10.0], 200u64, -5.0),
        (12, TRUTH.to_vec(), 50, -10.0),
    ] {
        let g = UlaGeometry::half_wavelength(m).unwrap();
        let grid = GridSpec::default();
        let seed = RandomSeed(0xacce97 + m as u64);
        for t in 0..trials {
            let s = SourceScenario::new(doas.clone(), snr + (t % 11) as f64).unwrap();
            let x = generate_snapshots(&g, &s, 50, seed.derive(0, t)).unwrap();
            let part =
                partition_subspaces(&hermitian_eig(&sample_covariance(&x)).unwrap(), doas.len())
                    .unwrap();
            let fast = oracle_best_subset(&part, &g, &grid, &doas).unwrap();
            let naive = oracle_best_subset_naive(&part, &g, &grid, &doas).unwrap();
            let diff = (fast.best_error_deg - naive.best_error_deg).abs();
            worst = worst.max(diff);
            if fast.best_mask != naive.best_mask
                || fast.best_estimate != naive.best_estimate
                || diff > 1e-10
            {
                mismatches.push(format!(
                    "M={m} trial {t}: {} vs {}",
                    fast.best_mask, naive.best_mask
                ));
            }
            total += 1;
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "{total} trials, {} mismatches {mismatches:?}, max error difference {worst:.1e}",
            mismatches.len()
        ),
    )
}

fn crb_sanity(sim1: &[OperatingPointResult]) -> Outcome {
    let g = UlaGeometry::half_wavelength(12).unwrap();
    let mut worst_ratio = 0.0f64;
    for snr in [-20.0, -10.0, 0.0, 5.0] {
        let s = SourceScenario::new(TRUTH.to_vec(), snr).unwrap();
        let base = stochastic_crb(&g, &s, 100).unwrap().aggregate_rmse_deg;
        for n in [1, 20, 50, 400, 10_000] {
            let v = stochastic_crb(&g, &s, n).unwrap().aggregate_rmse_deg;
            let ratio = (v / base) / (100.0 / n as f64).sqrt();
            worst_ratio = worst_ratio.max((ratio - 1.0).abs());
        }
    }
    let crb: Vec<f64> = sim1.iter().map(|p| p.crb_rmse_deg).collect();
    let monotone = crb.windows(2).all(|w| w[1] < w[0]);
    let mut bound = Vec::new();
    let mut bound_ok = true;
    for p in sim1.iter().filter(|p| p.snr_db == 0.0 || p.snr_db == 5.0) {
        let music = p.rmse(Method::Music).unwrap();
        bound_ok &= music >= 0.8 * p.crb_rmse_deg;
        bound.push(format!(
            "{} dB: MUSIC {music:.4} vs CRB {:.4}",
            p.snr_db, p.crb_rmse_deg
        ));
    }
    check(
        worst_ratio <= 1e-12 && monotone && bound_ok && bound.len() == 2,
        format!(
            "1/sqrt(N) ratio error {worst_ratio:.1e}, monotone in SNR: {monotone}, {}",
            bound.join(", ")
        ),
    )
}

fn monotone_trends(sim1: &[OperatingPointResult], sim2: &[OperatingPointResult]) -> Outcome {
    let snr: Vec<f64> = sim1.iter().map(|p| p.snr_db).collect();
    let n: Vec<f64> = sim2.iter().map(|p| p.num_snapshots as f64).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, xs, pts) in [("SNR sweep", &snr, sim1), ("snapshot sweep", &n, sim2)] {
        for m in [Method::Music, Method::PartialOracle] {
            let rho = spearman(xs, &rmse_of(pts, m));
            ok &= rho <= -0.8;
            parts.push(format!("{label} {}: rho = {rho:.3}", m.name()));
        }
    }
    let music2 = rmse_of(sim2, Method::Music);
    parts.push(format!(
        "snapshot-sweep MUSIC RMSE {:.2}..{:.2}",
        music2[0],
        music2[music2.len() - 1]
    ));
    check(ok, parts.join(", "))
}

fn kernel_suite() -> Outcome {
    let mut worst_res = 0.0f64;
    let mut worst_unit = 0.0f64;
    let mut count = 0;
    for size in 2..=16usize {
        for t in 0..8u64 {
            let g = UlaGeometry::new(size, 0.3 + 0.05 * t as f64).unwrap();
            let p = (t as usize % size).max(1).min(size - 1);
            let doas: Vec<f64> = (0..p)
                .map(|i| -60.0 + 100.0 * i as f64 / p as f64 + t as f64)
                .collect();
            let s = SourceScenario::new(doas, t as f64 - 4.0).unwrap();
            let n = if t % 3 == 0 { size / 2 + 1 } else { 4 * size };
            let x = generate_snapshots(&g, &s, n, RandomSeed(size as u64).derive(1, t)).unwrap();
            let r = sample_covariance(&x);
            let e = hermitian_eig(&r).unwrap();
            let v = &e.eigenvectors;
            let vrv = v.adjoint() * r.data() * v;
            let scale = r.data().norm();
            for i in 0..size {
                for j in 0..size {
                    let target = if i == j { e.eigenvalues[i] } else { 0.0 };
                    worst_res = worst_res.max((vrv[(i, j)] - target).norm() / scale);
                }
            }
            let unit = (v.adjoint() * v - CMatrix::identity(size, size)).norm();
            worst_unit = worst_unit.max(unit);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            count += 1;
        }
    }
    let eig_ok = count >= 100 && worst_res <= 1e-12 && worst_unit <= 1e-12;

    let g = UlaGeometry::half_wavelength(12).unwrap();
    let grid = GridSpec::default();
    let mut worst_mask = 0.0f64;
    for t in 0..20 {
        let s = SourceScenario::new(TRUTH.to_vec(), -15.0 + t as f64).unwrap();
        let x = generate_snapshots(&g, &s, 100, RandomSeed(77).derive(2, t)).unwrap();
        let part = partition_subspaces(&hermitian_eig(&sample_covariance(&x)).unwrap(), 3).unwrap();
        let full = SelectionMask::full(part.noise_dim()).unwrap();
        let masked = projection_energies(&part, &g, &grid)
            .unwrap()
            .masked_denominators(&full)
            .unwrap();
        let uk = partial_subspace(&part, &full).unwrap();
        let direct = music_spectrum(&uk, &g, &grid).unwrap().denominators;
        for (a, b) in masked.iter().zip(&direct) {
            worst_mask = worst_mask.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    let mask_ok = worst_mask <= 1e-12;

    let mut worst_fd = 0.0f64;
    for m in [2, 7, 12, 16] {
        for spacing in [0.25, 0.5, 1.0] {
            let g = UlaGeometry::new(m, spacing).unwrap();
            for i in 0..=34 {
                let theta = -85.0 + 5.0 * i as f64;
                let h = 1e-5;
                let ap = steering_vector(&g, theta + h).unwrap();
                let am = steering_vector(&g, theta - h).unwrap();
                let d = doa_core::array::steering_derivative(&g, theta).unwrap();
                let num: f64 = (0..m)
                    .map(|e| ((ap[e] - am[e]) / (2.0 * h.to_radians()) - d[e]).norm_sqr())
                    .sum();
                worst_fd = worst_fd.max(num.sqrt() / d.norm().max(1.0));
            }
        }
    }
    let fd_ok = worst_fd <= 1e-6;

    let mut worst_root = 0.0f64;
    let mut worst_backward = 0.0f64;
    for t in 0..100u64 {
        let m = 4 + (t as usize % 13);
        let p = 1 + (t as usize % 3).min(m - 2);
        let g = UlaGeometry::half_wavelength(m).unwrap();
        let doas: Vec<f64> = (0..p)
            .map(|i| -50.0 + 37.0 * i as f64 + (t % 7) as f64)
            .collect();
        let s = SourceScenario::new(doas, -10.0 + (t % 25) as f64).unwrap();
        let x = generate_snapshots(&g, &s, 60, RandomSeed(5).derive(3, t)).unwrap();
        let part = partition_subspaces(&hermitian_eig(&sample_covariance(&x)).unwrap(), p).unwrap();
        let coeffs = root_music_polynomial(&part.noise_subspace);
        let l1: f64 = coeffs.iter().map(|c| c.norm()).sum();
        for z in polynomial_roots(&coeffs).unwrap() {
            worst_backward = worst_backward.max(relative_residual(&coeffs, z));
            if z.norm() <= 1.0 {
                let value = coeffs
                    .iter()
                    .rev()
                    .fold(coeffs[0] * 0.0, |acc, &c| acc * z + c);
                worst_root = worst_root.max(value.norm() / l1);
            }
        }
        if let Ok(sol) = root_music_solve(&part.noise_subspace, &g, p) {
            for &z in &sol.selected {
                let value = coeffs
                    .iter()
                    .rev()
                    .fold(coeffs[0] * 0.0, |acc, &c| acc * z + c);
                worst_root = worst_root.max(value.norm() / l1);
            }
        }
    }
    let root_ok = worst_root < 1e-8 && worst_backward < 1e-8;

    check(
        eig_ok && mask_ok && fd_ok && root_ok,
        format!(
            "eig on {count} matrices: residual {worst_res:.1e}, unitarity {worst_unit:.1e}; full mask {worst_mask:.1e}; \
             derivative {worst_fd:.1e}; root residual {worst_root:.1e} (backward {worst_backward:.1e})"
        ),
    )
}

fn run_bin(args: &[&str]) -> Result<(), String> {
    let o = Command::new(BIN)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let same = |a: &Path, b: &Path| {
        fs::read(a)
            .ok()
            .is_some_and(|x| Some(x) == fs::read(b).ok())
    };
    let mut compared = Vec::new();
    let mut bad = Vec::new();

    for (cmd, csv) in [
        ("sweep-snr", "rmse_vs_snr.csv"),
        ("sweep-snapshots", "rmse_vs_snapshots.csv"),
    ] {
        for (tag, par) in [("a", "1"), ("b", "1"), ("c", "3")] {
            run_bin(&[
                cmd,
                "--out",
                &p(&format!("{cmd}-{tag}")),
                "--trials",
                "10",
                "--parallelism",
                par,
            ])?;
        }
        for file in [csv, "k_stats.csv"] {
            for other in ["b", "c"] {
                let a = root.join(format!("{cmd}-a")).join(file);
                let b = root.join(format!("{cmd}-{other}")).join(file);
                compared.push(format!("{cmd}/{file}"));
                if !same(&a, &b) {
                    bad.push(format!("{cmd}/{file} ({other})"));
                }
            }
        }
        let replayed = format!("{cmd}-replay");
        run_bin(&[
            "replay",
            "--manifest",
            &p(&format!("{cmd}-a/manifest.json")),
            "--out",
            &p(&replayed),
        ])?;
        if !same(
            &root.join(format!("{cmd}-a")).join(csv),
            &root.join(&replayed).join(csv),
        ) {
            bad.push(format!("{cmd} replay"));
        }
    }
    for mask in ["full", "oracle", "000000111"] {
        let a = p(&format!("spec-{mask}-a.csv"));
        let b = p(&format!("spec-{mask}-b.csv"));
        run_bin(&["spectrum", "--mask", mask, "--out", &a, "--seed", "99"])?;
        run_bin(&["spectrum", "--mask", mask, "--out", &b, "--seed", "99"])?;
        compared.push(format!("spectrum/{mask}"));
        if !same(Path::new(&a), Path::new(&b)) {
            bad.push(format!("spectrum/{mask}"));
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{} CSV pairs compared plus replays, differing: {bad:?}",
            compared.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let sim1 = run_monte_carlo(&ExperimentConfig::snr_sweep_default()).expect("SNR sweep");
    let sim2 =
        run_monte_carlo(&ExperimentConfig::snapshot_sweep_default()).expect("snapshot sweep");
    println!(
        "acceptance: Monte Carlo sweeps finished in {:.1} s",
        start.elapsed().as_secs_f64()
    );

    let criteria: Vec<Criterion> = vec![
        ("oracle dominance", Box::new(|| oracle_dominance(&sim1))),
        ("oracle dimension", Box::new(|| oracle_dimension(&sim1))),
        ("noiseless recovery", Box::new(noiseless_recovery)),
        ("fast-path equivalence", Box::new(fast_path_equivalence)),
        ("CRB sanity", Box::new(|| crb_sanity(&sim1))),
        (
            "monotone trends",
            Box::new(|| monotone_trends(&sim1, &sim2)),
        ),
        ("numerical kernels", Box::new(kernel_suite)),
        ("reproducibility", Box::new(reproducibility)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
