use std::path::{Path, PathBuf};

use doa_core::evaluation::{run_monte_carlo, Sweep};
use doa_core::{
    generate_snapshots, hermitian_eig, music_spectrum, oracle_best_subset, partial_subspace,
    partition_subspaces, sample_covariance, RandomSeed, SelectionMask,
};

use crate::config::{ConfigFile, SweepKind};
use crate::error::CliError;
use crate::output::{self, ensure_dir, write_atomic, RunManifest};
use crate::plot::{line_chart, Series};
use crate::Overrides;

pub fn load_with_overrides(
    path: Option<&Path>,
    overrides: &Overrides,
) -> Result<ConfigFile, CliError> {
    let mut cfg = ConfigFile::load(path)?;
    if let Some(t) = overrides.trials {
        cfg.run.trials = t;
    }
    if let Some(s) = overrides.seed {
        cfg.run.seed = s;
    }
    if let Some(m) = &overrides.methods {
        cfg.run.methods = m.iter().map(|s| s.trim().to_string()).collect();
    }
    if let Some(p) = overrides.parallelism {
        cfg.run.parallelism = Some(p);
    }
    Ok(cfg)
}

fn check_writable(dir: &Path) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let probe = dir.join(".doa-sim-probe");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| {
            CliError::Runtime(format!(
                "output directory {} is not writable: {e}",
                dir.display()
            ))
        })
}

pub fn sweep(kind: SweepKind, cfg: &ConfigFile, out_dir: &Path) -> Result<(), CliError> {
    let experiment = cfg.experiment(kind)?;
    check_writable(out_dir)?;
    let started = output::unix_millis();
    let points = run_monte_carlo(&experiment)?;

    let (command, stem, leading, x_label, integer) = match kind {
        SweepKind::Snr => ("sweep-snr", "rmse_vs_snr", "snr_db", "SNR (dB)", false),
        SweepKind::Snapshots => (
            "sweep-snapshots",
            "rmse_vs_snapshots",
            "n_snapshots",
            "snapshots",
            true,
        ),
    };
    let dim = experiment.geometry.num_elements() - experiment.scenario.num_sources();
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let k_path = out_dir.join("k_stats.csv");
    let svg_path = out_dir.join(format!("{stem}.svg"));
    write_atomic(&csv_path, &output::rmse_table(leading, &points, integer))?;
    write_atomic(
        &k_path,
        &output::k_stats_table(leading, &points, dim, integer),
    )?;

    let xs: Vec<f64> = match &experiment.sweep {
        Sweep::SnrDb(v) => v.clone(),
        Sweep::Snapshots(v) => v.iter().map(|&n| n as f64).collect(),
    };
    let mut series: Vec<Series> = experiment
        .methods
        .iter()
        .map(|&m| Series {
            name: m.name().to_string(),
            values: points.iter().map(|p| p.rmse(m)).collect(),
            dashed: false,
        })
        .collect();
    series.push(Series {
        name: "CRB".to_string(),
        values: points.iter().map(|p| Some(p.crb_rmse_deg)).collect(),
        dashed: true,
    });
    write_atomic(
        &svg_path,
        &line_chart("RMSE", x_label, "RMSE (deg)", &xs, &series),
    )?;

    let mut manifest = RunManifest::new(command, cfg, started);
    manifest.finished_unix_ms = output::unix_millis();
    manifest.outputs = vec![csv_path, k_path, svg_path];
    manifest.write(&out_dir.join("manifest.json"))?;

    for p in &points {
        let failures: Vec<String> = p
            .methods
            .iter()
            .filter(|m| m.trials_failed > 0)
            .map(|m| format!("{} failed {}x", m.method.name(), m.trials_failed))
            .collect();
        if !failures.is_empty() {
            eprintln!("{leading} = {}: {}", p.sweep_value, failures.join(", "));
        }
    }
    Ok(())
}

enum MaskChoice {
    Full,
    Oracle,
    Explicit(SelectionMask),
}

fn parse_mask(spec: &str, dim: usize) -> Result<MaskChoice, CliError> {
    match spec {
        "full" => Ok(MaskChoice::Full),
        "oracle" => Ok(MaskChoice::Oracle),
        bits => {
            let mask = SelectionMask::parse(bits)
                .map_err(|e| CliError::Config(format!("mask {bits:?}: {e}")))?;
            if mask.len() != dim {
                return Err(CliError::Config(format!(
                    "mask {bits:?} has {} digits, the noise subspace has dimension {dim}",
                    mask.len()
                )));
            }
            Ok(MaskChoice::Explicit(mask))
        }
    }
}

pub fn spectrum(cfg: &ConfigFile, mask_spec: &str, out: &Path) -> Result<(), CliError> {
    let geometry = cfg.geometry()?;
    let scenario = cfg.scenario()?;
    let grid = cfg.grid()?;
    let dim = geometry.num_elements() - scenario.num_sources();
    let choice = parse_mask(mask_spec, dim)?;
    if cfg.sources.snapshots == 0 {
        return Err(CliError::Config(
            "sources.snapshots must be positive".into(),
        ));
    }
    let started = output::unix_millis();

    let seed = RandomSeed(cfg.run.seed).derive(0, 0);
    let x = generate_snapshots(&geometry, &scenario, cfg.sources.snapshots, seed)?;
    let partition = partition_subspaces(
        &hermitian_eig(&sample_covariance(&x))?,
        scenario.num_sources(),
    )?;
    let mask = match choice {
        MaskChoice::Full => SelectionMask::full(dim)?,
        MaskChoice::Explicit(m) => m,
        MaskChoice::Oracle => {
            oracle_best_subset(&partition, &geometry, &grid, scenario.doas_deg())?.best_mask
        }
    };
    let uk = partial_subspace(&partition, &mask)?;
    let spec = music_spectrum(&uk, &geometry, &grid)?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_atomic(out, &output::spectrum_table(&spec.angles_deg, &spec.values))?;

    let mut manifest = RunManifest::new("spectrum", cfg, started);
    manifest.mask = Some(mask_spec.to_string());
    manifest.finished_unix_ms = output::unix_millis();
    manifest.outputs = vec![out.to_path_buf()];
    manifest.write(&manifest_path_for(out))?;
    eprintln!("mask {mask} (K = {})", mask.k());
    Ok(())
}

fn manifest_path_for(csv: &Path) -> PathBuf {
    let mut name = csv
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    csv.with_file_name(name)
}

pub fn replay(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let manifest = RunManifest::read(manifest_path)?;
    match manifest.command.as_str() {
        "sweep-snr" => sweep(SweepKind::Snr, &manifest.config, out),
        "sweep-snapshots" => sweep(SweepKind::Snapshots, &manifest.config, out),
        "spectrum" => {
            let mask = manifest
                .mask
                .as_deref()
                .ok_or_else(|| CliError::Config("spectrum manifest has no mask".into()))?;
            spectrum(&manifest.config, mask, out)
        }
        other => Err(CliError::Config(format!(
            "manifest has unknown command {other:?}"
        ))),
    }
}
