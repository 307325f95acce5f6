//! CSV tables, atomic file writes and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use doa_core::evaluation::{Method, OperatingPointResult};
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::error::CliError;

/// Shortest round-trip decimal, padded with trailing zeros to at least 12
/// significant digits; `NaN` for non-finite values.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return "NaN".to_string();
    }
    let mut s = format!("{x}");
    if !s.contains('.') {
        s.push('.');
    }
    let significant = s
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    let significant = if x == 0.0 { 1 } else { significant };
    for _ in significant..12 {
        s.push('0');
    }
    s
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// CSV column suffix for each method.
fn column_name(method: Method) -> &'static str {
    match method {
        Method::Music => "music",
        Method::PartialOracle => "oracle",
        Method::RootMusic => "rootmusic",
        Method::Esprit => "esprit",
        Method::Heuristic => "heuristic",
    }
}

/// RMSE table, one row per operating point. Methods that were not run leave
/// their cells empty.
pub fn rmse_table(
    leading_column: &str,
    points: &[OperatingPointResult],
    integer_sweep: bool,
) -> String {
    let mut out = String::new();
    out.push_str(leading_column);
    for m in Method::ALL {
        write!(out, ",rmse_{}", column_name(m)).unwrap();
    }
    out.push_str(",crb,mean_k,std_k");
    for m in Method::ALL {
        write!(out, ",failures_{}", column_name(m)).unwrap();
    }
    out.push('\n');

    for p in points {
        if integer_sweep {
            write!(out, "{}", p.sweep_value as u64).unwrap();
        } else {
            out.push_str(&fmt_num(p.sweep_value));
        }
        for m in Method::ALL {
            write!(out, ",{}", fmt_opt(p.rmse(m))).unwrap();
        }
        let stats = p.oracle_k_stats.as_ref();
        write!(
            out,
            ",{},{},{}",
            fmt_num(p.crb_rmse_deg),
            fmt_opt(stats.map(|s| s.mean_k)),
            fmt_opt(stats.map(|s| s.std_k))
        )
        .unwrap();
        for m in Method::ALL {
            let cell = p
                .method(m)
                .map(|r| r.trials_failed.to_string())
                .unwrap_or_default();
            write!(out, ",{cell}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Oracle dimension statistics with the full `K` histogram.
pub fn k_stats_table(
    leading_column: &str,
    points: &[OperatingPointResult],
    dim: usize,
    integer_sweep: bool,
) -> String {
    let mut out = format!("{leading_column},mean_k,std_k");
    for k in 1..=dim {
        write!(out, ",k{k}").unwrap();
    }
    out.push('\n');
    for p in points {
        if integer_sweep {
            write!(out, "{}", p.sweep_value as u64).unwrap();
        } else {
            out.push_str(&fmt_num(p.sweep_value));
        }
        match &p.oracle_k_stats {
            Some(s) => {
                write!(out, ",{},{}", fmt_num(s.mean_k), fmt_num(s.std_k)).unwrap();
                for c in &s.k_histogram {
                    write!(out, ",{c}").unwrap();
                }
            }
            None => {
                out.push_str(",,");
                for _ in 0..dim {
                    out.push(',');
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn spectrum_table(angles: &[f64], values: &[f64]) -> String {
    let mut out = String::from("angle_deg,spectrum\n");
    for (a, v) in angles.iter().zip(values) {
        writeln!(out, "{},{}", fmt_num(*a), fmt_num(*v)).unwrap();
    }
    out
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Runtime(format!("invalid output path {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("cannot move {} into place: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn unix_millis() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Configuration after command-line overrides.
    pub config: ConfigFile,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ConfigFile, started_unix_ms: u128) -> Self {
        Self {
            tool: env!("CARGO_BIN_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            master_seed: config.run.seed,
            mask: None,
            started_unix_ms,
            finished_unix_ms: started_unix_ms,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_atomic(path, &(json + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid manifest {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_12_significant_digits() {
        assert_eq!(fmt_num(2.5), "2.50000000000");
        assert_eq!(fmt_num(0.1), "0.100000000000");
        assert_eq!(fmt_num(-20.0), "-20.0000000000");
        assert_eq!(fmt_num(4.47), "4.47000000000");
        assert_eq!(fmt_num(0.0), "0.00000000000");
        assert_eq!(fmt_num(f64::NAN), "NaN");
        for x in [1.2345678901234567e-5, 3.0e7, 0.04999, 123.456] {
            let s = fmt_num(x);
            assert!(!s.contains('e'));
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.trim_start_matches('-').replace('.', "");
            assert!(digits.trim_start_matches('0').len() >= 12, "{s}");
        }
    }
}
