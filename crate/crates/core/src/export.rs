//! CSV and JSON output. Every file gets the run manifest: JSON outputs embed
//! it, CSV files get a `<name>.manifest.json` next to them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dynamics::{LinearizedFlow, Trajectory};
use crate::error::Result;
use crate::orbits::OrbitTable;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    /// Extra run parameters not in the config (hbar of this run, routes, ...).
    pub parameters: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig, parameters: serde_json::Value) -> Self {
        Self {
            tool: "semitrace".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            parameters,
        }
    }
}

/// Writes an RFC 4180 CSV file plus its manifest sidecar.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>], manifest: &Manifest) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    write_json(&sidecar(path), &serde_json::Value::Null, manifest)
}

/// Writes `{ "manifest": ..., "data": ... }`.
pub fn write_json<T: Serialize>(path: &Path, data: &T, manifest: &Manifest) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let doc = serde_json::json!({ "manifest": manifest, "data": data });
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// One row per orbit: k, T*, T, S, sigma, |det(I-P)|, start point.
pub fn orbit_table_rows(table: &OrbitTable) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = table.orbits.first().map_or(0, |o| o.start.dim());
    let mut header: Vec<String> = ["k", "t_star", "period", "action", "maslov", "det_i_minus_p", "closure_residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n).map(|i| format!("q{i}")));
    header.extend((0..n).map(|i| format!("p{i}")));
    let rows = table
        .orbits
        .iter()
        .map(|o| {
            let mut r = vec![
                o.k as f64,
                o.t_star,
                o.period,
                o.action,
                o.maslov as f64,
                o.det_i_minus_p,
                o.closure_residual,
            ];
            r.extend(&o.start.q);
            r.extend(&o.start.p);
            r
        })
        .collect();
    (header, rows)
}

/// Trajectory rows (t, q, p, S, delta, arg det U) for plotting.
pub fn trajectory_rows(traj: &Trajectory, flow: Option<&LinearizedFlow>) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = traj.start.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("q{i}")));
    header.extend((0..n).map(|i| format!("p{i}")));
    header.extend(["action".to_string(), "delta".to_string()]);
    if flow.is_some() {
        header.push("arg_det_u".into());
    }
    let rows = (0..traj.len())
        .map(|i| {
            let mut r = vec![traj.times[i]];
            r.extend(&traj.states[i].q);
            r.extend(&traj.states[i].p);
            r.push(traj.action_s[i]);
            r.push(traj.action_delta[i]);
            if let Some(f) = flow {
                r.push(f.det_u_arg[i]);
            }
            r
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("x.csv");
        let m = Manifest::new("test", &ExperimentConfig::default(), serde_json::json!({ "hbar": 0.05 }));
        write_csv(&path, &["a", "b"], &[vec![1.0, 2.5], vec![0.1, -3.0]], &m).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows, vec![vec![1.0, 2.5], vec![0.1, -3.0]]);
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(sidecar(&path)).unwrap()).unwrap();
        assert_eq!(side["manifest"]["command"], "test");
        assert_eq!(side["manifest"]["config"]["energy"], 1.0);
    }
}
