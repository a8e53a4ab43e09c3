//! Writers for reports, tables and plain-text vectors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingIndexMap;
use crate::error::{HpmError, Result};
use crate::hpm::OrderNormRow;
use crate::measurement::BoundCheck;
use crate::pipeline::{RunReport, SweepRow, SWEEP_HEADER};

/// JSON sidecar written next to an embedded matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSidecar {
    pub c: usize,
    pub n: usize,
    pub beta: Vec<usize>,
    #[serde(rename = "N")]
    pub n_embedded: usize,
    pub offsets: Vec<Vec<usize>>,
}

impl EmbedSidecar {
    pub fn new(index: &EmbeddingIndexMap) -> Self {
        Self {
            c: index.order(),
            n: index.base_dim(),
            beta: index.beta().to_vec(),
            n_embedded: index.dim(),
            offsets: index.offsets(),
        }
    }
}

/// One value per line, full precision.
pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| HpmError::Parse(format!("bad vector entry {l:?}: {e}")))
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_order_norms_csv<W: Write>(rows: &[OrderNormRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["t", "i", "norm_nu_i", "bound_K_pow"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CheckRow<'a> {
    check: &'a str,
    precondition_ok: bool,
    measured: f64,
    bound: f64,
    pass: bool,
}

pub fn write_checks_csv<W: Write>(checks: &BTreeMap<String, BoundCheck>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (name, c) in checks {
        w.serialize(CheckRow {
            check: name,
            precondition_ok: c.precondition_ok,
            measured: c.measured,
            bound: c.bound,
            pass: c.pass,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Level-0 trajectory, one column per component.
pub fn write_trajectory_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..report.n).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for p in &report.level0_trajectory {
        let mut rec = vec![format!("{:e}", p.t)];
        rec.extend(p.u.iter().map(|x| format!("{x:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The `bounds` view: `{check: {precondition_ok, measured, bound, pass}}`.
pub fn bounds_json(checks: &BTreeMap<String, BoundCheck>) -> Result<String> {
    Ok(serde_json::to_string_pretty(checks)?)
}

/// Writes `report.json`, `checks.csv` and `trajectory.csv` into `dir`.
pub fn write_run_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(report)?)?;
    let checks_path = dir.join("checks.csv");
    write_checks_csv(&report.checks, std::fs::File::create(&checks_path)?)?;
    let traj_path = dir.join("trajectory.csv");
    write_trajectory_csv(report, std::fs::File::create(&traj_path)?)?;
    Ok(vec![report_path, checks_path, traj_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_has_header_only() {
        let mut buf = Vec::new();
        write_sweep_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "value,measured_error,bound,kappa_measured,kappa_bound,p1,chi0_sq,error\n"
        );
    }

    #[test]
    fn sweep_rows_leave_missing_cells_empty() {
        let row = SweepRow {
            value: 2.0,
            measured_error: Some(0.5),
            bound: Some(1.0),
            kappa_measured: None,
            kappa_bound: Some(3.0),
            p1: Some(0.1),
            chi0_sq: Some(0.9),
            error: None,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "2.0,0.5,1.0,,3.0,0.1,0.9,");
    }

    #[test]
    fn vector_round_trip() {
        let dir = std::env::temp_dir().join(format!("qhpm-vec-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.txt");
        let v = vec![0.1, -2.5e-17, 3.0, f64::MIN_POSITIVE];
        write_vector(&path, &v).unwrap();
        assert_eq!(read_vector(&path).unwrap(), v);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn order_norm_header() {
        let rows = [OrderNormRow {
            t: 0.0,
            i: 0,
            norm_nu_i: 0.5,
            bound_k_pow: 0.5,
        }];
        let mut buf = Vec::new();
        write_order_norms_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,i,norm_nu_i,bound_K_pow\n"));
    }
}
