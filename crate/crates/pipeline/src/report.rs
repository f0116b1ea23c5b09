//! Flat metric tables.

use std::fmt::Write as _;
use std::path::Path;

use hsfuse_core::metrics::{sentinel, MetricReport};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub const CSV_HEADER: &str = "method,sample,cc,sam_deg,rmse,rsnr_db,ergas,psnr_db";
pub const SWEEP_HEADER: &str = "lambda,samples,cc,sam_deg,rmse,rsnr_db,ergas,psnr_db";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub method: String,
    pub sample: String,
    pub cc: f64,
    pub sam_deg: f64,
    pub rmse: f64,
    #[serde(with = "sentinel")]
    pub rsnr_db: f64,
    pub ergas: f64,
    #[serde(with = "sentinel")]
    pub psnr_db: f64,
}

impl Row {
    pub fn from_report(method: &str, sample: &str, r: &MetricReport) -> Self {
        Self {
            method: method.into(),
            sample: sample.into(),
            cc: r.cc,
            sam_deg: r.sam_deg,
            rmse: r.rmse,
            rsnr_db: r.rsnr_db,
            ergas: r.ergas,
            psnr_db: r.psnr_db,
        }
    }

    fn values(&self) -> [f64; 6] {
        [self.cc, self.sam_deg, self.rmse, self.rsnr_db, self.ergas, self.psnr_db]
    }

    pub fn csv_fields(&self) -> String {
        self.values().iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(",")
    }
}

/// Shortest round-trip form, so equal numbers always print identically.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Arithmetic mean of each column; `None` for an empty slice.
pub fn mean_row(method: &str, rows: &[Row]) -> Option<Row> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mut acc = [0.0; 6];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r.values()) {
            *a += v;
        }
    }
    let m = acc.map(|a| a / n);
    Some(Row {
        method: method.into(),
        sample: "mean".into(),
        cc: m[0],
        sam_deg: m[1],
        rmse: m[2],
        rsnr_db: m[3],
        ergas: m[4],
        psnr_db: m[5],
    })
}

/// Per-sample rows grouped by method, each group closed by its mean row.
pub fn render_csv(groups: &[(String, Vec<Row>)]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (method, rows) in groups {
        for r in rows.iter().chain(mean_row(method, rows).as_ref()) {
            writeln!(s, "{},{},{}", r.method, r.sample, r.csv_fields()).unwrap();
        }
    }
    s
}

pub fn render_sweep_csv(rows: &[(f64, usize, Option<Row>)]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for (lambda, n, mean) in rows {
        match mean {
            Some(m) => writeln!(s, "{},{n},{}", fmt(*lambda), m.csv_fields()).unwrap(),
            None => writeln!(s, "{},0,,,,,,", fmt(*lambda)).unwrap(),
        }
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| PipelineError::io(d, e))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(v).expect("serializable") + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Provenance { path: path.into(), reason: e.to_string() })
}
