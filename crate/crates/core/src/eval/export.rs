//! Report files.
//!
//! JSON: the whole [`StudyReport`] as one document carrying `schema_version`.
//!
//! CSV, one file per table, all with a header row:
//!
//! - `<stem>_summary.csv`: `case_id,scenario_id,k,target_level,t_n,sigma_mm,realized_level,r2,r2_lf,max_abs_truth_mm,max_abs_lf_mm,max_abs_composite_mm,max_abs_measured_mm`
//! - `<stem>_field.csv`: `case_id,t_n,x1_m,x2_m,truth_mm,lf_mm,composite_mm`, one row per case, step and grid point
//! - `<stem>_profile.csv`: `case_id,t_n,profile,x1_m,x2_m,truth_mm,lf_mm,composite_mm`, axis profiles
//! - `<stem>_tracking.csv`: `case_id,x1_m,x2_m,fitted_at,t_i,truth_mm,lf_mm,composite_mm,measured_mm`
//!
//! Floats are written in shortest round-trip form so output is byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::study::{StudyReport, StudyTimings, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!("unknown format {other:?}, expected csv or json"))),
        }
    }
}

pub const SUMMARY_HEADER: &str = "case_id,scenario_id,k,target_level,t_n,sigma_mm,realized_level,r2,r2_lf,max_abs_truth_mm,max_abs_lf_mm,max_abs_composite_mm,max_abs_measured_mm";
pub const FIELD_HEADER: &str = "case_id,t_n,x1_m,x2_m,truth_mm,lf_mm,composite_mm";
pub const PROFILE_HEADER: &str = "case_id,t_n,profile,x1_m,x2_m,truth_mm,lf_mm,composite_mm";
pub const TRACKING_HEADER: &str = "case_id,x1_m,x2_m,fitted_at,t_i,truth_mm,lf_mm,composite_mm,measured_mm";

fn table(header: &str) -> String {
    let mut s = String::from(header);
    s.push('\n');
    s
}

/// Axis profiles: along `x2 = 0`, and along the line at normalised `x2 = 0.5`
/// (the same line on a symmetric grid, kept as its own series).
fn profiles(report: &StudyReport) -> String {
    let mut out = table(PROFILE_HEADER);
    for c in &report.cases {
        for s in &c.steps {
            let (lo, hi) =
                s.field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x2_m), hi.max(p.x2_m)));
            let mid = 0.5 * (lo + hi);
            for (name, x2) in [("x2=0", 0.0), ("x2n=0.5", mid)] {
                for p in s.field.iter().filter(|p| p.x2_m == x2) {
                    writeln!(
                        out,
                        "{},{},{name},{},{},{},{},{}",
                        c.case.id, s.t_n, p.x1_m, p.x2_m, p.truth_mm, p.lf_mm, p.composite_mm
                    )
                    .expect("string write");
                }
            }
        }
    }
    out
}

fn csv_tables(report: &StudyReport) -> Vec<(&'static str, String)> {
    let mut summary = table(SUMMARY_HEADER);
    let mut field = table(FIELD_HEADER);
    let mut tracking = table(TRACKING_HEADER);
    for c in &report.cases {
        let id = &c.case.id;
        for s in &c.steps {
            writeln!(
                summary,
                "{id},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.case.scenario_id,
                c.case.k,
                c.case.target_level,
                s.t_n,
                s.sigma_mm,
                s.realized_level,
                s.r2,
                s.r2_lf,
                s.max_abs_truth_mm,
                s.max_abs_lf_mm,
                s.max_abs_composite_mm,
                s.max_abs_measured_mm
            )
            .expect("string write");
            for p in &s.field {
                writeln!(field, "{id},{},{},{},{},{},{}", s.t_n, p.x1_m, p.x2_m, p.truth_mm, p.lf_mm, p.composite_mm)
                    .expect("string write");
            }
        }
        for t in &c.tracking {
            for s in &t.samples {
                let measured = s.measured_mm.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    tracking,
                    "{id},{},{},{},{},{},{},{},{measured}",
                    t.x1_m, t.x2_m, t.fitted_at, s.t_i, s.truth_mm, s.lf_mm, s.composite_mm
                )
                .expect("string write");
            }
        }
    }
    vec![("summary", summary), ("field", field), ("profile", profiles(report)), ("tracking", tracking)]
}

/// Writes the report into `dir`; returns the files written.
pub fn export(report: &StudyReport, format: Format, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            fs::write(&path, text)?;
            written.push(path);
        }
        Format::Csv => {
            for (name, body) in csv_tables(report) {
                let path = dir.join(format!("{stem}_{name}.csv"));
                fs::write(&path, body)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Parses a JSON report written by [`export`].
pub fn read_report(path: impl AsRef<Path>) -> Result<StudyReport> {
    let report: StudyReport = serde_json::from_slice(&fs::read(path)?)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::invalid(format!("report schema version {} unsupported", report.schema_version)));
    }
    Ok(report)
}

/// `case_id,t_n,retrain_ms`, one row per residual refit.
pub fn export_timings(timings: &StudyTimings, path: impl AsRef<Path>) -> Result<()> {
    let mut out = table("case_id,t_n,retrain_ms");
    for (id, t_n, d) in &timings.retrains {
        writeln!(out, "{id},{t_n},{:.3}", d.as_secs_f64() * 1e3).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}
