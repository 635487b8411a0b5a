use std::fs;
use std::path::Path;

use polyharm_core::growth::GrowthReport;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Envelope of every JSON report.
#[derive(Serialize)]
pub struct Document<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub result: &'a T,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, cfg: &RunConfig, result: &T) -> Result<(), CliError> {
    let doc = Document {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        result,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Header row first, so empty tables still carry their schema.
pub fn write_csv<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(dir.join(name))?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const PROFILE_HEADER: [&str; 5] = ["k", "r", "M", "gauge", "ratio"];

#[derive(Serialize)]
pub struct ProfileRow {
    pub k: usize,
    pub r: f64,
    pub max_abs: f64,
    pub gauge: f64,
    pub ratio: f64,
}

pub fn profile_rows(reports: &[GrowthReport]) -> Vec<ProfileRow> {
    let mut rows = Vec::new();
    for rep in reports {
        let p = &rep.profile;
        for ((r, m), q) in p.radii().iter().zip(p.max_abs()).zip(&rep.little_o_ratios) {
            rows.push(ProfileRow {
                k: rep.k,
                r: *r,
                max_abs: *m,
                gauge: rep.gauge.eval(*r),
                ratio: *q,
            });
        }
    }
    rows
}

pub const RESIDUAL_HEADER: [&str; 5] = ["i", "k", "residual", "exact_error", "argmax"];

#[derive(Serialize)]
pub struct ResidualRow {
    pub i: usize,
    pub k: usize,
    pub residual: f64,
    pub exact_error: Option<f64>,
    pub argmax: String,
}

pub fn join_point(x: &[f64]) -> String {
    x.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}
