//! CSV and JSON writers for the CLI and for plotting. Non-finite numbers
//! become `null` in JSON and `inf`/`NaN` in CSV.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::SweepReport;
use crate::asymptotics::BoundarySet;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::simulate::SimulationResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format {other:?} (expected csv or json)"))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct BoundaryRow {
    t: f64,
    delta1: f64,
    delta2: f64,
    zeta1: f64,
    zeta2: f64,
    residual1: f64,
    residual2: f64,
    in_bracket1: bool,
    in_bracket2: bool,
}

/// One row per sample time, or the whole set as JSON. Returns the path.
pub fn write_boundaries(set: &BoundarySet, model: &Model, dir: &Path, format: Format) -> Result<PathBuf> {
    let theta = model.consts.theta;
    let rows: Vec<BoundaryRow> = set
        .samples
        .iter()
        .map(|s| BoundaryRow {
            t: s.t,
            delta1: s.delta1,
            delta2: s.delta2,
            zeta1: theta + s.delta1,
            zeta2: theta + s.delta2,
            residual1: s.residual1,
            residual2: s.residual2,
            in_bracket1: s.in_bracket1,
            in_bracket2: s.in_bracket2,
        })
        .collect();
    let path = dir.join(format!("boundaries_{}.{}", set.side.label(), format.extension()));
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                side: &'a str,
                lambda: f64,
                theta: f64,
                rows: &'a [BoundaryRow],
            }
            write_json(&Doc { side: set.side.label(), lambda: set.lambda, theta, rows: &rows }, &path)?;
        }
        Format::Csv => {
            let mut w = csv_writer(&path)?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(path)
}

pub fn write_simulations(results: &[SimulationResult], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Json => write_json(results, path),
        Format::Csv => {
            let mut w = csv_writer(path)?;
            w.write_record([
                "lambda",
                "estimate",
                "std_error",
                "trade_volume",
                "boundary_hits",
                "ruin_count",
                "n_paths",
                "dt",
                "seed",
            ])?;
            for r in results {
                w.write_record([
                    num(r.lambda),
                    num(r.estimate),
                    num(r.std_error),
                    num(r.trade_volume),
                    num(r.boundary_hits),
                    r.ruin_count.to_string(),
                    r.n_paths.to_string(),
                    num(r.dt),
                    r.seed.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

/// Full report as JSON or a flat per-λ CSV, plus plot-ready `x,y,error`
/// files: `loss.csv` (λ, loss, error) and, with a gap table, `gap.csv`.
pub fn write_sweep(report: &SweepReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = vec![];
    match format {
        Format::Json => {
            let p = dir.join("sweep.json");
            write_json(report, &p)?;
            written.push(p);
        }
        Format::Csv => {
            let p = dir.join("sweep.csv");
            let mut w = csv_writer(&p)?;
            w.write_record([
                "lambda",
                "u_num",
                "u_num_error",
                "loss",
                "loss_over_lambda23",
                "coefficient_ratio",
                "sandwich_passed",
                "plus_margin",
                "minus_margin",
                "sandwich_tolerance",
                "gap",
                "gap_error",
            ])?;
            for pt in &report.expansion.points {
                let sw = report.sandwich.iter().find(|s| s.lambda == pt.lambda);
                let gap = report.gap.as_ref().and_then(|g| g.rows.iter().find(|r| r.lambda == pt.lambda));
                w.write_record([
                    num(pt.lambda),
                    num(pt.u_num),
                    num(pt.u_num_error),
                    num(pt.loss),
                    num(pt.scaled_loss),
                    num(pt.coefficient_ratio),
                    sw.map(|s| s.passed.to_string()).unwrap_or_default(),
                    opt(sw.and_then(|s| s.plus_margin)),
                    opt(sw.and_then(|s| s.minus_margin)),
                    opt(sw.map(|s| s.tolerance)),
                    opt(gap.map(|g| g.gap)),
                    opt(gap.map(|g| g.gap_error)),
                ])?;
            }
            w.flush()?;
            written.push(p);
        }
    }
    let p = dir.join("loss.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["x", "y", "error"])?;
    for pt in &report.expansion.points {
        w.write_record([num(pt.lambda), num(pt.loss), num(pt.u_num_error)])?;
    }
    w.flush()?;
    written.push(p);
    if let Some(g) = &report.gap {
        let p = dir.join("gap.csv");
        let mut w = csv_writer(&p)?;
        w.write_record(["x", "y", "error"])?;
        for r in &g.rows {
            w.write_record([num(r.lambda), num(r.gap), num(r.gap_error)])?;
        }
        w.flush()?;
        written.push(p);
    }
    Ok(written)
}
