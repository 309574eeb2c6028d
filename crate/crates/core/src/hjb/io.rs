//! On-disk layout of a [`GridSolution`]: `header.json` with the grid,
//! node coordinates and metadata, `values.csv` and `regions.csv` with one
//! row per time level (first column `t`).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridSolution, GridSpec, Region, SolveMetadata};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    grid: GridSpec,
    times: Vec<f64>,
    z: Vec<f64>,
    metadata: SolveMetadata,
}

const FORMAT: &str = "txcost-grid-v1";

fn region_code(r: Region) -> &'static str {
    match r {
        Region::Buy => "B",
        Region::NoTrade => "N",
        Region::Sell => "S",
    }
}

fn parse_region(s: &str) -> Result<Region> {
    match s {
        "B" => Ok(Region::Buy),
        "N" => Ok(Region::NoTrade),
        "S" => Ok(Region::Sell),
        other => Err(Error::Config(format!("bad region label {other:?}"))),
    }
}

pub fn write_solution(sol: &GridSolution, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = Header {
        format: FORMAT.into(),
        grid: sol.grid,
        times: sol.times.clone(),
        z: sol.z.clone(),
        metadata: sol.metadata.clone(),
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("header.json"))?), &header)?;

    let mut head = vec!["t".to_string()];
    head.extend((0..sol.z.len()).map(|j| format!("z{j}")));
    let mut w = csv::Writer::from_path(dir.join("values.csv"))?;
    w.write_record(&head)?;
    for (t, row) in sol.times.iter().zip(&sol.values) {
        let mut rec = vec![format!("{t:e}")];
        rec.extend(row.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("regions.csv"))?;
    w.write_record(&head)?;
    for (t, row) in sol.times.iter().zip(&sol.regions) {
        let mut rec = vec![format!("{t:e}")];
        rec.extend(row.iter().map(|r| region_code(*r).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_solution(dir: &Path) -> Result<GridSolution> {
    let header: Header = serde_json::from_reader(File::open(dir.join("header.json"))?)?;
    if header.format != FORMAT {
        return Err(Error::Config(format!("unsupported grid format {:?}", header.format)));
    }
    let nz = header.z.len();
    let rows = |name: &str| -> Result<Vec<csv::StringRecord>> {
        let mut r = csv::Reader::from_path(dir.join(name))?;
        let recs = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
        if recs.len() != header.times.len() || recs.iter().any(|r| r.len() != nz + 1) {
            return Err(Error::Config(format!("{name} does not match header dimensions")));
        }
        Ok(recs)
    };
    let values = rows("values.csv")?
        .iter()
        .map(|r| {
            r.iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("values.csv: {e}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let regions = rows("regions.csv")?
        .iter()
        .map(|r| r.iter().skip(1).map(parse_region).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSolution { grid: header.grid, times: header.times, z: header.z, values, regions, metadata: header.metadata })
}
