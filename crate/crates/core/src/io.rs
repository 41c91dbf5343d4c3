//! CSV formats for measures, transport plans and path ensembles, and atomic
//! file replacement.
//!
//! Headers are part of the output schema; [`SCHEMA_VERSION`] changes whenever
//! any of them does.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::measures::{EmpiricalMeasure, MeasureError};
use crate::path::GridPath;
use crate::transport::TransportPlan;

pub const SCHEMA_VERSION: u32 = 1;
pub const PATHS_HEADER: [&str; 5] = ["replica", "tag", "step", "time", "position"];
pub const PLAN_HEADER: [&str; 4] = ["i", "j", "mass", "cost"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad measure file: {0}")]
    Format(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `weight, coord_1, …, coord_d`.
pub fn measure_header(dim: usize) -> Vec<String> {
    std::iter::once("weight".to_string())
        .chain((1..=dim).map(|k| format!("coord_{k}")))
        .collect()
}

pub fn write_measure<W: Write>(out: W, mu: &EmpiricalMeasure) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(measure_header(mu.dim()))?;
    for (p, weight) in mu.atoms() {
        let mut rec = vec![weight.to_string()];
        rec.extend(p.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measure<R: Read>(input: R) -> Result<EmpiricalMeasure, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let dim = header.len().saturating_sub(1);
    let expected = measure_header(dim);
    if dim == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(IoError::Format(format!("expected header {}", expected.join(","))));
    }
    let (mut coords, mut weights) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| IoError::Format(format!("row {}: cannot parse {s:?}", line + 1)))
        };
        weights.push(parse(&rec[0])?);
        for k in 1..=dim {
            coords.push(parse(&rec[k])?);
        }
    }
    Ok(EmpiricalMeasure::new(dim, coords, weights)?)
}

pub fn write_plan<W: Write>(out: W, plan: &TransportPlan) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLAN_HEADER)?;
    for e in &plan.entries {
        w.write_record([e.i.to_string(), e.j.to_string(), e.mass.to_string(), e.cost.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format path table with 1-based tags. `step` is the index on the
/// simulation grid of spacing `h`, so strided recordings skip steps.
pub fn write_paths<W: Write, P: GridPath>(out: W, paths: &[P], h: f64) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(io::BufWriter::new(out));
    w.write_record(PATHS_HEADER)?;
    for (r, p) in paths.iter().enumerate() {
        for (k, &t) in p.times().iter().enumerate() {
            let step = (t / h).round() as u64;
            for (tag, x) in p.row(k).iter().enumerate() {
                w.write_record([r.to_string(), (tag + 1).to_string(), step.to_string(), t.to_string(), x.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Several files at once: every temporary is written and synced before the
/// first rename, so a failure while writing leaves none of the targets
/// touched.
pub fn write_atomic_all(files: &[(&Path, &[u8])]) -> io::Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[(std::path::PathBuf, &Path)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for &(path, bytes) in files {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let Some(name) = path.file_name() else {
            cleanup(&staged);
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"));
        };
        let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
        let written = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        });
        staged.push((tmp, path));
        if let Err(e) = written {
            cleanup(&staged);
            return Err(e);
        }
    }
    for (i, (tmp, path)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, path) {
            cleanup(&staged[i..]);
            return Err(e);
        }
    }
    Ok(())
}
