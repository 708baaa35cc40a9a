//! CSV and JSON files. Floats are written with 17 significant digits so
//! that they read back bit for bit.

use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{Manifold, ManifoldPoint};
use crate::validate::{DensityTest, REPORT_SCHEMA_VERSION};

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn point_columns(manifold: &Manifold) -> Vec<String> {
    let mut cols = vec!["chart".to_string()];
    cols.extend((1..=manifold.intrinsic_dim()).map(|k| format!("c{k}")));
    cols.extend((1..=manifold.ambient_dim()).map(|k| format!("x{k}")));
    cols
}

fn point_fields(manifold: &Manifold, p: &ManifoldPoint) -> Result<Vec<String>> {
    let mut f = Vec::with_capacity(1 + manifold.intrinsic_dim() + manifold.ambient_dim());
    match p {
        ManifoldPoint::Chart(c) => {
            f.push(c.chart.to_string());
            f.extend(c.coords.iter().map(|&x| float(x)));
        }
        ManifoldPoint::Ambient(_) => {
            f.push(String::new());
            f.extend((0..manifold.intrinsic_dim()).map(|_| String::new()));
        }
    }
    f.extend(manifold.ambient(p)?.into_iter().map(float));
    Ok(f)
}

pub fn trajectory_header(manifold: &Manifold) -> String {
    let mut cols = vec!["i".to_string(), "t".to_string()];
    cols.extend(point_columns(manifold));
    cols.join(",")
}

pub fn trajectory_row(manifold: &Manifold, i: usize, t: f64, p: &ManifoldPoint) -> Result<String> {
    let mut f = vec![i.to_string(), float(t)];
    f.extend(point_fields(manifold, p)?);
    Ok(f.join(","))
}

pub fn ensemble_header(manifold: &Manifold) -> String {
    let mut cols = vec!["walker".to_string(), "restarts".to_string(), "epsilon".to_string()];
    cols.extend(point_columns(manifold));
    cols.join(",")
}

pub fn ensemble_row(manifold: &Manifold, j: usize, restarts: usize, eps: f64, p: &ManifoldPoint) -> Result<String> {
    let mut f = vec![j.to_string(), restarts.to_string(), float(eps)];
    f.extend(point_fields(manifold, p)?);
    Ok(f.join(","))
}

/// A CSV file with a fixed header that can be cut back to the header.
pub struct CsvFile {
    path: PathBuf,
    w: BufWriter<File>,
    header_len: u64,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

impl CsvFile {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            w,
            header_len: header.len() as u64 + 1,
        })
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}").map_err(|e| io_err(&self.path, e))
    }

    /// Drops every row written so far.
    pub fn rewind(&mut self) -> Result<()> {
        let path = self.path.clone();
        self.w.flush().map_err(|e| io_err(&path, e))?;
        let f = self.w.get_mut();
        f.set_len(self.header_len).map_err(|e| io_err(&path, e))?;
        f.seek(SeekFrom::Start(self.header_len)).map_err(|e| io_err(&path, e))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| io_err(&self.path, e))
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `<out>.meta.json`: the effective configuration and a result summary.
pub fn write_meta(out: &Path, command: &str, cfg: &RunConfig, result: serde_json::Value) -> Result<()> {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    let meta = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "result": result,
    });
    write_json(&out.with_file_name(name), &meta)
}

pub fn write_density_csv(path: &Path, test: &DensityTest) -> Result<()> {
    let k = test.centers.first().map_or(0, Vec::len);
    let mut cols: Vec<String> = (1..=k).map(|a| format!("center{a}")).collect();
    cols.extend(["count", "observed_frequency", "expected_probability"].map(String::from));
    let mut file = CsvFile::create(path, &cols.join(","))?;
    let n = test.samples.saturating_sub(test.outside).max(1) as f64;
    for ((c, &obs), &exp) in test.centers.iter().zip(&test.observed).zip(&test.expected) {
        let mut f: Vec<String> = c.iter().map(|&x| float(x)).collect();
        f.push(obs.to_string());
        f.push(float(obs as f64 / n));
        f.push(float(exp));
        file.row(&f.join(","))?;
    }
    file.finish()
}
