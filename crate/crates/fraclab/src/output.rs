//! Output writers: CSV tables, JSON summaries, matrix-market export,
//! and a manifest JSON alongside every artifact.
//!
//! All floating-point values are written with 17 significant digits so
//! runs can be diffed bit-for-bit.

use crate::error::FracError;
use crate::geometry::Grid;
use crate::spectral::SweepResult;
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn io_ctx(msg: &str, e: std::io::Error) -> FracError {
    FracError::Io(std::io::Error::new(e.kind(), format!("{msg}: {e}")))
}

/// Format a float with 17 significant digits (round-trip exact for f64).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes artifacts into a directory, emitting `<name>.manifest.json`
/// next to each file.
pub struct OutputWriter {
    dir: PathBuf,
    config_digest: String,
}

impl OutputWriter {
    pub fn new(dir: &Path, config_digest: &str) -> Result<Self, FracError> {
        fs::create_dir_all(dir).map_err(|e| io_ctx(&format!("cannot create {}", dir.display()), e))?;
        Ok(Self { dir: dir.to_path_buf(), config_digest: config_digest.to_string() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write `content` to `name` plus a manifest recording the config
    /// digest, crate version, and wall time spent producing it.
    pub fn write(&self, name: &str, content: &str, wall_seconds: f64) -> Result<PathBuf, FracError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| io_ctx(&format!("cannot write {}", path.display()), e))?;
        let manifest = format!(
            "{{\n  \"file\": {:?},\n  \"config_digest\": {:?},\n  \"version\": {:?},\n  \"wall_seconds\": {}\n}}\n",
            name,
            self.config_digest,
            env!("CARGO_PKG_VERSION"),
            fmt_float(wall_seconds)
        );
        let mpath = self.dir.join(format!("{name}.manifest.json"));
        fs::write(&mpath, manifest).map_err(|e| io_ctx(&format!("cannot write {}", mpath.display()), e))?;
        Ok(path)
    }
}

/// CSV for an amplitude sweep: one row per amplitude.
pub fn sweep_csv(result: &SweepResult) -> String {
    // Wall time stays out of the CSV so repeated runs are byte-identical;
    // the manifest carries the timing.
    let mut s = String::from("A,lambda,iterations,residual\n");
    for row in &result.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_float(row.amplitude),
            fmt_float(row.lambda),
            row.iterations,
            fmt_float(row.residual)
        );
    }
    s
}

/// CSV dump of a grid function: `x1,x2,value`.
pub fn grid_function_csv(grid: &Grid, values: &DVector<f64>, header: &str) -> String {
    let mut s = format!("x1,x2,{header}\n");
    for (i, &p) in grid.coords.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", fmt_float(p[0]), fmt_float(p[1]), fmt_float(values[i]));
    }
    s
}

/// CSV of a survival curve: `t,alive_fraction`.
pub fn survival_csv(times: &[f64], alive: &[f64]) -> String {
    let mut s = String::from("t,alive_fraction\n");
    for (&t, &a) in times.iter().zip(alive) {
        let _ = writeln!(s, "{},{}", fmt_float(t), fmt_float(a));
    }
    s
}

/// CSV of kernel-series probe evaluations:
/// `n,t,x1,x2,y1,y2,value`.
pub fn series_probe_csv(rows: &[(usize, f64, [f64; 2], [f64; 2], f64)]) -> String {
    let mut s = String::from("n,t,x1,x2,y1,y2,value\n");
    for &(n, t, x, y, v) in rows {
        let _ = writeln!(
            s,
            "{n},{},{},{},{},{},{}",
            fmt_float(t),
            fmt_float(x[0]),
            fmt_float(x[1]),
            fmt_float(y[0]),
            fmt_float(y[1]),
            fmt_float(v)
        );
    }
    s
}

/// CSV of singular values and Dirichlet energies of the kernel basis.
pub fn singular_values_csv(sigmas: &[f64], energies: &[f64]) -> String {
    let mut s = String::from("index,sigma,energy\n");
    let k = sigmas.len().max(energies.len());
    for i in 0..k {
        let sv = sigmas.get(i).map_or(String::from(""), |&v| fmt_float(v));
        let en = energies.get(i).map_or(String::from(""), |&v| fmt_float(v));
        let _ = writeln!(s, "{i},{sv},{en}");
    }
    s
}

/// JSON object from string/value pairs, values pre-rendered.
pub fn json_object(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("{\n");
    for (i, (k, v)) in pairs.iter().enumerate() {
        let comma = if i + 1 == pairs.len() { "" } else { "," };
        let _ = writeln!(s, "  {k:?}: {v}{comma}");
    }
    s.push_str("}\n");
    s
}

pub fn json_num(x: f64) -> String {
    if x.is_finite() {
        fmt_float(x)
    } else {
        format!("{:?}", x.to_string())
    }
}

pub fn json_str(x: &str) -> String {
    format!("{x:?}")
}

pub fn json_bool(b: bool) -> String {
    b.to_string()
}

/// Matrix-market coordinate export of a dense matrix, skipping zeros.
pub fn matrix_market(m: &DMatrix<f64>) -> String {
    let mut entries = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                entries.push((i + 1, j + 1, v));
            }
        }
    }
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.nrows(), m.ncols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(s, "{i} {j} {}", fmt_float(v));
    }
    s
}
