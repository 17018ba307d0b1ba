//! Files written by a run:
//!
//! - `metrics.csv`: one row per outer iteration with columns
//!   `iter, rre, param_err, lambda, objective, basis_cols, alpha, wall_ms`.
//!   `alpha` is empty when no line-search step was accepted; `wall_ms` is
//!   empty unless timing was requested.
//! - `summary.csv`: one row per run (see [`SummaryRow`]).
//! - `final.pgm`, `final.f64` and `final.json`: the image as an 8-bit
//!   grayscale raster (frames stacked vertically), as raw little-endian
//!   `f64`, and a sidecar with the geometry.
//! - `velocity.csv` for optical-flow runs: `pair, x, y, sx, sy`.
//! - `config.toml`: the effective configuration.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nlgks_core::operators::motion::VelocityField;
use serde::Serialize;

use crate::runner::{MetricsRow, RunOutput, SummaryRow};
use crate::HarnessError;

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::Io(io),
        other => HarnessError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RasterSidecar {
    pub nx: usize,
    pub ny: usize,
    pub frames: usize,
    pub dtype: String,
    pub byte_order: String,
    /// Rows run bottom to top inside each frame, frames in order.
    pub layout: String,
    pub p: Vec<f64>,
    pub rre: Option<f64>,
}

/// Binary PGM with values clipped to `[0, 1]`. Frames are stacked
/// vertically and image row 0 (the bottom) is written last.
pub fn write_pgm(path: &Path, img: &[f64], nx: usize, ny: usize, frames: usize) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", nx, ny * frames)?;
    for t in 0..frames {
        for iy in (0..ny).rev() {
            let row = &img[t * nx * ny + iy * nx..][..nx];
            let bytes: Vec<u8> = row.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
            w.write_all(&bytes)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw(path: &Path, img: &[f64]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in img {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(HarnessError::Io(std::io::Error::other("raw file length is not a multiple of 8")));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes `<stem>.pgm`, `<stem>.f64` and `<stem>.json` into `dir`.
pub fn write_image(dir: &Path, stem: &str, img: &[f64], nx: usize, frames: usize, p: &[f64], rre: Option<f64>) -> Result<(), HarnessError> {
    write_pgm(&dir.join(format!("{stem}.pgm")), img, nx, nx, frames)?;
    write_raw(&dir.join(format!("{stem}.f64")), img)?;
    let side = RasterSidecar {
        nx,
        ny: nx,
        frames,
        dtype: "f64".into(),
        byte_order: "little".into(),
        layout: "row-major, bottom row first, frame-major".into(),
        p: p.to_vec(),
        rre,
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| HarnessError::Io(e.into()))?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

pub fn write_velocity(path: &Path, v: &VelocityField) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["pair", "x", "y", "sx", "sy"]).map_err(csv_err)?;
    for (t, d) in v.pairs.iter().enumerate() {
        for iy in 0..v.ny {
            for ix in 0..v.nx {
                let i = iy * v.nx + ix;
                w.write_record([t.to_string(), ix.to_string(), iy.to_string(), d.sx[i].to_string(), d.sy[i].to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of a run into `dir` (created if missing) and
/// returns the directory.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir)?;
    let cfg = &run.config;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    write_metrics(&dir.join("metrics.csv"), &run.metrics)?;
    write_summary(&dir.join("summary.csv"), std::slice::from_ref(&run.summary))?;
    write_image(dir, "final", &run.u, cfg.n, cfg.frames, &run.p, Some(run.summary.rre))?;
    write_image(dir, "truth", &run.truth, cfg.n, cfg.frames, &[cfg.p_true], None)?;
    for (k, u) in &run.snapshots {
        write_image(dir, &format!("iter_{k:04}"), u, cfg.n, cfg.frames, &[], None)?;
    }
    if let Some(v) = &run.velocity {
        write_velocity(&dir.join("velocity.csv"), v)?;
    }
    Ok(dir.to_path_buf())
}
