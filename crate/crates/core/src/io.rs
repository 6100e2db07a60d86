//! Binary volume and matrix formats, sample tables and image slices.
//!
//! * `HELMVOL1`: magic, three `u32` LE dims, then `f64` LE values with the last
//!   index fastest.
//! * `HELMDNM1`: magic, `u32` LE rows and columns, then row-major complex
//!   values as `(re, im)` `f64` LE pairs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::reconstruct::{FourierSamples, SampleMeta};
use crate::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"HELMVOL1";
pub const MATRIX_MAGIC: &[u8; 8] = b"HELMDNM1";

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn write_volume(path: &Path, dims: [usize; 3], values: &[f64]) -> Result<()> {
    assert_eq!(dims[0] * dims[1] * dims[2], values.len());
    let mut buf = Vec::with_capacity(20 + 8 * values.len());
    buf.extend_from_slice(VOLUME_MAGIC);
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<([usize; 3], Vec<f64>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != VOLUME_MAGIC {
        return Err(format_err(path, "missing HELMVOL1 header"));
    }
    let dims = [read_u32(&bytes, 8) as usize, read_u32(&bytes, 12) as usize, read_u32(&bytes, 16) as usize];
    let n = dims[0] * dims[1] * dims[2];
    if bytes.len() != 20 + 8 * n {
        return Err(format_err(path, "volume size does not match dims"));
    }
    Ok((dims, (0..n).map(|i| read_f64(&bytes, 20 + 8 * i)).collect()))
}

pub fn write_matrix(path: &Path, rows: usize, cols: usize, values: &[Complex64]) -> Result<()> {
    assert_eq!(rows * cols, values.len());
    let mut buf = Vec::with_capacity(16 + 16 * values.len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<Complex64>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MATRIX_MAGIC {
        return Err(format_err(path, "missing HELMDNM1 header"));
    }
    let rows = read_u32(&bytes, 8) as usize;
    let cols = read_u32(&bytes, 12) as usize;
    if bytes.len() != 16 + 16 * rows * cols {
        return Err(format_err(path, "matrix size does not match header"));
    }
    let values = (0..rows * cols)
        .map(|i| Complex64::new(read_f64(&bytes, 16 + 16 * i), read_f64(&bytes, 24 + 16 * i)))
        .collect();
    Ok((rows, cols, values))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Columns `kx, ky, kz, re, im, l, path`.
pub fn write_samples_csv(path: &Path, samples: &FourierSamples) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let err = |e: csv::Error| format_err(path, e.to_string());
    w.write_record(["kx", "ky", "kz", "re", "im", "l", "path"]).map_err(err)?;
    for (k, v) in samples.kgrid.iter().zip(&samples.values) {
        w.write_record([
            k[0].to_string(),
            k[1].to_string(),
            k[2].to_string(),
            v.re.to_string(),
            v.im.to_string(),
            samples.meta.l_norm.to_string(),
            samples.meta.path.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample table written by [`write_samples_csv`]; scales default to one.
pub fn read_samples_csv(path: &Path, meta: SampleMeta) -> Result<FourierSamples> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let mut kgrid = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format_err(path, format!("bad number in column {i}")))
        };
        kgrid.push([num(0)?, num(1)?, num(2)?]);
        values.push(Complex64::new(num(3)?, num(4)?));
    }
    let n = kgrid.len();
    Ok(FourierSamples { kgrid, values, scales: vec![1.0; n], meta })
}

/// Writes the three central axis-plane slices of a volume as 8-bit PGM images.
pub fn write_pgm_slices(dir: &Path, stem: &str, dims: [usize; 3], values: &[f64]) -> Result<Vec<PathBuf>> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let at = |i: usize, j: usize, k: usize| values[(i * dims[1] + j) * dims[2] + k];
    let grey = |v: f64| if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) as u8 } else { 0 };
    let mut out = Vec::new();
    for axis in 0..3 {
        let mid = dims[axis] / 2;
        let (w, h) = match axis {
            0 => (dims[2], dims[1]),
            1 => (dims[2], dims[0]),
            _ => (dims[1], dims[0]),
        };
        let mut img = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let v = match axis {
                    0 => at(mid, r, c),
                    1 => at(r, mid, c),
                    _ => at(r, c, mid),
                };
                img.push(grey(v));
            }
        }
        let path = dir.join(format!("{stem}_{}.pgm", ["x", "y", "z"][axis]));
        let mut f = fs::File::create(&path)?;
        write!(f, "P5\n{w} {h}\n255\n")?;
        f.write_all(&img)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.vol");
        let vals: Vec<f64> = (0..24).map(|i| i as f64 * 0.5 - 3.0).collect();
        write_volume(&p, [2, 3, 4], &vals).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"HELMVOL1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(read_volume(&p).unwrap(), ([2, 3, 4], vals));
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let vals: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        write_matrix(&p, 2, 3, &vals).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), (2, 3, vals));
    }
}
