//! On-disk formats. All binary layouts are little-endian and start with an
//! 8-byte magic tag followed by a `u32` version.
//!
//! | file | layout after magic + version |
//! |------|------------------------------|
//! | sample cache `CMTSAMPL` | `d: u32`, `count: u64`, then per record `x: d×f64`, `x_δ: d×f64`, `indicator: u8` (0 interior, 1 hit A, 2 hit B) |
//! | point pool `CMTPOINT` | `d: u32`, `count: u64`, then `count×d` f64 |
//! | checkpoint `CMTCKPT1` | `len: u32`, `len` bytes of JSON architecture, `|θ|: u64`, then `θ` as f64 |
//!
//! The CSV sample format has header `x0..x{d-1},xd0..xd{d-1},indicator`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{ArchConfig, CommittorModel};
use crate::reference::{read_f64, read_u32, read_u64};
use crate::sde::{Indicator, TransitionSample};

const SAMPLE_MAGIC: &[u8; 8] = b"CMTSAMPL";
const POINT_MAGIC: &[u8; 8] = b"CMTPOINT";
const CHECKPOINT_MAGIC: &[u8; 8] = b"CMTCKPT1";
const VERSION: u32 = 1;
/// Refuse headers that would allocate absurd amounts of memory.
const MAX_RECORDS: u64 = 1 << 34;

fn header<W: Write>(w: &mut W, magic: &[u8; 8]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    Ok(())
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 8], what: &str) -> Result<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!("not a {what} file")));
    }
    let v = read_u32(r)?;
    if v != VERSION {
        return Err(Error::Format(format!("unsupported {what} version {v}")));
    }
    Ok(())
}

fn sizes<R: Read>(r: &mut R) -> Result<(usize, usize)> {
    let d = read_u32(r)? as usize;
    let count = read_u64(r)?;
    if d == 0 || count > MAX_RECORDS {
        return Err(Error::Format(format!("implausible header: d = {d}, count = {count}")));
    }
    Ok((d, count as usize))
}

pub fn write_samples<W: Write>(mut w: W, samples: &[TransitionSample], d: usize) -> Result<()> {
    header(&mut w, SAMPLE_MAGIC)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        if s.x.len() != d || s.x_delta.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: s.x.len(),
            });
        }
        for v in s.x.iter().chain(&s.x_delta) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[s.indicator.code()])?;
    }
    Ok(())
}

pub fn read_samples<R: Read>(mut r: R) -> Result<(usize, Vec<TransitionSample>)> {
    check_header(&mut r, SAMPLE_MAGIC, "sample cache")?;
    let (d, count) = sizes(&mut r)?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut code = [0u8; 1];
    for _ in 0..count {
        let x = (0..d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let x_delta = (0..d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        r.read_exact(&mut code)?;
        out.push(TransitionSample {
            x,
            x_delta,
            indicator: Indicator::from_code(code[0])?,
        });
    }
    Ok((d, out))
}

pub fn write_samples_csv<W: Write>(mut w: W, samples: &[TransitionSample], d: usize) -> Result<()> {
    let cols: Vec<String> = (0..d).map(|i| format!("x{i}")).chain((0..d).map(|i| format!("xd{i}"))).collect();
    writeln!(w, "{},indicator", cols.join(","))?;
    for s in samples {
        let vals: Vec<String> = s.x.iter().chain(&s.x_delta).map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{}", vals.join(","), s.indicator.code())?;
    }
    Ok(())
}

pub fn read_samples_csv<R: Read>(r: R) -> Result<(usize, Vec<TransitionSample>)> {
    let mut lines = BufReader::new(r).lines();
    let head = lines.next().ok_or_else(|| Error::Format("empty sample CSV".into()))??;
    let cols = head.split(',').count();
    if cols < 3 || cols % 2 == 0 {
        return Err(Error::Format(format!("sample CSV header has {cols} columns")));
    }
    let d = (cols - 1) / 2;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Format(format!("row {} has {} fields, expected {cols}", n + 2, fields.len())));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("row {}: {e}", n + 2)));
        let x = fields[..d].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        let x_delta = fields[d..2 * d].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        let code: u8 = fields[2 * d]
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("row {}: {e}", n + 2)))?;
        out.push(TransitionSample {
            x,
            x_delta,
            indicator: Indicator::from_code(code)?,
        });
    }
    Ok((d, out))
}

pub fn write_points<W: Write>(mut w: W, points: &[Vec<f64>], d: usize) -> Result<()> {
    header(&mut w, POINT_MAGIC)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(points.len() as u64).to_le_bytes())?;
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension { expected: d, got: p.len() });
        }
        for v in p {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_points<R: Read>(mut r: R) -> Result<(usize, Vec<Vec<f64>>)> {
    check_header(&mut r, POINT_MAGIC, "point pool")?;
    let (d, count) = sizes(&mut r)?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        out.push((0..d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?);
    }
    Ok((d, out))
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &CommittorModel) -> Result<()> {
    header(&mut w, CHECKPOINT_MAGIC)?;
    let arch = serde_json::to_vec(&model.arch()).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(&(arch.len() as u32).to_le_bytes())?;
    w.write_all(&arch)?;
    let theta = model.theta();
    w.write_all(&(theta.len() as u64).to_le_bytes())?;
    for v in &theta {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<CommittorModel> {
    check_header(&mut r, CHECKPOINT_MAGIC, "checkpoint")?;
    let len = read_u32(&mut r)? as usize;
    if len > 1 << 24 {
        return Err(Error::Format("architecture descriptor too long".into()));
    }
    let mut raw = vec![0u8; len];
    r.read_exact(&mut raw)?;
    let arch: ArchConfig = serde_json::from_slice(&raw).map_err(|e| Error::Format(format!("architecture: {e}")))?;
    let mut model = CommittorModel::zeros(&arch)?;
    let n = read_u64(&mut r)? as usize;
    if n != model.num_params() {
        return Err(Error::Format(format!(
            "checkpoint holds {n} parameters but the architecture needs {}",
            model.num_params()
        )));
    }
    let theta = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    model.set_theta(&theta)?;
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &CommittorModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CommittorModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
