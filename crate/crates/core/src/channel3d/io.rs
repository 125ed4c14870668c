//! Binary trace files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                    |
//! |--------|------|------------------------------------------|
//! | 0      | 8    | magic `GCSITRC\0`                        |
//! | 8      | 4    | format version (u32, currently 1)        |
//! | 12     | 4    | precision: 8 = complex64, 16 = complex128 |
//! | 16     | 8    | realization seed (u64)                   |
//! | 24     | 8    | n_frames (u64)                           |
//! | 32     | 8    | n_subcarriers (u64)                      |
//! | 40     | 8    | frame interval dt in seconds (f64)       |
//! | 48     | 8    | time offset in seconds (f64)             |
//! | 56     | ...  | payload: row-major `(re, im)` pairs      |
//!
//! Rows are frames, columns subcarriers. complex64 stores two f32 values per
//! element, complex128 two f64 values.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use super::ChannelTrace;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GCSITRC\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePrecision {
    Complex64,
    Complex128,
}

impl TracePrecision {
    fn element_bytes(self) -> u32 {
        match self {
            TracePrecision::Complex64 => 8,
            TracePrecision::Complex128 => 16,
        }
    }
}

pub fn write_trace<W: Write>(w: &mut W, trace: &ChannelTrace, precision: TracePrecision) -> Result<()> {
    let mut buf = Vec::with_capacity(56 + trace.responses.len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&precision.element_bytes().to_le_bytes());
    buf.extend_from_slice(&trace.realization_seed.to_le_bytes());
    buf.extend_from_slice(&(trace.n_frames() as u64).to_le_bytes());
    buf.extend_from_slice(&(trace.n_subcarriers() as u64).to_le_bytes());
    buf.extend_from_slice(&trace.frame_interval.to_le_bytes());
    buf.extend_from_slice(&trace.time_offset.to_le_bytes());
    for v in trace.responses.iter() {
        match precision {
            TracePrecision::Complex64 => {
                buf.extend_from_slice(&(v.re as f32).to_le_bytes());
                buf.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
            TracePrecision::Complex128 => {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("trace file truncated".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn u32_at(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

fn u64_at(bytes: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, 8)?.try_into().unwrap()))
}

fn f64_at(bytes: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, 8)?.try_into().unwrap()))
}

fn f32_at(bytes: &mut &[u8]) -> Result<f32> {
    Ok(f32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

pub fn read_trace<R: Read>(r: &mut R) -> Result<(ChannelTrace, TracePrecision)> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    let mut bytes = all.as_slice();
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Format("not a trace file (bad magic)".into()));
    }
    let version = u32_at(&mut bytes)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported trace version {version}")));
    }
    let precision = match u32_at(&mut bytes)? {
        8 => TracePrecision::Complex64,
        16 => TracePrecision::Complex128,
        p => return Err(Error::Format(format!("unknown precision code {p}"))),
    };
    let seed = u64_at(&mut bytes)?;
    let n_frames = u64_at(&mut bytes)? as usize;
    let n_sub = u64_at(&mut bytes)? as usize;
    let dt = f64_at(&mut bytes)?;
    let offset = f64_at(&mut bytes)?;
    let expected = n_frames
        .checked_mul(n_sub)
        .and_then(|n| n.checked_mul(precision.element_bytes() as usize))
        .ok_or_else(|| Error::Format("trace dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(n_frames * n_sub);
    for _ in 0..n_frames * n_sub {
        let v = match precision {
            TracePrecision::Complex64 => {
                Complex64::new(f32_at(&mut bytes)? as f64, f32_at(&mut bytes)? as f64)
            }
            TracePrecision::Complex128 => Complex64::new(f64_at(&mut bytes)?, f64_at(&mut bytes)?),
        };
        data.push(v);
    }
    let responses = Array2::from_shape_vec((n_frames, n_sub), data)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((ChannelTrace { responses, frame_interval: dt, time_offset: offset, realization_seed: seed }, precision))
}
