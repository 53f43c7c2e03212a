//! Binary field checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `CBF1` |
//! | 4 | `d` as `u32` |
//! | 4 | `n` as `u32` |
//! | 8 | scalar count `2 d n^d` as `u64` |
//! | 8 each | `(re, im)` pairs as `f64` |
//!
//! Coefficients cover the full spectrum, component by component. Within a
//! component, wavevectors run in lexicographic order with each `k_i` going
//! from `-n/2` to `n/2 - 1` and the last axis varying fastest.
//!
//! An optional trailer may follow: magic `TSTP`, the time as `f64` and the step
//! index as `u64`. Readers of the plain layout can ignore it.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;

const MAGIC: &[u8; 4] = b"CBF1";
const TRAILER: &[u8; 4] = b"TSTP";

/// Time stamp stored in the optional trailer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamp {
    pub time: f64,
    pub step: u64,
}

fn full_wavevectors(d: usize, n: usize) -> Vec<[i64; 3]> {
    let half = (n / 2) as i64;
    let axis: Vec<i64> = (-half..half).collect();
    let mut out = Vec::with_capacity(n.pow(d as u32));
    if d == 2 {
        for &a in &axis {
            for &b in &axis {
                out.push([a, b, 0]);
            }
        }
    } else {
        for &a in &axis {
            for &b in &axis {
                for &c in &axis {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn lexicographic_index(d: usize, n: usize, k: [i64; 3]) -> usize {
    let half = (n / 2) as i64;
    k[..d].iter().fold(0, |acc, &ki| acc * n + (ki + half) as usize)
}

/// Serialize `s` (and an optional stamp) into bytes.
pub fn encode(s: &SpectralField, stamp: Option<Stamp>) -> Vec<u8> {
    let g = s.grid();
    let (d, n) = (g.dim(), g.n());
    let kv = full_wavevectors(d, n);
    let count = (2 * d * kv.len()) as u64;
    let mut buf = Vec::with_capacity(20 + 8 * count as usize + 20);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    let len = g.spectral_len();
    for c in 0..d {
        let comp = &s.coeffs()[c * len..(c + 1) * len];
        for k in &kv {
            let (i, conj) = g.locate(*k).expect("every full-spectrum wavevector is stored or mirrored");
            let v = if conj { comp[i].conj() } else { comp[i] };
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    if let Some(st) = stamp {
        buf.extend_from_slice(TRAILER);
        buf.extend_from_slice(&st.time.to_le_bytes());
        buf.extend_from_slice(&st.step.to_le_bytes());
    }
    buf
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8]> {
    let end = *pos + len;
    if end > bytes.len() {
        return Err(Error::Checkpoint(format!("truncated at byte {}", bytes.len())));
    }
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, pos, 4)?.try_into().expect("4 bytes")))
}

fn read_u64(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, pos, 8)?.try_into().expect("8 bytes")))
}

fn read_f64(bytes: &[u8], pos: &mut usize) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, pos, 8)?.try_into().expect("8 bytes")))
}

/// Parse bytes into a field on a grid with the default dealiasing fraction.
pub fn decode(bytes: &[u8]) -> Result<(SpectralField, Option<Stamp>)> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let d = read_u32(bytes, &mut pos)? as usize;
    let n = read_u32(bytes, &mut pos)? as usize;
    let grid = TorusGrid::new(d, n).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let count = read_u64(bytes, &mut pos)? as usize;
    let kv = full_wavevectors(d, n);
    if count != 2 * d * kv.len() {
        return Err(Error::Checkpoint(format!("scalar count {count} does not match d = {d}, n = {n}")));
    }
    let len = grid.spectral_len();
    let total = kv.len();
    let mut full = Vec::with_capacity(d * total);
    for _ in 0..d * total {
        let re = read_f64(bytes, &mut pos)?;
        let im = read_f64(bytes, &mut pos)?;
        full.push(Complex64::new(re, im));
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); d * len];
    let half = (n / 2) as i64;
    for (i, mode) in grid.modes().iter().enumerate() {
        // Entries with k_last = n/2 are only present through their mirror image.
        let (k, conj) = if mode.k[d - 1] == half {
            let mut neg = [-mode.k[0], -mode.k[1], -mode.k[2]];
            for c in neg.iter_mut().take(d) {
                if *c == half {
                    *c = -half;
                }
            }
            (neg, true)
        } else {
            (mode.k, false)
        };
        let pos = lexicographic_index(d, n, k);
        for c in 0..d {
            let v = full[c * total + pos];
            coeffs[c * len + i] = if conj { v.conj() } else { v };
        }
    }
    let stamp = if bytes.len() >= pos + 20 && &bytes[pos..pos + 4] == TRAILER {
        pos += 4;
        Some(Stamp {
            time: read_f64(bytes, &mut pos)?,
            step: read_u64(bytes, &mut pos)?,
        })
    } else {
        None
    };
    let field = SpectralField::from_coeffs(&grid, coeffs)?;
    Ok((field, stamp))
}

pub fn write(path: &Path, s: &SpectralField, stamp: Option<Stamp>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(s, stamp))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(SpectralField, Option<Stamp>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
