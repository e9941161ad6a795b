//! Binary draw files.
//!
//! Layout: 8-byte magic, format version (u32 LE), header length (u64 LE), a
//! JSON header, then per chain the draws (f64 LE, row-major), acceptance
//! statistics (f64), leapfrog counts (u32) and divergence flags (u8). A
//! SHA-256 of everything before it closes the file.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GppmError, Result};
use crate::inference::{ChainDraws, PosteriorDraws};

const MAGIC: &[u8; 8] = b"GPPMDRAW";
pub const FORMAT_VERSION: u32 = 1;
/// Version of the unconstrained parameterization the draws live in.
pub const TRANSFORMS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainHeader {
    draws: usize,
    step_size: f64,
    inv_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawHeader {
    pub format_version: u32,
    pub transforms_version: u32,
    pub names: Vec<String>,
    pub seed: u64,
    chains: Vec<ChainHeader>,
    /// Free-form run information, such as the model specification.
    pub metadata: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> GppmError {
    GppmError::DrawFile(msg.into())
}

fn check_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(bad(format!("parameter {n} listed twice")));
        }
    }
    Ok(())
}

pub fn encode_draws(draws: &PosteriorDraws, metadata: serde_json::Value) -> Result<Vec<u8>> {
    check_names(&draws.names)?;
    let dim = draws.dim();
    let header = DrawHeader {
        format_version: FORMAT_VERSION,
        transforms_version: TRANSFORMS_VERSION,
        names: draws.names.clone(),
        seed: draws.seed,
        chains: draws
            .chains
            .iter()
            .map(|c| ChainHeader {
                draws: c.accept_stats.len(),
                step_size: c.step_size,
                inv_mass: c.inv_mass.clone(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 64 + draws.n_draws() * (dim + 2) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for c in &draws.chains {
        if c.draws.len() != c.accept_stats.len() * dim
            || c.n_leapfrog.len() != c.accept_stats.len()
            || c.divergent.len() != c.accept_stats.len()
        {
            return Err(bad("inconsistent chain lengths"));
        }
        c.draws
            .iter()
            .chain(&c.accept_stats)
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        c.n_leapfrog
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out.extend(c.divergent.iter().map(|&d| d as u8));
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| bad("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_draws(bytes: &[u8]) -> Result<(PosteriorDraws, DrawHeader)> {
    if bytes.len() < MAGIC.len() + 12 + 32 {
        return Err(bad("file too short"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch (truncated or corrupted file)"));
    }
    let mut cur = Cursor { buf: body, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(bad("not a draw file"));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let header: DrawHeader = serde_json::from_slice(cur.take(len)?)?;
    if header.transforms_version != TRANSFORMS_VERSION {
        return Err(bad(format!(
            "transforms version {}, expected {TRANSFORMS_VERSION}",
            header.transforms_version
        )));
    }
    check_names(&header.names)?;
    let dim = header.names.len();
    let mut chains = Vec::with_capacity(header.chains.len());
    for ch in &header.chains {
        let n = ch.draws;
        let draws = cur.f64s(n * dim)?;
        let accept_stats = cur.f64s(n)?;
        let n_leapfrog = cur
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let divergent = cur.take(n)?.iter().map(|&b| b != 0).collect();
        chains.push(ChainDraws {
            draws,
            accept_stats,
            divergent,
            n_leapfrog,
            step_size: ch.step_size,
            inv_mass: ch.inv_mass.clone(),
        });
    }
    if cur.pos != body.len() {
        return Err(bad("trailing bytes after the last chain"));
    }
    let draws = PosteriorDraws {
        names: header.names.clone(),
        chains,
        seed: header.seed,
    };
    Ok((draws, header))
}

pub fn save_draws(path: &Path, draws: &PosteriorDraws, metadata: serde_json::Value) -> Result<()> {
    std::fs::write(path, encode_draws(draws, metadata)?)?;
    Ok(())
}

pub fn load_draws(path: &Path) -> Result<(PosteriorDraws, DrawHeader)> {
    decode_draws(&std::fs::read(path)?)
}
