//! Binary checkpoint file.
//!
//! ```text
//! magic   "TANETCKPT"            9 bytes
//! version u32
//! count   u32
//! count × entry:
//!   name_len u16, name (UTF-8)
//!   rank     u8, rank × extent u32
//!   values   f32 × product(extents)
//! ```
//!
//! Integers and floats are little-endian. Entries are sorted by name so equal
//! weights always give equal bytes.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tanet_core::params::{dims_to_shape, Param, ParamKind, ParamStore};
use tanet_core::Tensor;

pub const MAGIC: &[u8; 9] = b"TANETCKPT";
pub const VERSION: u32 = 1;
/// Extents beyond rank 4 have no tensor to land in.
pub const MAX_RANK: u8 = 4;

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    NotACheckpoint,
    UnsupportedVersion(u32),
    /// Truncated, oversized or otherwise malformed payload.
    Corrupt(String),
    /// The collection cannot be represented (name too long, rank too high).
    Unencodable(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "{e}"),
            Self::NotACheckpoint => f.write_str("not a checkpoint"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported version {v} (expected {VERSION})"),
            Self::Corrupt(why) => write!(f, "corrupt checkpoint: {why}"),
            Self::Unencodable(why) => write!(f, "cannot encode checkpoint: {why}"),
        }
    }
}

impl std::error::Error for CheckpointError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

pub fn encode(weights: &ParamStore<f32>) -> Result<Vec<u8>, CheckpointError> {
    let count = u32::try_from(weights.len())
        .map_err(|_| CheckpointError::Unencodable("too many tensors".into()))?;
    let mut out = Vec::with_capacity(17 + weights.iter().map(|(_, p)| 4 * p.value.numel() + 32).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    // ParamStore iterates in name order already.
    for (name, p) in weights.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| CheckpointError::Unencodable(format!("name of {} bytes", name.len())))?;
        if p.rank > MAX_RANK {
            return Err(CheckpointError::Unencodable(format!("{name}: rank {}", p.rank)));
        }
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(p.rank);
        for d in p.dims() {
            let d = u32::try_from(d).map_err(|_| CheckpointError::Unencodable(format!("{name}: extent {d}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parse a checkpoint. Tensors come back as [`ParamKind::Learnable`]; use
/// [`adopt_kinds`] once the owning model is known.
pub fn decode(bytes: &[u8]) -> Result<ParamStore<f32>, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::NotACheckpoint);
    }
    let mut cur = Cursor { buf: bytes, pos: MAGIC.len() };
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = cur.u32("tensor count")?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| CheckpointError::Corrupt(format!("tensor {i}: name is not UTF-8")))?
            .to_owned();
        let rank = cur.u8("rank")?;
        if rank > MAX_RANK {
            return Err(CheckpointError::Corrupt(format!("{name}: rank {rank} exceeds {MAX_RANK}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(cur.u32("extent")? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= cur.remaining()))
            .ok_or_else(|| CheckpointError::Corrupt(format!("{name}: values truncated")))?;
        let raw = cur.take(4 * numel, "values")?;
        let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let value = Tensor::from_vec(dims_to_shape(&dims), data)
            .map_err(|e| CheckpointError::Corrupt(format!("{name}: {e}")))?;
        if store.get(&name).is_ok() {
            return Err(CheckpointError::Corrupt(format!("duplicate tensor `{name}`")));
        }
        store.insert(name, Param { value, rank, kind: ParamKind::Learnable });
    }
    if cur.remaining() != 0 {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", cur.remaining())));
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Write via a sibling temporary file and rename, so readers never observe a
/// half-written checkpoint.
pub fn write(weights: &ParamStore<f32>, path: &Path) -> Result<(), CheckpointError> {
    let bytes = encode(weights)?;
    let tmp = temp_sibling(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

pub fn read(path: &Path) -> Result<ParamStore<f32>, CheckpointError> {
    decode(&fs::read(path)?)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Copy parameter kinds (learnable or buffer) from the declared specs.
pub fn adopt_kinds(store: &mut ParamStore<f32>, specs: &tanet_core::params::ParamSpecs) {
    for spec in specs.iter() {
        if let Some(p) = store.get_mut(&spec.name) {
            p.kind = spec.kind;
        }
    }
}
