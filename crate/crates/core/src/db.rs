//! Share-database files, embeddings input files and ingestion.
//!
//! The data owner encodes each `l2`-normalized embedding row at scale
//! `2^(f-1)`, splits it into two additive shares, and also writes the
//! public masked document openings `e = x - rb` next to each server's
//! shares (`rb` is the dealer's database-side mask matrix, derived from the
//! shared master seed). One file per server; both carry the same public
//! openings and a SHA-256 integrity checksum.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::dealer::derive_rng;
use crate::error::{Error, Result};
use crate::field::{Fe, FieldParams};

pub const DB_MAGIC: &[u8; 4] = b"SSDB";
pub const DB_VERSION: u16 = 1;

/// Public database metadata, also written as a small TOML file for clients.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DbMeta {
    pub docs: u64,
    pub dim: u64,
    pub f: u32,
    pub p: u64,
    /// Published norm of the encoded rows: `2^(f-1)`.
    pub norm_scale: u64,
}

impl DbMeta {
    pub fn field_params(&self) -> Result<FieldParams> {
        FieldParams::new(self.p, self.f, 64)
    }
}

/// One server's view of the ingested database.
#[derive(Debug, Clone)]
pub struct ShareDb {
    pub meta: DbMeta,
    pub party: u8,
    /// Share matrix, `docs * dim`, row-major.
    pub shares: Vec<Fe>,
    /// Public openings `e = x - rb`, `docs * dim`, row-major.
    pub doc_masks: Vec<Fe>,
}

pub fn write_share_db(path: &Path, db: &ShareDb) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 16 * db.shares.len());
    buf.extend_from_slice(DB_MAGIC);
    buf.extend_from_slice(&DB_VERSION.to_le_bytes());
    buf.push(db.party);
    buf.extend_from_slice(&db.meta.docs.to_le_bytes());
    buf.extend_from_slice(&db.meta.dim.to_le_bytes());
    buf.extend_from_slice(&db.meta.f.to_le_bytes());
    buf.extend_from_slice(&db.meta.p.to_le_bytes());
    buf.extend_from_slice(&db.meta.norm_scale.to_le_bytes());
    for &v in db.shares.iter().chain(db.doc_masks.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    file.write_all(&digest)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_share_db(path: &Path, party: u8) -> Result<ShareDb> {
    let bytes = fs::read(path)?;
    if bytes.len() < 75 || &bytes[..4] != DB_MAGIC {
        return Err(Error::Corrupt(format!("{} is not a share database", path.display())));
    }
    let body = &bytes[..bytes.len() - 32];
    let digest = Sha256::digest(body);
    if digest.as_slice() != &bytes[bytes.len() - 32..] {
        return Err(Error::Corrupt(format!("{}: checksum mismatch", path.display())));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != DB_VERSION {
        return Err(Error::Corrupt(format!("unsupported db version {version}")));
    }
    let file_party = body[6];
    if file_party != party {
        return Err(Error::WrongParty { file: file_party, caller: party });
    }
    let docs = u64::from_le_bytes(body[7..15].try_into().unwrap());
    let dim = u64::from_le_bytes(body[15..23].try_into().unwrap());
    let f = u32::from_le_bytes(body[23..27].try_into().unwrap());
    let p = u64::from_le_bytes(body[27..35].try_into().unwrap());
    let norm_scale = u64::from_le_bytes(body[35..43].try_into().unwrap());
    let count = (docs * dim) as usize;
    if body.len() != 43 + 16 * count {
        return Err(Error::Corrupt("share database body length mismatch".into()));
    }
    let take = |off: usize| -> Vec<Fe> {
        body[off..off + 8 * count]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let shares = take(43);
    let doc_masks = take(43 + 8 * count);
    Ok(ShareDb {
        meta: DbMeta { docs, dim, f, p, norm_scale },
        party,
        shares,
        doc_masks,
    })
}

/// Raw embeddings: binary file of little-endian f64 with a text sidecar
/// `<file>.meta` holding `rows=N` and `dim=M`, or a plain text / CSV file
/// with one row per line.
pub fn read_embeddings(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if matches!(ext, "csv" | "txt") {
        return read_embeddings_text(path);
    }
    let sidecar = path.with_extension(format!("{ext}.meta"));
    let meta_text = fs::read_to_string(&sidecar)
        .map_err(|_| Error::Ingest(format!("missing sidecar {}", sidecar.display())))?;
    let mut rows = None;
    let mut dim = None;
    for line in meta_text.lines() {
        let Some((key, val)) = line.split_once('=') else { continue };
        match key.trim() {
            "rows" => rows = val.trim().parse::<usize>().ok(),
            "dim" => dim = val.trim().parse::<usize>().ok(),
            _ => {}
        }
    }
    let (rows, dim) = match (rows, dim) {
        (Some(r), Some(d)) => (r, d),
        _ => return Err(Error::Ingest("sidecar must define rows= and dim=".into())),
    };
    let mut file = fs::File::open(path)?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != rows * dim * 8 {
        return Err(Error::Ingest(format!(
            "expected {} bytes for {rows}x{dim} f64 matrix, found {}",
            rows * dim * 8,
            raw.len()
        )));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, dim, data))
}

fn read_embeddings_text(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut dim = 0usize;
    let mut rows = 0usize;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| Error::Ingest(format!("bad number '{t}'"))))
            .collect::<Result<_>>()?;
        if rows == 0 {
            dim = row.len();
        } else if row.len() != dim {
            return Err(Error::Ingest(format!("row {rows} has {} values, expected {dim}", row.len())));
        }
        data.extend(row);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Ingest("no rows in embeddings file".into()));
    }
    Ok((rows, dim, data))
}

pub fn write_embeddings_f64(path: &Path, rows: usize, dim: usize, data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let sidecar = path.with_extension(format!("{ext}.meta"));
    fs::write(sidecar, format!("rows={rows}\ndim={dim}\n"))?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Renormalize rows instead of rejecting them.
    pub renormalize: bool,
    /// Accepted deviation of a row's norm from 1.
    pub norm_tolerance: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { renormalize: false, norm_tolerance: 1e-3 }
    }
}

/// Encode, share and emit both servers' databases plus public metadata.
///
/// `master_seed` must match the dealer's: the database-side mask matrix
/// `rb` is derived from it so the bundles' `[rb]` shares line up with the
/// openings written here.
pub fn ingest(
    params: &FieldParams,
    rows: usize,
    dim: usize,
    data: &[f64],
    master_seed: u64,
    opts: IngestOptions,
) -> Result<(ShareDb, ShareDb)> {
    if data.len() != rows * dim {
        return Err(Error::Ingest("embedding matrix size mismatch".into()));
    }
    if (params.p as u128) <= rows as u128 {
        return Err(Error::Ingest("field must be larger than the document count".into()));
    }
    let meta = DbMeta {
        docs: rows as u64,
        dim: dim as u64,
        f: params.f,
        p: params.p,
        norm_scale: params.coord_scale(),
    };
    let count = rows * dim;
    let mut share0 = Vec::with_capacity(count);
    let mut share1 = Vec::with_capacity(count);
    let mut masks = Vec::with_capacity(count);
    for j in 0..rows {
        let row = &data[j * dim..(j + 1) * dim];
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Ingest(format!("row {j} contains NaN or infinity")));
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if (norm - 1.0).abs() <= opts.norm_tolerance {
            1.0
        } else if opts.renormalize {
            if norm == 0.0 {
                return Err(Error::Ingest(format!("row {j} is all zero")));
            }
            1.0 / norm
        } else {
            return Err(Error::Ingest(format!(
                "row {j} has norm {norm}, not l2-normalized (pass renormalize to fix)"
            )));
        };
        let mut rb_rng = derive_rng(master_seed, "rb", j as u64);
        let mut sh_rng = derive_rng(master_seed, "xshare", j as u64);
        for &v in row {
            let enc = params.encode_coord(v * scale)?;
            let rb = rb_rng.gen_range(0..params.p);
            let s0 = sh_rng.gen_range(0..params.p);
            share0.push(s0);
            share1.push(params.sub(enc, s0));
            masks.push(params.sub(enc, rb));
        }
    }
    Ok((
        ShareDb { meta, party: 0, shares: share0, doc_masks: masks.clone() },
        ShareDb { meta, party: 1, shares: share1, doc_masks: masks },
    ))
}

/// Write the public metadata TOML consumed by clients.
pub fn write_meta(path: &Path, meta: &DbMeta) -> Result<()> {
    let text = toml::to_string_pretty(meta).map_err(|e| Error::Ingest(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<DbMeta> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Corrupt(format!("metadata: {e}")))
}
