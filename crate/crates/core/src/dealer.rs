//! Offline trusted dealer: correlated randomness for the online protocol.
//!
//! For each provisioned query a bundle holds the dot-product correlation
//! (`[ra]`, `[rab]`) plus the verification gates generated offline: one
//! binary-check key per document (interval `[0, 2)`) and one count-bound
//! key (interval `[0, c_m + 1)`). The database-side mask shares `[rb]` are
//! per-database and stored once.
//!
//! One binary-check key per document is deliberate: a single gate key
//! carries a single mask, and opening all candidate elements under one mask
//! would publish their pairwise differences, i.e. the selection vector.
//!
//! Everything is derived deterministically from a master seed, so a fixed
//! seed reproduces byte-identical bundles. Consumption is tracked in a
//! sidecar cursor file that is synced to disk before material is handed
//! out, so a crash cannot replay a query's randomness.

use std::fs;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cmp::{self, CmpKey};
use crate::dot::DotCorrelation;
use crate::error::{Error, Result};
use crate::field::{Fe, FieldParams};
use crate::prg::LAMBDA;

pub const BUNDLE_MAGIC: &[u8; 4] = b"P2RG";
pub const BUNDLE_VERSION: u16 = 1;

const HEADER_LEN: u64 = 66;
const SECTION_RB: u32 = 1;
const SECTION_PROMPT_MASK: u32 = 2;
const SECTION_PRODUCTS: u32 = 3;
const SECTION_GATES: u32 = 4;

/// Derive an independent deterministic stream from the master seed.
pub(crate) fn derive_rng(master: u64, label: &str, index: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, Copy)]
pub struct DealerConfig {
    pub params: FieldParams,
    pub docs: u64,
    pub dim: u64,
    /// Upper bound `c_m` on the final candidate count.
    pub max_candidates: u64,
    /// Upper bound `step_m` on bisection iterations.
    pub max_iterations: u32,
    /// Slack `xi` the deployment advertises to clients.
    pub slack: u64,
    /// Number of query sessions to provision.
    pub queries: u64,
    pub master_seed: u64,
    /// Refuse to emit bundles larger than this many bytes.
    pub size_limit: u64,
}

impl DealerConfig {
    pub fn new(params: FieldParams, docs: u64, dim: u64, queries: u64, master_seed: u64) -> Self {
        Self {
            params,
            docs,
            dim,
            max_candidates: docs,
            max_iterations: 64,
            slack: 0,
            queries,
            master_seed,
            size_limit: 16 << 30,
        }
    }

    fn section_sizes(&self) -> (u64, u64, u64, u64) {
        let rb = self.docs * self.dim * 8;
        let mask = self.dim * 8;
        let products = self.docs * self.dim * 8;
        let gates = (self.docs + 1) * cmp::key_len(self.params.n) as u64;
        (rb, mask, products, gates)
    }

    fn total_size(&self) -> u64 {
        let (rb, mask, products, gates) = self.section_sizes();
        let table = 4 + (1 + 3 * self.queries) * 24;
        HEADER_LEN + table + rb + self.queries * (mask + products + gates)
    }

    fn validate(&self) -> Result<()> {
        if self.queries == 0 {
            return Err(Error::Params("must provision at least one query".into()));
        }
        if self.docs == 0 || self.dim == 0 {
            return Err(Error::Params("empty database".into()));
        }
        if self.params.p <= self.docs {
            return Err(Error::Params("field must be larger than the document count".into()));
        }
        if self.max_candidates >= self.params.p || self.max_iterations == 0 {
            return Err(Error::Params("bad limits".into()));
        }
        let total = self.total_size();
        if total > self.size_limit {
            return Err(Error::Params(format!(
                "bundle would be {total} bytes, over the {} byte limit",
                self.size_limit
            )));
        }
        Ok(())
    }
}

/// Plaintext view of the generated randomness, for tests and audits.
#[derive(Debug, Default)]
pub struct DealerAudit {
    pub rb: Vec<Fe>,
    pub prompt_masks: Vec<Vec<Fe>>,
    pub products: Vec<Vec<Fe>>,
}

/// Generate both servers' bundles. Deterministic in `cfg.master_seed`.
pub fn generate(cfg: &DealerConfig, out0: &Path, out1: &Path) -> Result<()> {
    generate_inner(cfg, out0, out1, false).map(|_| ())
}

/// Like [`generate`], also returning the plaintext randomness and running
/// the full self-check. Only sensible for small configurations.
pub fn generate_with_audit(cfg: &DealerConfig, out0: &Path, out1: &Path) -> Result<DealerAudit> {
    generate_inner(cfg, out0, out1, true).map(Option::unwrap)
}

fn generate_inner(
    cfg: &DealerConfig,
    out0: &Path,
    out1: &Path,
    audit: bool,
) -> Result<Option<DealerAudit>> {
    cfg.validate()?;
    let params = &cfg.params;
    let (docs, dim) = (cfg.docs as usize, cfg.dim as usize);
    let mut w0 = BufWriter::new(fs::File::create(out0)?);
    let mut w1 = BufWriter::new(fs::File::create(out1)?);

    let header = |party: u8| -> Vec<u8> {
        let mut h = Vec::with_capacity(HEADER_LEN as usize);
        h.extend_from_slice(BUNDLE_MAGIC);
        h.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        h.push(party);
        h.extend_from_slice(&params.p.to_le_bytes());
        h.extend_from_slice(&params.f.to_le_bytes());
        h.push(params.n as u8);
        h.extend_from_slice(&LAMBDA.to_le_bytes());
        h.extend_from_slice(&cfg.dim.to_le_bytes());
        h.extend_from_slice(&cfg.docs.to_le_bytes());
        h.extend_from_slice(&cfg.max_candidates.to_le_bytes());
        h.extend_from_slice(&cfg.max_iterations.to_le_bytes());
        h.extend_from_slice(&cfg.slack.to_le_bytes());
        h.extend_from_slice(&cfg.queries.to_le_bytes());
        debug_assert_eq!(h.len() as u64, HEADER_LEN);
        h
    };
    w0.write_all(&header(0))?;
    w1.write_all(&header(1))?;

    // Section table: identical in both files.
    let (rb_len, mask_len, products_len, gates_len) = cfg.section_sizes();
    let table_len = 4 + (1 + 3 * cfg.queries) * 24;
    let mut table = Vec::with_capacity(table_len as usize);
    let mut entries: Vec<(u64, u64, u64)> = Vec::new();
    let mut off = HEADER_LEN + table_len;
    entries.push(((SECTION_RB as u64) << 32, off, rb_len));
    off += rb_len;
    for q in 0..cfg.queries {
        entries.push(((SECTION_PROMPT_MASK as u64) << 32 | q, off, mask_len));
        off += mask_len;
        entries.push(((SECTION_PRODUCTS as u64) << 32 | q, off, products_len));
        off += products_len;
        entries.push(((SECTION_GATES as u64) << 32 | q, off, gates_len));
        off += gates_len;
    }
    table.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (id, offset, len) in &entries {
        table.extend_from_slice(&id.to_le_bytes());
        table.extend_from_slice(&offset.to_le_bytes());
        table.extend_from_slice(&len.to_le_bytes());
    }
    w0.write_all(&table)?;
    w1.write_all(&table)?;

    let mut audit_out = audit.then(DealerAudit::default);

    // Database-side mask shares, derived row by row to match ingestion.
    let mut rb_plain = Vec::with_capacity(docs * dim);
    {
        let mut buf0 = Vec::with_capacity(dim * 8);
        let mut buf1 = Vec::with_capacity(dim * 8);
        for j in 0..cfg.docs {
            let mut rng = derive_rng(cfg.master_seed, "rb", j);
            let mut srng = derive_rng(cfg.master_seed, "rbshare", j);
            buf0.clear();
            buf1.clear();
            for _ in 0..dim {
                let rb = rng.gen_range(0..params.p);
                let s0 = srng.gen_range(0..params.p);
                buf0.extend_from_slice(&s0.to_le_bytes());
                buf1.extend_from_slice(&params.sub(rb, s0).to_le_bytes());
                rb_plain.push(rb);
            }
            w0.write_all(&buf0)?;
            w1.write_all(&buf1)?;
        }
    }

    for q in 0..cfg.queries {
        // prompt-side masks
        let mut ra_rng = derive_rng(cfg.master_seed, "ra", q);
        let mut ras_rng = derive_rng(cfg.master_seed, "rashare", q);
        let mut ra = Vec::with_capacity(dim);
        let mut buf0 = Vec::with_capacity(dim * 8);
        let mut buf1 = Vec::with_capacity(dim * 8);
        for _ in 0..dim {
            let v = ra_rng.gen_range(0..params.p);
            let s0 = ras_rng.gen_range(0..params.p);
            buf0.extend_from_slice(&s0.to_le_bytes());
            buf1.extend_from_slice(&params.sub(v, s0).to_le_bytes());
            ra.push(v);
        }
        w0.write_all(&buf0)?;
        w1.write_all(&buf1)?;

        // product terms rab[j][n] = ra[n] * rb[j][n]
        let mut products_plain = audit.then(|| Vec::with_capacity(docs * dim));
        for j in 0..docs {
            let mut prng = derive_rng(cfg.master_seed, "rabshare", q * cfg.docs + j as u64);
            buf0.clear();
            buf1.clear();
            for n in 0..dim {
                let rab = params.mul(ra[n], rb_plain[j * dim + n]);
                let s0 = prng.gen_range(0..params.p);
                buf0.extend_from_slice(&s0.to_le_bytes());
                buf1.extend_from_slice(&params.sub(rab, s0).to_le_bytes());
                if let Some(pp) = products_plain.as_mut() {
                    pp.push(rab);
                }
            }
            w0.write_all(&buf0)?;
            w1.write_all(&buf1)?;
        }

        // verification gates: one binary check per document, generated in
        // deterministic chunks so the loop can fan out
        const CHUNK: u64 = 512;
        let mut j = 0u64;
        while j < cfg.docs {
            let hi = (j + CHUNK).min(cfg.docs);
            let pairs: Vec<(Vec<u8>, Vec<u8>)> = (j..hi)
                .into_par_iter()
                .map(|idx| {
                    let mut rng = derive_rng(cfg.master_seed, "bingate", q * cfg.docs + idx);
                    let (k0, k1) = cmp::gen(params, 0, 2, &mut rng).expect("binary gate");
                    (k0.to_bytes(), k1.to_bytes())
                })
                .collect();
            for (b0, b1) in pairs {
                w0.write_all(&b0)?;
                w1.write_all(&b1)?;
            }
            j = hi;
        }
        let mut crng = derive_rng(cfg.master_seed, "cntgate", q);
        let (c0, c1) = cmp::gen(params, 0, cfg.max_candidates + 1, &mut crng)?;
        w0.write_all(&c0.to_bytes())?;
        w1.write_all(&c1.to_bytes())?;

        if let Some(a) = audit_out.as_mut() {
            a.prompt_masks.push(ra);
            a.products.push(products_plain.unwrap());
        }
    }
    if let Some(a) = audit_out.as_mut() {
        a.rb = rb_plain;
    }

    w0.into_inner().map_err(|e| Error::Io(e.into_parts().0))?.sync_all()?;
    w1.into_inner().map_err(|e| Error::Io(e.into_parts().0))?.sync_all()?;

    self_check(cfg, out0, out1, audit)?;
    Ok(audit_out)
}

/// Reconstruct sampled values from both emitted bundles and compare with
/// regenerated plaintext; in audit mode every triple and every gate is
/// checked.
fn self_check(cfg: &DealerConfig, out0: &Path, out1: &Path, full: bool) -> Result<()> {
    let params = &cfg.params;
    let mut b0 = Bundle::open(out0, 0)?;
    let mut b1 = Bundle::open(out1, 1)?;
    let rb0 = b0.rb_share()?;
    let rb1 = b1.rb_share()?;
    let docs_dim = (cfg.docs * cfg.dim) as usize;
    let fail = |what: &str| Err(Error::Corrupt(format!("dealer self-check failed: {what}")));

    let step = if full { 1 } else { (docs_dim / 16).max(1) };
    for q in 0..cfg.queries {
        let (_, c0) = b0.take_query(None)?;
        let (_, c1) = b1.take_query(Some(q))?;
        for n in (0..cfg.dim as usize).step_by(if full { 1 } else { 4 }) {
            let ra = params.add(c0.prompt_mask[n], c1.prompt_mask[n]);
            let rb = params.add(rb0[n], rb1[n]);
            let rab = params.add(c0.products[n], c1.products[n]);
            if params.mul(ra, rb) != rab {
                return fail("rab triple");
            }
        }
        for i in (0..docs_dim).step_by(step) {
            let ra = params.add(c0.prompt_mask[i % cfg.dim as usize], c1.prompt_mask[i % cfg.dim as usize]);
            let rb = params.add(rb0[i], rb1[i]);
            let rab = params.add(c0.products[i], c1.products[i]);
            if params.mul(ra, rb) != rab {
                return fail("rab triple");
            }
        }
        // gate spot checks: binary gates answer 1,1,0 on 0,1,2; a key has a
        // single use, so each probe reloads fresh copies from disk
        let picks: Vec<u64> = if full {
            (0..cfg.docs).collect()
        } else {
            vec![0, cfg.docs / 2, cfg.docs - 1]
        };
        let mut rng = derive_rng(cfg.master_seed, "selfcheck", q);
        for &j in &picks {
            for (x, want) in [(0u64, 1u64), (1, 1), (2, 0)] {
                let mut g0 = b0.load_gate_key(q, j)?;
                let mut g1 = b1.load_gate_key(q, j)?;
                let (s0, s1) = crate::shares::share(params, x, &mut rng);
                let m = params.add(
                    g0.mask_contrib(params, s0.value)?,
                    g1.mask_contrib(params, s1.value)?,
                );
                let y = params.add(g0.finish(params, m), g1.finish(params, m));
                if y != want {
                    return fail("binary gate");
                }
            }
        }
        for (x, want) in [(cfg.max_candidates, 1u64), (cfg.max_candidates + 1, 0)] {
            let mut g0 = b0.load_gate_key(q, cfg.docs)?;
            let mut g1 = b1.load_gate_key(q, cfg.docs)?;
            let (s0, s1) = crate::shares::share(params, x, &mut rng);
            let m = params.add(
                g0.mask_contrib(params, s0.value)?,
                g1.mask_contrib(params, s1.value)?,
            );
            let y = params.add(g0.finish(params, m), g1.finish(params, m));
            if y != want {
                return fail("count gate");
            }
        }
    }
    // the self-check consumed the cursor; reset it for real use
    b0.reset_cursor()?;
    b1.reset_cursor()?;
    Ok(())
}


/// Parameter block carried by every bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleHeader {
    pub party: u8,
    pub params: FieldParams,
    pub lambda: u16,
    pub dim: u64,
    pub docs: u64,
    pub max_candidates: u64,
    pub max_iterations: u32,
    pub slack: u64,
    pub queries: u64,
}

/// Read-side view of one server's bundle with a crash-safe consumption
/// cursor.
pub struct Bundle {
    file: fs::File,
    pub header: BundleHeader,
    sections: Vec<(u64, u64, u64)>,
    cursor_path: PathBuf,
    consumed: u64,
}

impl Bundle {
    pub fn open(path: &Path, party: u8) -> Result<Self> {
        let mut file = fs::File::open(path)?;
        let mut head = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut head).map_err(|_| Error::Corrupt("bundle header truncated".into()))?;
        if &head[..4] != BUNDLE_MAGIC {
            return Err(Error::Corrupt(format!("{} is not an offline bundle", path.display())));
        }
        let version = u16::from_le_bytes(head[4..6].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(Error::Corrupt(format!("unsupported bundle version {version}")));
        }
        let file_party = head[6];
        if file_party != party {
            return Err(Error::WrongParty { file: file_party, caller: party });
        }
        let p = u64::from_le_bytes(head[7..15].try_into().unwrap());
        let f = u32::from_le_bytes(head[15..19].try_into().unwrap());
        let n = head[19] as u32;
        let params = FieldParams::new(p, f, n.max(1))?;
        let lambda = u16::from_le_bytes(head[20..22].try_into().unwrap());
        if lambda != LAMBDA {
            return Err(Error::Corrupt(format!("unsupported lambda {lambda}")));
        }
        let header = BundleHeader {
            party,
            params,
            lambda,
            dim: u64::from_le_bytes(head[22..30].try_into().unwrap()),
            docs: u64::from_le_bytes(head[30..38].try_into().unwrap()),
            max_candidates: u64::from_le_bytes(head[38..46].try_into().unwrap()),
            max_iterations: u32::from_le_bytes(head[46..50].try_into().unwrap()),
            slack: u64::from_le_bytes(head[50..58].try_into().unwrap()),
            queries: u64::from_le_bytes(head[58..66].try_into().unwrap()),
        };
        let mut count_b = [0u8; 4];
        file.read_exact(&mut count_b)?;
        let count = u32::from_le_bytes(count_b) as usize;
        if count != (1 + 3 * header.queries) as usize {
            return Err(Error::Corrupt("bundle section table size mismatch".into()));
        }
        let mut sections = Vec::with_capacity(count);
        let mut entry = [0u8; 24];
        for _ in 0..count {
            file.read_exact(&mut entry)?;
            sections.push((
                u64::from_le_bytes(entry[0..8].try_into().unwrap()),
                u64::from_le_bytes(entry[8..16].try_into().unwrap()),
                u64::from_le_bytes(entry[16..24].try_into().unwrap()),
            ));
        }
        let expect_len = sections.last().map(|&(_, o, l)| o + l).unwrap_or(0);
        if file.metadata()?.len() != expect_len {
            return Err(Error::Corrupt("bundle body length mismatch".into()));
        }
        let cursor_path = PathBuf::from(format!("{}.cursor", path.display()));
        let consumed = match fs::read(&cursor_path) {
            Ok(bytes) if bytes.len() == 8 => u64::from_le_bytes(bytes.try_into().unwrap()),
            Ok(_) => return Err(Error::Corrupt("cursor file malformed".into())),
            Err(_) => 0,
        };
        Ok(Bundle { file, header, sections, cursor_path, consumed })
    }

    pub fn remaining(&self) -> u64 {
        self.header.queries.saturating_sub(self.consumed)
    }

    fn section(&mut self, kind: u32, index: u64) -> Result<Vec<u8>> {
        let id = (kind as u64) << 32 | index;
        let &(_, off, len) = self
            .sections
            .iter()
            .find(|&&(sid, _, _)| sid == id)
            .ok_or_else(|| Error::Corrupt(format!("missing bundle section {kind}/{index}")))?;
        self.file.seek(SeekFrom::Start(off))?;
        let mut buf = vec![0u8; len as usize];
        self.file.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn section_fes(&mut self, kind: u32, index: u64) -> Result<Vec<Fe>> {
        let buf = self.section(kind, index)?;
        Ok(buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    /// The per-database `[rb]` share matrix.
    pub fn rb_share(&mut self) -> Result<Vec<Fe>> {
        self.section_fes(SECTION_RB, 0)
    }

    /// Consume one query's dot-product correlation. Party 0 passes `None`
    /// and is assigned the next slot; party 1 passes the slot party 0
    /// announced, which must match its own cursor. The cursor is persisted
    /// and synced before any material is returned.
    pub fn take_query(&mut self, expected_slot: Option<u64>) -> Result<(u64, DotCorrelation)> {
        if self.consumed >= self.header.queries {
            return Err(Error::MaterialExhausted);
        }
        let slot = self.consumed;
        if let Some(want) = expected_slot {
            if want != slot {
                return Err(Error::Protocol(format!(
                    "peer assigned offline slot {want} but local cursor is at {slot}"
                )));
            }
        }
        let mut f = fs::File::create(&self.cursor_path)?;
        f.write_all(&(slot + 1).to_le_bytes())?;
        f.sync_all()?;
        self.consumed = slot + 1;
        let prompt_mask = self.section_fes(SECTION_PROMPT_MASK, slot)?;
        let products = self.section_fes(SECTION_PRODUCTS, slot)?;
        Ok((slot, DotCorrelation { party: self.header.party, prompt_mask, products }))
    }

    /// Load a single verification gate: `index < docs` addresses the
    /// binary checks, `index == docs` the count-bound gate.
    pub fn load_gate_key(&mut self, slot: u64, index: u64) -> Result<CmpKey> {
        if index > self.header.docs {
            return Err(Error::Usage(format!("gate index {index} out of range")));
        }
        let id = (SECTION_GATES as u64) << 32 | slot;
        let &(_, off, len) = self
            .sections
            .iter()
            .find(|&&(sid, _, _)| sid == id)
            .ok_or_else(|| Error::Corrupt(format!("missing gate section {slot}")))?;
        let klen = cmp::key_len(self.header.params.n) as u64;
        if (index + 1) * klen > len {
            return Err(Error::Corrupt("gate section too short".into()));
        }
        self.file.seek(SeekFrom::Start(off + index * klen))?;
        let mut buf = vec![0u8; klen as usize];
        self.file.read_exact(&mut buf)?;
        CmpKey::from_bytes(&buf)
    }

    /// Load the verification gates for an already-consumed slot.
    pub fn load_gate_keys(&mut self, slot: u64) -> Result<(Vec<CmpKey>, CmpKey)> {
        let buf = self.section(SECTION_GATES, slot)?;
        let klen = cmp::key_len(self.header.params.n);
        let docs = self.header.docs as usize;
        if buf.len() != (docs + 1) * klen {
            return Err(Error::Corrupt("gate section length mismatch".into()));
        }
        let mut keys = Vec::with_capacity(docs);
        for j in 0..docs {
            keys.push(CmpKey::from_bytes(&buf[j * klen..(j + 1) * klen])?);
        }
        let count_key = CmpKey::from_bytes(&buf[docs * klen..])?;
        Ok((keys, count_key))
    }

    /// Test/self-check helper: rewind the consumption cursor.
    pub fn reset_cursor(&mut self) -> Result<()> {
        let _ = fs::remove_file(&self.cursor_path);
        self.consumed = 0;
        Ok(())
    }
}
