//! Distributed comparison function: two keys that share `f^<_{a,b}`.
//!
//! `gen` splits the comparison function into a pair of keys; evaluating
//! both keys on any point `x` of the `n`-bit domain yields additive shares
//! over `F_p` of `b` when `x < a` and of `0` otherwise. The construction is
//! the usual binary tree walk: each key holds a root seed and one
//! correction word per input bit (seed correction, two control bits, and a
//! value correction in the payload group), plus a final value correction.
//! Evaluation performs a fixed `n`-step descent regardless of the input, so
//! control flow does not depend on where `x` sits relative to `a`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Fe, FieldParams};
use crate::prg::{MmoPrg, Seed, LAMBDA, SEED_BYTES};

/// Correction word for one tree level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelCw {
    pub seed: Seed,
    pub value: Fe,
    pub t_l: bool,
    pub t_r: bool,
}

/// One party's share of a comparison function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DcfKey {
    pub party: u8,
    pub domain_bits: u32,
    pub lambda: u16,
    pub root_seed: Seed,
    pub levels: Vec<LevelCw>,
    pub final_cw: Fe,
}

/// Serialized key size in bytes for an `n`-bit domain.
pub const fn key_len(domain_bits: u32) -> usize {
    4 + SEED_BYTES + domain_bits as usize * (SEED_BYTES + 8 + 1) + 8
}

#[inline]
fn convert(params: &FieldParams, raw: u64) -> Fe {
    params.reduce(raw)
}

#[inline]
fn convert_seed(params: &FieldParams, seed: &Seed) -> Fe {
    params.reduce(u64::from_le_bytes(seed[..8].try_into().unwrap()))
}

#[inline]
fn xor_seed(a: &Seed, b: &Seed) -> Seed {
    let mut out = *a;
    for (o, x) in out.iter_mut().zip(b.iter()) {
        *o ^= x;
    }
    out
}

/// Generate a key pair for `f^<_{a,b}` on the `n`-bit domain of `params`.
pub fn gen<R: Rng>(params: &FieldParams, a: u64, b: Fe, rng: &mut R) -> Result<(DcfKey, DcfKey)> {
    let n = params.n;
    if n == 0 || n > 64 {
        return Err(Error::Params(format!("unsupported domain width {n}")));
    }
    if n < 64 && a >= 1u64 << n {
        return Err(Error::Params(format!("comparison point {a} outside 2^{n} domain")));
    }
    if b >= params.p {
        return Err(Error::Params("payload must be a field element".into()));
    }
    let prg = MmoPrg::global();
    let mut seed0: Seed = rng.gen();
    let mut seed1: Seed = rng.gen();
    let root0 = seed0;
    let root1 = seed1;
    let mut t0 = false;
    let mut t1 = true;
    let mut v_alpha: Fe = 0;
    let mut levels = Vec::with_capacity(n as usize);

    for i in 1..=n {
        let bit = (a >> (n - i)) & 1 == 1;
        let e0 = prg.expand(&seed0);
        let e1 = prg.expand(&seed1);
        // bit = 0 keeps the left child, so the right branch is "lost" (and
        // vice versa); the lost branch absorbs the corrections.
        let (lose0_s, lose0_v, keep0_s, keep0_v, keep0_t) = if bit {
            (e0.seed_l, e0.v_l, e0.seed_r, e0.v_r, e0.t_r)
        } else {
            (e0.seed_r, e0.v_r, e0.seed_l, e0.v_l, e0.t_l)
        };
        let (lose1_s, lose1_v, keep1_s, keep1_v, keep1_t) = if bit {
            (e1.seed_l, e1.v_l, e1.seed_r, e1.v_r, e1.t_r)
        } else {
            (e1.seed_r, e1.v_r, e1.seed_l, e1.v_l, e1.t_l)
        };

        let seed_cw = xor_seed(&lose0_s, &lose1_s);
        let mut value_cw = params.sub(
            params.sub(convert(params, lose1_v), convert(params, lose0_v)),
            v_alpha,
        );
        if bit {
            // the lost branch is the left one: x-values below `a` that
            // diverge here must still pick up the payload
            value_cw = params.add(value_cw, b);
        }
        if t1 {
            value_cw = params.neg(value_cw);
        }
        let signed_cw = if t1 { params.neg(value_cw) } else { value_cw };
        v_alpha = params.sub(v_alpha, convert(params, keep1_v));
        v_alpha = params.add(v_alpha, convert(params, keep0_v));
        v_alpha = params.add(v_alpha, signed_cw);

        let t_cw_l = e0.t_l ^ e1.t_l ^ bit ^ true;
        let t_cw_r = e0.t_r ^ e1.t_r ^ bit;
        levels.push(LevelCw { seed: seed_cw, value: value_cw, t_l: t_cw_l, t_r: t_cw_r });

        let t_cw_keep = if bit { t_cw_r } else { t_cw_l };
        seed0 = if t0 { xor_seed(&keep0_s, &seed_cw) } else { keep0_s };
        seed1 = if t1 { xor_seed(&keep1_s, &seed_cw) } else { keep1_s };
        let new_t0 = keep0_t ^ (t0 & t_cw_keep);
        let new_t1 = keep1_t ^ (t1 & t_cw_keep);
        t0 = new_t0;
        t1 = new_t1;
    }

    let mut final_cw = params.sub(
        params.sub(convert_seed(params, &seed1), convert_seed(params, &seed0)),
        v_alpha,
    );
    if t1 {
        final_cw = params.neg(final_cw);
    }

    let k0 = DcfKey {
        party: 0,
        domain_bits: n,
        lambda: LAMBDA,
        root_seed: root0,
        levels: levels.clone(),
        final_cw,
    };
    let k1 = DcfKey { party: 1, domain_bits: n, lambda: LAMBDA, root_seed: root1, levels, final_cw };
    Ok((k0, k1))
}

/// Evaluate one key share at `x`; the two parties' outputs add to
/// `b * 1{x < a}` over `F_p`.
pub fn eval(params: &FieldParams, key: &DcfKey, x: u64) -> Fe {
    let n = key.domain_bits;
    let prg = MmoPrg::global();
    let mut seed = key.root_seed;
    let mut t = key.party == 1;
    let mut acc: Fe = 0;
    let negate = key.party == 1;

    for i in 1..=n {
        let cw = &key.levels[(i - 1) as usize];
        let e = prg.expand(&seed);
        let bit = (x >> (n - i)) & 1 == 1;
        let (child_s, child_t, child_v, t_cw) = if bit {
            (e.seed_r, e.t_r, e.v_r, cw.t_r)
        } else {
            (e.seed_l, e.t_l, e.v_l, cw.t_l)
        };
        let mut step = convert(params, child_v);
        if t {
            step = params.add(step, cw.value);
        }
        acc = if negate { params.sub(acc, step) } else { params.add(acc, step) };
        seed = if t { xor_seed(&child_s, &cw.seed) } else { child_s };
        t = child_t ^ (t & t_cw);
    }

    let mut last = convert_seed(params, &seed);
    if t {
        last = params.add(last, key.final_cw);
    }
    if negate {
        params.sub(acc, last)
    } else {
        params.add(acc, last)
    }
}

/// Evaluate one key on many points in parallel.
pub fn eval_batch(params: &FieldParams, key: &DcfKey, xs: &[u64]) -> Vec<Fe> {
    xs.par_iter().map(|&x| eval(params, key, x)).collect()
}

impl DcfKey {
    /// Fixed layout: header (party, n, lambda), root seed, `n` correction
    /// words (seed, value, control byte), final correction. All integers
    /// little-endian. This layout is part of the wire contract.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(key_len(self.domain_bits));
        out.push(self.party);
        out.push(self.domain_bits as u8);
        out.extend_from_slice(&self.lambda.to_le_bytes());
        out.extend_from_slice(&self.root_seed);
        for cw in &self.levels {
            out.extend_from_slice(&cw.seed);
            out.extend_from_slice(&cw.value.to_le_bytes());
            out.push(cw.t_l as u8 | (cw.t_r as u8) << 1);
        }
        out.extend_from_slice(&self.final_cw.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + SEED_BYTES + 8 {
            return Err(Error::Decode("dcf key truncated".into()));
        }
        let party = bytes[0];
        let domain_bits = bytes[1] as u32;
        let lambda = u16::from_le_bytes(bytes[2..4].try_into().unwrap());
        if party > 1 || domain_bits == 0 || domain_bits > 64 {
            return Err(Error::Decode("dcf key header invalid".into()));
        }
        if lambda != LAMBDA {
            return Err(Error::Decode(format!("unsupported lambda {lambda}")));
        }
        if bytes.len() != key_len(domain_bits) {
            return Err(Error::Decode(format!(
                "dcf key length {} != expected {}",
                bytes.len(),
                key_len(domain_bits)
            )));
        }
        let mut off = 4;
        let root_seed: Seed = bytes[off..off + SEED_BYTES].try_into().unwrap();
        off += SEED_BYTES;
        let mut levels = Vec::with_capacity(domain_bits as usize);
        for _ in 0..domain_bits {
            let seed: Seed = bytes[off..off + SEED_BYTES].try_into().unwrap();
            off += SEED_BYTES;
            let value = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
            let ctrl = bytes[off];
            off += 1;
            if ctrl > 3 {
                return Err(Error::Decode("dcf control byte invalid".into()));
            }
            levels.push(LevelCw { seed, value, t_l: ctrl & 1 == 1, t_r: ctrl & 2 == 2 });
        }
        let final_cw = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        Ok(DcfKey { party, domain_bits, lambda, root_seed, levels, final_cw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn reconstructed(params: &FieldParams, k0: &DcfKey, k1: &DcfKey, x: u64) -> Fe {
        params.add(eval(params, k0, x), eval(params, k1, x))
    }

    #[test]
    fn empty_predicate() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(1);
        let (k0, k1) = gen(&params, 0, 42, &mut rng).unwrap();
        for x in [0u64, 1, 5, u64::MAX] {
            assert_eq!(reconstructed(&params, &k0, &k1, x), 0);
        }
    }

    #[test]
    fn boundary_at_ten() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(2);
        let (k0, k1) = gen(&params, 10, 1, &mut rng).unwrap();
        assert_eq!(reconstructed(&params, &k0, &k1, 9), 1);
        assert_eq!(reconstructed(&params, &k0, &k1, 10), 0);
        assert_eq!(reconstructed(&params, &k0, &k1, 11), 0);
    }

    #[test]
    fn deterministic_eval() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(3);
        let (k0, _) = gen(&params, 1 << 40, 7, &mut rng).unwrap();
        assert_eq!(eval(&params, &k0, 12345), eval(&params, &k0, 12345));
    }

    #[test]
    fn exhaustive_small_domains() {
        // Full (a, x) sweep for n <= 6 with a couple of payloads each.
        for n in 1..=6u32 {
            let params = FieldParams { p: crate::field::DEFAULT_P, f: 32, n };
            let mut rng = StdRng::seed_from_u64(100 + n as u64);
            for a in 0..(1u64 << n) {
                let b = rng.gen_range(1..params.p);
                let (k0, k1) = gen(&params, a, b, &mut rng).unwrap();
                for x in 0..(1u64 << n) {
                    let want = if x < a { b } else { 0 };
                    assert_eq!(
                        reconstructed(&params, &k0, &k1, x),
                        want,
                        "n={n} a={a} x={x}"
                    );
                }
            }
        }
    }

    #[test]
    fn randomized_full_width() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..5 {
            let a: u64 = rng.gen();
            let b = rng.gen_range(1..params.p);
            let (k0, k1) = gen(&params, a, b, &mut rng).unwrap();
            let mut points = vec![0u64, u64::MAX, a, a.wrapping_sub(1), a.wrapping_add(1)];
            for _ in 0..500 {
                points.push(rng.gen());
            }
            for x in points {
                let want = if x < a { b } else { 0 };
                assert_eq!(reconstructed(&params, &k0, &k1, x), want, "a={a} x={x}");
            }
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(5);
        let (k0, _) = gen(&params, 1 << 50, 9, &mut rng).unwrap();
        let xs: Vec<u64> = (0..64).map(|_| rng.gen()).collect();
        let batch = eval_batch(&params, &k0, &xs);
        for (i, &x) in xs.iter().enumerate() {
            assert_eq!(batch[i], eval(&params, &k0, x));
        }
    }

    #[test]
    fn serialize_roundtrip() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..20 {
            let a: u64 = rng.gen();
            let b = rng.gen_range(0..params.p);
            let (k0, k1) = gen(&params, a, b, &mut rng).unwrap();
            for k in [&k0, &k1] {
                let bytes = k.to_bytes();
                assert_eq!(bytes.len(), key_len(params.n));
                assert_eq!(&DcfKey::from_bytes(&bytes).unwrap(), k);
            }
        }
    }

    #[test]
    fn key_size_closed_form() {
        // 25 bytes per level plus 28 fixed; 1628 at n=64.
        assert_eq!(key_len(64), 1628);
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(7);
        let (k0, _) = gen(&params, 77, 1, &mut rng).unwrap();
        assert_eq!(k0.to_bytes().len(), 1628);
    }

    #[test]
    fn truncated_bytes_rejected() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(8);
        let (k0, _) = gen(&params, 9, 1, &mut rng).unwrap();
        let bytes = k0.to_bytes();
        assert!(DcfKey::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(DcfKey::from_bytes(&bytes[..2]).is_err());
    }

    #[test]
    fn keys_differ_across_runs() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(9);
        let (a0, _) = gen(&params, 5, 1, &mut rng).unwrap();
        let (b0, _) = gen(&params, 5, 1, &mut rng).unwrap();
        assert_ne!(a0.root_seed, b0.root_seed);
    }
}
