//! Masked interval-containment gate.
//!
//! `gen` takes a public interval `[x_l, x_r)` with `0 <= x_l <= x_r <= p`
//! and produces one key per party. To evaluate on a shared input `[x]`,
//! each party publishes `[x]_i + [r]_i`; the reconstructed masked value
//! `x^ = x + r mod p` is then fed to both parties' `finish`, whose outputs
//! add up to `1` when `x` lies in the interval and `0` otherwise.
//!
//! The gate combines a lower comparison key at point `x_l + r` with payload
//! `p - 1`, an upper key at `x_r + r` with payload `1`, and a shared wrap
//! correction `w`. `w` counts two events the comparison keys cannot see:
//! the mask wrapping one endpoint past the modulus (`x_l + r > x_r + r`
//! after reduction) and the degenerate full interval `x_r - x_l = p`, whose
//! endpoints coincide after reduction. Both are known at generation time.
//!
//! A key participates in at most one masked opening: reusing one mask `r`
//! across openings would publish differences of secret inputs.

use rand::Rng;

use crate::dcf::{self, DcfKey};
use crate::error::{Error, Result};
use crate::field::{Fe, FieldParams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmpKey {
    pub party: u8,
    pub mask_share: Fe,
    pub lower: DcfKey,
    pub upper: DcfKey,
    pub wrap_share: Fe,
    used: bool,
}

/// Serialized key size in bytes for an `n`-bit domain.
pub const fn key_len(domain_bits: u32) -> usize {
    1 + 8 + 2 * dcf::key_len(domain_bits) + 8
}

/// Generate the two gate keys for `[x_l, x_r)`. `x_r = p` encodes the ray
/// `[x_l, p)`.
pub fn gen<R: Rng>(params: &FieldParams, x_l: u64, x_r: u64, rng: &mut R) -> Result<(CmpKey, CmpKey)> {
    if x_l > x_r {
        return Err(Error::Usage(format!("empty-reversed interval: x_l={x_l} > x_r={x_r}")));
    }
    if x_r > params.p || x_l >= params.p {
        return Err(Error::Usage("interval endpoints must lie in [0, p]".into()));
    }
    let r = rng.gen_range(0..params.p);
    let masked_l = params.add(x_l, r);
    let masked_r = params.add(x_r % params.p, r);
    let (l0, l1) = dcf::gen(params, masked_l, params.p - 1, rng)?;
    let (u0, u1) = dcf::gen(params, masked_r, 1, rng)?;
    let wrap = (masked_l > masked_r) as u64 + (x_r - x_l == params.p) as u64;
    let r0 = rng.gen_range(0..params.p);
    let r1 = params.sub(r, r0);
    let w0 = rng.gen_range(0..params.p);
    let w1 = params.sub(wrap, w0);
    Ok((
        CmpKey { party: 0, mask_share: r0, lower: l0, upper: u0, wrap_share: w0, used: false },
        CmpKey { party: 1, mask_share: r1, lower: l1, upper: u1, wrap_share: w1, used: false },
    ))
}

impl CmpKey {
    /// This party's contribution to the masked opening of one shared value.
    /// Consumes the key's single use.
    pub fn mask_contrib(&mut self, params: &FieldParams, share_value: Fe) -> Result<Fe> {
        self.take_use()?;
        Ok(params.add(share_value, self.mask_share))
    }

    /// Batched masked opening: one contribution per element, all under this
    /// key's single mask. Counts as the key's one use.
    pub fn mask_contrib_batch(&mut self, params: &FieldParams, share_values: &[Fe]) -> Result<Vec<Fe>> {
        self.take_use()?;
        Ok(share_values.iter().map(|&v| params.add(v, self.mask_share)).collect())
    }

    fn take_use(&mut self) -> Result<()> {
        if self.used {
            return Err(Error::KeyReused);
        }
        self.used = true;
        Ok(())
    }

    /// Finish the gate on a published masked value; pure.
    pub fn finish(&self, params: &FieldParams, masked: Fe) -> Fe {
        let y = params.add(
            dcf::eval(params, &self.lower, masked),
            dcf::eval(params, &self.upper, masked),
        );
        params.add(y, self.wrap_share)
    }

    /// Layout: party byte, mask share, serialized lower key, serialized
    /// upper key, wrap share. Little-endian integers.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(key_len(self.lower.domain_bits));
        out.push(self.party);
        out.extend_from_slice(&self.mask_share.to_le_bytes());
        out.extend_from_slice(&self.lower.to_bytes());
        out.extend_from_slice(&self.upper.to_bytes());
        out.extend_from_slice(&self.wrap_share.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 19 {
            return Err(Error::Decode("cmp key truncated".into()));
        }
        let party = bytes[0];
        if party > 1 {
            return Err(Error::Decode(format!("bad party byte {party}")));
        }
        let mask_share = u64::from_le_bytes(bytes[1..9].try_into().unwrap());
        let domain_bits = bytes[10] as u32;
        if bytes.len() != key_len(domain_bits) {
            return Err(Error::Decode(format!(
                "cmp key length {} != expected {}",
                bytes.len(),
                key_len(domain_bits)
            )));
        }
        let dlen = dcf::key_len(domain_bits);
        let lower = DcfKey::from_bytes(&bytes[9..9 + dlen])?;
        let upper = DcfKey::from_bytes(&bytes[9 + dlen..9 + 2 * dlen])?;
        if lower.party != party || upper.party != party {
            return Err(Error::Decode("inner key party mismatch".into()));
        }
        let wrap_share = u64::from_le_bytes(bytes[9 + 2 * dlen..].try_into().unwrap());
        Ok(CmpKey { party, mask_share, lower, upper, wrap_share, used: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn run_gate(params: &FieldParams, x_l: u64, x_r: u64, x: Fe, rng: &mut StdRng) -> Fe {
        let (mut k0, mut k1) = gen(params, x_l, x_r, rng).unwrap();
        let (s0, s1) = crate::shares::share(params, x, rng);
        let c0 = k0.mask_contrib(params, s0.value).unwrap();
        let c1 = k1.mask_contrib(params, s1.value).unwrap();
        let masked = params.add(c0, c1);
        params.add(k0.finish(params, masked), k1.finish(params, masked))
    }

    #[test]
    fn binary_gate() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(1);
        assert_eq!(run_gate(&params, 0, 2, 0, &mut rng), 1);
        assert_eq!(run_gate(&params, 0, 2, 1, &mut rng), 1);
        assert_eq!(run_gate(&params, 0, 2, 2, &mut rng), 0);
    }

    #[test]
    fn full_ray() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(2);
        for x in [0u64, 1, params.p / 2, params.p - 1] {
            assert_eq!(run_gate(&params, 0, params.p, x, &mut rng), 1);
        }
    }

    #[test]
    fn degenerate_empty_interval() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(3);
        for x in [0u64, 7, params.p - 1] {
            assert_eq!(run_gate(&params, 7, 7, x, &mut rng), 0);
        }
    }

    #[test]
    fn reversed_interval_rejected() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(4);
        assert!(gen(&params, 5, 4, &mut rng).is_err());
        assert!(gen(&params, 5, params.p + 1, &mut rng).is_err());
    }

    #[test]
    fn single_use_enforced() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(5);
        let (mut k0, _) = gen(&params, 0, 2, &mut rng).unwrap();
        k0.mask_contrib(&params, 1).unwrap();
        assert!(matches!(k0.mask_contrib(&params, 1), Err(Error::KeyReused)));
        let (mut k0, _) = gen(&params, 0, 2, &mut rng).unwrap();
        k0.mask_contrib_batch(&params, &[1, 2, 3]).unwrap();
        assert!(k0.mask_contrib_batch(&params, &[4]).is_err());
    }

    #[test]
    fn masked_value_uniformity() {
        // x^ over fresh keys for a fixed input: chi-square on the low 4 bits.
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(6);
        let mut bins = [0u32; 16];
        let rounds = 1 << 12;
        for _ in 0..rounds {
            let (mut k0, mut k1) = gen(&params, 0, 2, &mut rng).unwrap();
            let (s0, s1) = crate::shares::share(&params, 1, &mut rng);
            let masked = params.add(
                k0.mask_contrib(&params, s0.value).unwrap(),
                k1.mask_contrib(&params, s1.value).unwrap(),
            );
            bins[(masked & 0xF) as usize] += 1;
        }
        let expect = rounds as f64 / 16.0;
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 60.0, "chi-square too large: {chi2}");
    }

    #[test]
    fn small_field_sweep() {
        // Random slice of the exhaustive p=251 oracle; the full sweep runs in
        // the acceptance suite.
        let params = FieldParams::small(251).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..400 {
            let x_l = rng.gen_range(0..params.p);
            let x_r = rng.gen_range(x_l..=params.p);
            let x = rng.gen_range(0..params.p);
            let want = (x >= x_l && x < x_r) as u64;
            assert_eq!(
                run_gate(&params, x_l, x_r, x, &mut rng),
                want,
                "x_l={x_l} x_r={x_r} x={x}"
            );
        }
    }

    #[test]
    fn wrap_instances() {
        // Force masks that wrap one endpoint: x_l + r >= p > x_r + r.
        let params = FieldParams::small(251).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        for (x_l, x_r) in [(200u64, 240u64), (100, 251), (250, 251)] {
            for x in 0..params.p {
                let want = (x >= x_l && x < x_r) as u64;
                assert_eq!(run_gate(&params, x_l, x_r, x, &mut rng), want);
            }
        }
    }

    #[test]
    fn serialize_roundtrip() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(9);
        let (k0, k1) = gen(&params, 17, params.p, &mut rng).unwrap();
        for k in [&k0, &k1] {
            let bytes = k.to_bytes();
            assert_eq!(bytes.len(), key_len(64));
            assert_eq!(&CmpKey::from_bytes(&bytes).unwrap(), k);
        }
        let bytes = k0.to_bytes();
        assert!(CmpKey::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
