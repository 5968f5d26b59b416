//! 2-of-2 additive secret sharing over `F_p`.
//!
//! A value `x` is split as `[x]_0 + [x]_1 = x (mod p)` with `[x]_0` uniform.
//! Addition, subtraction, scaling by public constants and adding a public
//! constant are all local; by convention public constants are absorbed by
//! party 1 so that reconstruction picks them up exactly once.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{Fe, FieldParams};

/// One party's additive share of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub party: u8,
    pub value: Fe,
}

/// One party's additive share of a vector, stored flat for streaming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareVec {
    pub party: u8,
    pub values: Vec<Fe>,
}

/// Split `x` into two shares; the first is uniform in `F_p`.
pub fn share<R: Rng>(params: &FieldParams, x: Fe, rng: &mut R) -> (Share, Share) {
    let r = rng.gen_range(0..params.p);
    (Share { party: 0, value: r }, Share { party: 1, value: params.sub(x, r) })
}

pub fn reconstruct(params: &FieldParams, s0: &Share, s1: &Share) -> Result<Fe> {
    if s0.party != 0 || s1.party != 1 {
        return Err(Error::Usage("reconstruct needs shares from parties 0 and 1".into()));
    }
    Ok(params.add(s0.value, s1.value))
}

pub fn share_vec<R: Rng>(params: &FieldParams, xs: &[Fe], rng: &mut R) -> (ShareVec, ShareVec) {
    let mut v0 = Vec::with_capacity(xs.len());
    let mut v1 = Vec::with_capacity(xs.len());
    for &x in xs {
        let r = rng.gen_range(0..params.p);
        v0.push(r);
        v1.push(params.sub(x, r));
    }
    (ShareVec { party: 0, values: v0 }, ShareVec { party: 1, values: v1 })
}

pub fn reconstruct_vec(params: &FieldParams, s0: &ShareVec, s1: &ShareVec) -> Result<Vec<Fe>> {
    if s0.party != 0 || s1.party != 1 {
        return Err(Error::Usage("reconstruct needs shares from parties 0 and 1".into()));
    }
    if s0.values.len() != s1.values.len() {
        return Err(Error::Usage("share vectors differ in length".into()));
    }
    Ok(s0.values.iter().zip(&s1.values).map(|(&a, &b)| params.add(a, b)).collect())
}

impl Share {
    pub fn add_local(&self, params: &FieldParams, other: &Share) -> Result<Share> {
        self.check(other)?;
        Ok(Share { party: self.party, value: params.add(self.value, other.value) })
    }

    pub fn sub_local(&self, params: &FieldParams, other: &Share) -> Result<Share> {
        self.check(other)?;
        Ok(Share { party: self.party, value: params.sub(self.value, other.value) })
    }

    pub fn scale_by_public(&self, params: &FieldParams, c: Fe) -> Share {
        Share { party: self.party, value: params.mul(self.value, c) }
    }

    /// Add a public constant to the shared value. Only party 1 applies it,
    /// so the reconstruction changes by exactly `c`.
    pub fn add_public_const(&self, params: &FieldParams, c: Fe) -> Share {
        if self.party == 1 {
            Share { party: 1, value: params.add(self.value, c) }
        } else {
            *self
        }
    }

    fn check(&self, other: &Share) -> Result<()> {
        if self.party != other.party {
            return Err(Error::PartyMismatch { expected: self.party, got: other.party });
        }
        Ok(())
    }
}

impl ShareVec {
    /// Wire layout: party byte, length as little-endian u64, packed
    /// little-endian u64 elements.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 8 * self.values.len());
        out.push(self.party);
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(Error::Decode("share vector header truncated".into()));
        }
        let party = bytes[0];
        if party > 1 {
            return Err(Error::Decode(format!("bad party byte {party}")));
        }
        let len = u64::from_le_bytes(bytes[1..9].try_into().unwrap()) as usize;
        if bytes.len() != 9 + 8 * len {
            return Err(Error::Decode("share vector length mismatch".into()));
        }
        let values = bytes[9..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ShareVec { party, values })
    }
}
