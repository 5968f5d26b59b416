//! Prime-field arithmetic and fixed-point encoding.
//!
//! All protocol values live in `F_p` for an odd prime `p` that fits in 64
//! bits. A field element `x` in `[0, p)` doubles as a signed value through
//! its centered representative in `[-(p-1)/2, (p-1)/2]`. Reals are carried
//! as fixed-point integers: plain values at scale `2^f`, embedding
//! coordinates at scale `2^(f-1)` so that a full dot product of two unit
//! vectors stays strictly inside the centered range and never wraps.

use crate::error::{Error, Result};

/// Largest prime below 2^64.
pub const DEFAULT_P: u64 = 0xFFFF_FFFF_FFFF_FFC5; // 2^64 - 59

/// Default fixed-point precision, matching f32 mantissa granularity.
pub const DEFAULT_F: u32 = 32;

/// A field element is a `u64` kept in `[0, p)` by the operations below.
pub type Fe = u64;

/// Runtime field configuration: modulus, fixed-point precision and the
/// bit width of the comparison domain (`2^n >= p`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldParams {
    pub p: u64,
    pub f: u32,
    pub n: u32,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { p: DEFAULT_P, f: DEFAULT_F, n: 64 }
    }
}

impl FieldParams {
    pub fn new(p: u64, f: u32, n: u32) -> Result<Self> {
        if !is_prime_u64(p) {
            return Err(Error::Params(format!("{p} is not prime")));
        }
        if f >= 63 || (f + 1 < 64 && p <= 1u64 << (f + 1)) {
            return Err(Error::Params(format!("p must exceed 2^(f+1), got p={p}, f={f}")));
        }
        if n > 64 || (n < 64 && p > 1u64 << n) {
            return Err(Error::Params(format!("need 2^n >= p, got n={n}, p={p}")));
        }
        Ok(Self { p, f, n })
    }

    /// Small field for exhaustive testing; `n` is the tightest width with
    /// `2^n >= p` and `f` shrinks so `p > 2^(f+1)` still holds.
    pub fn small(p: u64) -> Result<Self> {
        let n = 64 - (p - 1).leading_zeros();
        let f = n.saturating_sub(2).max(1);
        Self::new(p, f, n)
    }

    /// `floor(p / 2)`, the centered-representative bound.
    #[inline]
    pub fn half(&self) -> u64 {
        self.p >> 1
    }

    #[inline]
    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let s = a as u128 + b as u128;
        if s >= self.p as u128 { (s - self.p as u128) as u64 } else { s as u64 }
    }

    #[inline]
    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        if a >= b { a - b } else { a + (self.p - b) }
    }

    #[inline]
    pub fn neg(&self, a: Fe) -> Fe {
        if a == 0 { 0 } else { self.p - a }
    }

    #[inline]
    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    /// Reduce an arbitrary `u64` into the field.
    #[inline]
    pub fn reduce(&self, a: u64) -> Fe {
        a % self.p
    }

    /// Centered representative in `[-(p-1)/2, (p-1)/2]`.
    #[inline]
    pub fn center(&self, x: Fe) -> i128 {
        if x <= self.half() { x as i128 } else { x as i128 - self.p as i128 }
    }

    /// Embed a signed integer (any magnitude) into `[0, p)`.
    #[inline]
    pub fn embed(&self, v: i128) -> Fe {
        v.rem_euclid(self.p as i128) as u64
    }

    /// Fixed-point encode at scale `2^f`, truncating toward zero.
    pub fn encode_fixed(&self, v: f64) -> Result<Fe> {
        if !v.is_finite() {
            return Err(Error::Range(v));
        }
        let scaled = v.abs() * (self.f as f64).exp2();
        if scaled >= self.half() as f64 {
            return Err(Error::Range(v));
        }
        let mag = scaled.floor() as u64;
        Ok(if v < 0.0 { self.neg(mag) } else { mag })
    }

    /// Inverse of [`encode_fixed`](Self::encode_fixed) up to `2^-f`.
    pub fn decode_fixed(&self, x: Fe) -> f64 {
        self.center(x) as f64 / (self.f as f64).exp2()
    }

    /// Divide the centered representative by `2^f`, rounding toward
    /// negative infinity, and re-embed.
    pub fn trunc_signed(&self, x: Fe) -> Fe {
        self.embed(self.center(x) >> self.f)
    }

    /// Map to the order-preserving unsigned representation: the centered
    /// values `-floor(p/2) ..= floor(p/2)` become `0 ..= p-1`.
    #[inline]
    pub fn to_offset(&self, x: Fe) -> u64 {
        self.add(x, self.half())
    }

    /// Inverse of [`to_offset`](Self::to_offset).
    #[inline]
    pub fn from_offset(&self, y: u64) -> Fe {
        self.sub(y, self.half())
    }

    /// Scale for embedding coordinates: `2^(f-1)`. Halving the scale keeps
    /// any dot product of two unit-norm vectors within `[-2^(2f-2), 2^(2f-2)]`,
    /// strictly inside the centered range, so distances are exact.
    #[inline]
    pub fn coord_scale(&self) -> u64 {
        1u64 << (self.f - 1)
    }

    /// Scale carried by distances: `2^(2(f-1))`.
    #[inline]
    pub fn dist_scale(&self) -> f64 {
        (2.0 * (self.f as f64 - 1.0)).exp2()
    }

    /// Encode an embedding coordinate at scale `2^(f-1)`, rounding to nearest.
    pub fn encode_coord(&self, v: f64) -> Result<Fe> {
        if !v.is_finite() || v.abs() > 2.0 {
            return Err(Error::Range(v));
        }
        let scaled = (v * self.coord_scale() as f64).round() as i128;
        Ok(self.embed(scaled))
    }

    /// Decode an embedding coordinate.
    pub fn decode_coord(&self, x: Fe) -> f64 {
        self.center(x) as f64 / self.coord_scale() as f64
    }

    /// Decode a distance (sum of coordinate products).
    pub fn decode_dist(&self, x: Fe) -> f64 {
        self.center(x) as f64 / self.dist_scale()
    }
}

/// Deterministic Miller-Rabin, exact for all `u64`.
pub fn is_prime_u64(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if p == q {
            return true;
        }
        if p % q == 0 {
            return false;
        }
    }
    let mut d = p - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, p);
        if x == 1 || x == p - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = ((x as u128 * x as u128) % p as u128) as u64;
            if x == p - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pow_mod(base: u64, mut exp: u64, modulus: u64) -> u64 {
    let m = modulus as u128;
    let mut acc: u128 = 1;
    let mut b = base as u128 % m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}
