//! Seed expansion for the function-share trees.
//!
//! Matyas-Meyer-Oseas one-way compression with AES-128: each output block
//! is `AES_k(seed) ^ seed` under a fixed public tweak key `k`. The key
//! schedules are computed once per process and shared; expansion itself is
//! pure. One expansion yields two child seeds, two control bits and two
//! 64-bit words of value-correction material.

use std::sync::OnceLock;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;

/// Security parameter in bits; seeds are one AES block.
pub const LAMBDA: u16 = 128;
pub const SEED_BYTES: usize = 16;

pub type Seed = [u8; SEED_BYTES];

/// Distinct public tweak keys, one per output block.
const TWEAKS: [[u8; 16]; 3] = [
    [0x61, 0x09, 0x5b, 0xde, 0x0c, 0x24, 0x6e, 0xe4, 0x53, 0xb5, 0x6e, 0x19, 0x29, 0x2e, 0x0f, 0x47],
    [0xb4, 0x52, 0x86, 0x0c, 0x3e, 0x0d, 0x21, 0x19, 0x5a, 0xdf, 0x1c, 0x21, 0x62, 0x4e, 0xd1, 0x8c],
    [0xc1, 0x33, 0xab, 0x70, 0x92, 0x7c, 0xd2, 0xd9, 0xf7, 0xa5, 0x4b, 0xd4, 0x49, 0x60, 0xa0, 0x9a],
];

/// Output of one seed expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expansion {
    pub seed_l: Seed,
    pub seed_r: Seed,
    pub t_l: bool,
    pub t_r: bool,
    pub v_l: u64,
    pub v_r: u64,
}

pub struct MmoPrg {
    ciphers: [Aes128; 3],
}

impl MmoPrg {
    fn new() -> Self {
        let ciphers = std::array::from_fn(|i| Aes128::new(GenericArray::from_slice(&TWEAKS[i])));
        Self { ciphers }
    }

    /// Process-wide instance with precomputed key schedules.
    pub fn global() -> &'static MmoPrg {
        static PRG: OnceLock<MmoPrg> = OnceLock::new();
        PRG.get_or_init(MmoPrg::new)
    }

    #[inline]
    fn block(&self, idx: usize, seed: &Seed) -> [u8; 16] {
        let mut b = GenericArray::clone_from_slice(seed);
        self.ciphers[idx].encrypt_block(&mut b);
        let mut out = [0u8; 16];
        for (o, (e, s)) in out.iter_mut().zip(b.iter().zip(seed.iter())) {
            *o = e ^ s;
        }
        out
    }

    /// Expand a seed into child seeds, control bits and value material.
    ///
    /// The control bit is the low bit of each child block and is cleared in
    /// the returned seed, so a seed carries 127 pseudorandom bits.
    pub fn expand(&self, seed: &Seed) -> Expansion {
        let mut left = self.block(0, seed);
        let mut right = self.block(1, seed);
        let value = self.block(2, seed);
        let t_l = left[0] & 1 == 1;
        let t_r = right[0] & 1 == 1;
        left[0] &= !1;
        right[0] &= !1;
        Expansion {
            seed_l: left,
            seed_r: right,
            t_l,
            t_r,
            v_l: u64::from_le_bytes(value[..8].try_into().unwrap()),
            v_r: u64::from_le_bytes(value[8..].try_into().unwrap()),
        }
    }
}
