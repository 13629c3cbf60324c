use serde::{Deserialize, Serialize};

use super::{CryptoError, Nonce128};

/// State of a xorshift128+ generator (shift triple 23/17/26).
///
/// Seeded from a single `u64` through splitmix64 so that any seed, including
/// zero, yields a usable nonzero state. The state is a plain value: callers
/// pass it in, get the advanced state back, and persist it between sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrngState {
    s0: u64,
    s1: u64,
}

pub fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PrngState {
    pub fn from_seed(seed: u64) -> Self {
        let mut x = seed;
        let mut s0 = splitmix64(&mut x);
        let s1 = splitmix64(&mut x);
        if s0 == 0 && s1 == 0 {
            s0 = 1;
        }
        Self { s0, s1 }
    }

    /// Raw state words. An all-zero state is the generator's fixed point.
    pub fn from_words(s0: u64, s1: u64) -> Result<Self, CryptoError> {
        if s0 == 0 && s1 == 0 {
            return Err(CryptoError::InvalidSeed);
        }
        Ok(Self { s0, s1 })
    }

    pub fn words(&self) -> (u64, u64) {
        (self.s0, self.s1)
    }

    pub fn next_u64(&mut self) -> Result<u64, CryptoError> {
        if self.s0 == 0 && self.s1 == 0 {
            return Err(CryptoError::InvalidSeed);
        }
        let mut x = self.s0;
        let y = self.s1;
        self.s0 = y;
        x ^= x << 23;
        self.s1 = x ^ y ^ (x >> 17) ^ (y >> 26);
        Ok(self.s1.wrapping_add(y))
    }

    /// Fill `out` with successive big-endian 64-bit draws.
    pub fn fill_bytes(&mut self, out: &mut [u8]) -> Result<(), CryptoError> {
        for chunk in out.chunks_mut(8) {
            let word = self.next_u64()?.to_be_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
        Ok(())
    }
}

/// Two successive draws concatenated into a 128-bit nonce.
pub fn next_nonce(state: PrngState) -> Result<(Nonce128, PrngState), CryptoError> {
    let mut st = state;
    let mut bytes = [0u8; 16];
    bytes[..8].copy_from_slice(&st.next_u64()?.to_be_bytes());
    bytes[8..].copy_from_slice(&st.next_u64()?.to_be_bytes());
    Ok((Nonce128(bytes), st))
}
