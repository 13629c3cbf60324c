//! Block cipher, XOR, MAC and nonce primitives the protocol is built from.
//!
//! Every value that crosses a protocol boundary is a fixed-width byte newtype.
//! The cipher is AES-256 applied to exactly one block with no chaining: the
//! server indexes vehicles by `E(ID_a, k_a)`, so encryption must be
//! deterministic.

mod prng;

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes256;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::Sha256;

pub use prng::{next_nonce, PrngState};
pub(crate) use prng::splitmix64 as prng_splitmix;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("generator state is all zero")]
    InvalidSeed,
}

macro_rules! byte_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub const fn zero() -> Self {
                Self([0u8; $len])
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| {
                    CryptoError::InvalidInput(format!(
                        "{} needs {} bytes, got {}",
                        stringify!($name),
                        $len,
                        bytes.len()
                    ))
                })?;
                Ok(Self(arr))
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                let bytes = hex::decode(s.trim()).map_err(|e| {
                    CryptoError::InvalidInput(format!("{}: {e}", stringify!($name)))
                })?;
                Self::from_slice(&bytes)
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl From<[u8; $len]> for $name {
            fn from(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                if s.chars().any(|c| c.is_ascii_uppercase()) {
                    return Err(serde::de::Error::custom(format!(
                        "{}: hex must be lowercase",
                        stringify!($name)
                    )));
                }
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

byte_newtype!(
    /// One 128-bit cipher block.
    Block128,
    16
);
byte_newtype!(
    /// AES-256 key. Never placed on the insecure channel.
    Key256,
    32
);
byte_newtype!(
    /// Single-use 128-bit nonce (`N_a` or `N_t`).
    Nonce128,
    16
);
byte_newtype!(
    /// HMAC-SHA-256 tag.
    MacTag,
    32
);

impl Nonce128 {
    /// Reinterpret the nonce as a block so it can be XORed into cipher data.
    pub fn as_block(&self) -> Block128 {
        Block128(self.0)
    }
}

impl MacTag {
    /// Equality that inspects every byte regardless of where the first
    /// mismatch sits.
    pub fn ct_eq(&self, other: &MacTag) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

pub fn encrypt_block(plaintext: &Block128, key: &Key256) -> Block128 {
    let cipher = Aes256::new(GenericArray::from_slice(&key.0));
    let mut block = GenericArray::clone_from_slice(&plaintext.0);
    cipher.encrypt_block(&mut block);
    Block128(block.into())
}

pub fn decrypt_block(ciphertext: &Block128, key: &Key256) -> Block128 {
    let cipher = Aes256::new(GenericArray::from_slice(&key.0));
    let mut block = GenericArray::clone_from_slice(&ciphertext.0);
    cipher.decrypt_block(&mut block);
    Block128(block.into())
}

/// Slice-level entry points for callers holding unvalidated bytes.
pub fn encrypt_bytes(plaintext: &[u8], key: &[u8]) -> Result<Block128, CryptoError> {
    Ok(encrypt_block(
        &Block128::from_slice(plaintext)?,
        &Key256::from_slice(key)?,
    ))
}

pub fn decrypt_bytes(ciphertext: &[u8], key: &[u8]) -> Result<Block128, CryptoError> {
    Ok(decrypt_block(
        &Block128::from_slice(ciphertext)?,
        &Key256::from_slice(key)?,
    ))
}

pub fn xor_blocks(a: &Block128, b: &Block128) -> Block128 {
    let mut out = [0u8; 16];
    for (o, (x, y)) in out.iter_mut().zip(a.0.iter().zip(b.0.iter())) {
        *o = x ^ y;
    }
    Block128(out)
}

/// HMAC-SHA-256 of `data` keyed by `key`.
pub fn compute_mac(key: &Key256, data: &[u8]) -> Result<MacTag, CryptoError> {
    if data.is_empty() {
        return Err(CryptoError::InvalidInput("MAC input is empty".into()));
    }
    let mut mac =
        <Hmac<Sha256> as Mac>::new_from_slice(&key.0).expect("HMAC accepts any key length");
    mac.update(data);
    Ok(MacTag(mac.finalize().into_bytes().into()))
}

/// Accepts iff `tag` is the honest MAC of `data` under `key`. Empty data is
/// never accepted.
pub fn verify_mac(key: &Key256, data: &[u8], tag: &MacTag) -> bool {
    match compute_mac(key, data) {
        Ok(expected) => expected.ct_eq(tag),
        Err(_) => false,
    }
}

/// `a ∥ b` for MAC inputs.
pub(crate) fn concat(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[cfg(test)]
#[path = "../../tests/common/oracle.rs"]
mod oracle;

#[cfg(test)]
mod tests {
    use super::*;

    use super::oracle;

    fn c3_key() -> Key256 {
        let mut k = [0u8; 32];
        for (i, b) in k.iter_mut().enumerate() {
            *b = i as u8;
        }
        Key256(k)
    }

    #[test]
    fn fips197_c3_vector() {
        let pt = Block128::from_hex("00112233445566778899aabbccddeeff").unwrap();
        let ct = encrypt_block(&pt, &c3_key());
        assert_eq!(ct.to_hex(), "8ea2b7ca516745bfeafc49904b496089");
        assert_eq!(decrypt_block(&ct, &c3_key()), pt);
        assert_eq!(oracle::aes256_encrypt(&c3_key().0, &pt.0), ct.0);
    }

    #[test]
    fn malformed_lengths_are_invalid_input() {
        assert!(matches!(
            encrypt_bytes(&[0u8; 15], &[0u8; 32]),
            Err(CryptoError::InvalidInput(_))
        ));
        assert!(matches!(
            decrypt_bytes(&[0u8; 16], &[0u8; 31]),
            Err(CryptoError::InvalidInput(_))
        ));
        assert!(Block128::from_hex("00").is_err());
        assert!(Key256::from_hex("zz").is_err());
    }

    #[test]
    fn xor_definition() {
        let a = Block128([0xf0; 16]);
        let b = Block128([0x0f; 16]);
        assert_eq!(xor_blocks(&a, &b), Block128([0xff; 16]));
        assert_eq!(xor_blocks(&a, &a), Block128::zero());
        assert_eq!(xor_blocks(&a, &Block128::zero()), a);
    }

    #[test]
    fn rfc4231_case1() {
        let mut key = [0u8; 32];
        key[..20].fill(0x0b);
        let tag = compute_mac(&Key256(key), b"Hi There").unwrap();
        assert_eq!(
            tag.to_hex(),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        );
    }

    #[test]
    fn empty_mac_input_rejected() {
        assert!(matches!(
            compute_mac(&Key256::zero(), b""),
            Err(CryptoError::InvalidInput(_))
        ));
        assert!(!verify_mac(&Key256::zero(), b"", &MacTag::zero()));
    }

    #[test]
    fn single_bit_flips_change_the_tag() {
        let key = Key256([0x42; 32]);
        let data: Vec<u8> = (0..48u8).collect();
        let honest = compute_mac(&key, &data).unwrap();
        assert_eq!(honest.0, oracle::hmac_sha256(&key.0, &data));
        for bit in 0..data.len() * 8 {
            let mut d = data.clone();
            d[bit / 8] ^= 1 << (bit % 8);
            let tag = compute_mac(&key, &d).unwrap();
            assert_ne!(tag, honest, "bit {bit}");
            assert_eq!(tag.0, oracle::hmac_sha256(&key.0, &d));
        }
    }

    #[test]
    fn verify_rejects_flipped_tag_bits() {
        let key = Key256([7; 32]);
        let tag = compute_mac(&key, b"payload").unwrap();
        assert!(verify_mac(&key, b"payload", &tag));
        for bit in 0..256 {
            let mut t = tag;
            t.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify_mac(&key, b"payload", &t));
        }
    }

    #[test]
    fn serde_uses_lowercase_hex() {
        let b = Block128([0xab; 16]);
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, format!("\"{}\"", "ab".repeat(16)));
        assert_eq!(serde_json::from_str::<Block128>(&s).unwrap(), b);
        assert!(serde_json::from_str::<Block128>(&s.to_uppercase()).is_err());
    }
}
