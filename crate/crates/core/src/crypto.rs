//! Subscriber-side and network-side cryptographic primitives.
//!
//! Every keyed function here is a truncation of AES-128 with a one-octet
//! domain-separation tag, so the whole suite is bit-exact and can be checked
//! against any independent AES implementation:
//!
//! | function            | key  | input block                          | output      |
//! |---------------------|------|--------------------------------------|-------------|
//! | `f1_mac`            | Ka   | `AMF‖SQN ‖ 00×7 ‖ 01`                | first 8     |
//! | `f5_mask`           | Ka   | `MAC ‖ 00×7 ‖ 05`                    | first 8     |
//! | `a3_sres`           | Ki   | `RAND ⊕ 33×16`                       | first 8     |
//! | `a8_kc`             | Ki   | `RAND ⊕ 88×16`                       | first 8     |
//! | subscriber Ki / Ka  | M    | `IMSI digits (ASCII) ‖ 4B` / `‖ 4A`  | all 16      |
//!
//! The A5 family is modelled, not implemented: A5/1 and A5/3 are AES in
//! counter mode under `Kc‖Kc`, and A5/2 leaks Kc to anyone holding one
//! known-plaintext frame.

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::network::Imsi;

const F1_TAG: u8 = 0x01;
const F5_TAG: u8 = 0x05;
const A3_MASK: u8 = 0x33;
const A8_MASK: u8 = 0x88;
const KI_TAG: u8 = 0x4B;
const KA_TAG: u8 = 0x4A;
const A5_1_TAG: u8 = 0x51;
const A5_3_TAG: u8 = 0x53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("malformed input: expected {expected} octets, got {actual}")]
    MalformedInput { expected: usize, actual: usize },
    #[error("no keystream exists for cipher NONE")]
    InvalidAlgorithm,
}

/// A 128-bit long-term key (Ki, Ka, or a subscriber master key).
#[derive(Clone, Copy, Eq)]
pub struct Key128([u8; 16]);

impl Key128 {
    pub const fn new(bytes: [u8; 16]) -> Self {
        Key128(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        Ok(Key128(fixed(bytes)?))
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl PartialEq for Key128 {
    // Full-width comparison: no early exit on the first differing octet.
    fn eq(&self, other: &Self) -> bool {
        self.0.iter().zip(other.0.iter()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

impl fmt::Debug for Key128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Key128(..)")
    }
}

/// A 64-bit value: MAC, XMAC, AK, SRES/XRES or Kc.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag64([u8; 8]);

impl Tag64 {
    pub const fn new(bytes: [u8; 8]) -> Self {
        Tag64(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        Ok(Tag64(fixed(bytes)?))
    }

    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }

    pub fn to_u64(self) -> u64 {
        u64::from_be_bytes(self.0)
    }

    pub fn xor(&self, other: &Tag64) -> Tag64 {
        let mut out = [0u8; 8];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a ^ b;
        }
        Tag64(out)
    }
}

impl fmt::Debug for Tag64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag64({})", self)
    }
}

impl fmt::Display for Tag64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{:02x}", b)?;
        }
        Ok(())
    }
}

/// Air-interface cipher selected by the serving network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CipherAlgId {
    A5_1,
    A5_2,
    A5_3,
    None,
}

impl CipherAlgId {
    pub fn name(self) -> &'static str {
        match self {
            CipherAlgId::A5_1 => "a5_1",
            CipherAlgId::A5_2 => "a5_2",
            CipherAlgId::A5_3 => "a5_3",
            CipherAlgId::None => "none",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "a5_1" => CipherAlgId::A5_1,
            "a5_2" => CipherAlgId::A5_2,
            "a5_3" => CipherAlgId::A5_3,
            "none" => CipherAlgId::None,
            _ => return None,
        })
    }
}

/// Keystream for one frame; `bytes.len()` is always the requested length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeystreamBlock {
    pub bytes: Vec<u8>,
    pub frame_index: u32,
}

impl KeystreamBlock {
    pub fn apply(&self, data: &[u8]) -> Vec<u8> {
        data.iter().zip(self.bytes.iter()).map(|(d, k)| d ^ k).collect()
    }
}

fn fixed<const N: usize>(bytes: &[u8]) -> Result<[u8; N], CryptoError> {
    bytes.try_into().map_err(|_| CryptoError::MalformedInput {
        expected: N,
        actual: bytes.len(),
    })
}

fn encrypt_block(key: &[u8; 16], block: [u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(key.into());
    let mut b = block.into();
    cipher.encrypt_block(&mut b);
    b.into()
}

fn truncate(block: [u8; 16]) -> Tag64 {
    let mut out = [0u8; 8];
    out.copy_from_slice(&block[..8]);
    Tag64(out)
}

fn tagged_half(key: &Key128, half: &[u8; 8], tag: u8) -> Tag64 {
    let mut block = [0u8; 16];
    block[..8].copy_from_slice(half);
    block[15] = tag;
    truncate(encrypt_block(&key.0, block))
}

fn masked_rand(key: &Key128, rand: &[u8; 16], mask: u8) -> Tag64 {
    let mut block = *rand;
    block.iter_mut().for_each(|b| *b ^= mask);
    truncate(encrypt_block(&key.0, block))
}

pub(crate) fn f1(ka: &Key128, amf_sqn: &[u8; 8]) -> Tag64 {
    tagged_half(ka, amf_sqn, F1_TAG)
}

pub(crate) fn f5(ka: &Key128, mac: &Tag64) -> Tag64 {
    tagged_half(ka, &mac.0, F5_TAG)
}

pub(crate) fn a3(ki: &Key128, rand: &[u8; 16]) -> Tag64 {
    masked_rand(ki, rand, A3_MASK)
}

pub(crate) fn a8(ki: &Key128, rand: &[u8; 16]) -> Tag64 {
    masked_rand(ki, rand, A8_MASK)
}

/// Network authentication MAC over `AMF‖SQN` (8 octets).
pub fn f1_mac(ka: &Key128, amf_sqn: &[u8]) -> Result<Tag64, CryptoError> {
    Ok(f1(ka, &fixed(amf_sqn)?))
}

/// Mask used to conceal `AMF‖SQN`, keyed on the MAC half of the challenge.
pub fn f5_mask(ka: &Key128, mac: &[u8]) -> Result<Tag64, CryptoError> {
    Ok(f5(ka, &Tag64(fixed(mac)?)))
}

pub fn a3_sres(ki: &Key128, rand: &[u8]) -> Result<Tag64, CryptoError> {
    Ok(a3(ki, &fixed(rand)?))
}

pub fn a8_kc(ki: &Key128, rand: &[u8]) -> Result<Tag64, CryptoError> {
    Ok(a8(ki, &fixed(rand)?))
}

/// Traffic keystream for `frame_index` under `kc`.
///
/// A5/2 is deliberately broken: octet `i` of the keystream is
/// `(kc ⊕ frame_index_be64)[i mod 8]`, so frame 0 starts with `kc` verbatim.
pub fn a5_keystream(alg: CipherAlgId, kc: &Tag64, frame_index: u32, len: usize) -> Result<KeystreamBlock, CryptoError> {
    let bytes = match alg {
        CipherAlgId::None => return Err(CryptoError::InvalidAlgorithm),
        CipherAlgId::A5_2 => {
            let period = kc.xor(&Tag64(u64::from(frame_index).to_be_bytes()));
            period.0.iter().copied().cycle().take(len).collect()
        }
        CipherAlgId::A5_1 => counter_keystream(A5_1_TAG, kc, frame_index, len),
        CipherAlgId::A5_3 => counter_keystream(A5_3_TAG, kc, frame_index, len),
    };
    Ok(KeystreamBlock { bytes, frame_index })
}

fn counter_keystream(alg_tag: u8, kc: &Tag64, frame_index: u32, len: usize) -> Vec<u8> {
    let mut key = [0u8; 16];
    key[..8].copy_from_slice(&kc.0);
    key[8..].copy_from_slice(&kc.0);
    let cipher = Aes128::new(&key.into());
    let mut out = Vec::with_capacity(len);
    let mut counter = 0u64;
    while out.len() < len {
        let mut block = [0u8; 16];
        block[0] = alg_tag;
        block[4..8].copy_from_slice(&frame_index.to_be_bytes());
        block[8..].copy_from_slice(&counter.to_be_bytes());
        let mut b = block.into();
        cipher.encrypt_block(&mut b);
        let take = (len - out.len()).min(16);
        out.extend_from_slice(&b[..take]);
        counter += 1;
    }
    out
}

/// Ki and Ka for one subscriber, both derived from a per-SIM master key.
pub fn derive_subscriber_keys(master: &Key128, imsi: &Imsi) -> (Key128, Key128) {
    let mut block = [0u8; 16];
    block[..15].copy_from_slice(imsi.as_digits());
    block[15] = KI_TAG;
    let ki = Key128(encrypt_block(&master.0, block));
    block[15] = KA_TAG;
    let ka = Key128(encrypt_block(&master.0, block));
    (ki, ka)
}
