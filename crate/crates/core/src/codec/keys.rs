//! Master seeds, the SHA-256 concatenation KDF, and keyed Fisher–Yates permutations.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 256-bit secret from which every per-user stream is derived.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MasterSeed([u8; 32]);

impl MasterSeed {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Expands a small integer into a full seed. Used for reproducible experiments.
    pub fn from_u64(n: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"maxsive-seed");
        hasher.update(n.to_le_bytes());
        Self(hasher.finalize().into())
    }

    pub fn random() -> Self {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 64 {
            return Err(Error::Format(format!("master seed needs 64 hex chars, got {}", s.len())));
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s, &mut bytes).map_err(|e| Error::Format(format!("master seed: {e}")))?;
        Ok(Self(bytes))
    }

    /// `SHA-256(master || u64_le(replica))`
    pub fn replica_subseed(&self, replica: u64) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.0);
        hasher.update(replica.to_le_bytes());
        hasher.finalize().into()
    }

    /// `SHA-256(master || "payload")`, the stream the watermark vector is drawn from.
    pub fn payload_subseed(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.0);
        hasher.update(b"payload");
        hasher.finalize().into()
    }
}

impl fmt::Debug for MasterSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterSeed({}…)", &self.to_hex()[..8])
    }
}

impl fmt::Display for MasterSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for MasterSeed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

impl Serialize for MasterSeed {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for MasterSeed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_hex(&s).map_err(de::Error::custom)
    }
}

/// Uniform integer in `[0, n)` by rejection on the raw 64-bit stream.
pub(crate) fn uniform_below(rng: &mut impl RngCore, n: u64) -> u64 {
    debug_assert!(n > 0);
    // 2^64 mod n values at the bottom are rejected so the rest split evenly.
    let reject_below = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= reject_below {
            return x % n;
        }
    }
}

/// Durstenfeld shuffle of `0..len` driven by ChaCha20 seeded with `subseed`.
pub fn keyed_permutation(subseed: [u8; 32], len: usize) -> Vec<u32> {
    let mut rng = ChaCha20Rng::from_seed(subseed);
    let mut perm: Vec<u32> = (0..len as u32).collect();
    for i in (1..len).rev() {
        let j = uniform_below(&mut rng, i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Per-replica permutations of the flattened payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleKeySet {
    master_seed: MasterSeed,
    permutations: Vec<Vec<u32>>,
}

impl ShuffleKeySet {
    pub fn master_seed(&self) -> &MasterSeed {
        &self.master_seed
    }

    pub fn replica_count(&self) -> usize {
        self.permutations.len()
    }

    pub fn payload_len(&self) -> usize {
        self.permutations[0].len()
    }

    pub fn permutation(&self, replica: usize) -> &[u32] {
        &self.permutations[replica]
    }

    pub fn permutations(&self) -> &[Vec<u32>] {
        &self.permutations
    }

    #[cfg(test)]
    pub(crate) fn identity_for_tests(replicas: usize, len: usize) -> Self {
        Self {
            master_seed: MasterSeed::from_bytes([0; 32]),
            permutations: vec![(0..len as u32).collect(); replicas],
        }
    }
}

pub fn derive_keys(master_seed: &MasterSeed, replica_count: usize, payload_len: usize) -> Result<ShuffleKeySet> {
    if replica_count == 0 {
        return Err(Error::Config("replica count must be at least 1".into()));
    }
    if payload_len == 0 || payload_len > u32::MAX as usize {
        return Err(Error::Config(format!("payload length {payload_len} out of range")));
    }
    let permutations = (0..replica_count)
        .map(|i| keyed_permutation(master_seed.replica_subseed(i as u64), payload_len))
        .collect();
    Ok(ShuffleKeySet { master_seed: *master_seed, permutations })
}
