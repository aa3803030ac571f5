//! Proof of work: `SHA256(nonce || body) < Target1 / difficulty`, with
//! `Target1 = 2^256 - 1` and all comparisons done on exact 256-bit integers.

use super::{sha256, Digest, LedgerError};
use crate::rng::{self, Stream};

/// A 256-bit threshold, big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Target(pub [u8; 32]);

impl Target {
    pub const MAX: Target = Target([0xFF; 32]);
}

/// `floor((2^256 - 1) / difficulty)`.
pub fn target_for(difficulty: u64) -> Result<Target, LedgerError> {
    if difficulty == 0 {
        return Err(LedgerError::InvalidDifficulty);
    }
    let d = u128::from(difficulty);
    let mut out = [0u8; 32];
    let mut rem: u128 = 0;
    for limb in 0..4 {
        let cur = (rem << 64) | u128::from(u64::MAX);
        let q = (cur / d) as u64;
        rem = cur % d;
        out[limb * 8..(limb + 1) * 8].copy_from_slice(&q.to_be_bytes());
    }
    Ok(Target(out))
}

pub fn meets_target(hash: &Digest, target: &Target) -> bool {
    hash.0 < target.0
}

pub(crate) fn pow_hash(nonce: u64, body: &[u8]) -> Digest {
    sha256(&[&nonce.to_le_bytes(), body])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinedNonce {
    pub nonce: u64,
    pub hash: Digest,
    /// Hash evaluations spent, including the successful one.
    pub attempts: u64,
}

/// Searches nonces upward from a seed-derived start until the hash meets the
/// target for `difficulty`.
pub fn mine(body: &[u8], difficulty: u64, max_attempts: u64, seed: u64) -> Result<MinedNonce, LedgerError> {
    let target = target_for(difficulty)?;
    let mut nonce = rng::derive(seed, Stream::Nonce, &[]);
    for attempts in 1..=max_attempts {
        let hash = pow_hash(nonce, body);
        if meets_target(&hash, &target) {
            return Ok(MinedNonce { nonce, hash, attempts });
        }
        nonce = nonce.wrapping_add(1);
    }
    Err(LedgerError::MiningTimeout { attempts: max_attempts })
}
