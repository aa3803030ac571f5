//! Signed uploads, blocks, proof of work and the per-miner chain.
//!
//! A block carries exactly one global gradient and the round's reward
//! entries; local gradients never reach the ledger. Since blocks are only
//! produced once per round by the winner of that round's race and appended by
//! every miner after verification, chains cannot fork.

mod block;
mod codec;
mod pow;
mod sign;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{check_block, verify_block, Block, BlockRejection, Chain, RewardEntry};
pub use codec::{decode_block_body, encode_block_body, encode_gradient, upload_payload, BodyView};
pub use pow::{meets_target, mine, target_for, MinedNonce, Target};
pub use sign::{
    check_upload, sign_upload, verify_upload, ClientKeys, Ed25519Scheme, KeyPair, KeyRegistry, SignatureScheme,
    SignedUpload, UploadRejection,
};

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("no key registered for client {0}")]
    UnknownIdentity(crate::ClientId),
    #[error("mining gave up after {attempts} attempts")]
    MiningTimeout { attempts: u64 },
    #[error("block rejected: {0}")]
    RejectedBlock(BlockRejection),
    #[error("difficulty must be >= 1")]
    InvalidDifficulty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MinerId(pub u32);

impl fmt::Display for MinerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub(crate) fn sha256(parts: &[&[u8]]) -> Digest {
    use sha2::{Digest as _, Sha256};
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}
