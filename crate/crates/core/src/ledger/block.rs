use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::codec::encode_block_body;
use super::pow::{meets_target, mine, pow_hash, target_for};
use super::{sha256, Digest, LedgerError, MinerId};
use crate::model::{ClientId, GradientVector};

/// One reward transaction: `amount` units paid to `client`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardEntry {
    pub client: ClientId,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest,
    pub nonce: u64,
    pub round: u64,
    pub global_gradient: GradientVector,
    pub transactions: Vec<RewardEntry>,
    pub miner: MinerId,
    pub hash: Digest,
}

impl Block {
    /// Unsealed block on top of `prev`; nonce and hash are filled by [`Block::seal`].
    pub fn template(
        prev: &Block,
        round: u64,
        miner: MinerId,
        global_gradient: GradientVector,
        transactions: Vec<RewardEntry>,
    ) -> Self {
        Block {
            index: prev.index + 1,
            prev_hash: prev.hash,
            nonce: 0,
            round,
            global_gradient,
            transactions,
            miner,
            hash: Digest::default(),
        }
    }

    pub fn body_bytes(&self) -> Vec<u8> {
        encode_block_body(
            self.index,
            &self.prev_hash,
            self.round,
            self.miner,
            &self.global_gradient,
            &self.transactions,
        )
    }

    pub fn compute_hash(&self) -> Digest {
        pow_hash(self.nonce, &self.body_bytes())
    }

    /// Mines a nonce and returns the sealed block with the attempt count.
    pub fn seal(mut self, difficulty: u64, max_attempts: u64, seed: u64) -> Result<(Block, u64), LedgerError> {
        let found = mine(&self.body_bytes(), difficulty, max_attempts, seed)?;
        self.nonce = found.nonce;
        self.hash = found.hash;
        Ok((self, found.attempts))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.nonce.to_le_bytes().to_vec();
        out.extend_from_slice(&self.body_bytes());
        out.extend_from_slice(&self.hash.0);
        out
    }

    pub fn reward_total(&self) -> f64 {
        self.transactions.iter().map(|t| t.amount).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRejection {
    WrongIndex {
        expected: u64,
        found: u64,
    },
    PrevHashMismatch,
    HashMismatch,
    TargetNotMet,
    /// The gradient slot holds a client's local gradient.
    LocalGradientInBlock,
    InvalidReward,
    BadDifficulty,
}

impl fmt::Display for BlockRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockRejection::WrongIndex { expected, found } => {
                write!(f, "index {found} is not the next index {expected}")
            }
            BlockRejection::PrevHashMismatch => f.write_str("prev_hash does not link to chain tip"),
            BlockRejection::HashMismatch => f.write_str("stored hash does not recompute"),
            BlockRejection::TargetNotMet => f.write_str("hash is not below target"),
            BlockRejection::LocalGradientInBlock => f.write_str("block carries a local gradient"),
            BlockRejection::InvalidReward => f.write_str("reward amount negative or non-finite"),
            BlockRejection::BadDifficulty => f.write_str("difficulty must be >= 1"),
        }
    }
}

pub fn check_block(chain: &Chain, block: &Block, difficulty: u64) -> Result<(), BlockRejection> {
    let tip = chain.tip();
    if block.index != tip.index + 1 {
        return Err(BlockRejection::WrongIndex {
            expected: tip.index + 1,
            found: block.index,
        });
    }
    if block.prev_hash != tip.hash {
        return Err(BlockRejection::PrevHashMismatch);
    }
    if block.global_gradient.client.is_some() {
        return Err(BlockRejection::LocalGradientInBlock);
    }
    if block
        .transactions
        .iter()
        .any(|t| !(t.amount.is_finite() && t.amount >= 0.0))
    {
        return Err(BlockRejection::InvalidReward);
    }
    if block.compute_hash() != block.hash {
        return Err(BlockRejection::HashMismatch);
    }
    let target = target_for(difficulty).map_err(|_| BlockRejection::BadDifficulty)?;
    if !meets_target(&block.hash, &target) {
        return Err(BlockRejection::TargetNotMet);
    }
    Ok(())
}

pub fn verify_block(chain: &Chain, block: &Block, difficulty: u64) -> bool {
    check_block(chain, block, difficulty).is_ok()
}

/// Append-only block sequence starting at a genesis block.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    /// Genesis holds an all-zero global gradient of dimension `dim` and is
    /// exempt from proof of work.
    pub fn genesis(dim: usize) -> Self {
        let mut g = Block {
            index: 0,
            prev_hash: Digest::default(),
            nonce: 0,
            round: 0,
            global_gradient: GradientVector::zeros(dim),
            transactions: Vec::new(),
            miner: MinerId(0),
            hash: Digest::default(),
        };
        g.hash = g.compute_hash();
        Chain { blocks: vec![g] }
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn append(&mut self, block: Block, difficulty: u64) -> Result<(), LedgerError> {
        check_block(self, &block, difficulty).map_err(LedgerError::RejectedBlock)?;
        self.blocks.push(block);
        Ok(())
    }

    /// Re-checks every link, hash and target from genesis.
    pub fn validate(&self, difficulty: u64) -> Result<(), (u64, BlockRejection)> {
        let genesis = &self.blocks[0];
        if genesis.index != 0 || genesis.compute_hash() != genesis.hash {
            return Err((0, BlockRejection::HashMismatch));
        }
        let mut prefix = Chain {
            blocks: vec![genesis.clone()],
        };
        for b in &self.blocks[1..] {
            check_block(&prefix, b, difficulty).map_err(|r| (b.index, r))?;
            prefix.blocks.push(b.clone());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.blocks.iter().flat_map(Block::to_bytes).collect()
    }

    pub fn digest(&self) -> Digest {
        sha256(&[&self.to_bytes()])
    }

    /// One line per block:
    /// `index=.. prev_hash=.. nonce=.. round=.. miner=.. hash=.. rewards=c:amt;..`
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            let rewards: Vec<String> = b
                .transactions
                .iter()
                .map(|t| format!("{}:{}", t.client, t.amount))
                .collect();
            let _ = writeln!(
                out,
                "index={} prev_hash={} nonce={} round={} miner={} hash={} rewards={}",
                b.index,
                b.prev_hash,
                b.nonce,
                b.round,
                b.miner,
                b.hash,
                rewards.join(";")
            );
        }
        out
    }
}
