//! Canonical little-endian serialization.
//!
//! Integers are `u64` LE, reals are IEEE-754 `f64` LE, sequences carry a
//! `u64` length prefix. A gradient starts with an origin tag: `0` for the
//! global gradient, `1` followed by the client id for a local upload.

use crate::model::{ClientId, GradientVector};

use super::{Digest, MinerId, RewardEntry};

const TAG_GLOBAL: u8 = 0;
const TAG_LOCAL: u8 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_gradient(out: &mut Vec<u8>, g: &GradientVector) {
    match g.client {
        None => out.push(TAG_GLOBAL),
        Some(c) => {
            out.push(TAG_LOCAL);
            put_u64(out, u64::from(c.0));
        }
    }
    put_u64(out, g.round);
    put_u64(out, g.values.len() as u64);
    for &v in &g.values {
        put_f64(out, v);
    }
}

/// Bytes a client signs: `client_id | round | len | values`.
pub fn upload_payload(client: ClientId, g: &GradientVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * g.values.len());
    put_u64(&mut out, u64::from(client.0));
    put_u64(&mut out, g.round);
    put_u64(&mut out, g.values.len() as u64);
    for &v in &g.values {
        put_f64(&mut out, v);
    }
    out
}

/// Everything a block hash covers except the nonce.
pub fn encode_block_body(
    index: u64,
    prev_hash: &Digest,
    round: u64,
    miner: MinerId,
    global: &GradientVector,
    transactions: &[RewardEntry],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(80 + 8 * global.values.len() + 16 * transactions.len());
    put_u64(&mut out, index);
    out.extend_from_slice(&prev_hash.0);
    put_u64(&mut out, round);
    put_u64(&mut out, u64::from(miner.0));
    encode_gradient(&mut out, global);
    put_u64(&mut out, transactions.len() as u64);
    for tx in transactions {
        put_u64(&mut out, u64::from(tx.client.0));
        put_f64(&mut out, tx.amount);
    }
    out
}

/// Decoded view of a block body, used to audit what a block actually stores.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyView {
    pub index: u64,
    pub prev_hash: Digest,
    pub round: u64,
    pub miner: MinerId,
    pub gradients: Vec<GradientVector>,
    pub transactions: Vec<RewardEntry>,
}

impl BodyView {
    pub fn local_gradient_count(&self) -> usize {
        self.gradients.iter().filter(|g| g.client.is_some()).count()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn gradient(&mut self) -> Option<GradientVector> {
        let client = match self.take(1)?[0] {
            TAG_GLOBAL => None,
            TAG_LOCAL => Some(ClientId(u32::try_from(self.u64()?).ok()?)),
            _ => return None,
        };
        let round = self.u64()?;
        let len = usize::try_from(self.u64()?).ok()?;
        if len > self.buf.len() / 8 {
            return None;
        }
        let values = (0..len).map(|_| self.f64()).collect::<Option<Vec<_>>>()?;
        Some(GradientVector { values, client, round })
    }
}

/// Inverse of [`encode_block_body`]; `None` on malformed input.
pub fn decode_block_body(bytes: &[u8]) -> Option<BodyView> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let index = r.u64()?;
    let prev_hash = Digest(r.take(32)?.try_into().ok()?);
    let round = r.u64()?;
    let miner = MinerId(u32::try_from(r.u64()?).ok()?);
    let gradients = vec![r.gradient()?];
    let n_tx = usize::try_from(r.u64()?).ok()?;
    if n_tx > bytes.len() / 16 {
        return None;
    }
    let transactions = (0..n_tx)
        .map(|_| {
            Some(RewardEntry {
                client: ClientId(u32::try_from(r.u64()?).ok()?),
                amount: r.f64()?,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return None;
    }
    Some(BodyView {
        index,
        prev_hash,
        round,
        miner,
        gradients,
        transactions,
    })
}
