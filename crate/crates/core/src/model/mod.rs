//! Local models, mini-batch SGD and gradient-space geometry.

mod net;
mod train;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use net::{Architecture, ModelLayout, ModelParams};
pub use train::{evaluate, local_update, Evaluation, HyperParams, LocalUpdate};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty data shard")]
    EmptyData,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NumericalDivergence { epoch: usize, batch: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parameters contain non-finite values")]
    NonFinite,
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
}

/// Client identifier; also the index of the client's shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A parameter delta. `client` is `None` for a round's global gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub client: Option<ClientId>,
    pub round: u64,
}

impl GradientVector {
    pub fn local(client: ClientId, round: u64, values: Vec<f64>) -> Self {
        GradientVector {
            values,
            client: Some(client),
            round,
        }
    }

    pub fn global(round: u64, values: Vec<f64>) -> Self {
        GradientVector {
            values,
            client: None,
            round,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        GradientVector::global(0, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance_slices(a: &[f64], b: &[f64]) -> Result<f64, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(ModelError::ZeroVector);
    }
    let cos = dot(a, b) / (na * nb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

pub fn cosine_distance(a: &GradientVector, b: &GradientVector) -> Result<f64, ModelError> {
    cosine_distance_slices(&a.values, &b.values)
}

/// Euclidean distance; used by the alternative clustering metric.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
