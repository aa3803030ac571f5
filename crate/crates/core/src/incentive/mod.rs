//! Contribution identification, rewards and global aggregation.

mod aggregate;
mod contribution;
mod dbscan;

use thiserror::Error;

pub use aggregate::{detection_rate, fair_aggregate, simple_average, AggregationForm, FairAggregate};
pub use contribution::{
    identify_contributions, ContributionReport, GradientSet, Label, ReportFlag, Strategy, Weighting,
};
pub use dbscan::{cluster, distance, ClusterParams, Clustering, Metric};

#[derive(Debug, Error, PartialEq)]
pub enum IncentiveError {
    #[error("gradient dimension mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("nothing to aggregate")]
    EmptyAggregation,
    #[error("gradient set has no global gradient")]
    MissingGlobal,
    #[error("detection rate is undefined without attackers")]
    NoAttackers,
    #[error("weights do not cover the gradient set: {0}")]
    WeightCoverage(String),
    #[error("invalid cluster parameters: {0}")]
    InvalidParams(String),
}
