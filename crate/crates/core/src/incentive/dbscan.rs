//! Density-based clustering over gradient vectors.
//!
//! A point's neighbourhood includes the point itself, so with `min_pts = 2`
//! any two points within `eps` of each other form a cluster. Clusters are
//! numbered by their lowest-index core point; a border point reachable from
//! several clusters joins the lowest-numbered one.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::IncentiveError;
use crate::exec::ExecPolicy;
use crate::model::{cosine_distance_slices, euclidean_distance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
    pub metric: Metric,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: 0.5,
            min_pts: 2,
            metric: Metric::Cosine,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), IncentiveError> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(IncentiveError::InvalidParams(format!("eps = {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(IncentiveError::InvalidParams("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Distance under `metric`. A zero vector has no direction, so under the
/// cosine metric it is maximally distant (2) from everything.
pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => euclidean_distance(a, b),
        Metric::Cosine => cosine_distance_slices(a, b).unwrap_or(2.0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    /// Member indices per cluster, ascending.
    pub groups: Vec<Vec<usize>>,
    /// Points in no cluster, ascending.
    pub noise: Vec<usize>,
}

impl Clustering {
    pub fn group_of(&self, point: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.binary_search(&point).is_ok())
    }
}

pub fn cluster(points: &[&[f64]], params: &ClusterParams, exec: ExecPolicy) -> Result<Clustering, IncentiveError> {
    params.validate()?;
    let Some(first) = points.first() else {
        return Ok(Clustering::default());
    };
    let dim = first.len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(IncentiveError::Shape {
            expected: dim,
            found: bad.len(),
        });
    }
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = exec.map_range(n, |i| {
        (0..n)
            .filter(|&j| distance(params.metric, points[i], points[j]) <= params.eps)
            .collect()
    });
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if !is_core[seed] || assignment[seed].is_some() {
            continue;
        }
        let id = groups.len();
        let mut members = vec![seed];
        assignment[seed] = Some(id);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if assignment[q].is_some() {
                    continue;
                }
                assignment[q] = Some(id);
                members.push(q);
                if is_core[q] {
                    queue.push_back(q);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    let noise = (0..n).filter(|&i| assignment[i].is_none()).collect();
    Ok(Clustering { groups, noise })
}
