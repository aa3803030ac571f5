//! Contribution identification.
//!
//! The round's local gradients are clustered together with the simple-average
//! global gradient. Clients in the global gradient's cluster are labelled
//! high contribution and share `base` in proportion to their weight; all
//! others, noise included, are low contribution and are removed from the set
//! under the discard strategy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::dbscan::{cluster, distance, ClusterParams, Metric};
use super::IncentiveError;
use crate::exec::ExecPolicy;
use crate::ledger::RewardEntry;
use crate::model::{ClientId, GradientVector};

/// One round's local gradients keyed by client, plus the global gradient once
/// it has been computed. Iteration order is ascending client id.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub round: u64,
    pub entries: BTreeMap<ClientId, GradientVector>,
    pub global: Option<GradientVector>,
}

impl GradientSet {
    pub fn new(round: u64) -> Self {
        GradientSet {
            round,
            entries: BTreeMap::new(),
            global: None,
        }
    }

    /// Builds a set from local gradients, rejecting anonymous or duplicate
    /// entries and mixed dimensions.
    pub fn from_gradients(
        round: u64,
        gradients: impl IntoIterator<Item = GradientVector>,
    ) -> Result<Self, IncentiveError> {
        let mut set = GradientSet::new(round);
        for g in gradients {
            set.insert(g)?;
        }
        Ok(set)
    }

    /// Adds a local gradient. Returns `false` if the client already has one.
    pub fn insert(&mut self, g: GradientVector) -> Result<bool, IncentiveError> {
        let Some(client) = g.client else {
            return Err(IncentiveError::InvalidParams("local gradient without client id".into()));
        };
        if let Some(dim) = self.dim()? {
            if g.dim() != dim {
                return Err(IncentiveError::Shape {
                    expected: dim,
                    found: g.dim(),
                });
            }
        }
        if self.entries.contains_key(&client) {
            return Ok(false);
        }
        self.entries.insert(client, g);
        Ok(true)
    }

    /// Common dimension of the entries, `None` when empty.
    pub fn dim(&self) -> Result<Option<usize>, IncentiveError> {
        let mut it = self.entries.values();
        let Some(first) = it.next() else { return Ok(None) };
        let dim = first.dim();
        match it.find(|g| g.dim() != dim) {
            Some(bad) => Err(IncentiveError::Shape {
                expected: dim,
                found: bad.dim(),
            }),
            None => Ok(Some(dim)),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clients(&self) -> BTreeSet<ClientId> {
        self.entries.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Keep,
    Discard,
}

/// Maps the cosine distance `theta` to a reward / aggregation weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Weight grows with distance from the global gradient: `theta`.
    Distance,
    /// Weight grows with similarity: `1 - theta / 2`.
    Similarity,
}

impl Weighting {
    pub fn weight(self, theta: f64) -> f64 {
        match self {
            Weighting::Distance => theta,
            Weighting::Similarity => 1.0 - theta / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFlag {
    /// The global gradient was noise; every client was labelled high.
    DegenerateClustering,
    /// All high-contribution weights were zero; rewards were split equally.
    ZeroThetaFallback,
    /// Discarding would have removed every client; the full set was kept.
    DiscardFallback,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContributionReport {
    pub labels: BTreeMap<ClientId, Label>,
    /// Cosine distance to the global gradient, high-contribution clients only.
    pub thetas: BTreeMap<ClientId, f64>,
    /// Cosine distance to the global gradient for every client.
    pub all_thetas: BTreeMap<ClientId, f64>,
    pub rewards: Vec<RewardEntry>,
    pub dropped: BTreeSet<ClientId>,
    pub flags: Vec<ReportFlag>,
}

impl ContributionReport {
    pub fn high(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.labels.iter().filter(|(_, l)| **l == Label::High).map(|(c, _)| *c)
    }

    pub fn reward_total(&self) -> f64 {
        self.rewards.iter().map(|r| r.amount).sum()
    }
}

fn theta(global: &GradientVector, g: &GradientVector) -> f64 {
    distance(Metric::Cosine, &g.values, &global.values)
}

/// Labels every client of `gset`, computes the reward list and applies the
/// strategy. The returned set keeps its global gradient; callers recompute it
/// from the surviving entries.
pub fn identify_contributions(
    gset: &GradientSet,
    params: &ClusterParams,
    strategy: Strategy,
    base: f64,
    weighting: Weighting,
    exec: ExecPolicy,
) -> Result<(ContributionReport, GradientSet), IncentiveError> {
    let global = gset.global.as_ref().ok_or(IncentiveError::MissingGlobal)?;
    if let Some(dim) = gset.dim()? {
        if global.dim() != dim {
            return Err(IncentiveError::Shape {
                expected: dim,
                found: global.dim(),
            });
        }
    }
    let clients: Vec<ClientId> = gset.entries.keys().copied().collect();
    let mut points: Vec<&[f64]> = gset.entries.values().map(|g| g.values.as_slice()).collect();
    points.push(&global.values);
    let global_idx = clients.len();
    let clustering = cluster(&points, params, exec)?;

    let mut report = ContributionReport::default();
    let high: BTreeSet<usize> = match clustering.group_of(global_idx) {
        Some(gid) => clustering.groups[gid]
            .iter()
            .copied()
            .filter(|&i| i != global_idx)
            .collect(),
        None => {
            report.flags.push(ReportFlag::DegenerateClustering);
            (0..clients.len()).collect()
        }
    };

    for (i, (&id, g)) in gset.entries.iter().enumerate() {
        let t = theta(global, g);
        report.all_thetas.insert(id, t);
        if high.contains(&i) {
            report.labels.insert(id, Label::High);
            report.thetas.insert(id, t);
        } else {
            report.labels.insert(id, Label::Low);
        }
    }

    let weights: Vec<(ClientId, f64)> = report.thetas.iter().map(|(&c, &t)| (c, weighting.weight(t))).collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if !weights.is_empty() {
        if total > 0.0 {
            report.rewards = weights
                .iter()
                .map(|&(client, w)| RewardEntry {
                    client,
                    amount: w / total * base,
                })
                .collect();
        } else {
            report.flags.push(ReportFlag::ZeroThetaFallback);
            let share = base / weights.len() as f64;
            report.rewards = weights
                .iter()
                .map(|&(client, _)| RewardEntry { client, amount: share })
                .collect();
        }
    }

    let mut out = gset.clone();
    if strategy == Strategy::Discard {
        for (&id, &label) in &report.labels {
            if label == Label::Low {
                out.entries.remove(&id);
                report.dropped.insert(id);
            }
        }
    }
    Ok((report, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incentive::simple_average;
    use crate::model::cosine_distance;

    fn with_global(mut s: GradientSet) -> GradientSet {
        s.global = Some(simple_average(&s).unwrap());
        s
    }

    fn honest(i: u32) -> GradientVector {
        // small deterministic spread around (1, 2, -1, 0.5)
        let j = f64::from(i);
        let v = vec![
            1.0 + 0.05 * (j * 1.3).sin(),
            2.0 + 0.05 * (j * 0.7).cos(),
            -1.0,
            0.5 + 0.02 * j,
        ];
        GradientVector::local(ClientId(i), 7, v)
    }

    #[test]
    fn single_sign_flip_attacker_is_dropped() {
        let mut grads: Vec<GradientVector> = (1..10).map(honest).collect();
        let mean: Vec<f64> = (0..4)
            .map(|k| grads.iter().map(|g| g.values[k]).sum::<f64>() / 9.0)
            .collect();
        grads.push(GradientVector::local(
            ClientId(0),
            7,
            mean.iter().map(|v| -5.0 * v).collect(),
        ));
        let s = with_global(GradientSet::from_gradients(7, grads).unwrap());
        let p = ClusterParams::default();
        let (rep, out) = identify_contributions(
            &s,
            &p,
            Strategy::Discard,
            1.0,
            Weighting::Distance,
            ExecPolicy::Sequential,
        )
        .unwrap();
        assert_eq!(rep.labels[&ClientId(0)], Label::Low);
        assert_eq!(rep.dropped, [ClientId(0)].into());
        assert_eq!(out.len(), 9);
        assert!(rep.flags.is_empty());
        assert!((rep.reward_total() - 1.0).abs() < 1e-9);
        assert!(rep.rewards.iter().all(|r| r.client != ClientId(0)));

        let (keep, same) =
            identify_contributions(&s, &p, Strategy::Keep, 1.0, Weighting::Distance, ExecPolicy::Sequential).unwrap();
        assert!(keep.dropped.is_empty());
        assert_eq!(same, s);
    }

    #[test]
    fn identical_uploads_split_equally() {
        let grads = (0..4).map(|i| GradientVector::local(ClientId(i), 1, vec![0.5, -1.0, 2.0]));
        let s = with_global(GradientSet::from_gradients(1, grads).unwrap());
        let (rep, _) = identify_contributions(
            &s,
            &ClusterParams::default(),
            Strategy::Discard,
            2.0,
            Weighting::Distance,
            ExecPolicy::Sequential,
        )
        .unwrap();
        assert!(rep.labels.values().all(|l| *l == Label::High));
        assert!(rep.thetas.values().all(|t| t.abs() < 1e-12));
        assert_eq!(rep.flags, vec![ReportFlag::ZeroThetaFallback]);
        assert!(rep.rewards.iter().all(|r| (r.amount - 0.5).abs() < 1e-12));
    }

    #[test]
    fn orthogonal_forgery_with_hand_computed_thetas() {
        // honest a = (1, 0.2, 0), b = (1, -0.1, 0); forged f = (0, 0, 0.3)
        // global m = (2/3, 0.1/3, 0.1)
        let a = GradientVector::local(ClientId(0), 1, vec![1.0, 0.2, 0.0]);
        let b = GradientVector::local(ClientId(1), 1, vec![1.0, -0.1, 0.0]);
        let f = GradientVector::local(ClientId(2), 1, vec![0.0, 0.0, 0.3]);
        let s = with_global(GradientSet::from_gradients(1, [a, b, f]).unwrap());
        let m_norm = (4.0f64 / 9.0 + 0.01 / 9.0 + 0.01).sqrt();
        let theta_a = 1.0 - (2.0 / 3.0 + 0.02 / 3.0) / (1.04f64.sqrt() * m_norm);
        let theta_b = 1.0 - (2.0 / 3.0 - 0.01 / 3.0) / (1.01f64.sqrt() * m_norm);
        // theta_a ~ 0.0217, theta_b ~ 0.0220, d(a, b) ~ 0.044; f sits 1.0 from
        // both honest points and ~0.85 from m
        let p = ClusterParams {
            eps: 0.1,
            min_pts: 2,
            metric: Metric::Cosine,
        };
        let (rep, out) = identify_contributions(
            &s,
            &p,
            Strategy::Discard,
            1.0,
            Weighting::Distance,
            ExecPolicy::Sequential,
        )
        .unwrap();
        assert_eq!(rep.labels[&ClientId(2)], Label::Low);
        assert_eq!(rep.dropped, [ClientId(2)].into());
        assert_eq!(out.clients(), [ClientId(0), ClientId(1)].into());
        assert!((rep.thetas[&ClientId(0)] - theta_a).abs() < 1e-12);
        assert!((rep.thetas[&ClientId(1)] - theta_b).abs() < 1e-12);
        let share_a = theta_a / (theta_a + theta_b);
        assert_eq!(rep.rewards.len(), 2);
        assert!((rep.rewards[0].amount - share_a).abs() < 1e-9);
        assert!((rep.rewards[1].amount - (1.0 - share_a)).abs() < 1e-9);
        assert!(
            (rep.thetas[&ClientId(0)] - cosine_distance(&s.entries[&ClientId(0)], s.global.as_ref().unwrap()).unwrap())
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn missing_global_is_an_error() {
        let s = GradientSet::from_gradients(1, [GradientVector::local(ClientId(0), 1, vec![1.0])]).unwrap();
        assert_eq!(
            identify_contributions(
                &s,
                &ClusterParams::default(),
                Strategy::Keep,
                1.0,
                Weighting::Distance,
                ExecPolicy::Sequential
            )
            .unwrap_err(),
            IncentiveError::MissingGlobal
        );
    }

    #[test]
    fn noise_global_falls_back_to_all_high() {
        // three mutually orthogonal uploads: the mean is far from each
        let grads = [
            GradientVector::local(ClientId(0), 1, vec![1.0, 0.0, 0.0]),
            GradientVector::local(ClientId(1), 1, vec![0.0, 1.0, 0.0]),
            GradientVector::local(ClientId(2), 1, vec![0.0, 0.0, 1.0]),
        ];
        let s = with_global(GradientSet::from_gradients(1, grads).unwrap());
        let (rep, out) = identify_contributions(
            &s,
            &ClusterParams {
                eps: 0.1,
                min_pts: 2,
                metric: Metric::Cosine,
            },
            Strategy::Discard,
            1.0,
            Weighting::Distance,
            ExecPolicy::Sequential,
        )
        .unwrap();
        assert_eq!(rep.flags, vec![ReportFlag::DegenerateClustering]);
        assert!(rep.dropped.is_empty());
        assert_eq!(out.len(), 3);
        for r in &rep.rewards {
            assert!((r.amount - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_and_mismatched_inserts() {
        let mut s = GradientSet::new(1);
        assert!(s.insert(GradientVector::local(ClientId(0), 1, vec![1.0, 2.0])).unwrap());
        assert!(!s.insert(GradientVector::local(ClientId(0), 1, vec![3.0, 2.0])).unwrap());
        assert!(matches!(
            s.insert(GradientVector::local(ClientId(1), 1, vec![1.0])),
            Err(IncentiveError::Shape { .. })
        ));
        assert!(s.insert(GradientVector::global(1, vec![1.0, 2.0])).is_err());
    }
}
