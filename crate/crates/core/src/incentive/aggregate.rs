use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{GradientSet, IncentiveError};
use crate::model::{ClientId, GradientVector};

/// Element-wise mean of the set's entries.
pub fn simple_average(gset: &GradientSet) -> Result<GradientVector, IncentiveError> {
    let dim = gset.dim()?.ok_or(IncentiveError::EmptyAggregation)?;
    let mut acc = vec![0.0; dim];
    for g in gset.entries.values() {
        for (a, v) in acc.iter_mut().zip(&g.values) {
            *a += v;
        }
    }
    let n = gset.entries.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(GradientVector::global(gset.round, acc))
}

/// How contribution weights become the global update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "form")]
pub enum AggregationForm {
    /// `sum_i p_i w_i` with `p_i = theta_i / sum_k theta_k`.
    Normalized,
    /// The same weighted sum scaled by `1 / lambda`.
    Literal { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairAggregate {
    pub global: GradientVector,
    /// Set when every weight was zero and the plain mean was used instead.
    pub zero_theta_fallback: bool,
}

/// Contribution-weighted aggregate. `weights` must name exactly the set's
/// clients and be non-negative.
pub fn fair_aggregate(
    gset: &GradientSet,
    weights: &BTreeMap<ClientId, f64>,
    form: AggregationForm,
) -> Result<FairAggregate, IncentiveError> {
    let dim = gset.dim()?.ok_or(IncentiveError::EmptyAggregation)?;
    let have: BTreeSet<_> = gset.entries.keys().collect();
    let want: BTreeSet<_> = weights.keys().collect();
    if have != want {
        return Err(IncentiveError::WeightCoverage(format!(
            "{} entries vs {} weights",
            have.len(),
            want.len()
        )));
    }
    if weights.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(IncentiveError::WeightCoverage("weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.values().sum();
    if total == 0.0 {
        return Ok(FairAggregate {
            global: simple_average(gset)?,
            zero_theta_fallback: true,
        });
    }
    let scale = match form {
        AggregationForm::Normalized => 1.0,
        AggregationForm::Literal { lambda } => 1.0 / lambda,
    };
    let mut acc = vec![0.0; dim];
    for (id, g) in &gset.entries {
        let p = weights[id] / total * scale;
        for (a, v) in acc.iter_mut().zip(&g.values) {
            *a += p * v;
        }
    }
    Ok(FairAggregate {
        global: GradientVector::global(gset.round, acc),
        zero_theta_fallback: false,
    })
}

/// Share of `attackers` whose gradients were dropped.
pub fn detection_rate(attackers: &BTreeSet<ClientId>, dropped: &BTreeSet<ClientId>) -> Result<f64, IncentiveError> {
    if attackers.is_empty() {
        return Err(IncentiveError::NoAttackers);
    }
    Ok(attackers.intersection(dropped).count() as f64 / attackers.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(vals: &[&[f64]]) -> GradientSet {
        GradientSet::from_gradients(
            3,
            vals.iter()
                .enumerate()
                .map(|(i, v)| GradientVector::local(ClientId(i as u32), 3, v.to_vec())),
        )
        .unwrap()
    }

    fn ids(v: &[u32]) -> BTreeSet<ClientId> {
        v.iter().map(|&c| ClientId(c)).collect()
    }

    #[test]
    fn simple_average_cases() {
        assert_eq!(simple_average(&set(&[&[1.0, -2.0]])).unwrap().values, vec![1.0, -2.0]);
        assert_eq!(
            simple_average(&set(&[&[1.5, 2.0], &[-1.5, -2.0]])).unwrap().values,
            vec![0.0, 0.0]
        );
        let avg = simple_average(&set(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(avg.values, vec![2.0, 3.0]);
        assert_eq!(avg.client, None);
        assert_eq!(simple_average(&set(&[])), Err(IncentiveError::EmptyAggregation));
    }

    #[test]
    fn fair_aggregate_on_basis_vectors() {
        let s = set(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let w: BTreeMap<_, _> = [(ClientId(0), 0.1), (ClientId(1), 0.2), (ClientId(2), 0.7)].into();
        let agg = fair_aggregate(&s, &w, AggregationForm::Normalized).unwrap();
        for (a, b) in agg.global.values.iter().zip([0.1, 0.2, 0.7]) {
            assert!((a - b).abs() < 1e-15);
        }
        let lit = fair_aggregate(&s, &w, AggregationForm::Literal { lambda: 0.5 }).unwrap();
        assert!((lit.global.values[2] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn fair_aggregate_fallbacks_and_errors() {
        let s = set(&[&[1.0, 3.0], &[3.0, 5.0]]);
        let zero: BTreeMap<_, _> = [(ClientId(0), 0.0), (ClientId(1), 0.0)].into();
        let agg = fair_aggregate(&s, &zero, AggregationForm::Normalized).unwrap();
        assert!(agg.zero_theta_fallback);
        assert_eq!(agg.global.values, vec![2.0, 4.0]);
        let partial: BTreeMap<_, _> = [(ClientId(0), 1.0)].into();
        assert!(matches!(
            fair_aggregate(&s, &partial, AggregationForm::Normalized),
            Err(IncentiveError::WeightCoverage(_))
        ));
    }

    #[test]
    fn detection_rates_from_the_security_table() {
        assert_eq!(detection_rate(&ids(&[3, 7]), &ids(&[2, 4, 5, 6])).unwrap(), 0.0);
        let r = detection_rate(&ids(&[3, 6, 2]), &ids(&[2, 6])).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(detection_rate(&ids(&[0]), &ids(&[0])).unwrap(), 1.0);
        assert_eq!(detection_rate(&ids(&[]), &ids(&[1])), Err(IncentiveError::NoAttackers));
    }
}
