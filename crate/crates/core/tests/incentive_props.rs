mod common;

use std::collections::BTreeMap;

use fairbfl::incentive::{
    cluster, fair_aggregate, identify_contributions, simple_average, AggregationForm, ClusterParams, GradientSet,
    Label, Metric, Strategy, Weighting,
};
use fairbfl::{ClientId, ExecPolicy, GradientVector};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

fn points(max: usize) -> impl proptest::strategy::Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=max, 2usize..5).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n))
}

fn gset(vs: &[Vec<f64>]) -> GradientSet {
    let mut s = GradientSet::from_gradients(
        1,
        vs.iter()
            .enumerate()
            .map(|(i, v)| GradientVector::local(ClientId(i as u32), 1, v.clone())),
    )
    .unwrap();
    s.global = Some(simple_average(&s).unwrap());
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbscan_matches_brute_force(pts in points(50), eps in 0.05f64..2.5, min_pts in 1usize..5, cos in any::<bool>()) {
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let metric = if cos { Metric::Cosine } else { Metric::Euclidean };
        let got = cluster(&refs, &ClusterParams { eps, min_pts, metric }, ExecPolicy::Parallel).unwrap();
        let (groups, noise) = common::reference_dbscan(&pts, eps, min_pts, cos);
        prop_assert_eq!(got.groups, groups);
        prop_assert_eq!(got.noise, noise);
    }

    #[test]
    fn rewards_nonnegative_and_sum_to_base(pts in points(12), base in 0.1f64..10.0) {
        let (rep, _) = identify_contributions(&gset(&pts), &ClusterParams::default(), Strategy::Keep, base, Weighting::Distance, ExecPolicy::Sequential).unwrap();
        prop_assert!(rep.rewards.iter().all(|e| e.amount >= 0.0));
        if rep.thetas.values().any(|&t| t > 0.0) {
            prop_assert!((rep.reward_total() - base).abs() <= 1e-9 * base);
        }
    }

    #[test]
    fn labels_ignore_client_order(pts in points(12), shift in 0usize..12) {
        let n = pts.len();
        let params = ClusterParams::default();
        let (a, _) = identify_contributions(&gset(&pts), &params, Strategy::Keep, 1.0, Weighting::Distance, ExecPolicy::Sequential).unwrap();
        // relabel client i as (i + shift) mod n and present them in the new id order
        let mut rotated = vec![Vec::new(); n];
        for (i, p) in pts.iter().enumerate() {
            rotated[(i + shift) % n] = p.clone();
        }
        let (b, _) = identify_contributions(&gset(&rotated), &params, Strategy::Keep, 1.0, Weighting::Distance, ExecPolicy::Sequential).unwrap();
        for i in 0..n {
            let j = (i + shift) % n;
            prop_assert_eq!(a.labels[&ClientId(i as u32)], b.labels[&ClientId(j as u32)]);
        }
    }

    #[test]
    fn strategies_return_expected_sets(pts in points(12)) {
        let s = gset(&pts);
        let params = ClusterParams::default();
        let (_, kept) = identify_contributions(&s, &params, Strategy::Keep, 1.0, Weighting::Distance, ExecPolicy::Sequential).unwrap();
        prop_assert_eq!(&kept, &s);
        let (rep, out) = identify_contributions(&s, &params, Strategy::Discard, 1.0, Weighting::Distance, ExecPolicy::Sequential).unwrap();
        let low: Vec<ClientId> = rep.labels.iter().filter(|(_, l)| **l == Label::Low).map(|(c, _)| *c).collect();
        if low.len() < s.len() {
            let mut want = s.entries.clone();
            for c in &low {
                want.remove(c);
            }
            prop_assert_eq!(&out.entries, &want);
            prop_assert_eq!(rep.dropped.iter().copied().collect::<Vec<_>>(), low);
        } else {
            prop_assert_eq!(&out.entries, &s.entries);
        }
    }

    #[test]
    fn uniform_fair_equals_simple(pts in points(20), theta in 0.01f64..2.0) {
        let s = gset(&pts);
        let w: BTreeMap<ClientId, f64> = s.entries.keys().map(|c| (*c, theta)).collect();
        let fair = fair_aggregate(&s, &w, AggregationForm::Normalized).unwrap().global.values;
        let simple = simple_average(&s).unwrap().values;
        for (a, b) in fair.iter().zip(&simple) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fair_matches_direct_sum(pts in points(20), raw in prop::collection::vec(0.01f64..2.0, 20)) {
        let s = gset(&pts);
        let w: BTreeMap<ClientId, f64> = s.entries.keys().map(|c| (*c, raw[c.0 as usize])).collect();
        let fair = fair_aggregate(&s, &w, AggregationForm::Normalized).unwrap().global.values;
        let entries: Vec<(Vec<f64>, f64)> = s.entries.iter().map(|(c, g)| (g.values.clone(), w[c])).collect();
        let want = common::direct_weighted_sum(&entries);
        for (a, b) in fair.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
