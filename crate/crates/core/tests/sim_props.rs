use fairbfl::incentive::Strategy;
use fairbfl::report::{read_rows, write_rows, MetricsRow};
use fairbfl::sim::{check_barrier, Mode, SimConfig, Simulation};
use fairbfl::ExecPolicy;
use proptest::prelude::*;

fn small(seed: u64) -> SimConfig {
    let mut c = SimConfig {
        n_clients: 10,
        n_miners: 3,
        lambda: 0.5,
        rounds: 4,
        seed,
        difficulty: 64,
        ..SimConfig::default()
    };
    c.data.n_samples = 400;
    c.hp.epochs = 1;
    c
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop_oneof![Just(Strategy::Keep), Just(Strategy::Discard)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chains_stay_identical(seed in 0u64..10_000, m in 1usize..5, s in strategy()) {
        let mut sim = Simulation::new(SimConfig { n_miners: m, strategy: s, ..small(seed) }, ExecPolicy::Parallel).unwrap();
        for r in 1..=4u64 {
            sim.run_round().unwrap();
            let first = sim.chains()[0].to_bytes();
            prop_assert_eq!(sim.chains().len(), m);
            for c in sim.chains() {
                prop_assert_eq!(c.len() as u64, r + 1);
                prop_assert_eq!(&c.to_bytes(), &first);
            }
        }
        prop_assert!(check_barrier(sim.trace()).is_ok());
    }

    #[test]
    fn identical_configs_give_identical_reports(seed in 0u64..10_000, s in strategy()) {
        let cfg = SimConfig { strategy: s, ..small(seed) };
        let a = Simulation::new(cfg.clone(), ExecPolicy::Parallel).unwrap().run().unwrap();
        let b = Simulation::new(cfg, ExecPolicy::Sequential).unwrap().run().unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn mining_never_touches_learning(seed in 0u64..10_000, difficulty in 1u64..256) {
        let bfl = Simulation::new(SimConfig { difficulty, ..small(seed) }, ExecPolicy::Parallel).unwrap().run().unwrap();
        let fl = Simulation::new(SimConfig { mode: Mode::Fl, ..small(seed) }, ExecPolicy::Parallel).unwrap().run().unwrap();
        let acc = |r: &[fairbfl::sim::RoundReport]| r.iter().map(|x| x.mean_accuracy.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(acc(&bfl), acc(&fl));
    }

    #[test]
    fn discard_benches_and_excludes(seed in 0u64..10_000) {
        let cfg = SimConfig { strategy: Strategy::Discard, lambda: 1.0, rounds: 6, ..small(seed) };
        let reports = Simulation::new(cfg, ExecPolicy::Parallel).unwrap().run().unwrap();
        for (i, r) in reports.iter().enumerate() {
            prop_assert!(r.participants.is_subset(&r.selected));
            prop_assert!(r.contribution.dropped.is_subset(&r.participants));
            prop_assert!(r.contribution.high().all(|c| !r.contribution.dropped.contains(&c)));
            if i > 0 {
                let prev = &reports[i - 1].contribution.dropped;
                let fallback = r.participants == r.selected && r.selected.is_subset(prev);
                prop_assert!(fallback || r.participants.is_disjoint(prev));
            }
        }
    }

    #[test]
    fn rewards_are_conserved_on_chain(seed in 0u64..10_000, base in 0.5f64..4.0) {
        let mut sim = Simulation::new(SimConfig { base, ..small(seed) }, ExecPolicy::Parallel).unwrap();
        let reports = sim.run().unwrap();
        let every_round_rewarded = reports.iter().all(|r| r.contribution.thetas.values().any(|&t| t > 0.0));
        prop_assume!(every_round_rewarded);
        let total: f64 = sim.chains()[0].blocks().iter().map(|b| b.reward_total()).sum();
        prop_assert!((total - 4.0 * base).abs() <= 1e-9 * base);
    }

    #[test]
    fn simulated_rows_round_trip(seed in 0u64..10_000) {
        let reports = Simulation::new(SimConfig { strategy: Strategy::Discard, ..small(seed) }, ExecPolicy::Parallel).unwrap().run().unwrap();
        let rows: Vec<MetricsRow> = reports.iter().map(|r| MetricsRow::from_report("abc", "p", "l", seed, r)).collect();
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        prop_assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }
}
