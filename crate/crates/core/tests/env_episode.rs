use minedes::bench::{cohens_d, run_shift, run_trials, summarize, write_reports, CohensD, TrialMatrix};
use minedes::config::{FleetConfig, MineConfig, ScenarioSpec};
use minedes::dispatch::SchedulerKind;
use minedes::env::MineEnv;
use proptest::prelude::*;

fn small_env(shift: f64) -> MineEnv {
    let mut cfg = MineConfig::default();
    cfg.fleet = FleetConfig::with_counts(12, 4, 2, 1);
    cfg.simulation.shift_minutes = shift;
    MineEnv::new(cfg, ScenarioSpec::bundled("C").unwrap()).unwrap()
}

#[test]
fn full_episode_bookkeeping() {
    let mut env = MineEnv::new(MineConfig::default(), ScenarioSpec::bundled("F").unwrap()).unwrap();
    let mut t = env.reset(42).unwrap();
    let mut observations = 1;
    let mut actions = 0;
    let mut clock = t.clock;
    while !t.done {
        assert!(t.obs.iter().all(|x| (0.0..=1.0).contains(x)), "obs out of range at {clock}");
        assert_eq!(t.obs.len(), env.obs_dim());
        let a = (actions % 8) as u32 + 1;
        t = env.step(a).unwrap();
        actions += 1;
        observations += 1;
        assert!(t.clock >= clock);
        clock = t.clock;
        if !t.done {
            assert!((-1.0..=0.0).contains(&t.reward));
        }
    }
    assert_eq!(observations, actions + 1);
    assert!(t.truck.is_none());
    assert_eq!(env.immediate_rewards().len(), actions);
    let epi = t.info.reward_breakdown.r_epi;
    let g = env.config().reward.discount;
    let rs = env.immediate_rewards();
    let want = rs.iter().enumerate().map(|(i, r)| g.powi(i as i32) * r).sum::<f64>()
        + g.powi(rs.len() as i32 - 1) * epi;
    assert!((env.episode_return().unwrap() - want).abs() < 1e-9);
    assert!(env.step(1).is_err());
}

#[test]
fn reset_replays_identically() {
    let run = |seed| {
        let mut env = small_env(160.0);
        let mut t = env.reset(seed).unwrap();
        let mut trace = vec![t.obs.clone()];
        while !t.done {
            t = env.step(2).unwrap();
            trace.push(t.obs.clone());
        }
        (trace, env.episode_return())
    };
    assert_eq!(run(8), run(8));
    assert_ne!(run(8).0, run(9).0);
}

#[test]
fn env_with_fixed_policy_matches_batch_runner() {
    let cfg = MineConfig::default();
    let scenario = ScenarioSpec::bundled("B").unwrap();
    let batch = run_shift(&cfg, &scenario, SchedulerKind::Fixed, 17, false).unwrap();
    let mut env = MineEnv::new(cfg, scenario).unwrap();
    let mut t = env.reset(17).unwrap();
    while let Some(truck) = t.truck {
        t = env.step(minedes::dispatch::fixed_assignment(truck, 8)).unwrap();
    }
    assert_eq!(env.world().unwrap().total_trips(), batch.kpi.total_trips);
    assert_eq!(env.episode_return(), batch.episode_return);
}

#[test]
fn reports_are_reproducible() {
    let matrix = TrialMatrix {
        schedulers: SchedulerKind::ALL.to_vec(),
        scenarios: vec![ScenarioSpec::bundled("A").unwrap(), ScenarioSpec::bundled("D").unwrap()],
        repeats: 3,
        base_seed: 5,
    };
    let cfg = MineConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (runs, failures) = run_trials(&matrix, &cfg, true);
        assert!(failures.is_empty());
        write_reports(&summarize(&matrix, &runs, failures), &runs, d.path()).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    // summary, table, two hourly series, plus kpi and events per run
    assert_eq!(names.len(), 4 + 2 * 18);
    for n in names {
        let a = std::fs::read(dirs[0].path().join(&n)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

proptest! {
    #[test]
    fn cohens_d_is_antisymmetric(
        a in proptest::collection::vec(0.0f64..1e4, 2..20),
        b in proptest::collection::vec(0.0f64..1e4, 2..20),
    ) {
        let ab = cohens_d(&a, &b).unwrap();
        let ba = cohens_d(&b, &a).unwrap();
        match (ab, ba) {
            (CohensD::Finite(x), CohensD::Finite(y)) => prop_assert!((x + y).abs() <= 1e-9 * x.abs().max(1.0)),
            (CohensD::Degenerate(x), CohensD::Degenerate(y)) => prop_assert_eq!(x, -y),
            other => prop_assert!(false, "mixed variants {:?}", other),
        }
    }

    #[test]
    fn cohens_d_is_shift_and_scale_invariant(
        a in proptest::collection::vec(0.0f64..100.0, 2..12),
        b in proptest::collection::vec(0.0f64..100.0, 2..12),
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
    ) {
        let t = |xs: &[f64]| xs.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
        if let (CohensD::Finite(x), CohensD::Finite(y)) = (cohens_d(&a, &b).unwrap(), cohens_d(&t(&a), &t(&b)).unwrap()) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn observations_stay_in_unit_box(seed in 0u64..500, actions in proptest::collection::vec(1u32..=4, 1..50)) {
        let mut env = small_env(160.0);
        let mut t = env.reset(seed).unwrap();
        let mut i = 0;
        while !t.done {
            prop_assert!(t.obs.iter().all(|x| (0.0..=1.0).contains(x)));
            t = env.step(actions[i % actions.len()]).unwrap();
            i += 1;
        }
        prop_assert!(t.obs.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(env.episode_return().unwrap().is_finite());
    }
}
