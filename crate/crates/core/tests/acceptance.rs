//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use minedes::bench::{pooled_sd, run_shift, run_trials, summarize, RunOutcome, Summary, TrialMatrix};
use minedes::bridge::{replay, ReplayVerdict, ServerMessage, Session, SessionPhase};
use minedes::config::{parse_config, FleetConfig, MineConfig, ScenarioSpec};
use minedes::dispatch::{fixed_assignment, least_loaded, RandomScheduler, Scheduler, SchedulerKind};
use minedes::env::reward::{
    compose_immediate, diversity_score, episodic_reward, exp_weights, immediate_reward, streak_penalty,
    total_return, DecisionWindowState, RewardParams,
};
use minedes::env::MineEnv;
use minedes::kernel::{DistributionSpec, Entity, SimTime};
use minedes::world::{World, WorldOptions};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn determinism_and_runtime() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_minedes"))
            .args(["run", "--scenario", "E", "--seed", "42", "--scheduler", "random", "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("run {run} exited with {status}"))?;
        let events = std::fs::read(out.join("events.log")).map_err(|e| e.to_string())?;
        let kpi = std::fs::read(out.join("kpi.json")).map_err(|e| e.to_string())?;
        outputs.push((events, kpi));
    }
    ensure(outputs[0].0 == outputs[1].0, || "event logs differ".into())?;
    ensure(outputs[0].1 == outputs[1].1, || "KPI reports differ".into())?;
    ensure(!outputs[0].0.is_empty(), || "empty event log".into())?;

    let cfg = MineConfig::default();
    let started = Instant::now();
    run_shift(&cfg, &ScenarioSpec::bundled("A").unwrap(), SchedulerKind::EqualQueue, 42, true)
        .map_err(|e| e.to_string())?;
    let shift = started.elapsed();
    ensure(shift < Duration::from_secs(2), || format!("one shift took {shift:.2?}"))?;

    let started = Instant::now();
    let (runs, failures) = run_trials(&full_matrix(), &cfg, false);
    let matrix = started.elapsed();
    ensure(failures.is_empty() && runs.len() == 180, || format!("{} failures", failures.len()))?;
    ensure(matrix < Duration::from_secs(300), || format!("matrix took {matrix:.2?}"))?;
    Ok(format!(
        "logs and KPI byte-identical ({} event bytes); shift {shift:.2?}; 180-run matrix {matrix:.2?}",
        outputs[0].0.len()
    ))
}

// ---------------------------------------------------------------- 2

fn reward_math_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2024);

    let w = exp_weights(5, 0.5, 5).map_err(|e| e.to_string())?;
    let raw: Vec<f64> = (1..=5).map(|j| (0.5 * j as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    for (got, r) in w.iter().zip(&raw) {
        ensure((got - r / total).abs() <= 1e-12, || format!("exp weight {got} vs {}", r / total))?;
    }

    let rho = 1e-10;
    let mut worst_div: f64 = 0.0;
    for _ in 0..1000 {
        let sh = rng.random_range(2..=16usize);
        let len = rng.random_range(1..=30usize);
        let window: Vec<u32> = (0..len).map(|_| rng.random_range(1..=sh as u32)).collect();
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for &a in &window {
            *counts.entry(a).or_default() += 1;
        }
        let h: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / len as f64;
                -p * (p + rho).log2()
            })
            .sum();
        let oracle = (h / (sh as f64).log2()).clamp(0.0, 1.0);
        let got = diversity_score(&window, sh, rho);
        worst_div = worst_div.max((got - oracle).abs());
        ensure((got - oracle).abs() <= 1e-9, || format!("diversity {got} vs {oracle} for {window:?}"))?;
    }

    for _ in 0..1000 {
        let len = rng.random_range(0..=15usize);
        let window: Vec<u32> = (0..len).map(|_| rng.random_range(1..=4u32)).collect();
        let mut pairs = 0usize;
        for i in 1..window.len() {
            if window[i] == window[i - 1] {
                pairs += 1;
            }
        }
        let oracle = if window.len() < 2 { 0.0 } else { pairs as f64 / (window.len() - 1) as f64 };
        ensure(streak_penalty(&window) == oracle, || format!("streak mismatch on {window:?}"))?;
    }

    for _ in 0..1000 {
        let n = rng.random_range(1..=40usize);
        let rewards: Vec<f64> = (0..n).map(|_| -rng.random::<f64>()).collect();
        let epi = rng.random_range(-1.0..1.0);
        let g = rng.random::<f64>();
        let mut oracle = 0.0;
        for (d, r) in rewards.iter().enumerate() {
            oracle += g.powi(d as i32) * r;
        }
        oracle += g.powi(n as i32 - 1) * epi;
        let got = total_return(&rewards, epi, g).map_err(|e| e.to_string())?;
        ensure((got - oracle).abs() <= 1e-12, || format!("return {got} vs {oracle}"))?;
    }

    let params = RewardParams::default();
    for _ in 0..1000 {
        let b = compose_immediate(rng.random(), rng.random(), rng.random(), rng.random(), &params);
        ensure((-1.0..=0.0).contains(&b.r_imm), || format!("r_imm {} out of range", b.r_imm))?;
    }
    for _ in 0..200 {
        let sh = rng.random_range(1..=16usize);
        let mut window = DecisionWindowState::new(&params, sh);
        for _ in 0..rng.random_range(1..60) {
            window.record_assignment(rng.random_range(1..=sh as u32));
            window.push_decision_point(rng.random_range(0.0..200.0), rng.random_range(0.0..60.0));
            let b = immediate_reward(&window, &params);
            ensure((-1.0..=0.0).contains(&b.r_imm), || format!("windowed r_imm {} out of range", b.r_imm))?;
        }
    }
    Ok(format!("5 oracles agree (max diversity error {worst_div:.1e})"))
}

// ---------------------------------------------------------------- 3

fn episodic_branch_table() -> Outcome {
    let p = RewardParams::default();
    // (P_ratio, d_final, expected bonus)
    let table = [
        (0.95, 0.66, p.b1),
        (0.95, 0.65, p.b2),
        (0.95, 0.50, 0.0),
        (0.90, 0.66, p.b2),
        (0.90, 0.65, p.b2),
        (0.90, 0.50, 0.0),
        (0.89, 0.66, 0.0),
        (0.89, 0.65, 0.0),
        (0.89, 0.50, 0.0),
    ];
    for (ratio, d, bonus) in table {
        let e = episodic_reward(ratio, 1.0, d, &p).map_err(|e| e.to_string())?;
        ensure(e.bonus == bonus, || format!("P={ratio} d={d}: bonus {} expected {bonus}", e.bonus))?;
        let r = p.omega1 * ratio - p.omega2 * (1.0 - d) + bonus;
        ensure((e.r_epi - r).abs() <= 1e-12, || format!("P={ratio} d={d}: r_epi {} vs {r}", e.r_epi))?;
    }
    Ok("9 combinations select the expected branch".into())
}

// ---------------------------------------------------------------- 4

fn scheduler_contracts() -> Outcome {
    for sh in 1..=16usize {
        for i in 1..=64u32 {
            let want = (i - 1) % sh as u32 + 1;
            ensure(fixed_assignment(i, sh) == want, || format!("fixed({i}, {sh})"))?;
        }
    }

    let world = World::new(&MineConfig::default(), &ScenarioSpec::bundled("A").unwrap(), 1, WorldOptions::default())
        .map_err(|e| e.to_string())?;
    let mut random = RandomScheduler::new(42, false);
    let mut counts = [0u64; 8];
    let n = 100_000u64;
    for _ in 0..n {
        counts[random.decide(&world, 1) as usize - 1] += 1;
    }
    let expected = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new(7.0).unwrap().cdf(chi2);
    ensure(p_value > 0.001, || format!("chi2 {chi2:.2}, p {p_value:.2e}"))?;

    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..10_000 {
        let sh = rng.random_range(1..=16usize);
        let q: Vec<u32> = (0..sh).map(|_| rng.random_range(0..6)).collect();
        let min = *q.iter().min().unwrap();
        let oracle = q.iter().position(|&x| x == min).unwrap() as u32 + 1;
        ensure(least_loaded(&q, None) == oracle, || format!("equal-queue on {q:?}"))?;
    }
    Ok(format!("fixed 64x16 exact; random chi2 {chi2:.2} (p {p_value:.3}); equal-queue 10^4 vectors"))
}

// ---------------------------------------------------------------- 5

fn initial_state() -> Outcome {
    let cfg = MineConfig::default();
    let scenario = ScenarioSpec::bundled("A").unwrap();
    let world = World::new(&cfg, &scenario, 42, WorldOptions::default()).map_err(|e| e.to_string())?;
    let queued: u32 = world.waiting_counts().iter().sum();
    let serving = world.shovels().iter().filter(|s| s.res.busy_with.is_some()).count();
    ensure(queued == 52 && serving == 8, || format!("{queued} queued, {serving} in service"))?;
    let mut env = MineEnv::new(cfg, scenario).map_err(|e| e.to_string())?;
    let first = env.reset(42).map_err(|e| e.to_string())?;
    ensure(first.obs.len() == 68, || format!("observation length {}", first.obs.len()))?;
    ensure(first.obs.iter().all(|x| (0.0..=1.0).contains(x)), || "observation outside [0, 1]".into())?;
    Ok("52 queued, 8 in service, observation length 68".into())
}

// ---------------------------------------------------------------- 6, 7

fn full_matrix() -> TrialMatrix {
    TrialMatrix {
        schedulers: SchedulerKind::ALL.to_vec(),
        scenarios: ["A", "B", "C", "D", "E", "F"]
            .iter()
            .map(|l| ScenarioSpec::bundled(l).unwrap())
            .collect(),
        repeats: 10,
        base_seed: 42,
    }
}

fn benchmark() -> (Vec<RunOutcome>, Summary) {
    let matrix = full_matrix();
    let (runs, failures) = run_trials(&matrix, &MineConfig::default(), false);
    let summary = summarize(&matrix, &runs, failures);
    (runs, summary)
}

fn directional_benchmark(summary: &Summary) -> Outcome {
    ensure(summary.failures.is_empty(), || format!("{} failed runs", summary.failures.len()))?;
    let cell = |sc: &str, k: SchedulerKind| summary.cell(sc, k).expect("cell present");
    let mut notes = Vec::new();
    for sc in ["A", "B", "C", "D", "E", "F"] {
        let (f, r) = (cell(sc, SchedulerKind::Fixed), cell(sc, SchedulerKind::Random));
        ensure(f.trips_mean >= r.trips_mean, || {
            format!("{sc}: fixed {} < random {} trips", f.trips_mean, r.trips_mean)
        })?;
    }
    notes.push("fixed >= random trips in A-F".to_string());
    for k in SchedulerKind::ALL {
        let a = cell("A", k);
        for sc in ["B", "C", "E"] {
            let x = cell(sc, k);
            let sd = pooled_sd(&a.production, &x.production).unwrap_or(0.0);
            ensure(a.mean + sd >= x.mean, || {
                format!("{k}: A {:.1} + {sd:.1} < {sc} {:.1}", a.mean, x.mean)
            })?;
        }
    }
    notes.push("A >= B, C, E within pooled SD".to_string());
    // hours 2 and 3 cover minutes 60-180, which contain the 100-150 window
    for k in SchedulerKind::ALL {
        let a = &cell("A", k).hourly_max_queue;
        for sc in ["C", "F"] {
            let x = &cell(sc, k).hourly_max_queue;
            let rise = (1..=2).map(|h| x[h] - a[h]).fold(f64::MIN, f64::max);
            ensure(rise > 0.0, || format!("{k} {sc}: no max-queue rise over A in hours 2-3 ({x:?} vs {a:?})"))?;
        }
    }
    notes.push("C/F max queue above A in failure window".to_string());
    Ok(notes.join("; "))
}

fn kpi_identities(runs: &[RunOutcome], cfg: &MineConfig) -> Outcome {
    let lo = cfg.fleet.payload;
    for r in runs {
        let k = &r.kpi;
        let name = r.run_name();
        ensure(k.production == k.total_trips as f64 * lo, || format!("{name}: P_Vol != N*LO"))?;
        ensure(k.raw_trips_by_hour.iter().sum::<u64>() == k.total_trips, || format!("{name}: hourly sum"))?;
        ensure(k.max_queue_by_hour.len() == 6, || format!("{name}: {} hours", k.max_queue_by_hour.len()))?;
        for (h, (avg, max)) in k.avg_queue_by_hour.iter().zip(&k.max_queue_by_hour).enumerate() {
            ensure(avg <= max, || format!("{name}: hour {} avg {avg} > max {max}", h + 1))?;
        }
        if let Some(fc) = k.fuel_per_ton {
            let want = k.fuel_rates.unit() / lo;
            ensure((fc - want).abs() <= 1e-12 * want.max(1.0), || format!("{name}: fuel/t {fc} vs {want}"))?;
        }
    }
    Ok(format!("{} runs satisfy all four identities", runs.len()))
}

// ---------------------------------------------------------------- 8

fn preemption_arithmetic() -> Outcome {
    let mut cfg = MineConfig::default();
    let c = DistributionSpec::constant;
    let d = &mut cfg.distributions;
    d.loading = [c(6.0), c(9.0), c(12.0)];
    d.dump_time = c(5.0);
    d.crusher_time = c(15.0);
    d.travel_to_dump = [c(18.0), c(12.0), c(8.0)];
    d.travel_to_crusher = [c(8.0), c(15.0), c(22.0)];
    cfg.fleet = FleetConfig::with_counts(1, 1, 1, 1);
    let scenario = ScenarioSpec::bundled("A").unwrap();

    let first_dump = |cfg: &MineConfig, breakdown: Option<(Entity, f64, f64)>| -> Result<f64, String> {
        let mut w = World::new(cfg, &scenario, 9, WorldOptions::default()).map_err(|e| e.to_string())?;
        if let Some((e, at, dur)) = breakdown {
            w.schedule_breakdown(e, SimTime::from_minutes(at), Some(dur)).map_err(|e| e.to_string())?;
        }
        w.next_decision().map_err(|e| e.to_string())?.ok_or("no decision")?;
        Ok(w.trips()[0].completed_at.minutes())
    };

    let mut checked = 0;
    for class in 1..=3u8 {
        cfg.fleet.shovel_classes = vec![class];
        cfg.fleet.shovel_zones = vec![class];
        let load = [6.0, 9.0, 12.0][class as usize - 1];
        let base = first_dump(&cfg, None)?;
        for entity in [Entity::Shovel(1), Entity::Truck(1)] {
            for (frac, dur) in [(0.25, 3.0), (0.5, 17.5), (0.9, 42.0)] {
                let at = load * frac;
                let delayed = first_dump(&cfg, Some((entity, at, dur)))?;
                ensure((delayed - base - dur).abs() <= 1e-9, || {
                    format!("{entity} down at {at} for {dur}: dump at {delayed}, baseline {base}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} mid-load breakdowns delay the dump by exactly D"))
}

// ---------------------------------------------------------------- 9

fn protocol_conformance() -> Outcome {
    let golden_cfg = parse_config(include_str!("data/golden.ini")).map_err(|e| e.to_string())?;
    let golden = include_str!("data/golden.transcript");
    let mut session =
        Session::new(MineEnv::new(golden_cfg, ScenarioSpec::bundled("A").unwrap()).map_err(|e| e.to_string())?);
    let verdict = replay(&mut session, golden);
    ensure(verdict == ReplayVerdict::Identical, || format!("golden replay: {verdict:?}"))?;

    let make = || {
        let mut cfg = MineConfig::default();
        cfg.fleet = FleetConfig::with_counts(8, 3, 2, 1);
        cfg.simulation.shift_minutes = 40.0;
        Session::new(MineEnv::new(cfg, ScenarioSpec::bundled("A").unwrap()).unwrap())
    };
    let mut rng = StdRng::seed_from_u64(9);
    let mut rejected_actions = 0;
    for session_no in 0..100 {
        let mut s = make();
        let mut accepted = Vec::new();
        for _ in 0..rng.random_range(1..150) {
            let line = match rng.random_range(0..20) {
                0 => format!(r#"{{"type":"hello","protocol":{}}}"#, rng.random_range(0..3)),
                1 | 2 => format!(r#"{{"type":"reset","seed":{}}}"#, rng.random_range(0..4)),
                3 => r#"{"type":"bye"}"#.to_string(),
                4 => "not json".to_string(),
                _ => format!(r#"{{"type":"action","shovel_id":{}}}"#, rng.random_range(0..5)),
            };
            let before = s.phase();
            let reply = s.handle_line(&line);
            let is_action = line.contains("action");
            match &reply {
                ServerMessage::Error { phase, .. } => {
                    ensure(*phase == before && s.phase() == before, || {
                        format!("session {session_no}: error changed phase")
                    })?;
                    if is_action {
                        rejected_actions += 1;
                    }
                }
                ServerMessage::Transition { .. } => {
                    ensure(before == SessionPhase::AwaitingAction, || {
                        format!("session {session_no}: action accepted in {before:?}")
                    })?;
                    accepted.push((line, reply));
                }
                _ => accepted.push((line, reply)),
            }
        }
        let mut clean = make();
        for (line, reply) in &accepted {
            ensure(&clean.handle_line(line) == reply, || {
                format!("session {session_no}: rejected messages altered later replies")
            })?;
        }
    }
    Ok(format!("golden replay identical; 100 fuzzed sessions alternate; {rejected_actions} rejected actions left no trace"))
}

// ----------------------------------------------------------------

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, outcome: std::thread::Result<Outcome>| {
        let line = match outcome {
            Ok(Ok(detail)) => format!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                format!("FAIL  {name}: {why}")
            }
            Err(_) => {
                failed += 1;
                format!("FAIL  {name}: panicked")
            }
        };
        println!("{line}");
    };
    let guard = |f: &dyn Fn() -> Outcome| panic::catch_unwind(AssertUnwindSafe(f));

    println!("acceptance criteria");
    report("determinism-and-runtime", guard(&determinism_and_runtime));
    report("reward-math-oracles", guard(&reward_math_oracles));
    report("episodic-branch-table", guard(&episodic_branch_table));
    report("scheduler-contracts", guard(&scheduler_contracts));
    report("initial-state", guard(&initial_state));
    let bench = panic::catch_unwind(benchmark);
    match &bench {
        Ok((runs, summary)) => {
            report("directional-benchmark", guard(&|| directional_benchmark(summary)));
            report("kpi-identities", guard(&|| kpi_identities(runs, &MineConfig::default())));
        }
        Err(_) => {
            report("directional-benchmark", Err(Box::new("benchmark panicked")));
            report("kpi-identities", Err(Box::new("benchmark panicked")));
        }
    }
    report("preemption-arithmetic", guard(&preemption_arithmetic));
    report("protocol-conformance", guard(&protocol_conformance));
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
