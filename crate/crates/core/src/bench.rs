//! Repeated seeded trials over schedulers × scenarios, with summary
//! statistics and report files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{MineConfig, ScenarioSpec};
use crate::dispatch::SchedulerKind;
use crate::env::{EnvError, MineEnv};
use crate::kpi::{aggregate_runs, mean, sample_sd, KpiReport};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample of size {0} is too small (need at least 2)")]
    TooSmall(usize),
}

/// Standardized mean difference with pooled sample SD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CohensD {
    Finite(f64),
    /// Pooled SD is zero while the means differ; carries the sign.
    Degenerate(f64),
}

impl CohensD {
    pub fn value(self) -> f64 {
        match self {
            CohensD::Finite(d) => d,
            CohensD::Degenerate(sign) => sign * f64::INFINITY,
        }
    }
}

impl fmt::Display for CohensD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CohensD::Finite(d) => write!(f, "{d:.4}"),
            CohensD::Degenerate(s) if *s > 0.0 => f.write_str("+degenerate"),
            CohensD::Degenerate(_) => f.write_str("-degenerate"),
        }
    }
}

impl Serialize for CohensD {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CohensD::Finite(d) => s.serialize_f64(*d),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<CohensD, StatsError> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(StatsError::TooSmall(xs.len()));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a).unwrap_or(0.0), mean(b).unwrap_or(0.0));
    let (sa, sb) = (sample_sd(a).unwrap_or(0.0), sample_sd(b).unwrap_or(0.0));
    let pooled = (((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0)).sqrt();
    let diff = ma - mb;
    if pooled > 0.0 {
        Ok(CohensD::Finite(diff / pooled))
    } else if diff == 0.0 {
        Ok(CohensD::Finite(0.0))
    } else {
        Ok(CohensD::Degenerate(diff.signum()))
    }
}

/// Pooled sample SD of two samples; `None` below two values each.
pub fn pooled_sd(a: &[f64], b: &[f64]) -> Option<f64> {
    let (sa, sb) = (sample_sd(a)?, sample_sd(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Some((((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0)).sqrt())
}

/// One completed shift.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub scheduler: SchedulerKind,
    pub trial: usize,
    pub seed: u64,
    pub decisions: usize,
    pub episode_return: Option<f64>,
    pub kpi: KpiReport,
    #[serde(skip)]
    pub event_log: Option<Vec<String>>,
}

impl RunOutcome {
    pub fn run_name(&self) -> String {
        format!("{}_{}_{}", self.scenario, self.scheduler, self.trial)
    }
}

/// Simulate one shift under a built-in scheduler.
pub fn run_shift(
    cfg: &MineConfig,
    scenario: &ScenarioSpec,
    scheduler: SchedulerKind,
    seed: u64,
    log_events: bool,
) -> Result<RunOutcome, EnvError> {
    let mut env = MineEnv::new(cfg.clone(), scenario.clone())?.with_event_log(log_events);
    let mut policy = scheduler.build(seed, cfg.simulation.mask_offline);
    let mut t = env.reset(seed)?;
    let mut decisions = 0;
    while let Some(truck) = t.truck {
        let world = env.world().expect("reset creates the world");
        let shovel = policy.decide(world, truck);
        t = env.step(shovel)?;
        decisions += 1;
    }
    let world = env.world().expect("reset creates the world");
    Ok(RunOutcome {
        scenario: scenario.label.clone(),
        scheduler,
        trial: 0,
        seed,
        decisions,
        episode_return: env.episode_return(),
        kpi: KpiReport::from_world(world),
        event_log: world.event_log().map(<[String]>::to_vec),
    })
}

#[derive(Debug, Clone)]
pub struct TrialMatrix {
    pub schedulers: Vec<SchedulerKind>,
    pub scenarios: Vec<ScenarioSpec>,
    pub repeats: usize,
    pub base_seed: u64,
}

impl TrialMatrix {
    /// Trial `i` uses `base + i` for every scheduler and scenario.
    pub fn seed(&self, trial: usize) -> u64 {
        self.base_seed + trial as u64
    }

    fn jobs(&self) -> Vec<(usize, SchedulerKind, usize)> {
        let mut jobs = Vec::new();
        for si in 0..self.scenarios.len() {
            for &k in &self.schedulers {
                for trial in 0..self.repeats {
                    jobs.push((si, k, trial));
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub scenario: String,
    pub scheduler: SchedulerKind,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

/// Run every cell of the matrix in parallel. Output order is fixed:
/// scenario, then scheduler, then trial.
pub fn run_trials(
    matrix: &TrialMatrix,
    cfg: &MineConfig,
    log_events: bool,
) -> (Vec<RunOutcome>, Vec<RunFailure>) {
    let results: Vec<Result<RunOutcome, RunFailure>> = matrix
        .jobs()
        .into_par_iter()
        .map(|(si, kind, trial)| {
            let scenario = &matrix.scenarios[si];
            let seed = matrix.seed(trial);
            run_shift(cfg, scenario, kind, seed, log_events)
                .map(|mut r| {
                    r.trial = trial;
                    r
                })
                .map_err(|e| RunFailure {
                    scenario: scenario.label.clone(),
                    scheduler: kind,
                    trial,
                    seed,
                    message: e.to_string(),
                })
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(o) => ok.push(o),
            Err(f) => failed.push(f),
        }
    }
    (ok, failed)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub scenario: String,
    pub scheduler: SchedulerKind,
    pub n: usize,
    pub production: Vec<f64>,
    pub mean: f64,
    pub sd: Option<f64>,
    pub trips_mean: f64,
    pub trips_sd: Option<f64>,
    /// Effect size of this scheduler's production against each other
    /// scheduler in the same scenario.
    pub d_vs: BTreeMap<SchedulerKind, Option<CohensD>>,
    pub hourly_trips: Vec<f64>,
    pub hourly_max_queue: Vec<f64>,
    pub hourly_avg_queue: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub repeats: usize,
    pub base_seed: u64,
    pub cells: Vec<CellStats>,
    pub failures: Vec<RunFailure>,
}

impl Summary {
    pub fn cell(&self, scenario: &str, scheduler: SchedulerKind) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.scheduler == scheduler)
    }
}

/// Aggregate per (scenario, scheduler). Cells with a failed run are left out.
pub fn summarize(matrix: &TrialMatrix, runs: &[RunOutcome], failures: Vec<RunFailure>) -> Summary {
    let failed = |sc: &str, k: SchedulerKind| failures.iter().any(|f| f.scenario == sc && f.scheduler == k);
    let mut cells = Vec::new();
    for scenario in &matrix.scenarios {
        let label = scenario.label.as_str();
        let mut per_sched: BTreeMap<SchedulerKind, Vec<&RunOutcome>> = BTreeMap::new();
        for &k in &matrix.schedulers {
            if failed(label, k) {
                continue;
            }
            per_sched.insert(k, runs.iter().filter(|r| r.scenario == label && r.scheduler == k).collect());
        }
        let production = |k: &SchedulerKind| -> Vec<f64> {
            per_sched[k].iter().map(|r| r.kpi.production).collect()
        };
        for &k in &matrix.schedulers {
            let Some(rs) = per_sched.get(&k) else { continue };
            let prod = production(&k);
            let trips: Vec<f64> = rs.iter().map(|r| r.kpi.total_trips as f64).collect();
            let series = |f: fn(&KpiReport) -> &Vec<f64>| {
                aggregate_runs(&rs.iter().map(|r| f(&r.kpi).clone()).collect::<Vec<_>>()).unwrap_or_default()
            };
            let d_vs = per_sched
                .keys()
                .filter(|&&o| o != k)
                .map(|o| (*o, cohens_d(&prod, &production(o)).ok()))
                .collect();
            cells.push(CellStats {
                scenario: label.to_string(),
                scheduler: k,
                n: rs.len(),
                mean: mean(&prod).unwrap_or(0.0),
                sd: sample_sd(&prod),
                trips_mean: mean(&trips).unwrap_or(0.0),
                trips_sd: sample_sd(&trips),
                d_vs,
                hourly_trips: series(|k| &k.trips_by_hour),
                hourly_max_queue: series(|k| &k.max_queue_by_hour),
                hourly_avg_queue: series(|k| &k.avg_queue_by_hour),
                production: prod,
            });
        }
    }
    Summary {
        repeats: matrix.repeats,
        base_seed: matrix.base_seed,
        cells,
        failures,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn d_text(c: &CellStats, k: SchedulerKind) -> String {
    match c.d_vs.get(&k) {
        Some(Some(d)) => d.to_string(),
        _ => String::new(),
    }
}

/// Production per cell in the layout scenario, scheduler, mean, sd, d vs
/// random, d vs fixed.
pub fn table_csv(summary: &Summary) -> String {
    let mut s = String::from("scenario,scheduler,mean,sd,d_vs_random,d_vs_fixed\n");
    for c in &summary.cells {
        s += &format!(
            "{},{},{:.4},{},{},{}\n",
            c.scenario,
            c.scheduler,
            c.mean,
            opt(c.sd),
            d_text(c, SchedulerKind::Random),
            d_text(c, SchedulerKind::Fixed)
        );
    }
    s
}

pub fn hourly_trips_csv(summary: &Summary) -> String {
    let mut s = String::from("hour,scheduler,scenario,mean_trips\n");
    for c in &summary.cells {
        for (h, v) in c.hourly_trips.iter().enumerate() {
            s += &format!("{},{},{},{:.4}\n", h + 1, c.scheduler, c.scenario, v);
        }
    }
    s
}

pub fn hourly_queues_csv(summary: &Summary) -> String {
    let mut s = String::from("hour,scheduler,scenario,mean_max_queue,mean_avg_queue\n");
    for c in &summary.cells {
        for (h, (mx, av)) in c.hourly_max_queue.iter().zip(&c.hourly_avg_queue).enumerate() {
            s += &format!("{},{},{},{:.4},{:.4}\n", h + 1, c.scheduler, c.scenario, mx, av);
        }
    }
    s
}

/// Write the summary, the CSV series, and one KPI file and event log per run.
pub fn write_reports(summary: &Summary, runs: &[RunOutcome], out: &Path) -> io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    fs::write(out.join("table6.csv"), table_csv(summary))?;
    fs::write(out.join("hourly_trips.csv"), hourly_trips_csv(summary))?;
    fs::write(out.join("hourly_queues.csv"), hourly_queues_csv(summary))?;
    for r in runs {
        let name = r.run_name();
        fs::write(out.join(format!("kpi_{name}.json")), serde_json::to_string_pretty(r)? + "\n")?;
        if let Some(log) = &r.event_log {
            fs::write(out.join(format!("events_{name}.log")), log.join("\n") + "\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohens_d_examples() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), CohensD::Finite(0.0));
        let d = cohens_d(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap().value();
        assert!((d + 3.0).abs() < 1e-12);
        assert_eq!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), CohensD::Degenerate(-1.0));
        assert_eq!(cohens_d(&[1.0], &[2.0, 3.0]), Err(StatsError::TooSmall(1)));
    }

    #[test]
    fn pooled_d_from_summary_figures() {
        // nine runs each with means 9000 / 8111.11 and SDs 161.60 / 518.28
        let spread = |m: f64, sd: f64| -> Vec<f64> {
            (-4..=4).map(|k| m + sd * f64::from(k) / 7.5f64.sqrt()).collect()
        };
        let a = spread(9000.0, 161.60);
        let b = spread(8111.11, 518.28);
        assert!((sample_sd(&a).unwrap() - 161.60).abs() < 1e-9);
        let d = cohens_d(&a, &b).unwrap().value();
        assert!((d - 2.32).abs() < 0.005, "{d}");
    }
}
