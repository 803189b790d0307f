use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ini, parse_bool, parse_value, ConfigError, MineConfig, Violation};
use crate::kernel::{DistributionSpec, Entity, RngStream, SimTime};

/// Failure-count and onset distributions used when
/// `randomized_failures = true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedFailures {
    pub shovels_to_fail: DistributionSpec,
    pub trucks_to_fail: DistributionSpec,
    pub shovel_onset: DistributionSpec,
    pub truck_onset: DistributionSpec,
}

impl Default for RandomizedFailures {
    fn default() -> Self {
        Self {
            shovels_to_fail: DistributionSpec::uniform(1.0, 5.0),
            trucks_to_fail: DistributionSpec::uniform(10.0, 30.0),
            shovel_onset: DistributionSpec::uniform(10.0, 45.0),
            truck_onset: DistributionSpec::uniform(10.0, 90.0),
        }
    }
}

/// A stress test: how many shovels and trucks fail permanently, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    pub shovels_to_fail: usize,
    pub trucks_to_fail: usize,
    pub shovel_onset_window: (f64, f64),
    pub truck_onset_window: (f64, f64),
    /// Repairable MTBF/MTTR breakdowns on every entity.
    pub background_breakdowns: bool,
    pub repeats: usize,
    pub randomized_failures: bool,
    pub randomized: RandomizedFailures,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            label: "A".into(),
            shovels_to_fail: 0,
            trucks_to_fail: 0,
            shovel_onset_window: (100.0, 150.0),
            truck_onset_window: (150.0, 200.0),
            background_breakdowns: false,
            repeats: 10,
            randomized_failures: false,
            randomized: RandomizedFailures::default(),
        }
    }
}

/// One resolved permanent failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub entity: Entity,
    pub onset: SimTime,
}

const BUNDLED: [(&str, &str); 6] = [
    ("A", include_str!("../../../../scenarios/scenario_A.ini")),
    ("B", include_str!("../../../../scenarios/scenario_B.ini")),
    ("C", include_str!("../../../../scenarios/scenario_C.ini")),
    ("D", include_str!("../../../../scenarios/scenario_D.ini")),
    ("E", include_str!("../../../../scenarios/scenario_E.ini")),
    ("F", include_str!("../../../../scenarios/scenario_F.ini")),
];

fn parse_window(entry: &ini::Entry) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = entry.value.split(',').map(str::trim).collect();
    let [lo, hi] = parts.as_slice() else {
        return Err(ConfigError::at(
            entry.line,
            format!("`{}` expects `lo, hi`", entry.key),
        ));
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| ConfigError::at(entry.line, format!("`{s}` is not a number")))
    };
    let (lo, hi) = (num(lo)?, num(hi)?);
    if !(lo >= 0.0 && hi >= lo) {
        return Err(ConfigError::at(
            entry.line,
            format!("window [{lo}, {hi}] must satisfy 0 <= lo <= hi"),
        ));
    }
    Ok((lo, hi))
}

/// Parse a `[scenario]` file.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ConfigError> {
    let mut spec = ScenarioSpec::default();
    for e in ini::read(text)? {
        if e.section != "scenario" {
            return Err(ConfigError::at(e.line, format!("unknown section [{}]", e.section)));
        }
        match e.key.as_str() {
            "label" => spec.label = e.value.clone(),
            "shovels_to_fail" => spec.shovels_to_fail = parse_value(&e)?,
            "trucks_to_fail" => spec.trucks_to_fail = parse_value(&e)?,
            "shovel_onset_window" => spec.shovel_onset_window = parse_window(&e)?,
            "truck_onset_window" => spec.truck_onset_window = parse_window(&e)?,
            "background_breakdowns" => spec.background_breakdowns = parse_bool(&e)?,
            "repeats" => {
                spec.repeats = parse_value(&e)?;
                if spec.repeats == 0 {
                    return Err(ConfigError::at(e.line, "repeats must be >= 1"));
                }
            }
            "randomized_failures" => spec.randomized_failures = parse_bool(&e)?,
            "shovels_to_fail_dist" => spec.randomized.shovels_to_fail = parse_value(&e)?,
            "trucks_to_fail_dist" => spec.randomized.trucks_to_fail = parse_value(&e)?,
            "shovel_onset_dist" => spec.randomized.shovel_onset = parse_value(&e)?,
            "truck_onset_dist" => spec.randomized.truck_onset = parse_value(&e)?,
            _ => {
                return Err(ConfigError::at(
                    e.line,
                    format!("unknown key `{}` in section [scenario]", e.key),
                ))
            }
        }
    }
    Ok(spec)
}

impl ScenarioSpec {
    /// One of the shipped scenarios `A`..`F`.
    pub fn bundled(label: &str) -> Option<ScenarioSpec> {
        let label = label.trim().to_ascii_uppercase();
        BUNDLED
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, text)| parse_scenario(text).expect("bundled scenario parses"))
    }

    pub fn bundled_labels() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(l, _)| *l)
    }

    pub fn violations_against(&self, cfg: &MineConfig) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &str, message: String| {
            out.push(Violation {
                field: field.into(),
                message,
            })
        };
        if self.shovels_to_fail > cfg.fleet.shovels {
            push(
                "shovels_to_fail",
                format!("{} exceeds the {} configured shovels", self.shovels_to_fail, cfg.fleet.shovels),
            );
        }
        if self.trucks_to_fail > cfg.fleet.trucks {
            push(
                "trucks_to_fail",
                format!("{} exceeds the {} configured trucks", self.trucks_to_fail, cfg.fleet.trucks),
            );
        }
        let shift = cfg.simulation.shift_minutes;
        // a window only matters when something can fail inside it
        for (field, (lo, hi), used) in [
            ("shovel_onset_window", self.shovel_onset_window, self.shovels_to_fail > 0),
            ("truck_onset_window", self.truck_onset_window, self.trucks_to_fail > 0),
        ] {
            if used && !self.randomized_failures && !(lo >= 0.0 && lo <= hi && hi <= shift) {
                push(field, format!("[{lo}, {hi}] must lie within [0, {shift}]"));
            }
        }
        if self.repeats == 0 {
            push("repeats", "must be >= 1".into());
        }
        out
    }

    /// Draw the permanent failures for one run: distinct entities chosen
    /// uniformly without replacement (selection stream), onsets uniform in
    /// their windows (timing stream). Shovels are drawn before trucks.
    pub fn resolve_injections(
        &self,
        cfg: &MineConfig,
        selection: &mut RngStream,
        timing: &mut RngStream,
    ) -> Vec<FailureInjection> {
        let shift = cfg.simulation.shift_minutes;
        let (n_shovels, n_trucks, shovel_onset, truck_onset) = if self.randomized_failures {
            let r = &self.randomized;
            let count = |d: &DistributionSpec, rng: &mut RngStream, max: usize| {
                (d.sample(rng).round().max(0.0) as usize).min(max)
            };
            (
                count(&r.shovels_to_fail, selection, cfg.fleet.shovels),
                count(&r.trucks_to_fail, selection, cfg.fleet.trucks),
                r.shovel_onset,
                r.truck_onset,
            )
        } else {
            let window = |(lo, hi): (f64, f64)| DistributionSpec::uniform(lo, hi);
            (
                self.shovels_to_fail.min(cfg.fleet.shovels),
                self.trucks_to_fail.min(cfg.fleet.trucks),
                window(self.shovel_onset_window),
                window(self.truck_onset_window),
            )
        };

        let mut out = Vec::with_capacity(n_shovels + n_trucks);
        for id in choose_distinct(cfg.fleet.shovels, n_shovels, selection) {
            let onset = shovel_onset.sample(timing).clamp(0.0, shift);
            out.push(FailureInjection {
                entity: Entity::Shovel(id),
                onset: SimTime::from_minutes(onset),
            });
        }
        for id in choose_distinct(cfg.fleet.trucks, n_trucks, selection) {
            let onset = truck_onset.sample(timing).clamp(0.0, shift);
            out.push(FailureInjection {
                entity: Entity::Truck(id),
                onset: SimTime::from_minutes(onset),
            });
        }
        out
    }

    pub fn to_ini(&self) -> String {
        let mut s = String::from("[scenario]\n");
        let _ = writeln!(s, "label = {}", self.label);
        let _ = writeln!(s, "shovels_to_fail = {}", self.shovels_to_fail);
        let _ = writeln!(s, "trucks_to_fail = {}", self.trucks_to_fail);
        let _ = writeln!(s, "shovel_onset_window = {}, {}", self.shovel_onset_window.0, self.shovel_onset_window.1);
        let _ = writeln!(s, "truck_onset_window = {}, {}", self.truck_onset_window.0, self.truck_onset_window.1);
        let _ = writeln!(s, "background_breakdowns = {}", self.background_breakdowns);
        let _ = writeln!(s, "repeats = {}", self.repeats);
        let _ = writeln!(s, "randomized_failures = {}", self.randomized_failures);
        let r = &self.randomized;
        let _ = writeln!(s, "shovels_to_fail_dist = {}", r.shovels_to_fail);
        let _ = writeln!(s, "trucks_to_fail_dist = {}", r.trucks_to_fail);
        let _ = writeln!(s, "shovel_onset_dist = {}", r.shovel_onset);
        let _ = writeln!(s, "truck_onset_dist = {}", r.truck_onset);
        s
    }
}

/// Partial Fisher-Yates: `k` distinct ids from `1..=n`, one uniform per pick.
fn choose_distinct(n: usize, k: usize, rng: &mut RngStream) -> Vec<u32> {
    let mut pool: Vec<u32> = (1..=n as u32).collect();
    for i in 0..k {
        let j = i + rng.index_below(n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
