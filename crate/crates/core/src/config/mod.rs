//! Mine configuration and failure scenarios.
//!
//! Both files are INI-style: `[section]` headers followed by `key = value`
//! lines. Omitted keys keep their defaults, which describe the reference
//! 8-shovel / 60-truck operation. Distribution values use the literal form
//! `Family(args)`, e.g. `Normal(6, 1)`; times are in minutes.

mod ini;
mod scenario;

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::reward::RewardParams;
use crate::kernel::DistributionSpec;

pub use scenario::{parse_scenario, FailureInjection, RandomizedFailures, ScenarioSpec};

/// Truck ids are encoded in 6 bits.
pub const MAX_TRUCKS: usize = 64;
/// Shovel ids are encoded in 4 bits.
pub const MAX_SHOVELS: usize = 16;
pub const ZONES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// A single cross-check failure reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductionCounts {
    #[default]
    All,
    CrusherOnly,
}

impl FromStr for ProductionCounts {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(ProductionCounts::All),
            "crusher_only" => Ok(ProductionCounts::CrusherOnly),
            _ => Err(format!("expected `all` or `crusher_only`, got `{s}`")),
        }
    }
}

impl fmt::Display for ProductionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProductionCounts::All => "all",
            ProductionCounts::CrusherOnly => "crusher_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub trucks: usize,
    pub shovels: usize,
    pub crushers: usize,
    pub dumps: usize,
    /// Tons per completed trip.
    pub payload: f64,
    /// Zone (1..=3) of each shovel, indexed by shovel id - 1.
    pub shovel_zones: Vec<u8>,
    /// Loading performance class (1..=3) of each shovel.
    pub shovel_classes: Vec<u8>,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self::with_counts(60, 8, 5, 3)
    }
}

impl FleetConfig {
    /// Counts with zones and classes assigned cyclically 1, 2, 3, 1, ...
    pub fn with_counts(trucks: usize, shovels: usize, crushers: usize, dumps: usize) -> Self {
        Self {
            trucks,
            shovels,
            crushers,
            dumps,
            payload: 100.0,
            shovel_zones: cyclic_zones(shovels),
            shovel_classes: cyclic_zones(shovels),
        }
    }
}

fn cyclic_zones(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i % ZONES) as u8 + 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub shift_minutes: f64,
    /// Consecutive shifts executed by `minedes run`.
    pub shifts: usize,
    pub seed: u64,
    /// Probability that a loaded truck is routed to a crusher.
    pub routing_epsilon: f64,
    /// Production target in tons per shift.
    pub production_target: f64,
    pub production_counts: ProductionCounts,
    /// Re-dispatch trucks waiting at a shovel when it breaks down.
    pub requeue_on_breakdown: bool,
    /// Restrict baseline schedulers to online shovels.
    pub mask_offline: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            shift_minutes: 360.0,
            shifts: 1,
            seed: 42,
            routing_epsilon: 0.7,
            production_target: 18_000.0,
            production_counts: ProductionCounts::All,
            requeue_on_breakdown: false,
            mask_offline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    /// Empty truck speed (km/h).
    pub empty_speed: DistributionSpec,
    /// Loaded truck speed (km/h).
    pub loaded_speed: DistributionSpec,
    /// Loading time per shovel performance class 1..=3.
    pub loading: [DistributionSpec; ZONES],
    /// Dumping time at a dumping site.
    pub dump_time: DistributionSpec,
    /// Dumping time at a crusher.
    pub crusher_time: DistributionSpec,
    /// Shovel -> dumping site travel per zone.
    pub travel_to_dump: [DistributionSpec; ZONES],
    /// Shovel -> crusher travel per zone.
    pub travel_to_crusher: [DistributionSpec; ZONES],
    pub mtbf_shovel: DistributionSpec,
    pub mtbf_truck: DistributionSpec,
    pub mtbf_crusher: DistributionSpec,
    pub mtbf_dump: DistributionSpec,
    pub mttr_shovel: DistributionSpec,
    pub mttr_truck: DistributionSpec,
    pub mttr_crusher: DistributionSpec,
    pub mttr_dump: DistributionSpec,
    pub fuel_ore: DistributionSpec,
    pub fuel_empty: DistributionSpec,
    pub fuel_waste: DistributionSpec,
    /// Shovel fuel rate; reported only.
    pub fuel_shovel: DistributionSpec,
}

impl Default for Distributions {
    fn default() -> Self {
        use DistributionSpec as D;
        Self {
            empty_speed: D::normal(55.0, 12.0),
            loaded_speed: D::normal(30.0, 8.0),
            loading: [D::normal(6.0, 1.0), D::normal(9.0, 2.0), D::normal(12.0, 2.0)],
            dump_time: D::normal(5.0, 2.0),
            crusher_time: D::normal(15.0, 1.0),
            travel_to_dump: [D::normal(18.0, 3.0), D::normal(12.0, 2.0), D::normal(8.0, 1.0)],
            travel_to_crusher: [D::normal(8.0, 2.0), D::normal(15.0, 3.0), D::normal(22.0, 4.0)],
            mtbf_shovel: D::poisson(75.0),
            mtbf_truck: D::poisson(90.0),
            mtbf_crusher: D::poisson(120.0),
            mtbf_dump: D::poisson(180.0),
            mttr_shovel: D::poisson(60.0),
            mttr_truck: D::poisson(45.0),
            mttr_crusher: D::poisson(90.0),
            mttr_dump: D::poisson(30.0),
            fuel_ore: D::normal(0.28, 0.05),
            fuel_empty: D::normal(0.20, 0.06),
            fuel_waste: D::constant(0.0),
            fuel_shovel: D::normal(0.35, 0.07),
        }
    }
}

impl Distributions {
    /// Ratio applied to forward travel draws for empty return legs.
    pub fn return_leg_ratio(&self) -> f64 {
        self.loaded_speed.mean() / self.empty_speed.mean()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Costs {
    pub known: f64,
    pub estimated: f64,
}

impl Costs {
    fn reference() -> Self {
        Self {
            known: 35_000.0,
            estimated: 5_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub fleet: FleetConfig,
    pub simulation: SimulationConfig,
    pub distributions: Distributions,
    pub reward: RewardParams,
    pub costs: Costs,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            fleet: FleetConfig::default(),
            simulation: SimulationConfig::default(),
            distributions: Distributions::default(),
            reward: RewardParams::default(),
            costs: Costs::reference(),
        }
    }
}

fn parse_value<T: FromStr>(entry: &ini::Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    entry.value.parse::<T>().map_err(|e| {
        ConfigError::at(
            entry.line,
            format!("invalid value `{}` for `{}`: {e}", entry.value, entry.key),
        )
    })
}

fn parse_bool(entry: &ini::Entry) -> Result<bool, ConfigError> {
    match entry.value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::at(
            entry.line,
            format!("`{}` expects a boolean, got `{}`", entry.key, entry.value),
        )),
    }
}

fn parse_list<T: FromStr>(entry: &ini::Entry) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    entry
        .value
        .split(',')
        .map(|item| {
            item.trim().parse::<T>().map_err(|e| {
                ConfigError::at(entry.line, format!("invalid list item `{}` in `{}`: {e}", item.trim(), entry.key))
            })
        })
        .collect()
}

fn zone_slot(key: &str, prefix: &str) -> Option<usize> {
    let n: usize = key.strip_prefix(prefix)?.parse().ok()?;
    (1..=ZONES).contains(&n).then(|| n - 1)
}

/// Parse a mine configuration. Missing keys take defaults; unknown keys,
/// malformed values and violated invariants are errors with line numbers.
pub fn parse_config(text: &str) -> Result<MineConfig, ConfigError> {
    let entries = ini::read(text)?;
    let mut cfg = MineConfig::default();
    let mut lines: HashMap<&'static str, usize> = HashMap::new();
    let mut zones_set = false;
    let mut classes_set = false;

    for e in &entries {
        let unknown = || {
            ConfigError::at(
                e.line,
                format!("unknown key `{}` in section [{}]", e.key, e.section),
            )
        };
        match e.section.as_str() {
            "fleet" => match e.key.as_str() {
                "trucks" => {
                    cfg.fleet.trucks = parse_value(e)?;
                    lines.insert("trucks", e.line);
                }
                "shovels" => {
                    cfg.fleet.shovels = parse_value(e)?;
                    lines.insert("shovels", e.line);
                }
                "crushers" => {
                    cfg.fleet.crushers = parse_value(e)?;
                    lines.insert("crushers", e.line);
                }
                "dumps" => {
                    cfg.fleet.dumps = parse_value(e)?;
                    lines.insert("dumps", e.line);
                }
                "payload" => {
                    cfg.fleet.payload = parse_value(e)?;
                    lines.insert("payload", e.line);
                }
                "shovel_zones" => {
                    cfg.fleet.shovel_zones = parse_list(e)?;
                    zones_set = true;
                    lines.insert("shovel_zones", e.line);
                }
                "shovel_classes" => {
                    cfg.fleet.shovel_classes = parse_list(e)?;
                    classes_set = true;
                    lines.insert("shovel_classes", e.line);
                }
                _ => return Err(unknown()),
            },
            "simulation" => match e.key.as_str() {
                "shift_minutes" => {
                    cfg.simulation.shift_minutes = parse_value(e)?;
                    lines.insert("shift_minutes", e.line);
                }
                "shifts" => {
                    cfg.simulation.shifts = parse_value(e)?;
                    lines.insert("shifts", e.line);
                }
                "seed" => cfg.simulation.seed = parse_value(e)?,
                "routing_epsilon" => {
                    cfg.simulation.routing_epsilon = parse_value(e)?;
                    lines.insert("routing_epsilon", e.line);
                }
                "production_target" => {
                    cfg.simulation.production_target = parse_value(e)?;
                    lines.insert("production_target", e.line);
                }
                "production_counts" => cfg.simulation.production_counts = parse_value(e)?,
                "requeue_on_breakdown" => cfg.simulation.requeue_on_breakdown = parse_bool(e)?,
                "mask_offline" => cfg.simulation.mask_offline = parse_bool(e)?,
                _ => return Err(unknown()),
            },
            "distributions" => {
                let d = &mut cfg.distributions;
                let key = e.key.as_str();
                let slot: &mut DistributionSpec = if let Some(i) = zone_slot(key, "loading_class") {
                    &mut d.loading[i]
                } else if let Some(i) = zone_slot(key, "travel_dump_zone") {
                    &mut d.travel_to_dump[i]
                } else if let Some(i) = zone_slot(key, "travel_crusher_zone") {
                    &mut d.travel_to_crusher[i]
                } else {
                    match key {
                        "empty_speed" => &mut d.empty_speed,
                        "loaded_speed" => &mut d.loaded_speed,
                        "dump_time" => &mut d.dump_time,
                        "crusher_time" => &mut d.crusher_time,
                        "mtbf_shovel" => &mut d.mtbf_shovel,
                        "mtbf_truck" => &mut d.mtbf_truck,
                        "mtbf_crusher" => &mut d.mtbf_crusher,
                        "mtbf_dump" => &mut d.mtbf_dump,
                        "mttr_shovel" => &mut d.mttr_shovel,
                        "mttr_truck" => &mut d.mttr_truck,
                        "mttr_crusher" => &mut d.mttr_crusher,
                        "mttr_dump" => &mut d.mttr_dump,
                        "fuel_ore" => &mut d.fuel_ore,
                        "fuel_empty" => &mut d.fuel_empty,
                        "fuel_waste" => &mut d.fuel_waste,
                        "fuel_shovel" => &mut d.fuel_shovel,
                        _ => return Err(unknown()),
                    }
                };
                *slot = parse_value(e)?;
            }
            "reward" => {
                let r = &mut cfg.reward;
                match e.key.as_str() {
                    "alpha" => r.alpha = parse_value(e)?,
                    "beta" => r.beta = parse_value(e)?,
                    "gamma" => r.gamma = parse_value(e)?,
                    "delta" => r.delta = parse_value(e)?,
                    "omega1" => r.omega1 = parse_value(e)?,
                    "omega2" => r.omega2 = parse_value(e)?,
                    "b1" => r.b1 = parse_value(e)?,
                    "b2" => r.b2 = parse_value(e)?,
                    "theta1" => r.theta1 = parse_value(e)?,
                    "theta2" => r.theta2 = parse_value(e)?,
                    "phi1" => r.phi1 = parse_value(e)?,
                    "phi2" => r.phi2 = parse_value(e)?,
                    "k" => r.k = parse_value(e)?,
                    "mu" => r.mu = parse_value(e)?,
                    "div_window" => r.div_window = parse_value(e)?,
                    "rho" => r.rho = parse_value(e)?,
                    "streak_window" => r.streak_window = parse_value(e)?,
                    "discount" => r.discount = parse_value(e)?,
                    _ => return Err(unknown()),
                }
                lines.entry("reward").or_insert(e.line);
            }
            "costs" => match e.key.as_str() {
                "known" => cfg.costs.known = parse_value(e)?,
                "estimated" => cfg.costs.estimated = parse_value(e)?,
                _ => return Err(unknown()),
            },
            other => {
                return Err(ConfigError::at(e.line, format!("unknown section [{other}]")));
            }
        }
    }

    // a changed shovel count without explicit layouts keeps the cyclic default
    if !zones_set {
        cfg.fleet.shovel_zones = cyclic_zones(cfg.fleet.shovels);
    }
    if !classes_set {
        cfg.fleet.shovel_classes = cyclic_zones(cfg.fleet.shovels);
    }

    if let Some(v) = config_violations(&cfg).into_iter().next() {
        let line = lines.get(v.field.as_str()).copied();
        return Err(ConfigError {
            line,
            message: v.to_string(),
        });
    }
    Ok(cfg)
}

/// Invariant violations of a configuration on its own.
pub fn config_violations(cfg: &MineConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };
    let f = &cfg.fleet;
    if f.trucks == 0 || f.trucks > MAX_TRUCKS {
        push("trucks", format!("must be in 1..={MAX_TRUCKS}, got {}", f.trucks));
    }
    if f.shovels == 0 || f.shovels > MAX_SHOVELS {
        push("shovels", format!("must be in 1..={MAX_SHOVELS}, got {}", f.shovels));
    }
    if f.crushers == 0 {
        push("crushers", "at least one crusher is required".into());
    }
    if f.dumps == 0 {
        push("dumps", "at least one dumping site is required".into());
    }
    if !(f.payload > 0.0) {
        push("payload", format!("must be > 0, got {}", f.payload));
    }
    for (field, layout) in [("shovel_zones", &f.shovel_zones), ("shovel_classes", &f.shovel_classes)] {
        if layout.len() != f.shovels {
            push(field, format!("expected {} entries, got {}", f.shovels, layout.len()));
        } else if let Some(bad) = layout.iter().find(|z| !(1..=ZONES as u8).contains(z)) {
            push(field, format!("values must be in 1..={ZONES}, got {bad}"));
        }
    }
    let s = &cfg.simulation;
    if !(s.shift_minutes > 0.0 && s.shift_minutes.is_finite()) {
        push("shift_minutes", format!("must be > 0, got {}", s.shift_minutes));
    }
    if s.shifts == 0 {
        push("shifts", "must be >= 1".into());
    }
    if !(0.0..=1.0).contains(&s.routing_epsilon) {
        push("routing_epsilon", format!("must lie in [0, 1], got {}", s.routing_epsilon));
    }
    if !(s.production_target > 0.0) {
        push("production_target", format!("must be > 0, got {}", s.production_target));
    }
    for message in cfg.reward.violations() {
        push("reward", message);
    }
    let c = &cfg.costs;
    if !(c.known >= 0.0 && c.estimated >= 0.0) {
        push("costs", "costs must be >= 0".into());
    }
    out
}

/// Cross-check a configuration against a scenario.
pub fn validate(cfg: &MineConfig, scenario: &ScenarioSpec) -> Result<(), Vec<Violation>> {
    let mut out = config_violations(cfg);
    out.extend(scenario.violations_against(cfg));
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl MineConfig {
    /// Serialize to the text format accepted by [`parse_config`].
    pub fn to_ini(&self) -> String {
        let join = |xs: &[u8]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut s = String::new();
        let f = &self.fleet;
        let _ = writeln!(s, "[fleet]");
        let _ = writeln!(s, "trucks = {}", f.trucks);
        let _ = writeln!(s, "shovels = {}", f.shovels);
        let _ = writeln!(s, "crushers = {}", f.crushers);
        let _ = writeln!(s, "dumps = {}", f.dumps);
        let _ = writeln!(s, "payload = {}", f.payload);
        let _ = writeln!(s, "shovel_zones = {}", join(&f.shovel_zones));
        let _ = writeln!(s, "shovel_classes = {}", join(&f.shovel_classes));

        let sim = &self.simulation;
        let _ = writeln!(s, "\n[simulation]");
        let _ = writeln!(s, "shift_minutes = {}", sim.shift_minutes);
        let _ = writeln!(s, "shifts = {}", sim.shifts);
        let _ = writeln!(s, "seed = {}", sim.seed);
        let _ = writeln!(s, "routing_epsilon = {}", sim.routing_epsilon);
        let _ = writeln!(s, "production_target = {}", sim.production_target);
        let _ = writeln!(s, "production_counts = {}", sim.production_counts);
        let _ = writeln!(s, "requeue_on_breakdown = {}", sim.requeue_on_breakdown);
        let _ = writeln!(s, "mask_offline = {}", sim.mask_offline);

        let d = &self.distributions;
        let _ = writeln!(s, "\n[distributions]");
        let _ = writeln!(s, "empty_speed = {}", d.empty_speed);
        let _ = writeln!(s, "loaded_speed = {}", d.loaded_speed);
        for (i, x) in d.loading.iter().enumerate() {
            let _ = writeln!(s, "loading_class{} = {x}", i + 1);
        }
        let _ = writeln!(s, "dump_time = {}", d.dump_time);
        let _ = writeln!(s, "crusher_time = {}", d.crusher_time);
        for (i, x) in d.travel_to_dump.iter().enumerate() {
            let _ = writeln!(s, "travel_dump_zone{} = {x}", i + 1);
        }
        for (i, x) in d.travel_to_crusher.iter().enumerate() {
            let _ = writeln!(s, "travel_crusher_zone{} = {x}", i + 1);
        }
        for (k, v) in [
            ("mtbf_shovel", d.mtbf_shovel),
            ("mtbf_truck", d.mtbf_truck),
            ("mtbf_crusher", d.mtbf_crusher),
            ("mtbf_dump", d.mtbf_dump),
            ("mttr_shovel", d.mttr_shovel),
            ("mttr_truck", d.mttr_truck),
            ("mttr_crusher", d.mttr_crusher),
            ("mttr_dump", d.mttr_dump),
            ("fuel_ore", d.fuel_ore),
            ("fuel_empty", d.fuel_empty),
            ("fuel_waste", d.fuel_waste),
            ("fuel_shovel", d.fuel_shovel),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }

        let r = &self.reward;
        let _ = writeln!(s, "\n[reward]");
        for (k, v) in [
            ("alpha", r.alpha),
            ("beta", r.beta),
            ("gamma", r.gamma),
            ("delta", r.delta),
            ("omega1", r.omega1),
            ("omega2", r.omega2),
            ("b1", r.b1),
            ("b2", r.b2),
            ("theta1", r.theta1),
            ("theta2", r.theta2),
            ("phi1", r.phi1),
            ("phi2", r.phi2),
            ("mu", r.mu),
            ("rho", r.rho),
            ("discount", r.discount),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "k = {}", r.k);
        let _ = writeln!(s, "div_window = {}", r.div_window);
        let _ = writeln!(s, "streak_window = {}", r.streak_window);

        let _ = writeln!(s, "\n[costs]");
        let _ = writeln!(s, "known = {}", self.costs.known);
        let _ = writeln!(s, "estimated = {}", self.costs.estimated);
        s
    }
}

impl FromStr for MineConfig {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}

/// The reference configuration file shipped with the repository.
pub const DEFAULT_CONFIG_TEXT: &str = include_str!("../../../../configs/default.ini");
/// The 4-shovel / 20-truck alternate configuration.
pub const SMALL_CONFIG_TEXT: &str = include_str!("../../../../configs/small.ini");
