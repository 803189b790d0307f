//! Baseline dispatchers that answer a truck's decision request with a shovel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kernel::{RngStream, StreamId};
use crate::world::{ShovelId, TruckId, World};

/// Lowest-count shovel, ties to the lowest id. With `online`, offline
/// shovels are skipped unless every shovel is offline.
pub fn least_loaded(counts: &[u32], online: Option<&[bool]>) -> ShovelId {
    let usable = |i: usize| match online {
        Some(on) if on.iter().any(|&o| o) => on[i],
        _ => true,
    };
    counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| usable(i))
        .min_by_key(|&(i, &c)| (c, i))
        .map(|(i, _)| i as ShovelId + 1)
        .expect("at least one shovel")
}

pub trait Scheduler: Send {
    fn kind(&self) -> SchedulerKind;

    /// Re-key any internal randomness for a new shift.
    fn reset(&mut self, seed: u64);

    fn decide(&mut self, world: &World, truck: TruckId) -> ShovelId;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Random,
    Fixed,
    EqualQueue,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Random, SchedulerKind::Fixed, SchedulerKind::EqualQueue];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Random => "random",
            SchedulerKind::Fixed => "fixed",
            SchedulerKind::EqualQueue => "equal_queue",
        }
    }

    pub fn build(self, seed: u64, mask_offline: bool) -> Box<dyn Scheduler> {
        match self {
            SchedulerKind::Random => Box::new(RandomScheduler::new(seed, mask_offline)),
            SchedulerKind::Fixed => Box::new(FixedScheduler { mask_offline }),
            SchedulerKind::EqualQueue => Box::new(EqualQueueScheduler { mask_offline }),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(SchedulerKind::Random),
            "fixed" => Ok(SchedulerKind::Fixed),
            "equal_queue" | "equalqueue" => Ok(SchedulerKind::EqualQueue),
            other => Err(format!("unknown scheduler `{other}` (random, fixed, equal_queue)")),
        }
    }
}

/// Uniform over all shovels, one uniform per decision.
pub struct RandomScheduler {
    rng: RngStream,
    mask_offline: bool,
}

impl RandomScheduler {
    pub fn new(seed: u64, mask_offline: bool) -> Self {
        Self {
            rng: RngStream::new(seed, StreamId::Scheduler),
            mask_offline,
        }
    }
}

impl Scheduler for RandomScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Random
    }

    fn reset(&mut self, seed: u64) {
        self.rng = RngStream::new(seed, StreamId::Scheduler);
    }

    fn decide(&mut self, world: &World, _truck: TruckId) -> ShovelId {
        let online = world.online_shovels();
        let candidates: Vec<ShovelId> = if self.mask_offline && online.iter().any(|&o| o) {
            (1..=online.len() as u32).filter(|&s| online[s as usize - 1]).collect()
        } else {
            (1..=online.len() as u32).collect()
        };
        candidates[self.rng.index_below(candidates.len())]
    }
}

/// Truck `i` always goes to shovel `((i - 1) mod SH) + 1`.
pub struct FixedScheduler {
    mask_offline: bool,
}

pub fn fixed_assignment(truck: TruckId, shovels: usize) -> ShovelId {
    (truck - 1) % shovels as u32 + 1
}

impl Scheduler for FixedScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Fixed
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, world: &World, truck: TruckId) -> ShovelId {
        let n = world.shovels().len();
        let home = fixed_assignment(truck, n);
        if !self.mask_offline {
            return home;
        }
        let online = world.online_shovels();
        (0..n as u32)
            .map(|k| (home - 1 + k) % n as u32 + 1)
            .find(|&s| online[s as usize - 1])
            .unwrap_or(home)
    }
}

/// Shovel with the fewest trucks bound to it.
pub struct EqualQueueScheduler {
    mask_offline: bool,
}

impl Scheduler for EqualQueueScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::EqualQueue
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, world: &World, _truck: TruckId) -> ShovelId {
        let committed = world.committed_counts();
        if self.mask_offline {
            least_loaded(&committed, Some(&world.online_shovels()))
        } else {
            least_loaded(&committed, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_loaded_breaks_ties_low() {
        assert_eq!(least_loaded(&[3, 1, 1, 2], None), 2);
        assert_eq!(least_loaded(&[0, 0], None), 1);
        assert_eq!(least_loaded(&[0, 5, 4], Some(&[false, true, true])), 3);
        assert_eq!(least_loaded(&[2, 5], Some(&[false, false])), 1);
    }

    #[test]
    fn fixed_cycles_through_shovels() {
        let got: Vec<u32> = (1..=10).map(|t| fixed_assignment(t, 8)).collect();
        assert_eq!(got, vec![1, 2, 3, 4, 5, 6, 7, 8, 1, 2]);
    }

    #[test]
    fn names_round_trip() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.name().parse::<SchedulerKind>().unwrap(), k);
        }
        assert_eq!("Equal-Queue".parse::<SchedulerKind>().unwrap(), SchedulerKind::EqualQueue);
        assert!("greedy".parse::<SchedulerKind>().is_err());
    }
}
