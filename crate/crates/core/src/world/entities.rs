use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::{Entity, EventKey, EventKind, SimTime};

pub type TruckId = u32;
pub type ShovelId = u32;

/// Truck status with its fixed 3-bit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TruckStatus {
    AtShovel = 0b000,
    AtCrusher = 0b001,
    AtDump = 0b010,
    MovingShovelToCrusher = 0b011,
    MovingShovelToDump = 0b100,
    MovingCrusherToShovel = 0b101,
    MovingDumpToShovel = 0b110,
    Breakdown = 0b111,
}

impl TruckStatus {
    pub const ALL: [TruckStatus; 8] = [
        TruckStatus::AtShovel,
        TruckStatus::AtCrusher,
        TruckStatus::AtDump,
        TruckStatus::MovingShovelToCrusher,
        TruckStatus::MovingShovelToDump,
        TruckStatus::MovingCrusherToShovel,
        TruckStatus::MovingDumpToShovel,
        TruckStatus::Breakdown,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Most significant bit first.
    pub fn bits(self) -> [u8; 3] {
        let c = self.code();
        [(c >> 2) & 1, (c >> 1) & 1, c & 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessorKind {
    Crusher,
    DumpSite,
}

impl fmt::Display for ProcessorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProcessorKind::Crusher => "crusher",
            ProcessorKind::DumpSite => "dump",
        })
    }
}

/// A place a truck can queue at or be served by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    Shovel(ShovelId),
    Processor(ProcessorKind, u32),
}

impl Site {
    pub fn entity(self) -> Entity {
        match self {
            Site::Shovel(id) => Entity::Shovel(id),
            Site::Processor(ProcessorKind::Crusher, id) => Entity::Crusher(id),
            Site::Processor(ProcessorKind::DumpSite, id) => Entity::Dump(id),
        }
    }

    fn at_status(self) -> TruckStatus {
        match self {
            Site::Shovel(_) => TruckStatus::AtShovel,
            Site::Processor(ProcessorKind::Crusher, _) => TruckStatus::AtCrusher,
            Site::Processor(ProcessorKind::DumpSite, _) => TruckStatus::AtDump,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.entity().fmt(f)
    }
}

/// Where a truck is in its load-haul-dump-return-query cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Waiting in the FIFO queue of a site.
    Queued(Site),
    /// Being loaded or dumping.
    InService(Site),
    /// Loaded, travelling to a crusher or dumping site.
    Hauling { from: ShovelId, to: ProcessorKind },
    /// Empty, travelling to the assigned shovel.
    Returning { from: Site, to: ShovelId },
    /// Parked until the dispatcher assigns a shovel.
    AwaitingDecision(Site),
    /// Left a queue because of a breakdown; rejoins the tail on repair.
    Detached(Site),
}

/// Online/offline state shared by every breakable entity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Availability {
    pub offline: bool,
    pub permanent: bool,
    pub broken_until: Option<SimTime>,
    pub(crate) repair_key: Option<EventKey>,
}

impl Availability {
    pub fn online(&self) -> bool {
        !self.offline
    }
}

/// A timed activity that can be suspended and resumed without losing
/// progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Timer {
    pub kind: EventKind,
    /// Scheduled completion while running.
    pub pending: Option<EventKey>,
    /// Time left when suspended.
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truck {
    pub id: TruckId,
    pub phase: Phase,
    pub avail: Availability,
    pub trips_complete: u32,
    pub assigned_shovel: Option<ShovelId>,
    pub payload: f64,
    pub loads_complete: u32,
    pub returns_complete: u32,
    pub cycle_start: SimTime,
    pub enqueued_at: SimTime,
    pub(crate) timer: Option<Timer>,
}

impl Truck {
    pub fn status(&self) -> TruckStatus {
        if self.avail.offline {
            return TruckStatus::Breakdown;
        }
        match self.phase {
            Phase::Queued(site)
            | Phase::InService(site)
            | Phase::Detached(site)
            | Phase::AwaitingDecision(site) => site.at_status(),
            Phase::Hauling { to: ProcessorKind::Crusher, .. } => TruckStatus::MovingShovelToCrusher,
            Phase::Hauling { to: ProcessorKind::DumpSite, .. } => TruckStatus::MovingShovelToDump,
            Phase::Returning { from: Site::Processor(ProcessorKind::Crusher, _), .. } => {
                TruckStatus::MovingCrusherToShovel
            }
            Phase::Returning { .. } => TruckStatus::MovingDumpToShovel,
        }
    }

    pub fn broken_until(&self) -> Option<SimTime> {
        self.avail.broken_until
    }
}

/// Single-server FIFO resource.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Resource {
    pub queue: VecDeque<TruckId>,
    pub busy_with: Option<TruckId>,
    pub avail: Availability,
}

impl Resource {
    /// Trucks at the site, waiting or in service.
    pub fn load(&self) -> usize {
        self.queue.len() + usize::from(self.busy_with.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shovel {
    pub id: ShovelId,
    pub zone: u8,
    pub perf_class: u8,
    pub res: Resource,
}

impl Shovel {
    pub fn online(&self) -> bool {
        self.res.avail.online()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processor {
    pub kind: ProcessorKind,
    pub id: u32,
    pub res: Resource,
}

/// How a truck's request at a site was answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Granted,
    /// 1-based position in the queue.
    Queued(usize),
}

/// One completed haul cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub truck: TruckId,
    pub completed_at: SimTime,
    pub cycle_minutes: f64,
    pub destination: ProcessorKind,
}

/// Wait of one truck before its loading started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitRecord {
    pub truck: TruckId,
    pub shovel: ShovelId,
    pub granted_at: SimTime,
    pub wait_minutes: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_match_table() {
        let codes: Vec<u8> = TruckStatus::ALL.iter().map(|s| s.code()).collect();
        assert_eq!(codes, (0..8).collect::<Vec<u8>>());
        assert_eq!(TruckStatus::MovingShovelToDump.bits(), [1, 0, 0]);
        assert_eq!(TruckStatus::AtCrusher.bits(), [0, 0, 1]);
        assert_eq!(TruckStatus::Breakdown.bits(), [1, 1, 1]);
    }
}
