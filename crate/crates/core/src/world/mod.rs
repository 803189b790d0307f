//! Open-pit haulage model: trucks cycle load, haul, dump, return and wait for
//! a dispatch decision; shovels, crushers and dumping sites are single-server
//! FIFO resources that can break down.

mod entities;

use std::fmt::Write as _;

use thiserror::Error;

pub use entities::{
    Availability, Phase, Processor, ProcessorKind, RequestOutcome, Resource, Shovel, ShovelId, Site,
    TripRecord, Truck, TruckId, TruckStatus, WaitRecord,
};
use entities::Timer;

use crate::config::{MineConfig, ProductionCounts, ScenarioSpec};
use crate::config::FailureInjection;
use crate::dispatch::least_loaded;
use crate::kernel::{
    DistributionSpec, Entity, Event, EventCalendar, EventKey, EventKind, KernelError, RngStream,
    SimTime, StreamId, DURATION_FLOOR,
};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("no decision is pending")]
    NoPendingDecision,
    #[error("a decision for truck {0} is still pending")]
    DecisionPending(TruckId),
    #[error("decision is pending for truck {pending}, not truck {given}")]
    WrongTruck { pending: TruckId, given: TruckId },
    #[error("shovel {shovel} out of range 1..={max}")]
    ShovelOutOfRange { shovel: u32, max: u32 },
    #[error("no such entity {0}")]
    UnknownEntity(Entity),
    #[error("truck {truck} cannot handle {event} while {phase:?}")]
    IllegalTransition {
        truck: TruckId,
        phase: Phase,
        event: EventKind,
    },
    #[error("truck {truck} already holds a place at {site}")]
    DuplicateRequest { truck: TruckId, site: Site },
    #[error("the shift has ended")]
    ShiftOver,
}

/// Per-shift fuel rates, sampled once at reset.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct FuelRates {
    pub ore: f64,
    pub empty: f64,
    pub waste: f64,
    pub shovel: f64,
}

impl FuelRates {
    /// Per-unit fuel used by the cost-per-tonne figure.
    pub fn unit(&self) -> f64 {
        self.waste + self.ore + self.empty
    }
}

/// Waiting-queue lengths of every shovel at one instant.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QueueSample {
    pub at: SimTime,
    pub waiting: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorldOptions {
    pub log_events: bool,
}

struct Streams {
    loading: RngStream,
    haul: RngStream,
    dump: RngStream,
    breakdown: RngStream,
    routing: RngStream,
}

pub struct World {
    cfg: MineConfig,
    background_breakdowns: bool,
    calendar: EventCalendar,
    streams: Streams,
    trucks: Vec<Truck>,
    shovels: Vec<Shovel>,
    crushers: Vec<Processor>,
    dumps: Vec<Processor>,
    shift_end: SimTime,
    finished: bool,
    pending: Option<TruckId>,
    trips: Vec<TripRecord>,
    waits: Vec<WaitRecord>,
    queue_samples: Vec<QueueSample>,
    injections: Vec<FailureInjection>,
    forced_repairs: Vec<(EventKey, f64)>,
    fuel: FuelRates,
    return_ratio: f64,
    log: Option<Vec<String>>,
}

impl World {
    /// Build a shift: sample fuel rates, resolve scenario failures, schedule
    /// the shift end and place every truck at t = 0 by Equal-Queue.
    pub fn new(
        cfg: &MineConfig,
        scenario: &ScenarioSpec,
        seed: u64,
        options: WorldOptions,
    ) -> Result<World, WorldError> {
        let fleet = &cfg.fleet;
        let d = &cfg.distributions;
        let mut fuel_rng = RngStream::new(seed, StreamId::Fuel);
        let fuel = FuelRates {
            ore: d.fuel_ore.sample(&mut fuel_rng).max(0.0),
            empty: d.fuel_empty.sample(&mut fuel_rng).max(0.0),
            waste: d.fuel_waste.sample(&mut fuel_rng).max(0.0),
            shovel: d.fuel_shovel.sample(&mut fuel_rng).max(0.0),
        };
        let mut selection = RngStream::new(seed, StreamId::BreakdownSelection);
        let mut timing = RngStream::new(seed, StreamId::BreakdownTiming);
        let injections = scenario.resolve_injections(cfg, &mut selection, &mut timing);

        let trucks = (1..=fleet.trucks as u32)
            .map(|id| Truck {
                id,
                phase: Phase::AwaitingDecision(Site::Shovel(1)),
                avail: Availability::default(),
                trips_complete: 0,
                assigned_shovel: None,
                payload: fleet.payload,
                loads_complete: 0,
                returns_complete: 0,
                cycle_start: SimTime::ZERO,
                enqueued_at: SimTime::ZERO,
                timer: None,
            })
            .collect();
        let shovels = (1..=fleet.shovels as u32)
            .map(|id| Shovel {
                id,
                zone: fleet.shovel_zones[id as usize - 1],
                perf_class: fleet.shovel_classes[id as usize - 1],
                res: Resource::default(),
            })
            .collect();
        let processors = |kind, n: usize| -> Vec<Processor> {
            (1..=n as u32)
                .map(|id| Processor {
                    kind,
                    id,
                    res: Resource::default(),
                })
                .collect()
        };

        let mut world = World {
            cfg: cfg.clone(),
            background_breakdowns: scenario.background_breakdowns,
            calendar: EventCalendar::new(),
            streams: Streams {
                loading: RngStream::new(seed, StreamId::Loading),
                haul: RngStream::new(seed, StreamId::Haul),
                dump: RngStream::new(seed, StreamId::Dump),
                breakdown: timing,
                routing: RngStream::new(seed, StreamId::Routing),
            },
            trucks,
            shovels,
            crushers: processors(ProcessorKind::Crusher, fleet.crushers),
            dumps: processors(ProcessorKind::DumpSite, fleet.dumps),
            shift_end: SimTime::from_minutes(cfg.simulation.shift_minutes),
            finished: false,
            pending: None,
            trips: Vec::new(),
            waits: Vec::new(),
            queue_samples: Vec::new(),
            injections: injections.clone(),
            forced_repairs: Vec::new(),
            fuel,
            return_ratio: d.return_leg_ratio(),
            log: options.log_events.then(Vec::new),
        };

        world
            .calendar
            .schedule(world.shift_end, EventKind::ShiftEnd, Entity::Shift)?;
        for inj in &injections {
            world
                .calendar
                .schedule(inj.onset, EventKind::BreakdownOnset { permanent: true }, inj.entity)?;
        }
        if world.background_breakdowns {
            let entities: Vec<Entity> = world.breakable_entities().collect();
            for e in entities {
                let gap = world.draw_mtbf(e);
                world.calendar.schedule_in(
                    gap,
                    EventKind::BreakdownOnset { permanent: false },
                    e,
                )?;
            }
        }
        world.sample_queues();
        for id in 1..=fleet.trucks as u32 {
            let committed = world.committed_counts();
            let shovel = least_loaded(&committed, None);
            world.truck_mut(id).assigned_shovel = Some(shovel);
            let outcome = world.request(id, Site::Shovel(shovel))?;
            world.log_line(
                "place",
                Entity::Truck(id),
                format_args!("{} {}", Site::Shovel(shovel), outcome_text(outcome)),
            );
        }
        Ok(world)
    }

    pub fn config(&self) -> &MineConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.calendar.now()
    }

    pub fn shift_end(&self) -> SimTime {
        self.shift_end
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn pending_decision(&self) -> Option<TruckId> {
        self.pending
    }

    pub fn events_processed(&self) -> u64 {
        self.calendar.popped()
    }

    pub fn trucks(&self) -> &[Truck] {
        &self.trucks
    }

    pub fn shovels(&self) -> &[Shovel] {
        &self.shovels
    }

    pub fn crushers(&self) -> &[Processor] {
        &self.crushers
    }

    pub fn dumps(&self) -> &[Processor] {
        &self.dumps
    }

    /// Panics on an id outside `1..=TR`.
    pub fn truck(&self, id: TruckId) -> &Truck {
        &self.trucks[id as usize - 1]
    }

    /// Panics on an id outside `1..=SH`.
    pub fn shovel(&self, id: ShovelId) -> &Shovel {
        &self.shovels[id as usize - 1]
    }

    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }

    pub fn waits(&self) -> &[WaitRecord] {
        &self.waits
    }

    pub fn queue_samples(&self) -> &[QueueSample] {
        &self.queue_samples
    }

    pub fn injections(&self) -> &[FailureInjection] {
        &self.injections
    }

    pub fn fuel_rates(&self) -> FuelRates {
        self.fuel
    }

    pub fn event_log(&self) -> Option<&[String]> {
        self.log.as_deref()
    }

    pub fn total_trips(&self) -> u64 {
        self.trips.len() as u64
    }

    /// Tonnes delivered, counting either every trip or crusher trips only.
    pub fn production_volume(&self) -> f64 {
        let counted = match self.cfg.simulation.production_counts {
            ProductionCounts::All => self.trips.len(),
            ProductionCounts::CrusherOnly => self
                .trips
                .iter()
                .filter(|t| t.destination == ProcessorKind::Crusher)
                .count(),
        };
        counted as f64 * self.cfg.fleet.payload
    }

    /// Trucks waiting (not in service) at each shovel.
    pub fn waiting_counts(&self) -> Vec<u32> {
        self.shovels.iter().map(|s| s.res.queue.len() as u32).collect()
    }

    /// Trucks bound to each shovel: travelling to it, queued, in service, or
    /// detached from its queue by a breakdown.
    pub fn committed_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.shovels.len()];
        for t in &self.trucks {
            let s = match t.phase {
                Phase::Returning { to, .. } => Some(to),
                Phase::Queued(Site::Shovel(s))
                | Phase::InService(Site::Shovel(s))
                | Phase::Detached(Site::Shovel(s)) => Some(s),
                _ => None,
            };
            if let Some(s) = s {
                counts[s as usize - 1] += 1;
            }
        }
        counts
    }

    pub fn online_shovels(&self) -> Vec<bool> {
        self.shovels.iter().map(Shovel::online).collect()
    }

    /// Run events until a truck needs a shovel assignment. Returns `None`
    /// once the shift has ended.
    pub fn next_decision(&mut self) -> Result<Option<TruckId>, WorldError> {
        if let Some(t) = self.pending {
            return Err(WorldError::DecisionPending(t));
        }
        while !self.finished {
            let ev = self.calendar.advance_to_next()?;
            if let Some(truck) = self.handle(ev)? {
                self.pending = Some(truck);
                return Ok(Some(truck));
            }
        }
        Ok(None)
    }

    /// Send the pending truck to `shovel`. The world is unchanged on error.
    pub fn assign(&mut self, truck: TruckId, shovel: ShovelId) -> Result<(), WorldError> {
        let pending = self.pending.ok_or(WorldError::NoPendingDecision)?;
        if pending != truck {
            return Err(WorldError::WrongTruck {
                pending,
                given: truck,
            });
        }
        let max = self.shovels.len() as u32;
        if shovel == 0 || shovel > max {
            return Err(WorldError::ShovelOutOfRange { shovel, max });
        }
        let Phase::AwaitingDecision(from) = self.truck(truck).phase else {
            return Err(self.illegal(truck, EventKind::DecisionRequest));
        };
        self.pending = None;
        let zone = self.shovel(shovel).zone as usize - 1;
        let d = &self.cfg.distributions;
        let forward = match from {
            Site::Processor(ProcessorKind::Crusher, _) => &d.travel_to_crusher[zone],
            _ => &d.travel_to_dump[zone],
        };
        let travel = (forward.sample(&mut self.streams.haul) * self.return_ratio).max(DURATION_FLOOR);
        let t = self.truck_mut(truck);
        t.assigned_shovel = Some(shovel);
        t.phase = Phase::Returning { from, to: shovel };
        self.start_timer(truck, EventKind::ArrivalAtResource, travel)?;
        self.log_line(
            "assign",
            Entity::Truck(truck),
            format_args!("{} travel {travel:.6}", Site::Shovel(shovel)),
        );
        Ok(())
    }

    /// Schedule a breakdown of `entity` at `at`. `repair_after` gives a fixed
    /// repair duration; `None` makes the failure permanent.
    pub fn schedule_breakdown(
        &mut self,
        entity: Entity,
        at: SimTime,
        repair_after: Option<f64>,
    ) -> Result<(), WorldError> {
        if self.avail(entity).is_none() {
            return Err(WorldError::UnknownEntity(entity));
        }
        let permanent = repair_after.is_none();
        let key = self
            .calendar
            .schedule(at, EventKind::BreakdownOnset { permanent }, entity)?;
        if let Some(d) = repair_after {
            self.forced_repairs.push((key, d.max(0.0)));
        }
        Ok(())
    }

    /// Structural consistency of trucks, queues and ledgers.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![0u32; self.trucks.len()];
        for (site, res) in self.sites() {
            for &t in &res.queue {
                seen[t as usize - 1] += 1;
                if self.truck(t).phase != Phase::Queued(site) {
                    return Err(format!("truck {t} in queue of {site} but {:?}", self.truck(t).phase));
                }
            }
            if let Some(t) = res.busy_with {
                seen[t as usize - 1] += 1;
                if self.truck(t).phase != Phase::InService(site) {
                    return Err(format!("{site} serves truck {t} but it is {:?}", self.truck(t).phase));
                }
            }
            if res.avail.online() && res.busy_with.is_none() && !res.queue.is_empty() {
                return Err(format!("{site} is idle and online with {} waiting", res.queue.len()));
            }
        }
        let mut trips = 0u64;
        for t in &self.trucks {
            let held = seen[t.id as usize - 1];
            let expect = u32::from(matches!(t.phase, Phase::Queued(_) | Phase::InService(_)));
            if held != expect {
                return Err(format!("truck {} appears {held} times in sites while {:?}", t.id, t.phase));
            }
            if t.loads_complete < t.trips_complete || t.loads_complete > t.trips_complete + 1 {
                return Err(format!(
                    "truck {} has {} loads for {} trips",
                    t.id, t.loads_complete, t.trips_complete
                ));
            }
            if t.returns_complete > t.trips_complete {
                return Err(format!(
                    "truck {} returned {} times after {} trips",
                    t.id, t.returns_complete, t.trips_complete
                ));
            }
            trips += u64::from(t.trips_complete);
        }
        if trips != self.trips.len() as u64 {
            return Err(format!("ledger has {} trips, trucks report {trips}", self.trips.len()));
        }
        Ok(())
    }

    fn sites(&self) -> impl Iterator<Item = (Site, &Resource)> {
        self.shovels
            .iter()
            .map(|s| (Site::Shovel(s.id), &s.res))
            .chain(self.crushers.iter().chain(&self.dumps).map(|p| (Site::Processor(p.kind, p.id), &p.res)))
    }

    fn breakable_entities(&self) -> impl Iterator<Item = Entity> + '_ {
        self.shovels
            .iter()
            .map(|s| Entity::Shovel(s.id))
            .chain(self.trucks.iter().map(|t| Entity::Truck(t.id)))
            .chain(self.crushers.iter().map(|p| Entity::Crusher(p.id)))
            .chain(self.dumps.iter().map(|p| Entity::Dump(p.id)))
    }

    fn truck_mut(&mut self, id: TruckId) -> &mut Truck {
        &mut self.trucks[id as usize - 1]
    }

    fn resource(&self, site: Site) -> &Resource {
        match site {
            Site::Shovel(id) => &self.shovels[id as usize - 1].res,
            Site::Processor(ProcessorKind::Crusher, id) => &self.crushers[id as usize - 1].res,
            Site::Processor(ProcessorKind::DumpSite, id) => &self.dumps[id as usize - 1].res,
        }
    }

    fn resource_mut(&mut self, site: Site) -> &mut Resource {
        match site {
            Site::Shovel(id) => &mut self.shovels[id as usize - 1].res,
            Site::Processor(ProcessorKind::Crusher, id) => &mut self.crushers[id as usize - 1].res,
            Site::Processor(ProcessorKind::DumpSite, id) => &mut self.dumps[id as usize - 1].res,
        }
    }

    fn avail(&self, e: Entity) -> Option<&Availability> {
        let idx = |id: u32| (id as usize).checked_sub(1);
        match e {
            Entity::Truck(id) => self.trucks.get(idx(id)?).map(|t| &t.avail),
            Entity::Shovel(id) => self.shovels.get(idx(id)?).map(|s| &s.res.avail),
            Entity::Crusher(id) => self.crushers.get(idx(id)?).map(|p| &p.res.avail),
            Entity::Dump(id) => self.dumps.get(idx(id)?).map(|p| &p.res.avail),
            Entity::Shift => None,
        }
    }

    fn avail_mut(&mut self, e: Entity) -> &mut Availability {
        match e {
            Entity::Truck(id) => &mut self.trucks[id as usize - 1].avail,
            Entity::Shovel(id) => &mut self.shovels[id as usize - 1].res.avail,
            Entity::Crusher(id) => &mut self.crushers[id as usize - 1].res.avail,
            Entity::Dump(id) => &mut self.dumps[id as usize - 1].res.avail,
            Entity::Shift => unreachable!("the shift cannot break down"),
        }
    }

    fn illegal(&self, truck: TruckId, event: EventKind) -> WorldError {
        WorldError::IllegalTransition {
            truck,
            phase: self.truck(truck).phase,
            event,
        }
    }

    fn handle(&mut self, ev: Event) -> Result<Option<TruckId>, WorldError> {
        match (ev.kind, ev.subject) {
            (EventKind::ShiftEnd, _) => {
                self.finished = true;
                self.log_line("shift-end", Entity::Shift, format_args!("trips {}", self.trips.len()));
            }
            (EventKind::ArrivalAtResource, Entity::Truck(t)) => {
                self.truck_mut(t).timer = None;
                self.on_arrival(t)?;
            }
            (EventKind::ServiceComplete, Entity::Truck(t)) => {
                self.truck_mut(t).timer = None;
                self.on_service_complete(t)?;
            }
            (EventKind::BreakdownOnset { permanent }, e) => {
                let forced = self
                    .forced_repairs
                    .iter()
                    .position(|(k, _)| *k == ev.key())
                    .map(|i| self.forced_repairs.swap_remove(i).1);
                let repair_after = if permanent {
                    None
                } else {
                    Some(forced.unwrap_or_else(|| self.draw_mttr(e)))
                };
                self.break_down(e, repair_after)?;
            }
            (EventKind::RepairComplete, e) => self.repair(e)?,
            (EventKind::DecisionRequest, Entity::Truck(t)) => {
                self.log_line("decision-request", Entity::Truck(t), format_args!("{}", self.truck(t).status().code()));
                return Ok(Some(t));
            }
            (kind, subject) => unreachable!("event {kind} for {subject} is never scheduled"),
        }
        Ok(None)
    }

    fn on_arrival(&mut self, t: TruckId) -> Result<(), WorldError> {
        let site = match self.truck(t).phase {
            Phase::Hauling { to, .. } => Site::Processor(to, self.choose_unit(to)),
            Phase::Returning { from, to } => {
                // relocations away from a broken shovel are not cycle legs
                if matches!(from, Site::Processor(..)) {
                    self.truck_mut(t).returns_complete += 1;
                }
                Site::Shovel(to)
            }
            _ => return Err(self.illegal(t, EventKind::ArrivalAtResource)),
        };
        let outcome = self.request(t, site)?;
        self.log_line("arrival", Entity::Truck(t), format_args!("{site} {}", outcome_text(outcome)));
        Ok(())
    }

    fn on_service_complete(&mut self, t: TruckId) -> Result<(), WorldError> {
        let Phase::InService(site) = self.truck(t).phase else {
            return Err(self.illegal(t, EventKind::ServiceComplete));
        };
        match site {
            Site::Shovel(s) => {
                let to = if self.streams.routing.uniform() < self.cfg.simulation.routing_epsilon {
                    ProcessorKind::Crusher
                } else {
                    ProcessorKind::DumpSite
                };
                let zone = self.shovel(s).zone as usize - 1;
                let d = &self.cfg.distributions;
                let dist = match to {
                    ProcessorKind::Crusher => &d.travel_to_crusher[zone],
                    ProcessorKind::DumpSite => &d.travel_to_dump[zone],
                };
                let travel = dist.sample_duration(&mut self.streams.haul);
                let truck = self.truck_mut(t);
                truck.loads_complete += 1;
                truck.phase = Phase::Hauling { from: s, to };
                self.release(site)?;
                self.start_timer(t, EventKind::ArrivalAtResource, travel)?;
                self.log_line("service-complete", Entity::Truck(t), format_args!("loaded {site} -> {to} travel {travel:.6}"));
            }
            Site::Processor(kind, _) => {
                let now = self.now();
                let truck = self.truck_mut(t);
                truck.trips_complete += 1;
                let record = TripRecord {
                    truck: t,
                    completed_at: now,
                    cycle_minutes: now - truck.cycle_start,
                    destination: kind,
                };
                truck.cycle_start = now;
                truck.phase = Phase::AwaitingDecision(site);
                let trip_no = truck.trips_complete;
                self.trips.push(record);
                self.release(site)?;
                self.calendar.schedule(now, EventKind::DecisionRequest, Entity::Truck(t))?;
                self.log_line("service-complete", Entity::Truck(t), format_args!("dumped {site} trip {trip_no}"));
            }
        }
        Ok(())
    }

    /// Online idle unit first, then the shortest queue among online units,
    /// then the shortest overall; ties go to the lowest id.
    fn choose_unit(&self, kind: ProcessorKind) -> u32 {
        let units = match kind {
            ProcessorKind::Crusher => &self.crushers,
            ProcessorKind::DumpSite => &self.dumps,
        };
        let any_online = units.iter().any(|p| p.res.avail.online());
        units
            .iter()
            .filter(|p| !any_online || p.res.avail.online())
            .min_by_key(|p| (p.res.load(), p.id))
            .map(|p| p.id)
            .expect("at least one unit of each processor kind")
    }

    /// Join `site`: served at once if it is online, idle and nobody waits,
    /// otherwise appended to its FIFO queue.
    fn request(&mut self, t: TruckId, site: Site) -> Result<RequestOutcome, WorldError> {
        if matches!(self.truck(t).phase, Phase::Queued(_) | Phase::InService(_)) {
            return Err(WorldError::DuplicateRequest { truck: t, site });
        }
        let now = self.now();
        let res = self.resource(site);
        if res.avail.online() && res.busy_with.is_none() && res.queue.is_empty() {
            self.grant(t, site, 0.0)?;
            return Ok(RequestOutcome::Granted);
        }
        let res = self.resource_mut(site);
        res.queue.push_back(t);
        let pos = res.queue.len();
        let truck = self.truck_mut(t);
        truck.phase = Phase::Queued(site);
        truck.enqueued_at = now;
        if matches!(site, Site::Shovel(_)) {
            self.sample_queues();
        }
        Ok(RequestOutcome::Queued(pos))
    }

    fn grant(&mut self, t: TruckId, site: Site, wait: f64) -> Result<(), WorldError> {
        let now = self.now();
        self.resource_mut(site).busy_with = Some(t);
        self.truck_mut(t).phase = Phase::InService(site);
        let d = &self.cfg.distributions;
        let duration = match site {
            Site::Shovel(s) => {
                self.waits.push(WaitRecord {
                    truck: t,
                    shovel: s,
                    granted_at: now,
                    wait_minutes: wait,
                });
                let class = self.shovels[s as usize - 1].perf_class as usize - 1;
                d.loading[class].sample_duration(&mut self.streams.loading)
            }
            Site::Processor(ProcessorKind::Crusher, _) => d.crusher_time.sample_duration(&mut self.streams.dump),
            Site::Processor(ProcessorKind::DumpSite, _) => d.dump_time.sample_duration(&mut self.streams.dump),
        };
        self.start_timer(t, EventKind::ServiceComplete, duration)
    }

    /// Free the server and hand it to the queue head if the site is online.
    fn release(&mut self, site: Site) -> Result<(), WorldError> {
        self.resource_mut(site).busy_with = None;
        self.serve_next(site)
    }

    fn serve_next(&mut self, site: Site) -> Result<(), WorldError> {
        let res = self.resource_mut(site);
        if !res.avail.online() || res.busy_with.is_some() {
            return Ok(());
        }
        if let Some(next) = res.queue.pop_front() {
            let wait = self.now() - self.truck(next).enqueued_at;
            self.grant(next, site, wait)?;
            if matches!(site, Site::Shovel(_)) {
                self.sample_queues();
            }
        }
        Ok(())
    }

    fn start_timer(&mut self, t: TruckId, kind: EventKind, duration: f64) -> Result<(), WorldError> {
        self.truck_mut(t).timer = Some(Timer {
            kind,
            pending: None,
            remaining: duration,
        });
        self.refresh(t)
    }

    fn activity_runs(&self, t: TruckId) -> bool {
        let truck = self.truck(t);
        if truck.avail.offline {
            return false;
        }
        match truck.phase {
            Phase::InService(site) => self.resource(site).avail.online(),
            _ => true,
        }
    }

    /// Suspend or resume the truck's timed activity to match the current
    /// availability of the truck and the resource serving it.
    fn refresh(&mut self, t: TruckId) -> Result<(), WorldError> {
        let Some(timer) = self.truck(t).timer else {
            return Ok(());
        };
        let runs = self.activity_runs(t);
        let now = self.now();
        let updated = match (timer.pending, runs) {
            (Some(key), false) => {
                self.calendar.cancel(key);
                Timer {
                    pending: None,
                    remaining: (key.fire_at - now).max(0.0),
                    ..timer
                }
            }
            (None, true) => {
                let key = self.calendar.schedule_in(timer.remaining, timer.kind, Entity::Truck(t))?;
                Timer {
                    pending: Some(key),
                    ..timer
                }
            }
            _ => timer,
        };
        self.truck_mut(t).timer = Some(updated);
        Ok(())
    }

    fn break_down(&mut self, e: Entity, repair_after: Option<f64>) -> Result<(), WorldError> {
        let now = self.now();
        let avail = *self.avail_mut(e);
        if avail.offline {
            if repair_after.is_none() && !avail.permanent {
                if let Some(key) = avail.repair_key {
                    self.calendar.cancel(key);
                }
                let a = self.avail_mut(e);
                a.permanent = true;
                a.broken_until = None;
                a.repair_key = None;
                self.log_line("breakdown-onset", e, format_args!("permanent (already down)"));
            } else {
                self.log_line("breakdown-onset", e, format_args!("ignored (already down)"));
            }
            return Ok(());
        }
        let repair_key = match repair_after {
            Some(d) => Some(self.calendar.schedule_in(d, EventKind::RepairComplete, e)?),
            None => None,
        };
        *self.avail_mut(e) = Availability {
            offline: true,
            permanent: repair_after.is_none(),
            broken_until: repair_key.map(|k| k.fire_at),
            repair_key,
        };
        match repair_key {
            Some(k) => self.log_line("breakdown-onset", e, format_args!("repair at {}", k.fire_at)),
            None => self.log_line("breakdown-onset", e, format_args!("permanent")),
        }

        match e {
            Entity::Truck(t) => match self.truck(t).phase {
                Phase::Queued(site) => {
                    self.resource_mut(site).queue.retain(|&q| q != t);
                    self.truck_mut(t).phase = Phase::Detached(site);
                    if matches!(site, Site::Shovel(_)) {
                        self.sample_queues();
                    }
                }
                Phase::InService(site) if repair_after.is_none() => {
                    if let Some(Timer { pending: Some(key), .. }) = self.truck(t).timer {
                        self.calendar.cancel(key);
                    }
                    let truck = self.truck_mut(t);
                    truck.timer = None;
                    truck.phase = Phase::Detached(site);
                    self.release(site)?;
                }
                _ => self.refresh(t)?,
            },
            _ => {
                let site = entity_site(e);
                if let Some(t) = self.resource(site).busy_with {
                    self.refresh(t)?;
                }
                if let (Site::Shovel(_), true) = (site, self.cfg.simulation.requeue_on_breakdown) {
                    let waiting: Vec<TruckId> = self.resource_mut(site).queue.drain(..).collect();
                    for t in waiting {
                        self.truck_mut(t).phase = Phase::AwaitingDecision(site);
                        self.calendar.schedule(now, EventKind::DecisionRequest, Entity::Truck(t))?;
                    }
                    self.sample_queues();
                }
            }
        }
        Ok(())
    }

    fn repair(&mut self, e: Entity) -> Result<(), WorldError> {
        *self.avail_mut(e) = Availability::default();
        self.log_line("repair-complete", e, format_args!(""));
        match e {
            Entity::Truck(t) => match self.truck(t).phase {
                Phase::Detached(site) => {
                    self.request(t, site)?;
                }
                _ => self.refresh(t)?,
            },
            _ => {
                let site = entity_site(e);
                match self.resource(site).busy_with {
                    Some(t) => self.refresh(t)?,
                    None => self.serve_next(site)?,
                }
            }
        }
        if self.background_breakdowns {
            let gap = self.draw_mtbf(e);
            self.calendar
                .schedule_in(gap, EventKind::BreakdownOnset { permanent: false }, e)?;
        }
        Ok(())
    }

    fn failure_dists(&self, e: Entity) -> (&DistributionSpec, &DistributionSpec) {
        let d = &self.cfg.distributions;
        match e {
            Entity::Truck(_) => (&d.mtbf_truck, &d.mttr_truck),
            Entity::Shovel(_) => (&d.mtbf_shovel, &d.mttr_shovel),
            Entity::Crusher(_) => (&d.mtbf_crusher, &d.mttr_crusher),
            Entity::Dump(_) | Entity::Shift => (&d.mtbf_dump, &d.mttr_dump),
        }
    }

    fn draw_mtbf(&mut self, e: Entity) -> f64 {
        let dist = *self.failure_dists(e).0;
        dist.sample_duration(&mut self.streams.breakdown).max(DURATION_FLOOR)
    }

    fn draw_mttr(&mut self, e: Entity) -> f64 {
        let dist = *self.failure_dists(e).1;
        dist.sample_duration(&mut self.streams.breakdown).max(0.0)
    }

    /// Record the waiting-queue lengths. Several changes at one instant keep
    /// only the final state.
    fn sample_queues(&mut self) {
        let at = self.now();
        let waiting = self.waiting_counts();
        match self.queue_samples.last_mut() {
            Some(last) if last.at == at => last.waiting = waiting,
            _ => self.queue_samples.push(QueueSample { at, waiting }),
        }
    }

    fn log_line(&mut self, kind: &str, subject: Entity, detail: std::fmt::Arguments<'_>) {
        let now = self.now();
        if let Some(log) = self.log.as_mut() {
            let mut line = String::new();
            let _ = write!(line, "{now}\t{kind}\t{subject}\t{detail}");
            log.push(line);
        }
    }
}

fn entity_site(e: Entity) -> Site {
    match e {
        Entity::Shovel(id) => Site::Shovel(id),
        Entity::Crusher(id) => Site::Processor(ProcessorKind::Crusher, id),
        Entity::Dump(id) => Site::Processor(ProcessorKind::DumpSite, id),
        Entity::Truck(_) | Entity::Shift => unreachable!("{e} is not a site"),
    }
}

fn outcome_text(o: RequestOutcome) -> String {
    match o {
        RequestOutcome::Granted => "granted".into(),
        RequestOutcome::Queued(pos) => format!("queued {pos}"),
    }
}
