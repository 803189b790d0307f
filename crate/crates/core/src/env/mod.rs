//! Decision-point environment: the simulation pauses whenever a truck needs
//! a shovel, an agent answers, and the simulation resumes until the next
//! request or the end of the shift.

pub mod observation;
pub mod reward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate, MineConfig, ScenarioSpec, Violation};
use crate::kpi::KpiSnapshot;
use crate::world::{ShovelId, TruckId, World, WorldError, WorldOptions};
pub use observation::{encode_state, obs_dim, ObservationError};
use reward::{episodic_reward, immediate_reward, total_return, DecisionWindowState, RewardBreakdown, RewardError};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode is over; call reset")]
    EpisodeOver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reward_breakdown: RewardBreakdown,
    pub kpi_snapshot: KpiSnapshot,
    /// Simulated minutes between the previous decision and this one.
    pub tau: f64,
}

/// What the agent sees after reset or a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Truck awaiting a shovel, `None` once the shift is over.
    pub truck: Option<TruckId>,
    pub clock: f64,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub struct MineEnv {
    cfg: MineConfig,
    scenario: ScenarioSpec,
    options: WorldOptions,
    world: Option<World>,
    window: DecisionWindowState,
    trip_cursor: usize,
    wait_cursor: usize,
    last_tau: f64,
    last_q: f64,
    last_clock: f64,
    imm_rewards: Vec<f64>,
    epi_reward: Option<f64>,
}

impl MineEnv {
    pub fn new(cfg: MineConfig, scenario: ScenarioSpec) -> Result<MineEnv, EnvError> {
        validate(&cfg, &scenario).map_err(EnvError::InvalidConfig)?;
        let window = DecisionWindowState::new(&cfg.reward, cfg.fleet.shovels);
        Ok(MineEnv {
            cfg,
            scenario,
            options: WorldOptions::default(),
            world: None,
            window,
            trip_cursor: 0,
            wait_cursor: 0,
            last_tau: 0.0,
            last_q: 0.0,
            last_clock: 0.0,
            imm_rewards: Vec::new(),
            epi_reward: None,
        })
    }

    pub fn with_event_log(mut self, on: bool) -> Self {
        self.options.log_events = on;
        self
    }

    pub fn config(&self) -> &MineConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim(self.cfg.fleet.shovels)
    }

    pub fn n_actions(&self) -> usize {
        self.cfg.fleet.shovels
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn pending_truck(&self) -> Option<TruckId> {
        self.world.as_ref().and_then(World::pending_decision)
    }

    pub fn is_done(&self) -> bool {
        self.epi_reward.is_some()
    }

    pub fn immediate_rewards(&self) -> &[f64] {
        &self.imm_rewards
    }

    /// Discounted episode return, available once the shift has ended.
    pub fn episode_return(&self) -> Option<f64> {
        let epi = self.epi_reward?;
        total_return(&self.imm_rewards, epi, self.cfg.reward.discount).ok()
    }

    /// Start a fresh shift and run it to the first decision request.
    pub fn reset(&mut self, seed: u64) -> Result<Transition, EnvError> {
        self.world = Some(World::new(&self.cfg, &self.scenario, seed, self.options)?);
        self.window = DecisionWindowState::new(&self.cfg.reward, self.cfg.fleet.shovels);
        self.trip_cursor = 0;
        self.wait_cursor = 0;
        self.last_tau = 0.0;
        self.last_q = 0.0;
        self.last_clock = 0.0;
        self.imm_rewards.clear();
        self.epi_reward = None;

        let truck = self.world_mut()?.next_decision()?;
        let mut breakdown = RewardBreakdown::default();
        match truck {
            Some(_) => self.record_decision_point(),
            None => {
                let epi = self.finish_episode()?;
                breakdown.r_epi = epi.r_epi;
                breakdown.p_ratio = epi.p_ratio;
                breakdown.bonus = epi.bonus;
                breakdown.total = epi.r_epi;
            }
        }
        self.transition(truck, breakdown, 0.0)
    }

    /// Assign the pending truck to `shovel` and run to the next decision.
    /// Nothing changes when the action is rejected.
    pub fn step(&mut self, shovel: ShovelId) -> Result<Transition, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        let world = self.world.as_mut().ok_or(EnvError::NotReset)?;
        let truck = world.pending_decision().ok_or(WorldError::NoPendingDecision)?;
        world.assign(truck, shovel)?;
        self.window.record_assignment(shovel);
        let next = self.world_mut()?.next_decision()?;
        self.record_decision_point();
        let mut breakdown = immediate_reward(&self.window, &self.cfg.reward);
        self.imm_rewards.push(breakdown.r_imm);
        if next.is_none() {
            let epi = self.finish_episode()?;
            breakdown.r_epi = epi.r_epi;
            breakdown.p_ratio = epi.p_ratio;
            breakdown.bonus = epi.bonus;
            breakdown.total = breakdown.r_imm + epi.r_epi;
        }
        let clock = self.world_ref()?.now().minutes();
        let tau = clock - self.last_clock;
        self.last_clock = clock;
        self.transition(next, breakdown, tau)
    }

    fn world_ref(&self) -> Result<&World, EnvError> {
        self.world.as_ref().ok_or(EnvError::NotReset)
    }

    fn world_mut(&mut self) -> Result<&mut World, EnvError> {
        self.world.as_mut().ok_or(EnvError::NotReset)
    }

    /// Push the trip time and shovel queue time for the interval since the
    /// previous decision point, carrying values forward over empty intervals.
    fn record_decision_point(&mut self) {
        let world = self.world.as_ref().expect("world present");
        let trips = &world.trips()[self.trip_cursor..];
        if !trips.is_empty() {
            self.last_tau = trips.iter().map(|t| t.cycle_minutes).sum::<f64>() / trips.len() as f64;
        }
        self.trip_cursor = world.trips().len();

        let waits = &world.waits()[self.wait_cursor..];
        if !waits.is_empty() {
            let n = world.shovels().len();
            let mut sum = vec![0.0; n];
            let mut count = vec![0usize; n];
            for w in waits {
                sum[w.shovel as usize - 1] += w.wait_minutes;
                count[w.shovel as usize - 1] += 1;
            }
            let means: Vec<f64> = sum
                .iter()
                .zip(&count)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| s / c as f64)
                .collect();
            self.last_q = means.iter().sum::<f64>() / means.len() as f64;
        }
        self.wait_cursor = world.waits().len();
        self.window.push_decision_point(self.last_tau, self.last_q);
    }

    fn finish_episode(&mut self) -> Result<reward::EpisodicReward, EnvError> {
        let world = self.world_ref()?;
        let epi = episodic_reward(
            world.production_volume(),
            self.cfg.simulation.production_target,
            self.window.diversity(),
            &self.cfg.reward,
        )?;
        self.epi_reward = Some(epi.r_epi);
        Ok(epi)
    }

    fn transition(
        &self,
        truck: Option<TruckId>,
        reward_breakdown: RewardBreakdown,
        tau: f64,
    ) -> Result<Transition, EnvError> {
        let world = self.world_ref()?;
        Ok(Transition {
            obs: encode_state(world, truck, &self.window)?,
            truck,
            clock: world.now().minutes(),
            reward: reward_breakdown.total,
            done: truck.is_none(),
            info: StepInfo {
                reward_breakdown,
                kpi_snapshot: KpiSnapshot::from_world(world),
                tau,
            },
        })
    }
}
