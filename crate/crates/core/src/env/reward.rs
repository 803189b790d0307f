//! Reward shaping for dispatch decisions.
//!
//! The immediate reward is a sum of four penalties: exponentially weighted
//! trip time and shovel queue time (min-max normalized over the episode),
//! lack of assignment diversity, and repeated assignments to one shovel.
//! At shift end an episodic term scores production against the target and
//! the final diversity, plus a tiered bonus.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("exponential window is empty (no decision points yet)")]
    EmptyWindow,
    #[error("production target must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("discount must lie in [0, 1], got {0}")]
    DiscountOutOfRange(f64),
    #[error("a return needs at least one reward")]
    NoRewards,
}

/// Reward hyperparameters. Defaults are the demonstration values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Trip time penalty weight.
    pub alpha: f64,
    /// Shovel queue time penalty weight.
    pub beta: f64,
    /// Diversity penalty weight.
    pub gamma: f64,
    /// Streak penalty weight.
    pub delta: f64,
    /// Episodic production weight.
    pub omega1: f64,
    /// Episodic diversity penalty weight.
    pub omega2: f64,
    pub b1: f64,
    pub b2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Exponential window length in decision points.
    pub k: usize,
    /// Exponential growth rate of the window weights.
    pub mu: f64,
    pub div_window: usize,
    pub rho: f64,
    pub streak_window: usize,
    /// Discount applied by [`total_return`].
    pub discount: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            beta: 0.15,
            gamma: 0.30,
            delta: 0.30,
            omega1: 0.4,
            omega2: 0.6,
            b1: 0.5,
            b2: 0.2,
            theta1: 0.95,
            theta2: 0.90,
            phi1: 0.65,
            phi2: 0.50,
            k: 5,
            mu: 0.5,
            div_window: 30,
            rho: 1e-10,
            streak_window: 15,
            discount: 0.99,
        }
    }
}

impl RewardParams {
    /// Ordering and range violations, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
        ];
        for (name, w) in weights {
            if !(w >= 0.0) {
                out.push(format!("{name} must be >= 0, got {w}"));
            }
        }
        if !(self.b1 > self.b2 && self.b2 > 0.0) {
            out.push(format!(
                "bonus values must satisfy b1 > b2 > 0 (b1={}, b2={})",
                self.b1, self.b2
            ));
        }
        if !(self.theta1 > self.theta2) {
            out.push(format!(
                "production thresholds must satisfy theta1 > theta2 (theta1={}, theta2={})",
                self.theta1, self.theta2
            ));
        }
        if !(self.phi1 > self.phi2) {
            out.push(format!(
                "diversity thresholds must satisfy phi1 > phi2 (phi1={}, phi2={})",
                self.phi1, self.phi2
            ));
        }
        if self.k < 1 {
            out.push("k must be >= 1".into());
        }
        if self.div_window < 1 || self.streak_window < 1 {
            out.push("diversity and streak windows must be >= 1".into());
        }
        if !(self.rho >= 0.0) {
            out.push(format!("rho must be >= 0, got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            out.push(format!("discount must lie in [0, 1], got {}", self.discount));
        }
        out
    }
}

/// Normalized window weights `e^{mu j} / sum_i e^{mu i}` for `j = 1..n`,
/// `n = min(k, decisions)`. The last weight belongs to the most recent point.
pub fn exp_weights(k: usize, mu: f64, decisions: usize) -> Result<Vec<f64>, RewardError> {
    let n = k.min(decisions);
    if n == 0 {
        return Err(RewardError::EmptyWindow);
    }
    // shifted by the largest exponent; the ratio is unchanged
    let raw: Vec<f64> = (1..=n).map(|j| (mu * (j as f64 - n as f64)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Normalized Shannon entropy of shovel assignments (ids `1..=sh_count`).
///
/// Returns 1.0 for a single shovel and 0.0 for an empty window.
pub fn diversity_score(assignments: &[u32], sh_count: usize, rho: f64) -> f64 {
    if sh_count <= 1 {
        return 1.0;
    }
    if assignments.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; sh_count];
    for &a in assignments {
        let idx = (a as usize).clamp(1, sh_count) - 1;
        counts[idx] += 1;
    }
    let total = assignments.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * (p + rho).log2()
        })
        .sum();
    (h / (sh_count as f64).log2()).clamp(0.0, 1.0)
}

/// Fraction of adjacent equal pairs. Zero for fewer than two assignments.
pub fn streak_penalty(assignments: &[u32]) -> f64 {
    if assignments.len() < 2 {
        return 0.0;
    }
    let repeats = assignments.windows(2).filter(|w| w[0] == w[1]).count();
    repeats as f64 / (assignments.len() - 1) as f64
}

/// Tiered performance bonus: `>=` on production thresholds, strict `>` on
/// diversity thresholds.
pub fn performance_bonus(p_ratio: f64, d_final: f64, params: &RewardParams) -> f64 {
    if p_ratio >= params.theta1 && d_final > params.phi1 {
        params.b1
    } else if p_ratio >= params.theta2 && d_final > params.phi2 {
        params.b2
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodicReward {
    pub p_ratio: f64,
    pub d_final: f64,
    pub bonus: f64,
    pub r_epi: f64,
}

pub fn episodic_reward(
    p_vol: f64,
    p_target: f64,
    d_final: f64,
    params: &RewardParams,
) -> Result<EpisodicReward, RewardError> {
    if !(p_target > 0.0) {
        return Err(RewardError::NonPositiveTarget(p_target));
    }
    let p_ratio = (p_vol / p_target).min(1.0);
    let bonus = performance_bonus(p_ratio, d_final, params);
    let r_epi = params.omega1 * p_ratio - params.omega2 * (1.0 - d_final) + bonus;
    Ok(EpisodicReward {
        p_ratio,
        d_final,
        bonus,
        r_epi,
    })
}

/// Discounted return where the episodic term joins the last immediate reward.
pub fn total_return(imm_rewards: &[f64], epi_reward: f64, discount: f64) -> Result<f64, RewardError> {
    if !(0.0..=1.0).contains(&discount) {
        return Err(RewardError::DiscountOutOfRange(discount));
    }
    let (last, head) = imm_rewards.split_last().ok_or(RewardError::NoRewards)?;
    let mut g = 0.0;
    let mut factor = 1.0;
    for r in head {
        g += factor * r;
        factor *= discount;
    }
    Ok(g + factor * (last + epi_reward))
}

/// Per-decision reward decomposition, reported to agents in `info`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Exponentially weighted trip time (minutes).
    pub tt_avg: f64,
    /// Exponentially weighted shovel queue time (minutes).
    pub q_avg: f64,
    pub tt_norm: f64,
    pub q_norm: f64,
    pub div_score: f64,
    pub streak: f64,
    pub tt_penalty: f64,
    pub q_penalty: f64,
    pub div_penalty: f64,
    pub streak_penalty: f64,
    pub r_imm: f64,
    /// Zero except on the terminal decision.
    pub r_epi: f64,
    pub p_ratio: f64,
    pub bonus: f64,
    /// `r_imm + r_epi`.
    pub total: f64,
}

/// Sliding windows feeding the immediate reward.
#[derive(Debug, Clone)]
pub struct DecisionWindowState {
    k: usize,
    mu: f64,
    div_window: usize,
    streak_window: usize,
    rho: f64,
    sh_count: usize,
    trip_times: VecDeque<f64>,
    queue_times: VecDeque<f64>,
    assignments: VecDeque<u32>,
    history_cap: usize,
    tt_range: Option<(f64, f64)>,
    q_range: Option<(f64, f64)>,
    decision_points: usize,
}

/// Decisions kept for the recent-usage observation feature.
pub const USAGE_WINDOW: usize = 10;

impl DecisionWindowState {
    pub fn new(params: &RewardParams, sh_count: usize) -> Self {
        let history_cap = params
            .div_window
            .max(params.streak_window)
            .max(USAGE_WINDOW);
        Self {
            k: params.k,
            mu: params.mu,
            div_window: params.div_window,
            streak_window: params.streak_window,
            rho: params.rho,
            sh_count,
            trip_times: VecDeque::with_capacity(params.k),
            queue_times: VecDeque::with_capacity(params.k),
            assignments: VecDeque::with_capacity(history_cap),
            history_cap,
            tt_range: None,
            q_range: None,
            decision_points: 0,
        }
    }

    pub fn decision_points(&self) -> usize {
        self.decision_points
    }

    /// Record the trip time and queue time observed at a new decision point.
    pub fn push_decision_point(&mut self, trip_time: f64, queue_time: f64) {
        push_bounded(&mut self.trip_times, trip_time, self.k);
        push_bounded(&mut self.queue_times, queue_time, self.k);
        self.decision_points += 1;
        let (tt, q) = self.weighted_averages().expect("window is non-empty");
        self.tt_range = Some(widen(self.tt_range, tt));
        self.q_range = Some(widen(self.q_range, q));
    }

    pub fn record_assignment(&mut self, shovel: u32) {
        push_bounded(&mut self.assignments, shovel, self.history_cap);
    }

    fn recent(&self, n: usize) -> Vec<u32> {
        let skip = self.assignments.len().saturating_sub(n);
        self.assignments.iter().skip(skip).copied().collect()
    }

    pub fn diversity_window(&self) -> Vec<u32> {
        self.recent(self.div_window)
    }

    pub fn streak_window(&self) -> Vec<u32> {
        self.recent(self.streak_window)
    }

    pub fn usage_window(&self) -> Vec<u32> {
        self.recent(USAGE_WINDOW)
    }

    pub fn diversity(&self) -> f64 {
        diversity_score(&self.diversity_window(), self.sh_count, self.rho)
    }

    pub fn streak(&self) -> f64 {
        streak_penalty(&self.streak_window())
    }

    /// Exponentially weighted trip time and queue time over the window.
    pub fn weighted_averages(&self) -> Option<(f64, f64)> {
        let w = exp_weights(self.k, self.mu, self.trip_times.len()).ok()?;
        let dot = |xs: &VecDeque<f64>| xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>();
        Some((dot(&self.trip_times), dot(&self.queue_times)))
    }

    /// Min-max normalized weighted averages against the episode's extrema.
    pub fn normalized_averages(&self) -> Option<(f64, f64)> {
        let (tt, q) = self.weighted_averages()?;
        Some((
            min_max(tt, self.tt_range.expect("set with window")),
            min_max(q, self.q_range.expect("set with window")),
        ))
    }
}

fn push_bounded<T>(buf: &mut VecDeque<T>, value: T, cap: usize) {
    if buf.len() == cap {
        buf.pop_front();
    }
    buf.push_back(value);
}

fn widen(range: Option<(f64, f64)>, x: f64) -> (f64, f64) {
    match range {
        Some((lo, hi)) => (lo.min(x), hi.max(x)),
        None => (x, x),
    }
}

/// `(x - min) / (max - min)`, or 0 when the range is degenerate.
pub fn min_max(x: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Immediate reward from the current window. With no decision point
/// recorded yet, every component is zero.
pub fn immediate_reward(window: &DecisionWindowState, params: &RewardParams) -> RewardBreakdown {
    let Some((tt_norm, q_norm)) = window.normalized_averages() else {
        return RewardBreakdown::default();
    };
    let (tt_avg, q_avg) = window.weighted_averages().unwrap_or_default();
    let div_score = window.diversity();
    let streak = window.streak();
    let mut b = compose_immediate(tt_norm, q_norm, div_score, streak, params);
    b.tt_avg = tt_avg;
    b.q_avg = q_avg;
    b
}

/// The weighted sum of the four penalties for already-normalized inputs.
pub fn compose_immediate(
    tt_norm: f64,
    q_norm: f64,
    div_score: f64,
    streak: f64,
    params: &RewardParams,
) -> RewardBreakdown {
    let tt_penalty = params.alpha * tt_norm;
    let q_penalty = params.beta * q_norm;
    let div_penalty = params.gamma * (1.0 - div_score);
    let streak_penalty = params.delta * streak;
    let r_imm = -(tt_penalty + q_penalty + div_penalty + streak_penalty);
    RewardBreakdown {
        tt_norm,
        q_norm,
        div_score,
        streak,
        tt_penalty,
        q_penalty,
        div_penalty,
        streak_penalty,
        r_imm,
        total: r_imm,
        ..RewardBreakdown::default()
    }
}
