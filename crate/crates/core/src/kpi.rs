//! Shift-level performance indicators, hourly series and cross-run
//! aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Costs;
use crate::kernel::SimTime;
use crate::world::{FuelRates, QueueSample, World};

#[derive(Debug, Error, PartialEq)]
pub enum KpiError {
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("run {run} has {got} values, expected {expected}")]
    Ragged { run: usize, got: usize, expected: usize },
}

pub fn total_production(trips: u64, payload: f64) -> f64 {
    trips as f64 * payload
}

/// Completed trips per interval of `dt` minutes, scaled to trips per hour.
/// `timestamps` must be sorted; `intervals` is the series length.
pub fn trips_per_hour(timestamps: &[f64], dt: f64, intervals: usize) -> Vec<f64> {
    raw_trip_counts(timestamps, dt, intervals)
        .into_iter()
        .map(|n| n as f64 * 60.0 / dt)
        .collect()
}

/// Unscaled completions per interval `[dt·(h-1), dt·h)`. Completions at or
/// past the last boundary land in the final interval.
pub fn raw_trip_counts(timestamps: &[f64], dt: f64, intervals: usize) -> Vec<u64> {
    let mut counts = vec![0u64; intervals];
    if intervals == 0 {
        return counts;
    }
    for &t in timestamps {
        let h = ((t / dt) as usize).min(intervals - 1);
        counts[h] += 1;
    }
    counts
}

/// Per-hour `(max over instants of max over shovels, mean over instants of
/// mean over shovels)`. An hour without samples repeats the state left by
/// the last earlier sample.
pub fn queue_stats_hourly(samples: &[QueueSample], hours: usize) -> (Vec<f64>, Vec<f64>) {
    let mut max_series = vec![0.0; hours];
    let mut avg_series = vec![0.0; hours];
    let mut carried: Option<&[u32]> = None;
    let mut i = 0;
    for h in 0..hours {
        let end = 60.0 * (h + 1) as f64;
        let mut bucket: Vec<&[u32]> = Vec::new();
        while i < samples.len() && (samples[i].at.minutes() < end || h + 1 == hours) {
            bucket.push(&samples[i].waiting);
            i += 1;
        }
        if bucket.is_empty() {
            if let Some(last) = carried {
                bucket.push(last);
            }
        }
        if let Some(&last) = bucket.last() {
            carried = Some(last);
        }
        let (max, avg) = nested_stats(&bucket);
        max_series[h] = max;
        avg_series[h] = avg;
    }
    (max_series, avg_series)
}

fn nested_stats(instants: &[&[u32]]) -> (f64, f64) {
    if instants.is_empty() {
        return (0.0, 0.0);
    }
    let mut max = 0u32;
    let mut sum_of_means = 0.0;
    for q in instants {
        max = max.max(q.iter().copied().max().unwrap_or(0));
        if !q.is_empty() {
            sum_of_means += q.iter().map(|&x| f64::from(x)).sum::<f64>() / q.len() as f64;
        }
    }
    (f64::from(max), sum_of_means / instants.len() as f64)
}

pub fn cost_per_ton(known: f64, estimated: f64, p_vol: f64) -> Option<f64> {
    (p_vol > 0.0).then(|| (known + estimated) / p_vol)
}

pub fn fuel_per_ton(trips: u64, fuel: &FuelRates, p_vol: f64) -> Option<f64> {
    (p_vol > 0.0).then(|| trips as f64 * fuel.unit() / p_vol)
}

/// Element-wise mean of equal-length series.
pub fn aggregate_runs(runs: &[Vec<f64>]) -> Result<Vec<f64>, KpiError> {
    let first = runs.first().ok_or(KpiError::NoRuns)?;
    let mut out = vec![0.0; first.len()];
    for (run, series) in runs.iter().enumerate() {
        if series.len() != first.len() {
            return Err(KpiError::Ragged {
                run,
                got: series.len(),
                expected: first.len(),
            });
        }
        for (acc, x) in out.iter_mut().zip(series) {
            *acc += x;
        }
    }
    let r = runs.len() as f64;
    out.iter_mut().for_each(|x| *x /= r);
    Ok(out)
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n − 1); absent below two values.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub total_trips: u64,
    pub production: f64,
    pub trips_by_hour: Vec<f64>,
    pub raw_trips_by_hour: Vec<u64>,
    pub max_queue_by_hour: Vec<f64>,
    pub avg_queue_by_hour: Vec<f64>,
    pub cost_per_ton: Option<f64>,
    pub fuel_per_ton: Option<f64>,
    pub fuel_rates: FuelRates,
}

pub fn shift_hours(shift_minutes: f64) -> usize {
    (shift_minutes / 60.0).ceil() as usize
}

impl KpiReport {
    pub fn from_world(world: &World) -> KpiReport {
        let cfg = world.config();
        let hours = shift_hours(cfg.simulation.shift_minutes);
        let stamps: Vec<f64> = world.trips().iter().map(|t| t.completed_at.minutes()).collect();
        let n = world.total_trips();
        let production = world.production_volume();
        let (max_q, avg_q) = queue_stats_hourly(world.queue_samples(), hours);
        let Costs { known, estimated } = cfg.costs;
        KpiReport {
            total_trips: n,
            production,
            trips_by_hour: trips_per_hour(&stamps, 60.0, hours),
            raw_trips_by_hour: raw_trip_counts(&stamps, 60.0, hours),
            max_queue_by_hour: max_q,
            avg_queue_by_hour: avg_q,
            cost_per_ton: cost_per_ton(known, estimated, production),
            fuel_per_ton: fuel_per_ton(n, &world.fuel_rates(), production),
            fuel_rates: world.fuel_rates(),
        }
    }
}

/// Running figures attached to each environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSnapshot {
    pub clock: SimTime,
    pub total_trips: u64,
    pub production: f64,
    pub waiting: Vec<u32>,
    pub shovels_online: usize,
}

impl KpiSnapshot {
    pub fn from_world(world: &World) -> KpiSnapshot {
        KpiSnapshot {
            clock: world.now(),
            total_trips: world.total_trips(),
            production: world.production_volume(),
            waiting: world.waiting_counts(),
            shovels_online: world.online_shovels().iter().filter(|&&o| o).count(),
        }
    }
}
