//! Flat observation vector seen by a dispatcher at a decision point.
//!
//! Layout, all values in `[0, 1]`:
//! - per shovel, ascending id: 4 id bits (MSB first), waiting trucks / (2·TR)
//!   clamped to 1, online bit;
//! - active truck: 6 id bits, completed trips / 500 clamped to 1, 3 status
//!   bits;
//! - fleet: mean trips / 500 clamped to 1, share of each shovel among the
//!   last 10 assignments, assignment diversity.

use thiserror::Error;

use super::reward::DecisionWindowState;
use crate::world::{TruckId, World};

pub const SHOVEL_ID_BITS: usize = 4;
pub const TRUCK_ID_BITS: usize = 6;
pub const TRIP_SCALE: f64 = 500.0;

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("id {id} does not fit in {bits} bits")]
    Overflow { id: u32, bits: usize },
}

pub fn obs_dim(shovels: usize) -> usize {
    7 * shovels + 12
}

fn push_bits(out: &mut Vec<f64>, id: u32, bits: usize) -> Result<(), ObservationError> {
    if id >= 1 << bits {
        return Err(ObservationError::Overflow { id, bits });
    }
    for b in (0..bits).rev() {
        out.push(f64::from((id >> b) & 1));
    }
    Ok(())
}

/// Encode the world for `active`. `None` (shift over) zeroes the truck
/// block.
pub fn encode_state(
    world: &World,
    active: Option<TruckId>,
    window: &DecisionWindowState,
) -> Result<Vec<f64>, ObservationError> {
    let shovels = world.shovels();
    let trucks = world.trucks();
    let mut out = Vec::with_capacity(obs_dim(shovels.len()));
    let queue_scale = 2.0 * trucks.len() as f64;
    for s in shovels {
        push_bits(&mut out, s.id, SHOVEL_ID_BITS)?;
        out.push((s.res.queue.len() as f64 / queue_scale).min(1.0));
        out.push(if s.online() { 1.0 } else { 0.0 });
    }

    match active {
        Some(id) => {
            let t = world.truck(id);
            push_bits(&mut out, id, TRUCK_ID_BITS)?;
            out.push((f64::from(t.trips_complete) / TRIP_SCALE).min(1.0));
            out.extend(t.status().bits().map(f64::from));
        }
        None => out.extend([0.0; TRUCK_ID_BITS + 4]),
    }

    let mean_trips = if trucks.is_empty() {
        0.0
    } else {
        trucks.iter().map(|t| f64::from(t.trips_complete)).sum::<f64>() / trucks.len() as f64
    };
    out.push((mean_trips / TRIP_SCALE).min(1.0));
    let usage = window.usage_window();
    let mut shares = vec![0.0; shovels.len()];
    for &a in &usage {
        shares[a as usize - 1] += 1.0;
    }
    if !usage.is_empty() {
        shares.iter_mut().for_each(|x| *x /= usage.len() as f64);
    }
    out.extend(shares);
    out.push(if usage.is_empty() { 0.0 } else { window.diversity() });
    Ok(out)
}
