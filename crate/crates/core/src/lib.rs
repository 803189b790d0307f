//! Discrete-event simulation of open-pit truck haulage with pluggable
//! dispatchers, a decision-point environment for external agents, and a
//! benchmark harness.

pub mod bench;
pub mod bridge;
pub mod config;
pub mod dispatch;
pub mod env;
pub mod kernel;
pub mod kpi;
pub mod world;
