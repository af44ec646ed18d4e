//! Cascading blackout simulation on power transmission grids.
//!
//! The model couples a fast timescale (random and overload-driven line
//! outages, redispatch, load shedding) with a slow one (demand growth, line
//! and generation upgrades), resolved at 5-minute steps with an intraday
//! demand profile, random power bursts and threshold-based demand control.

pub mod cascade;
pub mod control;
pub mod demand;
pub mod dispatch;
pub mod evolution;
pub mod grid;
pub mod harness;
pub mod metrics;
