//! Multi-agent pickup and delivery on maps made of a bi-connected main area
//! with dead-end trees attached to it.
//!
//! * [`world`]: map parsing, main-area/tree decomposition, distance fields.
//! * [`engine`]: the PIBT-family planner (naive PIBT, PIBTTP, PIBTTP-TA).
//! * [`baseline_tp`]: the Token Passing baseline.
//! * [`sim`]: instance runner, validation, traces and trace audits.
//! * [`bench`]: benchmark sweeps and map validation reports.

pub mod baseline_tp;
pub mod bench;
pub mod engine;
pub mod maps;
pub mod sim;
pub mod world;
