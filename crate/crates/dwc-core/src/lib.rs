//! Closed-loop dynamic wireless charging (DWC) simulator.
//!
//! Models a time-varying transmitter-coil field over a fixed measurement
//! grid, trains a two-layer LSTM to predict where the field will peak one
//! step ahead, and drives a simulated EV/RSU control loop that is scored
//! against a center-of-lane baseline and a cheating argmax oracle.
//!
//! Pipeline:
//!
//! ```text
//! field_sim → dataset → lstm → controller → eval
//! ```
//!
//! The `dwc` binary (see the `cli` module) orchestrates the stages with
//! JSON configs and seeded reproducibility.

pub mod cli;
pub mod controller;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod field_sim;
pub mod lstm;
mod seeding;

pub use error::{Error, Result};
