//! Monte Carlo reliability simulation of transmission grids.
//!
//! Technical components (loads, generators, lines with protection) and grid
//! operators are modelled as interacting state machines on top of a DC power
//! flow. A discrete-event engine simulates operating years; the `stats`
//! module turns the blackout records into EENS and complementary cumulative
//! blackout frequency curves.

pub mod dispatch;
pub mod engine;
pub mod error;
pub mod event;
pub mod fsm;
pub mod io;
pub mod lp;
pub mod model;
pub mod operator;
pub mod opf;
pub mod powerflow;
pub mod rts96;
pub mod splitting;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
pub use model::{LoadProfile, Network, NetworkModel};
