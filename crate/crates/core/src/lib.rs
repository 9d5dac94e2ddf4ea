//! Simulation and analysis toolkit for single-user multi-beam
//! millimeter-wave links.
//!
//! - [`simkernel`]: deterministic discrete-event engine
//! - [`channel`]: link budget, antenna pattern, SINR and rate
//! - [`training`]: concurrent sector sweeps and beam pairing
//! - [`power`]: per-beam power allocation policies
//! - [`tracking`]: cooperative beam tracking under blockage
//! - [`sync`]: multi-beam transmission synchronization
//! - [`harness`]: experiment runners, outage analytics and CSV output

// `!(x > 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod harness;
pub mod power;
pub mod scenario;
pub mod simkernel;
pub mod sync;
pub mod tracking;
pub mod training;
