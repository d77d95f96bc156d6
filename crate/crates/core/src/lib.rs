//! Hybrid scheduled/contended uplink MAC for RIS-assisted multi-user networks.

// Negated comparisons are deliberate: they reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dcf;
pub mod error;
pub mod experiment;
pub mod optimizer;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::{Error, Infeasibility, Result};
pub use scenario::Scenario;
