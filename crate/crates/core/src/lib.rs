//! Simulator and verification lab for quantum cut-and-choose and the
//! two-party quantum computation protocol built on it.
//!
//! The crate executes the honest protocol end to end on small graphs, runs
//! adversarial strategies against it, and numerically checks the security
//! bounds that can be evaluated at desk scale.

pub mod qsim;
pub mod mbqc;
pub mod dtg;
pub mod crypto;
pub mod protocols;
pub mod harness;
pub mod bounds;
