//! A policy-evaluation laboratory for off-policy temporal-difference
//! learning with emphatic weightings.
//!
//! The pieces:
//!
//! - [`mdp`]: finite MDPs, tabular policies, stationary analysis, seeded
//!   simulation
//! - [`oracle`]: exact ground truth (true values, expected emphasis, n-step
//!   reward vectors, fixed points) via dense solves
//! - [`learners`]: the stochastic update rules — off-policy TD(n), ETD(n),
//!   V-trace, time-reversed TD emphasis learners, and X-ETD(n)
//! - [`replay`]: overlapping segment extraction and a uniform replay buffer
//! - [`stability`]: limiting update matrices, positive-definiteness
//!   certificates, and the constructive thresholds tau / xi / eta0
//! - `bench` + [`config`] + [`csv`]: the experiment harness behind the
//!   `etd-bench` CLI
//!
//! The [`baird`] module builds the seven-state over-parameterized
//! counterexample the harness reproduces.

pub mod baird;
pub mod bench;
pub mod config;
pub mod csv;
pub mod error;
pub mod features;
pub mod learners;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod replay;
pub mod stability;

pub use error::{Error, Result};
