//! Bi-level leader–follower agent-based modelling.
//!
//! A leader sets characteristics of a simulated world; followers learn to
//! act in it; the leader learns (or searches) for characteristics that
//! optimise its own objective given how followers adapt. The crate ships
//! four worlds and a small harness that trains, evaluates and records runs
//! from TOML configuration files.
//!
//! ```no_run
//! use bilevel_abm::harness::{execute, ExperimentConfig};
//!
//! let cfg = ExperimentConfig::from_toml("task = \"scenario\"\ntraining_iterations = 5").unwrap();
//! let run = execute(&cfg, None).unwrap();
//! println!("{:?}", run.mean("eval.demand_std"));
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envs;
pub mod error;
pub mod game;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
