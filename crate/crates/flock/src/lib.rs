//! Rigidity-based flocking control of double-integrator agent swarms whose
//! unknown dynamics are learned online by per-agent Gaussian-process
//! regression, with a computable probabilistic bound on the tracking error.
//!
//! The crate is organized around the pipeline of a scenario run:
//!
//! - [`network`]: graph and rigidity linear algebra (incidence, Laplacian,
//!   rigidity matrix, distance errors, rigidity tests).
//! - [`control`]: the nominal flocking law and the learning-based law, in
//!   stacked and decentralized forms.
//! - [`gp`]: exact GP regression per agent plus the error-bound machinery
//!   (information gain, bound coefficients, pointwise bounds).
//! - [`sim`]: deterministic fixed-step closed-loop simulation with online
//!   data collection and a dataset freeze time.
//! - [`metrics`]: disagreement, Lyapunov value, trajectory metrics, rate
//!   fits, and the ultimate bound over the state domain.
//! - [`config`]: JSON scenario configs, validation, and built-in presets.
//! - [`runner`]: file artifacts (CSV, JSON, SVG) and run comparison for the
//!   `flock` command-line front end.

pub mod config;
pub mod control;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod network;
pub mod runner;
pub mod sim;
pub mod stacked;
pub mod svg;
pub mod util;

pub use config::ScenarioConfig;
pub use error::{ConfigError, ControlError, GpError, MetricsError, NetworkError, SimError};
pub use network::Framework;
pub use stacked::StackedVector;
