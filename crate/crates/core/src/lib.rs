//! Cooperative learning of several classifiers under label noise.
//!
//! Classifiers trained on disjoint parts of a noisy dataset supervise one
//! another through a weighted average of their predictions. The crate holds
//! the risk algebra behind that average, label-noise simulation, a small MLP
//! with an analytic backward pass, the cooperative loss, training loops for
//! the cooperative method and its baselines, and the experiment driver.

pub mod cli;
pub mod cooperation;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod riskmath;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
