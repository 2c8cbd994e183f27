//! Delay and success-probability analysis for K-tier cellular networks with
//! spatio-temporal traffic.
//!
//! The crate has two halves that validate each other:
//!
//! * [`analytic`]: closed-form statistics of the typical user under i.i.d.
//!   interferer activity - association probabilities, cell user counts, the
//!   success-probability CDF recovered by Gil-Pelaez inversion, per-policy
//!   mean-delay CDFs, dominant/modified bounding pairs, and delay outage.
//! * [`simulator`]: a slot-stepped Monte Carlo of the true interacting
//!   queues on a sampled deployment, producing the per-user statistics the
//!   analytic bounds must contain.
//!
//! Supporting modules: [`model`] (domain types), [`specfun`] (quadrature,
//! hypergeometric series, Gil-Pelaez engine), [`spatial`] (torus
//! deployments and biased association), [`config`] (TOML experiment
//! configuration).

pub mod analytic;
pub mod config;
pub mod model;
pub mod simulator;
pub mod spatial;
pub mod specfun;

pub use config::{Config, ConfigError, RawConfig};
pub use model::{
    dbm_to_mw, InterfererModel, MarkedUser, ModelError, NetworkParams, SchedulingPolicy, TierSpec,
};
