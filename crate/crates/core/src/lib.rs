//! Overage-proportional slack clearing and the checks that go with it.
//!
//! * [`mechanism`]: decomposition, linear and power-family clearing, budget identity.
//! * [`strategy`]: best replies, dominance sweeps, Nash and coalition checks.
//! * [`boundary`]: jumps at `X = I` and the noise-bias experiment.
//! * [`policy`]: multi-period settlement under a penalty collar.
//! * [`classic`]: proportional and constrained-equal-awards rules, No-Sucker-Loss audit.
//!
//! Players are indexed from 0.

pub mod boundary;
pub mod classic;
pub mod error;
pub mod mechanism;
pub mod policy;
pub mod sampling;
pub mod strategy;

pub use error::{Error, Result};
pub use mechanism::{
    budget_identity_residual, clear_alpha, clear_alpha_with, clear_linear, clear_linear_with,
    decompose, scarcity_factor, AlphaRule, ClaimProfile, ClearingConfig, ClearingOutcome,
    Entitlements, OverageSlack, Regime, DEFAULT_BOUNDARY_TOL,
};
