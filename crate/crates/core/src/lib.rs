//! Finite-blocklength rate and error-probability approximations for
//! noncoherent MIMO Rayleigh block-fading channels, with Monte Carlo checks
//! and two planners built on top (antenna count, slotted ALOHA).

pub mod aloha;
pub mod error;
pub mod mcbounds;
pub mod montecarlo;
pub mod normapprox;
pub mod randmat;
pub mod specfun;
pub mod sweeps;

pub use error::{Error, Result};
pub use montecarlo::{McConfig, MCEstimate, Moments};
pub use normapprox::{RateBreakdown, Scenario};
pub use specfun::Probability;
