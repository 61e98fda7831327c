//! Data-sharing mechanisms for collaborative normal mean estimation among
//! strategic agents.
//!
//! Agents pay `c` per sample drawn from `N(mu, sigma^2)` and want a small
//! maximum risk for `mu`. Pooling everything invites free-riding and data
//! fabrication; the cross-check-and-corrupt mechanism returns the other
//! agents' data split into a clean part and a part corrupted in proportion
//! to how far the agent's submission sits from a cross-check sample. With
//! the inverse-variance weighted estimator this makes collecting
//! `sigma / sqrt(c m)` points and submitting them verbatim a Nash
//! equilibrium.
//!
//! The crate is organised as
//!
//! * [`params`]: market parameters, datasets, sampling, small moment kernels;
//! * [`alpha`]: the transcendental equation for the corruption modulator;
//! * [`estimators`]: submission rules and estimators available to agents;
//! * [`mechanisms`]: pooling, size-checked pooling, corrupt-and-deploy and
//!   cross-check-and-corrupt;
//! * [`analytics`]: closed-form and quadrature risk quantities;
//! * [`simulation`]: Monte-Carlo rounds and equilibrium checks.

pub mod alpha;
pub mod analytics;
pub mod error;
pub mod estimators;
pub mod mechanisms;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use params::{Dataset, DistributionSpec, Family, ProblemParams};
