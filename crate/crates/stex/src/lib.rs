//! Space-time threshold-exceedance modeling.
//!
//! A hierarchical model for censored excesses over high thresholds: a latent
//! Gamma random field is built by convolving a Gamma random measure with
//! moving elliptical-cylinder kernels, so the rate of an exponential excess
//! ties the exceedance indicator to the excess size and dependence decays to
//! exact independence with distance while staying asymptotically independent
//! everywhere. The crate provides
//!
//! * exact ellipse/cylinder intersection geometry ([`geometry`]),
//! * Laplace transforms, marginal transforms and tail-dependence
//!   functionals of the latent field ([`model`]),
//! * censored weighted pairwise likelihood with Godambe sandwich errors and
//!   information criteria ([`likelihood`]),
//! * shot-noise simulation of the latent field and the observable panel
//!   ([`simulate`]),
//! * empirical chi/chibar diagnostics, stationary bootstrap and the
//!   multivariate co-exceedance RMSE comparison ([`diagnostics`]),
//! * censored Gaussian space-time copula baselines ([`baselines`]),
//! * per-site generalized-Pareto margins, CSV ingestion and the run
//!   pipeline behind the CLI ([`margins`], [`io`], [`pipeline`]).

pub mod baselines;
pub mod diagnostics;
mod error;
pub mod geometry;
pub mod io;
pub mod likelihood;
pub mod margins;
pub mod model;
pub mod normal;
pub mod opt;
pub mod pipeline;
pub mod simulate;

pub use error::{Error, Result};
pub use geometry::{CylinderKernel, Ellipse, SpaceTimePoint};
pub use likelihood::{ExceedancePanel, FitResult, PairScheme};
pub use model::ModelParams;
