//! Simulation and verification of information-estimation identities for the
//! additive Gaussian channel `y = rho x + w` on a discretized Wiener space.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod identities;
pub mod likelihood;
pub mod malliavin;
pub mod mc;
pub mod oracle;
pub mod priors;
pub mod wiener_space;

pub use error::{Error, Result};
pub use estimators::{
    causal_filter, causal_mmse, noncausal_estimate, noncausal_mmse, CausalFilter, FilterTrajectory,
    MmseEstimate, PosteriorEngine, PosteriorState,
};
pub use likelihood::{eval_closed_form, eval_exact, eval_mc, LikelihoodEval, LikelihoodModel};
pub use mc::{BatchMeans, Estimate, McConfig};
pub use priors::{
    AmplitudeLaw, AtomicPrior, GaussianDiagonalPrior, PriorMoments, SamplerPrior, ScaledShapePrior,
    SignalPrior,
};
pub use wiener_space::{
    channel, h_inner, pair, Basis, HVector, NoiseCoords, Observation, Truncate,
};
