//! Densities, simulation and shape analysis for the relative weight of two
//! identically distributed log-normal option payoffs.
//!
//! Two writers sell the same contract (European or arithmetic-average style)
//! on positions driven by geometric Brownian motions that share a market mode.
//! The quantity of interest is the relative weight `W = tau_1 / (tau_1 + tau_2)`
//! of one payoff in the pair, whose density starts unimodal at `W = 1/2` for
//! short maturities and may turn bimodal beyond a critical effective maturity.
//!
//! The crate provides:
//! - closed-form weight densities for the European styles ([`analytic`]),
//! - the exact integral density for the average-style contract at drift
//!   index zero, and its edge asymptotics ([`analytic`]),
//! - payoff-time densities for nonzero drift index, exact and approximate
//!   ([`psi`]), and the weight density obtained by convolving them
//!   ([`convolve`]),
//! - a reproducible Monte Carlo sampler for the discrete walk underlying all
//!   of the above, with goodness-of-fit and moment tooling ([`montecarlo`]),
//! - shape classification and critical-maturity solvers, including the
//!   simulation-based phase diagram over drift index and coupling
//!   ([`modality`]).

pub mod analytic;
pub mod convolve;
pub mod curve;
pub mod error;
pub mod modality;
pub mod montecarlo;
pub mod params;
pub mod psi;
pub mod quad;
pub mod special;

pub use curve::{DensityCurve, Histogram};
pub use error::{Error, Result};
pub use modality::{ModalityReport, PhaseDiagram, ShapeClass};

pub use params::{CorrelationScale, EffectiveMaturity, ModelParams};
