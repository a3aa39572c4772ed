//! Quantum-limited absorbance metrology for bacterial growth curves.
//!
//! The crate models a transmissivity-sensing experiment: a growth
//! curve (Gompertz or cubic decay) sets the sample transmissivity over
//! time, a probe source (coherent, squeezed vacuum, correlated
//! thermal, or the optimal quantum probe) sets the per-probe Fisher
//! information, and the quantum Cramer-Rao bound turns an energy
//! budget into error bars and hypothesis-test error rates.
//!
//! Core numerics are generic over the [`Real`] scalar trait (`f64` or
//! `f32`); data ingest, Monte Carlo and the CLI layer work in `f64`.
//! Concrete `f64` aliases for the main types live at the crate root.

pub mod cli;
pub mod detection;
pub mod growth;
pub mod ingest;
pub mod manifest;
pub mod metrology;
pub mod montecarlo;
pub mod opt;
mod real;
pub mod special;

pub use real::Real;

pub type GompertzParamsF64 = growth::GompertzParams<f64>;
pub type CubicDecayParamsF64 = growth::CubicDecayParams<f64>;
pub type BeerLambertF64 = growth::BeerLambert<f64>;
pub type ProbeSourceF64 = metrology::ProbeSource<f64>;
pub type EnergyBudgetF64 = metrology::EnergyBudget<f64>;
pub type TruncatedGaussianF64 = metrology::TruncatedGaussian<f64>;
pub type TransmissivityLawF64 = detection::TransmissivityLaw<f64>;
pub type HypothesisPairF64 = detection::HypothesisPair<f64>;
