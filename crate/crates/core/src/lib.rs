//! Four-zone simulated moving bed (SMB) chromatography under a linear
//! isotherm: forward simulation to cyclic steady state, multi-objective
//! performance evaluation, Markov-chain sampling of operating conditions,
//! and post-processing of the sampled designs.
//!
//! The crate is organized along the data flow:
//!
//! * [`transport`] — finite-volume general rate / equilibrium-dispersive
//!   column model integrated over one switching period,
//! * [`network`] — node balances, port switching and the cyclic
//!   steady-state loop for the four-zone plant,
//! * [`performance`] — purity/yield/productivity indicators, the penalized
//!   objective and the exponential likelihood,
//! * [`sampler`] — delayed-rejection adaptive Metropolis chains with
//!   shared convergence monitoring,
//! * [`analysis`] — Pareto fronts, marginal densities, flowrate-ratio
//!   plane mapping and posterior predictive envelopes,
//! * [`presets`] — the bundled glucose-fructose reference case.
//!
//! All numeric kernels are generic over [`scalar::Scalar`] (`f32`/`f64`);
//! the type aliases at the crate root pin the `f64` lane used by the CLI.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod network;
pub mod performance;
pub mod presets;
pub mod sampler;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete `f64` lane used by the command-line tool.
pub type ColumnModel = transport::ColumnModel<f64>;
pub type ColumnState = transport::ColumnState<f64>;
pub type OperatingPoint = network::OperatingPoint<f64>;
pub type ZonalFlowrates = network::ZonalFlowrates<f64>;
pub type SmbSystem = network::SmbSystem<f64>;
pub type PerformanceRecord = performance::PerformanceRecord<f64>;
pub type SmbPosterior = performance::SmbPosterior<f64>;
pub type SampleStore = sampler::SampleStore<f64>;
pub type Diagnostics = sampler::Diagnostics<f64>;
pub type FlowrateRatios = analysis::FlowrateRatios<f64>;
