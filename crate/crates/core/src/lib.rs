//! Deterministic multi-agent simulator for quantized decentralized
//! optimization with saddle-point escape.
//!
//! The crate simulates `N` agents that cooperatively minimize an average of
//! private nonconvex objectives by exchanging *quantized* iterates over a
//! gossip network. The quantizer alternates between two offset uniform grids
//! on even/odd rounds, so no state is ever deterministically representable
//! on both grids; combined with a decrease-and-hold stepsize schedule, the
//! resulting perturbations push iterates off strict saddle points while the
//! consensus dynamics still contract.
//!
//! Module map:
//!
//! - [`quantizer`] — switching stochastic quantizer, baselines (identity,
//!   single-grid, log-scale), and the wire encoding of quantized vectors.
//! - [`mixing`] — symmetric doubly stochastic weight matrices, Metropolis
//!   construction, spectral diagnostics.
//! - [`schedule`] — decrease-and-hold stepsize sequences and the derived
//!   theoretical constants; constant / diminishing / random-hold baselines.
//! - [`objectives`] — distributed benchmark objectives with analytic
//!   gradients and Hessian access.
//! - [`engine`] — the synchronous round loop, metrics traces, and
//!   second-order stationarity classification.
//! - [`config`] — experiment config file format (parse/validate/write).
//! - [`batch`] — multi-seed, multi-variant experiment orchestration with
//!   CSV emission and summary reports.

pub mod batch;
pub mod config;
pub mod engine;
pub mod mixing;
pub mod objectives;
pub mod quantizer;
pub mod rng;
pub mod schedule;

pub use engine::{classify_point, consensus_error_sq, run, PointClass, RunOptions, RunRecord};
pub use mixing::MixingMatrix;
pub use objectives::Objective;
pub use quantizer::{QuantizedVector, QuantizerScheme, QuantizerSpec};
pub use schedule::{Schedule, ScheduleParams, StepsizeRule};

/// Version stamp written into every emitted CSV/metadata artifact.
pub const SCHEMA_VERSION: u32 = 1;
