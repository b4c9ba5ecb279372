//! Compact ReRAM switching-rate model toolkit.
//!
//! The crate covers the full modeling loop for bipolar resistive devices:
//!
//! * [`model`] — the switching-rate law: exact piecewise form, smoothed
//!   continuous form, threshold functions, and the closed-form
//!   constant-voltage response.
//! * [`sim`] — a stateful virtual device driven by pulse waveforms, with
//!   closed-form or adaptive Runge-Kutta state integration and
//!   standardized (optionally noisy) read-out.
//! * [`protocol`] — the two characterization routines: an operating-state
//!   sweeper and a band-constrained biasing optimizer.
//! * [`analysis`] — log refinement, rate conversion, time-series
//!   construction, and the smoothing time derivative.
//! * [`fit`] — per-voltage window fits, threshold lines, exponential
//!   sensitivity fits, the composed extraction pipeline, and the
//!   cross-consistency check.
//! * [`va`] — Verilog-A emission of the smoothed model.
//! * [`io`] — the parameter-file, waveform, trace, log, and rate-point
//!   formats.
//!
//! The numeric core is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases at the crate root pin the common types to `f64`, which is
//! what the file formats and the command-line front end use.

pub mod analysis;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod ode;
pub mod protocol;
pub mod scalar;
pub mod sim;
pub mod va;

pub use analysis::{RatePoint, RefinedSet, RefinementConfig};
pub use error::{AnalysisError, FileError, FitError, ModelError, ProtocolError, SimError, VaError};
pub use fit::{ExtractConfig, FitOutcome, FitReport};
pub use model::{limexp, ModelParams, Polarity, SmoothingParams};
pub use protocol::{
    MeasurementLog, MeasurementRecord, OptimizerConfig, Phase, ProtocolConfig, ProtocolKind,
    SweeperConfig,
};
pub use scalar::Real;
pub use sim::{IntegrationMethod, PulseSegment, TracePoint, VirtualDevice, Waveform};
pub use va::EmitOptions;

/// `f64` aliases for the common types.
pub type ModelParams64 = ModelParams<f64>;
pub type SmoothingParams64 = SmoothingParams<f64>;
pub type VirtualDevice64 = VirtualDevice<f64>;
pub type Waveform64 = Waveform<f64>;
pub type MeasurementLog64 = MeasurementLog<f64>;
pub type SweeperConfig64 = SweeperConfig<f64>;
pub type OptimizerConfig64 = OptimizerConfig<f64>;
pub type RatePoint64 = RatePoint<f64>;
pub type ExtractConfig64 = ExtractConfig<f64>;
pub type FitOutcome64 = FitOutcome<f64>;
