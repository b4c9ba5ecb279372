//! Error types shared across the crate.

use thiserror::Error;

/// Errors from model evaluation and parameter validation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("resistance must be positive (got {0})")]
    NonpositiveResistance(f64),
    #[error("pulse duration must be nonnegative (got {0} s)")]
    NegativeDuration(f64),
    #[error("threshold slope is zero for the {0} branch; threshold voltage undefined")]
    ThresholdUndefined(&'static str),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

/// Errors from the virtual device and waveform integration.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("stiff segment: integrator exceeded {0} steps")]
    StiffSegment(usize),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
}

/// Errors from the characterization protocols.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
    #[error("runaway device: resistive state {0} ohm left [1e2, 1e7] ohm")]
    RunawayDevice(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Errors from measurement-log analysis.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("log is tagged {got}, expected {expected}")]
    WrongProtocol {
        expected: &'static str,
        got: &'static str,
    },
    #[error("no data for {0} polarity")]
    NoDataForPolarity(&'static str),
    #[error("log integrity: {0}")]
    LogIntegrity(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("smoothing window must be odd and >= 5 (got {0})")]
    InvalidWindow(usize),
}

/// Errors from the fitting stages.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("rank deficient: need at least 3 distinct resistance values")]
    RankDeficient,
    #[error("degenerate quadratic: curvature coefficient is zero")]
    DegenerateQuadratic,
    #[error("underdetermined: need at least 2 distinct voltages")]
    Underdetermined,
    #[error("no switching signal: all rates are zero")]
    NoSwitchingSignal,
    #[error("reference state outside the active window: {0}")]
    ReferenceOutsideWindow(String),
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Errors from Verilog-A emission.
#[derive(Debug, Error)]
pub enum VaError {
    #[error("bad module name: {0:?}")]
    BadModuleName(String),
    #[error("invalid emit option: {0}")]
    InvalidOption(String),
}

/// Errors from file input/output and schema parsing.
#[derive(Debug, Error)]
pub enum FileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: missing key {key:?}")]
    MissingKey { path: String, key: &'static str },
    #[error("{path}: unknown key {key:?}")]
    UnknownKey { path: String, key: String },
    #[error("{path}: {0}", .source)]
    Invalid {
        path: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl FileError {
    pub fn schema(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        FileError::Schema {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
