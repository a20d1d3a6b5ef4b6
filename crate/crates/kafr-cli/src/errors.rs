//! One error type spanning every subcommand, mapped onto the process exit
//! contract: 2 for configuration problems, 3 for bad input data, 4 for an
//! unreachable selection target. A failing run prints a single JSON object
//! to stderr so callers can parse the reason.

use kafr::detections::DetectionError;
use kafr::eval::EvalError;
use kafr::pgm::PgmError;
use kafr::pipeline::PipelineError;
use kafr::selection::SelectionError;
use kafr::synth::SynthError;

#[derive(Debug)]
pub enum CliError {
    /// Flags, config file, or policy parameters are wrong.
    Config(String),
    /// Inputs were readable but their content is invalid.
    Data(String),
    /// The calibration target sits below the sweep's ceiling count.
    Unreachable(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Unreachable(_) => "unreachable_target",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Unreachable(m) => m,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Unreachable(_) => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.message() } })
            .to_string()
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::UnreachableTarget { .. } => CliError::Unreachable(e.to_string()),
            SelectionError::InvalidPolicy(_) | SelectionError::InvalidFraction(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidParam(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidWindow(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}
