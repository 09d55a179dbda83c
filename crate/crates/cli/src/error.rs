use std::path::Path;

use fieldkit_core::index::IndexError;
use fieldkit_core::prescription::PrescriptionError;
use fieldkit_core::synth::SynthError;
use fieldkit_core::zonal::ZonalError;
use fieldkit_core::{GeoTiffError, VectorError};
use serde_json::json;

/// A failed command. Usage errors exit with 2, everything else with 1.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Failed { name: String, detail: String },
}

impl CliError {
    pub fn failed(name: &str, detail: impl Into<String>) -> Self {
        CliError::Failed {
            name: name.to_string(),
            detail: detail.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::failed("IoError", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed { .. } => 1,
        }
    }

    /// Single-line JSON for standard error.
    pub fn to_json(&self) -> String {
        let (name, detail) = match self {
            CliError::Usage(d) => ("UsageError", d.as_str()),
            CliError::Failed { name, detail } => (name.as_str(), detail.as_str()),
        };
        json!({ "error": name, "detail": detail }).to_string()
    }
}

macro_rules! named_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::failed(e.name(), e.to_string())
            }
        }
    )*};
}

named_error!(
    GeoTiffError,
    VectorError,
    IndexError,
    ZonalError,
    PrescriptionError
);

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::failed("SynthError", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::failed("CsvError", e.to_string())
    }
}
