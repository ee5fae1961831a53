use cptkit::broadening::BroadeningError;
use cptkit::cpt::CptError;
use cptkit::curvefit::FitError;
use cptkit::quantum::QuantumError;
use cptkit::scan::ScanError;
use cptkit::thermal::ThermalError;
use thiserror::Error;

/// Failures sorted by exit code: bad input (2) or numerical failure (3).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<QuantumError> for CliError {
    fn from(e: QuantumError) -> Self {
        match e {
            QuantumError::InvalidParameter { .. } | QuantumError::InvalidState(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<CptError> for CliError {
    fn from(e: CptError) -> Self {
        match e {
            CptError::BadInput(_) => CliError::Validation(e.to_string()),
            CptError::Quantum(q) => q.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::TooFewPoints { .. } | FitError::InvalidData(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Fit(f) => CliError::from(f).context("centering"),
            ScanError::Spectrum(c) => c.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ThermalError> for CliError {
    fn from(e: ThermalError) -> Self {
        match e {
            ThermalError::Fit(f) => f.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<BroadeningError> for CliError {
    fn from(e: BroadeningError) -> Self {
        match e {
            BroadeningError::BadInput(_) => CliError::Validation(e.to_string()),
            BroadeningError::NegativeComponent { .. } => CliError::Numerical(e.to_string()),
        }
    }
}
