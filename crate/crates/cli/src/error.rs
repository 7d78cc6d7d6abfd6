use std::fmt;

use treelin_core::diagnostics::DiagnosticsError;
use treelin_core::divisors::DivisorError;
use treelin_core::io::IoError;
use treelin_core::linearize::LinearizeError;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable input; exit code 1.
    Usage(String),
    /// The mathematics refused; exit code 2.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Domain(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DivisorError> for CliError {
    fn from(e: DivisorError) -> Self {
        match e {
            DivisorError::InvalidSpectrum(_) | DivisorError::NotEnoughConvergents { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<LinearizeError> for CliError {
    fn from(e: LinearizeError) -> Self {
        match e {
            LinearizeError::Divisor(d) => d.into(),
            LinearizeError::InvalidProblem(_) | LinearizeError::Series(_) => CliError::Usage(e.to_string()),
            LinearizeError::NoContraction { .. } => CliError::Domain(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Divisor(d) => d.into(),
            IoError::Linearize(l) => l.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Linearize(l) => l.into(),
            DiagnosticsError::Divisor(d) => d.into(),
            DiagnosticsError::InvalidInput(_) => CliError::Usage(e.to_string()),
            DiagnosticsError::HypothesisViolated { .. } | DiagnosticsError::FamilyViolation { .. } => {
                CliError::Domain(e.to_string())
            }
        }
    }
}
