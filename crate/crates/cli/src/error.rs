//! CLI error type with a stable exit-code mapping: 0 success, 2 input
//! error, 3 numerical failure, 4 non-convergence.

use dprisk_core::CoreError;
use std::fmt;

/// Everything that can abort a command, bucketed by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unreadable or malformed input files, mismatched
    /// dimensions — anything the user can fix by changing inputs. Exit 2.
    Input(String),
    /// A numerical routine failed (quadrature, factorization, bracketing).
    /// Exit 3.
    Numerical(String),
    /// A sampler or solver finished without meeting its convergence rule;
    /// artifacts are still written and flagged in the manifest. Exit 4.
    NonConvergence(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }

    /// Convenience constructor for input errors.
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::NonConvergence(m) => write!(f, "non-convergence: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::RejectedInput(_)
            | CoreError::InsufficientData(_)
            | CoreError::Dimension(_)
            | CoreError::Domain(_)
            | CoreError::ConstantColumn(_) => CliError::Input(e.to_string()),
            CoreError::IntegrationFailure(_) | CoreError::NotPositiveDefinite(_) => {
                CliError::Numerical(e.to_string())
            }
            CoreError::NoConvergence(_) => CliError::NonConvergence(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("json: {e}"))
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Input(format!("config: {e}"))
    }
}

/// Shorthand result type for CLI operations.
pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_buckets() {
        assert_eq!(CliError::input("x").exit_code(), 2);
        assert_eq!(
            CliError::from(CoreError::Domain("d".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(CoreError::RejectedInput("r".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(CoreError::NotPositiveDefinite("m".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(CoreError::IntegrationFailure("q".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(CoreError::NoConvergence("c".into())).exit_code(),
            4
        );
    }
}
