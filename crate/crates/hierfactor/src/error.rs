//! Error types shared across the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// A single data-integrity problem found while checking a panel.
///
/// Coordinates are indices into the stacked panel; absent fields mean the
/// problem is not tied to that level (e.g. a ragged industry has no period).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub industry: Option<usize>,
    pub country: Option<usize>,
    pub period: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn dataset(message: impl Into<String>) -> Self {
        Self { industry: None, country: None, period: None, message: message.into() }
    }

    pub fn industry(industry: usize, message: impl Into<String>) -> Self {
        Self { industry: Some(industry), country: None, period: None, message: message.into() }
    }

    pub fn unit(industry: usize, country: usize, message: impl Into<String>) -> Self {
        Self { industry: Some(industry), country: Some(country), period: None, message: message.into() }
    }

    pub fn cell(industry: usize, country: usize, period: usize, message: impl Into<String>) -> Self {
        Self {
            industry: Some(industry),
            country: Some(country),
            period: Some(period),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        if let Some(i) = self.industry {
            write!(f, "industry {i}")?;
            wrote = true;
        }
        if let Some(j) = self.country {
            write!(f, ", country {j}")?;
            wrote = true;
        }
        if let Some(t) = self.period {
            write!(f, ", period {t}")?;
            wrote = true;
        }
        if wrote {
            write!(f, ": ")?;
        }
        write!(f, "{}", self.message)
    }
}

/// Every violation found in one validation pass, not just the first.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, violation: Violation) {
        self.violations.push(violation);
    }

    /// Converts a non-empty report into an error, or passes clean data through.
    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data broke a structural or finiteness requirement.
    #[error("invalid panel data: {0}")]
    Validation(ValidationReport),

    /// An argument was inconsistent with the data or with another argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be positive definite was not.
    #[error("matrix not positive definite in {context}: eigenvalues span [{min_eigenvalue:.3e}, {max_eigenvalue:.3e}]")]
    NotPositiveDefinite { context: String, min_eigenvalue: f64, max_eigenvalue: f64 },

    /// A factor candidate or design matrix lost rank.
    #[error("rank deficient matrix in {0}")]
    RankDeficient(String),

    /// An iterative routine stopped without meeting its tolerance.
    #[error("{routine} did not converge within {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence { routine: String, iterations: usize, last_change: f64 },

    /// Too many resampled fits failed to produce a usable interval.
    #[error("bootstrap failed: {failures} of {replications} replicate fits errored ({first})")]
    Bootstrap { failures: usize, replications: usize, first: String },

    /// A simulation request is impossible or over the resource guard.
    #[error("simulation spec rejected: {0}")]
    Simulation(String),
}

impl Error {
    pub fn validation(violations: Vec<Violation>) -> Self {
        Error::Validation(ValidationReport { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_display_includes_all_given_coordinates() {
        let v = Violation::cell(2, 5, 17, "value is not finite");
        assert_eq!(v.to_string(), "industry 2, country 5, period 17: value is not finite");
        let v = Violation::industry(3, "no countries");
        assert_eq!(v.to_string(), "industry 3: no countries");
        let v = Violation::dataset("no industries");
        assert_eq!(v.to_string(), "no industries");
    }

    #[test]
    fn report_collects_multiple_violations() {
        let mut report = ValidationReport::default();
        report.push(Violation::dataset("one"));
        report.push(Violation::unit(0, 1, "two"));
        let err = report.into_result().unwrap_err();
        let text = err.to_string();
        assert!(text.contains("2 violation(s)"));
        assert!(text.contains("one"));
        assert!(text.contains("industry 0, country 1: two"));
    }

    #[test]
    fn empty_report_is_ok() {
        assert!(ValidationReport::default().into_result().is_ok());
    }
}
