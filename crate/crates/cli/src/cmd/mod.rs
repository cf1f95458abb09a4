//! One module per subcommand family.

pub mod filter;
pub mod gnn;
pub mod inverse;
pub mod sample;
pub mod spectral;
pub mod stationary;
pub mod synth;
pub mod topoid;

use crate::config::{config_err, CliError};

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub(crate) fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!(
            "{name} must be a positive number, got {v}"
        )))
    }
}

pub(crate) fn nonneg(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config_err(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

pub(crate) fn at_least(name: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be >= {min}, got {v}")))
    }
}

pub(crate) fn nonempty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(config_err(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}
