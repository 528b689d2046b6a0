//! Library side of the `mtrate` command: problem files, commands and the
//! bundled reference instances.

pub mod commands;
pub mod examples;
pub mod problem;

use mtrate_core::{Error, Result};

/// Environment variable that replaces the built-in default tolerance.
pub const TOL_ENV: &str = "MTRATE_TOL";

/// Picks the tolerance: explicit flag, then the problem file, then the
/// environment, then `default`.
pub fn resolve_tol(flag: Option<f64>, file: Option<f64>, env: Option<&str>, default: f64) -> Result<f64> {
    let env = match env {
        None => None,
        Some(s) => Some(
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("{TOL_ENV}={s:?} is not a number")))?,
        ),
    };
    let tol = flag.or(file).or(env).unwrap_or(default);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    Ok(tol)
}
