//! Gamma and Beta functions on the positive axis.

use crate::error::{Error, Result};

/// Γ(x) for x > 0 (Lanczos approximation with reflection, via `statrs`).
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// B(x, y) = Γ(x)Γ(y)/Γ(x+y).
pub fn beta_fn(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0) || !(y > 0.0) {
        return Err(Error::Domain(format!(
            "beta_fn requires positive arguments, got ({x}, {y})"
        )));
    }
    // log form avoids overflow of the individual factors for large arguments
    if x + y > 150.0 {
        use statrs::function::gamma::ln_gamma;
        return Ok((ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp());
    }
    Ok(gamma_fn(x)? * gamma_fn(y)? / gamma_fn(x + y)?)
}
