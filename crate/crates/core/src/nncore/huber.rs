use crate::error::{Error, Result};

fn check_threshold(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Huber threshold must be positive and finite, got {delta}"
        )))
    }
}

/// Huber penalty: quadratic `e^2/2` inside `|e| <= delta`, linear `delta (|e| - delta/2)` outside.
pub fn huber(e: f64, delta: f64) -> Result<f64> {
    check_threshold(delta)?;
    let a = e.abs();
    Ok(if a <= delta {
        0.5 * e * e
    } else {
        delta * (a - 0.5 * delta)
    })
}

/// Derivative of [`huber`] with respect to `e`; saturates at `±delta`.
pub fn huber_slope(e: f64, delta: f64) -> Result<f64> {
    check_threshold(delta)?;
    Ok(e.clamp(-delta, delta))
}
