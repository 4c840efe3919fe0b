//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::optim::Parameters;

/// Below this magnitude, errors are measured in absolute rather than relative terms.
pub const GRADIENT_FLOOR: f64 = 1e-3;

/// Allowed finite-difference step range.
pub const EPSILON_RANGE: (f64, f64) = (1e-6, 1e-3);

/// `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Worst relative error between `analytic` and the central difference of `loss`
/// over every entry of every tensor in `params`.
pub fn max_relative_error<P, F>(params: &P, analytic: &P, loss: F, epsilon: f64) -> Result<f64>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    if !(EPSILON_RANGE.0..=EPSILON_RANGE.1).contains(&epsilon) {
        return Err(Error::config(format!(
            "gradient-check epsilon {epsilon} outside [{}, {}]",
            EPSILON_RANGE.0, EPSILON_RANGE.1
        )));
    }
    let grads = analytic.tensors();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (ti, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.tensors()[ti][k];
            probe.tensors_mut()[ti][k] = orig + epsilon;
            let up = loss(&probe);
            probe.tensors_mut()[ti][k] = orig - epsilon;
            let down = loss(&probe);
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(g[k], numeric));
        }
    }
    Ok(worst)
}
