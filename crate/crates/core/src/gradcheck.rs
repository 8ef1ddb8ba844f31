//! Central-difference gradient oracle.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)` for every coordinate `i`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Parameter(format!("finite-difference step {eps}")));
    }
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numeric(format!("objective not finite around coordinate {i}")));
        }
        out.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    Ok(out)
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all coordinates.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
