use super::{Gradients, Net};
use crate::error::{Error, Result};

/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compare analytic gradients against central finite differences over every
/// parameter and return the largest relative error.
///
/// `loss_fn` evaluates the loss and its analytic gradient at the given
/// parameters; the analytic gradient is only read at the unperturbed point.
pub fn gradient_check<F>(net: &Net, loss_fn: F, eps: f64) -> Result<f64>
where
    F: Fn(&Net) -> Result<(f64, Gradients)>,
{
    let coords: Vec<usize> = (0..net.param_count()).collect();
    gradient_check_coords(net, loss_fn, eps, &coords)
}

/// Same as [`gradient_check`] restricted to a subset of parameter indices.
pub fn gradient_check_coords<F>(net: &Net, loss_fn: F, eps: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&Net) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss_fn(net)?;
    if analytic.len() != net.param_count() {
        return Err(Error::usage("loss function returned gradients of the wrong shape"));
    }
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for &i in coords {
        if i >= net.param_count() {
            return Err(Error::usage(format!("coordinate {i} out of range")));
        }
        let original = net.params()[i];
        probe.params_mut()[i] = original + eps;
        let (plus, _) = loss_fn(&probe)?;
        probe.params_mut()[i] = original - eps;
        let (minus, _) = loss_fn(&probe)?;
        probe.params_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.0[i], numeric));
    }
    Ok(worst)
}
