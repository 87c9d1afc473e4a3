//! Central finite-difference gradient checking.

use super::{mse, Gradients, Matrix, Mlp, Trainable};
use crate::error::{Error, Result};

/// Below this magnitude the comparison switches to absolute error.
pub const ABSOLUTE_FALLBACK: f64 = 1e-8;

/// `|a − f| / max(|a|, |f|)`, or `|a − f|` when both magnitudes are below [`ABSOLUTE_FALLBACK`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABSOLUTE_FALLBACK {
        diff
    } else {
        diff / scale
    }
}

/// Numerical gradient of `loss` by the fourth-order central stencil
/// `(−L(θ+2h) + 8L(θ+h) − 8L(θ−h) + L(θ−2h)) / 12h`, one parameter at a time.
///
/// The two-point formula loses about `eps·L/h` to roundoff, which swamps small
/// components at the 1e-5 relative tolerance; the wider stencil allows `h ≈ 1e-3`.
pub fn finite_difference<M, F>(model: &M, step: f64, loss: F) -> Result<Vec<Vec<f64>>>
where
    M: Trainable + Clone,
    F: Fn(&M) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut probe = model.clone();
    let shapes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (t, &len) in shapes.iter().enumerate() {
        let mut tensor = Vec::with_capacity(len);
        for i in 0..len {
            let original = probe.parameters()[t][i];
            let mut eval = |offset: f64| {
                probe.parameters_mut()[t][i] = original + offset;
                loss(&probe)
            };
            let far_plus = eval(2.0 * step)?;
            let plus = eval(step)?;
            let minus = eval(-step)?;
            let far_minus = eval(-2.0 * step)?;
            probe.parameters_mut()[t][i] = original;
            tensor.push((-far_plus + 8.0 * plus - 8.0 * minus + far_minus) / (12.0 * step));
        }
        out.push(tensor);
    }
    Ok(out)
}

/// Worst [`relative_error`] over all components.
pub fn max_relative_error(analytic: &Gradients, numeric: &[Vec<f64>]) -> f64 {
    analytic
        .tensors()
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.iter().zip(n).map(|(&x, &y)| relative_error(x, y)))
        .fold(0.0, f64::max)
}

/// Compares [`Mlp::backward`] against central differences of the MSE loss.
/// Returns the worst relative discrepancy.
pub fn grad_check(model: &Mlp, batch: &Matrix, target: &Matrix, step: f64) -> Result<f64> {
    let analytic = model.backward(batch, target)?;
    let numeric = finite_difference(model, step, |m| mse(&m.forward(batch)?, target))?;
    Ok(max_relative_error(&analytic, &numeric))
}
