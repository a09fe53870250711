use super::{Graph, Tensor};
use crate::error::{shape_err, Result};

/// Below this magnitude on both sides the absolute error is reported
/// instead of the relative one.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

/// Largest disagreement between the analytic gradient of `f` at `x` and a
/// central difference with step `eps`, measured per coordinate as
/// `|a - n| / max(|a|, |n|)`, or `|a - n|` when both fall under
/// [`GRAD_CHECK_FLOOR`].
pub fn grad_check<F>(f: F, x: &[f64], shape: &[usize], eps: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, Tensor<'g>) -> Result<Tensor<'g>>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(crate::Error::Parameter(format!("grad_check eps {eps}")));
    }
    let eval = |v: Vec<f64>| -> Result<f64> {
        let g = Graph::new();
        let t = g.constant(v, shape)?;
        let y = f(&g, t)?;
        if y.numel() != 1 {
            return shape_err(format!("grad_check needs a scalar function, got {:?}", y.shape()));
        }
        Ok(y.item())
    };
    let analytic = {
        let g = Graph::new();
        let t = g.variable(x.to_vec(), shape)?;
        let y = f(&g, t)?;
        if y.numel() != 1 {
            return shape_err(format!("grad_check needs a scalar function, got {:?}", y.shape()));
        }
        y.backward()?;
        t.grad().unwrap_or_else(|| vec![0.0; x.len()])
    };
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + eps;
        let hi = eval(xp.clone())?;
        xp[i] = x[i] - eps;
        let lo = eval(xp.clone())?;
        xp[i] = x[i];
        let numeric = (hi - lo) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

pub(crate) fn relative_error(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs());
    if denom < GRAD_CHECK_FLOOR {
        (a - n).abs()
    } else {
        (a - n).abs() / denom
    }
}
