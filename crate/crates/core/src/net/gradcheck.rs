use super::{Network, Tensor};
use crate::error::Result;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` against five-point central differences of `loss`
/// around `x`, returning the largest relative error.
pub fn check_gradient(x: &mut [f64], analytic: &[f64], eps: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        let mut at = |offset: f64| {
            x[i] = orig + offset;
            loss(x)
        };
        let numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
        x[i] = orig;
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Central-difference check of every parameter of `net` for the scalar loss
/// `loss_fn(output) -> (value, d value / d output)`.
pub fn finite_diff_check(
    net: &mut Network,
    input: &Tensor,
    loss_fn: impl Fn(&Tensor) -> (f64, Tensor),
    eps: f64,
) -> Result<f64> {
    let tape = net.forward(input)?;
    let (_, upstream) = loss_fn(tape.output());
    let mut grads = net.zero_grads();
    net.backward(&tape, &upstream, &mut grads)?;
    let n = grads.len();
    let mut worst = 0.0f64;
    for p in 0..n {
        for i in 0..grads[p].len() {
            let orig = net.params()[p].data()[i];
            let mut eval = |v: f64| -> Result<f64> {
                net.params_mut()[p].data_mut()[i] = v;
                Ok(loss_fn(&net.predict(input)?).0)
            };
            let up = eval(orig + eps)?;
            let down = eval(orig - eps)?;
            eval(orig)?;
            worst = worst.max(relative_error(grads[p].data()[i], (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}
