//! Central finite-difference gradient checks.

use ndarray::Array2;

use super::{Tape, Var};
use crate::Result;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Maximum relative error between tape gradients and central differences
/// with step `h`, over every entry of every input.
///
/// `f` must build a scalar from the given input vars.
pub fn max_relative_error<F>(inputs: &[Array2<f64>], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Array2<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vars = vals.iter().map(|v| t.constant(v.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut t, &vars)?;
        t.scalar(out)
    };

    let mut tape = Tape::new();
    let vars = inputs.iter().map(|v| tape.param(v.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Array2<f64>> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*v, tape.shape(*v));
        for idx in ndarray::indices(inputs[i].raw_dim()) {
            let base = inputs[i][idx];
            probe[i][idx] = base + h;
            let up = eval(&probe)?;
            probe[i][idx] = base - h;
            let down = eval(&probe)?;
            probe[i][idx] = base;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[idx], numeric));
        }
    }
    Ok(worst)
}
