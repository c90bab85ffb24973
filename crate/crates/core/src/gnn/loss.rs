use std::sync::Arc;

use crate::diffkernel::{Tape, Var};
use crate::Result;

/// Floor applied to `p_t` before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean of `−α (1 − p_t)^γ log p_t` over the rows of `log_probs` selected by `rows`.
pub fn focal_loss(tape: &mut Tape, log_probs: Var, rows: &Arc<[usize]>, targets: &Arc<[usize]>, alpha: f64, gamma: f64) -> Result<Var> {
    let lp = tape.gather_rows(log_probs, rows)?;
    let log_pt = tape.pick(lp, targets)?;
    let log_pt = tape.clamp_min(log_pt, PROB_FLOOR.ln())?;
    let pt = tape.exp(log_pt)?;
    let one_minus = tape.scale(pt, -1.0)?;
    let one_minus = tape.add_scalar(one_minus, 1.0)?;
    let one_minus = tape.clamp_min(one_minus, 0.0)?;
    let per_node = if gamma == 0.0 {
        log_pt
    } else {
        let modulating = tape.powf(one_minus, gamma)?;
        tape.mul(modulating, log_pt)?
    };
    let m = tape.mean(per_node)?;
    tape.scale(m, -alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn eval(lp: ndarray::Array2<f64>, t: Vec<usize>, alpha: f64, gamma: f64) -> f64 {
        let mut tape = Tape::new();
        let n = lp.nrows();
        let v = tape.constant(lp).unwrap();
        let rows: Arc<[usize]> = (0..n).collect();
        let l = focal_loss(&mut tape, v, &rows, &t.into(), alpha, gamma).unwrap();
        tape.scalar(l).unwrap()
    }

    #[test]
    fn certain_prediction_costs_nothing() {
        assert_abs_diff_eq!(eval(array![[0.0, f64::MIN_POSITIVE.ln()]], vec![0], 0.75, 2.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coin_flip_value() {
        let h = 0.5f64.ln();
        let l = eval(array![[h, h]], vec![1], 0.75, 2.0);
        assert_abs_diff_eq!(l, 0.75 * 0.25 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.1300, epsilon = 5e-5);
    }

    #[test]
    fn degenerates_to_cross_entropy() {
        let lp = array![[0.2f64.ln(), 0.8f64.ln()], [0.6f64.ln(), 0.4f64.ln()]];
        let l = eval(lp, vec![1, 0], 1.0, 0.0);
        assert_abs_diff_eq!(l, -(0.8f64.ln() + 0.6f64.ln()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let l = eval(array![[0.0, -1e6]], vec![1], 0.75, 2.0);
        assert_abs_diff_eq!(l, -0.75 * PROB_FLOOR.ln(), epsilon = 1e-9);
    }
}
