use super::scalar::Scalar;
use super::tape::Tape;
use crate::error::{Error, Result};

/// A scalar function that can be evaluated on `f64` and on tape variables.
pub trait ScalarFn {
    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

/// Compares the reverse-mode gradient of `f` at `x` with central finite
/// differences of step `h`; returns the largest relative error
/// `|aad - fd| / max(|fd|, 1e-8)` over the coordinates.
pub fn grad_check<F: ScalarFn>(f: &F, x: &[f64], h: f64) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<_> = x.iter().map(|&v| tape.var(v)).collect();
    let out = f.eval(&vars);
    if !out.value().is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let aad = tape.backward(out)?.leaf_gradients();

    let mut worst = 0.0_f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f.eval(&probe);
        probe[i] = x[i] - h;
        let down = f.eval(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        let fd = (up - down) / (2.0 * h);
        let rel = (aad[i] - fd).abs() / fd.abs().max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
