//! Central finite-difference oracle for tape gradients.
//!
//! The checked function is rebuilt from scratch on a fresh tape for every
//! perturbation, so the oracle only ever uses forward values.

use crate::error::Result;
use crate::tensor::{Array, Tape, Var};

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / (|numeric| + floor)` over all checked entries.
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares tape gradients of the scalar produced by `build` against central
/// differences with step `h`. `build` receives one param var per input.
///
/// `floor` is added to the denominator of the relative error. At most
/// `max_entries` coordinates are checked per input (evenly spaced).
pub fn check<F>(inputs: &[Array<f64>], h: f64, floor: f64, max_entries: usize, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Array<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|a| tape.param(a.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).sum())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| tape.param(a.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut values = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        let n = inputs[which].len();
        let step = (n / max_entries.max(1)).max(1);
        for idx in (0..n).step_by(step) {
            let orig = values[which].data()[idx];
            values[which].data_mut()[idx] = orig + h;
            let plus = eval(&values)?;
            values[which].data_mut()[idx] = orig - h;
            let minus = eval(&values)?;
            values[which].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / (numeric.abs() + floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_input = which;
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
