//! Central finite-difference verification of tape gradients.

use super::{Array1D, Tape, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `|g_tape - g_fd| / max(|g_tape|, |g_fd|)` over all inputs (Euclidean).
    pub relative_error: f64,
    pub analytic_norm: f64,
    pub entries_checked: usize,
}

/// Compare the tape gradient of the scalar built by `build` against central
/// differences with step `1e-5 * (1 + |x|)`. Entries for which `skip(value)`
/// is true are left out of the comparison (non-smooth points).
pub fn gradcheck<F>(inputs: &[Array1D], build: F, skip: impl Fn(usize, usize, f64) -> bool) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Array1D]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let root = build(&mut tape, &vars)?;
        Ok(tape.scalar(root))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let root = build(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut diff2 = 0.0;
    let mut an2 = 0.0;
    let mut fd2 = 0.0;
    let mut checked = 0;
    let mut work: Vec<Array1D> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*v, inputs[i].data().len());
        for e in 0..inputs[i].data().len() {
            let x0 = inputs[i].data()[e];
            if skip(i, e, x0) {
                continue;
            }
            let h = 1e-5 * (1.0 + x0.abs());
            work[i].data_mut()[e] = x0 + h;
            let up = eval(&work)?;
            work[i].data_mut()[e] = x0 - h;
            let down = eval(&work)?;
            work[i].data_mut()[e] = x0;
            let fd = (up - down) / (2.0 * h);
            diff2 += (analytic[e] - fd).powi(2);
            an2 += analytic[e].powi(2);
            fd2 += fd * fd;
            checked += 1;
        }
    }
    let scale = an2.sqrt().max(fd2.sqrt());
    let relative_error = if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale };
    Ok(GradCheckReport {
        relative_error,
        analytic_norm: an2.sqrt(),
        entries_checked: checked,
    })
}
