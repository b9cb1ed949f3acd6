//! Sparse third-difference penalty on the generated response.
//!
//! `lambda * sum_entries sum_k |D3[k]|` with the unit-spacing complex third
//! difference `D3[k] = x[k+3] - 3x[k+2] + 3x[k+1] - x[k]` and `|.|` the complex
//! modulus. No division by the frequency step: `lambda` absorbs the scaling,
//! so it is comparable across grids with the same number of points only.

use crate::autodiff::{Array1D, Tape, Var};
use crate::error::{Error, Result};
use crate::sparam::{flatten, SParamTensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegConfig {
    pub lambda: f64,
    /// Penalise `|Re D3| + |Im D3|` instead of the complex modulus.
    pub split_l1: bool,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self { lambda: 0.1, split_l1: false }
    }
}

impl RegConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { lambda, split_l1: false })
    }
}

/// Penalty of the real-channel array `x` (re/im pairs, length `f >= 4`) as a
/// tape scalar.
pub fn penalty_on_tape(tape: &mut Tape, x: Var, cfg: &RegConfig) -> Result<Var> {
    let d = tape.third_diff(x)?;
    let s = if cfg.split_l1 { tape.sum_abs(d)? } else { tape.pair_abs_sum(d)? };
    tape.scale(s, cfg.lambda)
}

pub fn third_diff_penalty(x: &SParamTensor, cfg: &RegConfig) -> Result<f64> {
    if x.freqs() < 4 {
        return Err(Error::InvalidArgument(format!("third difference needs f >= 4, got {}", x.freqs())));
    }
    let flat = flatten(x);
    let mut tape = Tape::new();
    let v = tape.leaf(Array1D::new(flat.rows(), flat.cols(), flat.into_data())?);
    let p = penalty_on_tape(&mut tape, v, cfg)?;
    Ok(tape.scalar(p))
}
