//! Kernel-3, stride-1, zero-padded ("same") 1-D convolution.
//!
//! Weights are stored `c_out x (c_in * 3)` with tap `k` of input channel `c`
//! at column `3 c + k`. The three taps are applied as three strided GEMMs
//! against shifted views of the zero-padded input, so no im2col buffer is
//! materialised.

use matrixmultiply::dgemm;

use super::{Array1D, Op, Tape, Var};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

fn padded(x: &Array1D) -> Vec<f64> {
    let l = x.len;
    let mut xp = vec![0.0; x.channels * (l + 2)];
    for c in 0..x.channels {
        xp[c * (l + 2) + 1..c * (l + 2) + 1 + l].copy_from_slice(x.row(c));
    }
    xp
}

impl Tape {
    /// `out[o, t] = b[o] + sum_{c,k} w[o, c, k] * x_pad[c, t + k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (c_in, l) = self.shape(x);
        let wv = self.value(w);
        let c_out = wv.channels;
        if wv.len != c_in * KERNEL {
            return Err(Error::shape(
                format!("weights {c_out}x{}", c_in * KERNEL),
                format!("{}x{}", wv.channels, wv.len),
            ));
        }
        let bv = self.value(b);
        if bv.data.len() != c_out {
            return Err(Error::shape(format!("{c_out} biases"), bv.data.len()));
        }
        let xp = padded(self.value(x));
        let mut out = Array1D::zeros(c_out, l);
        for o in 0..c_out {
            out.row_mut(o).fill(bv.data[o]);
        }
        let rs_w = (c_in * KERNEL) as isize;
        for k in 0..KERNEL {
            // SAFETY: every view stays inside its buffer: `w` is
            // c_out x 3c_in, `xp` is c_in x (l + 2) and the shifted view reads
            // columns k..k + l, `out` is c_out x l.
            unsafe {
                dgemm(
                    c_out,
                    c_in,
                    l,
                    1.0,
                    wv.data.as_ptr().add(k),
                    rs_w,
                    KERNEL as isize,
                    xp.as_ptr().add(k),
                    (l + 2) as isize,
                    1,
                    1.0,
                    out.data.as_mut_ptr(),
                    l as isize,
                    1,
                );
            }
        }
        self.push_checked(out, Op::Conv1d { x, w, b }, "conv1d")
    }
}

/// Gradients `(dx, dw, db)` for upstream gradient `g` (`c_out x l`).
pub(super) fn conv1d_backward(x: &Array1D, w: &Array1D, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (c_in, l) = (x.channels, x.len);
    let c_out = w.channels;
    let xp = padded(x);
    let db: Vec<f64> = g.chunks(l).map(|row| row.iter().sum()).collect();
    let mut dw = vec![0.0; c_out * c_in * KERNEL];
    let mut dxp = vec![0.0; c_in * (l + 2)];
    let rs_w = (c_in * KERNEL) as isize;
    for k in 0..KERNEL {
        // SAFETY: same extents as the forward pass; `dw` mirrors `w` and
        // `dxp` mirrors the padded input.
        unsafe {
            // dw[o, 3c + k] += sum_t g[o, t] * xp[c, t + k]
            dgemm(
                c_out,
                l,
                c_in,
                1.0,
                g.as_ptr(),
                l as isize,
                1,
                xp.as_ptr().add(k),
                1,
                (l + 2) as isize,
                1.0,
                dw.as_mut_ptr().add(k),
                rs_w,
                KERNEL as isize,
            );
            // dxp[c, t + k] += sum_o w[o, 3c + k] * g[o, t]
            dgemm(
                c_in,
                c_out,
                l,
                1.0,
                w.data.as_ptr().add(k),
                KERNEL as isize,
                rs_w,
                g.as_ptr(),
                l as isize,
                1,
                1.0,
                dxp.as_mut_ptr().add(k),
                (l + 2) as isize,
                1,
            );
        }
    }
    let mut dx = Vec::with_capacity(c_in * l);
    for c in 0..c_in {
        dx.extend_from_slice(&dxp[c * (l + 2) + 1..c * (l + 2) + 1 + l]);
    }
    Ok((dx, dw, db))
}
