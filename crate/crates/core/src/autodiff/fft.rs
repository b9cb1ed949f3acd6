//! Discrete Fourier transforms on channel pairs.
//!
//! A complex channel is carried as two real channels: `2k` holds the real
//! part and `2k + 1` the imaginary part. The forward transform is
//! unnormalised, the inverse carries the `1/N` factor, so
//! `ifft(fft(x)) = x`. Any length is accepted (rustfft plans mixed-radix or
//! Bluestein transforms as needed).

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Array1D, Op, Tape, Var};
use crate::error::{Error, Result};

fn transform(planner: &mut FftPlanner<f64>, data: &[f64], channels: usize, len: usize, inverse: bool) -> Vec<f64> {
    let plan = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    let mut out = vec![0.0; data.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for pair in 0..channels / 2 {
        let re = &data[2 * pair * len..(2 * pair + 1) * len];
        let im = &data[(2 * pair + 1) * len..(2 * pair + 2) * len];
        for (z, (&a, &b)) in buf.iter_mut().zip(re.iter().zip(im)) {
            *z = Complex64::new(a, b);
        }
        plan.process(&mut buf);
        let (ore, oim) = out[2 * pair * len..(2 * pair + 2) * len].split_at_mut(len);
        for (t, z) in buf.iter().enumerate() {
            ore[t] = z.re;
            oim[t] = z.im;
        }
    }
    out
}

/// Adjoint of the forward DFT is its conjugate transpose, i.e. the
/// unnormalised inverse; the adjoint of the normalised inverse is the forward
/// transform divided by `N`.
pub(super) fn fft_backward(
    planner: &mut FftPlanner<f64>,
    g: &[f64],
    channels: usize,
    len: usize,
    inverse: bool,
) -> Vec<f64> {
    let mut dx = transform(planner, g, channels, len, !inverse);
    if inverse {
        let s = 1.0 / len as f64;
        dx.iter_mut().for_each(|v| *v *= s);
    }
    dx
}

impl Tape {
    fn fft_impl(&mut self, x: Var, inverse: bool) -> Result<Var> {
        let (c, l) = self.shape(x);
        if c % 2 != 0 {
            return Err(Error::shape("even channel count (re/im pairs)", c));
        }
        if l == 0 {
            return Err(Error::InvalidArgument("cannot transform an empty sequence".into()));
        }
        let data = self.nodes[x.0].value.data.clone();
        let mut out = transform(&mut self.planner, &data, c, l, inverse);
        if inverse {
            let s = 1.0 / l as f64;
            out.iter_mut().for_each(|v| *v *= s);
        }
        let out = Array1D::new(c, l, out)?;
        self.push_checked(out, Op::Fft { x, inverse }, "fft")
    }

    /// Forward DFT `X[k] = sum_t x[t] exp(-2 pi i k t / N)` of every pair.
    pub fn fft_pair(&mut self, x: Var) -> Result<Var> {
        self.fft_impl(x, false)
    }

    /// Inverse DFT `x[t] = (1/N) sum_k X[k] exp(2 pi i k t / N)` of every pair.
    pub fn ifft_pair(&mut self, x: Var) -> Result<Var> {
        self.fft_impl(x, true)
    }

    /// Real channels to pairs with zero imaginary part.
    pub fn real_to_pair(&mut self, x: Var) -> Result<Var> {
        let (c, l) = self.shape(x);
        let xv = self.value(x);
        let mut out = Array1D::zeros(2 * c, l);
        for ch in 0..c {
            out.row_mut(2 * ch).copy_from_slice(xv.row(ch));
        }
        Ok(self.push(out, Op::RealToPair { x }))
    }

    /// Real parts of every pair.
    pub fn pair_real(&mut self, x: Var) -> Result<Var> {
        let (c, l) = self.shape(x);
        if c % 2 != 0 {
            return Err(Error::shape("even channel count (re/im pairs)", c));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(c / 2 * l);
        for pair in 0..c / 2 {
            data.extend_from_slice(xv.row(2 * pair));
        }
        let out = Array1D::new(c / 2, l, data)?;
        Ok(self.push(out, Op::PairReal { x }))
    }

    /// Full complex spectrum (as pairs) of real channels.
    pub fn rfft_pair(&mut self, x: Var) -> Result<Var> {
        let p = self.real_to_pair(x)?;
        self.fft_pair(p)
    }

    /// Real part of the inverse transform of a pair spectrum; inverts
    /// [`Tape::rfft_pair`].
    pub fn irfft_pair(&mut self, x: Var) -> Result<Var> {
        let t = self.ifft_pair(x)?;
        self.pair_real(t)
    }
}
