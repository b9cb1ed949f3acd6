//! Causality layer: builds a causal complex response from its real part.
//!
//! For each input channel `R` of length `L`:
//!
//! 1. even extension to `M` of length `2L` ([`Tape::mirror_even`]);
//! 2. forward DFT of `M`;
//! 3. causal window: bin 0 and bin `L` kept, bins `1..L` doubled, the
//!    negative-time half zeroed;
//! 4. zero padding to `2L n_k` (band-limited interpolation by `n_k`);
//! 5. inverse DFT;
//! 6. keep the first `f n_k = L n_k / 2` samples;
//! 7. output `(n_k Re, -n_k Im)` as a real/imag channel pair.
//!
//! The real part of the output reproduces `R` on the kept band and the
//! imaginary part is its discrete Hilbert partner, so the pair is the
//! spectrum of a sequence vanishing at negative time.

use crate::autodiff::{Array1D, Tape, Var};
use crate::error::{Error, Result};

/// `x` holds `r/2` real-part channels of length `2f`; returns `r x (f n_k)`
/// real/imag pairs.
pub fn cel_forward(tape: &mut Tape, x: Var, interpolation: usize) -> Result<Var> {
    let (c, l) = {
        let v = tape.value(x);
        (v.channels(), v.len())
    };
    if interpolation == 0 {
        return Err(Error::InvalidArgument("interpolation factor must be >= 1".into()));
    }
    if l < 2 || l % 2 != 0 {
        return Err(Error::shape("even length >= 2", l));
    }
    let n = 2 * l;
    let m = tape.mirror_even(x)?;
    let spectrum = tape.rfft_pair(m)?;
    let mut window = vec![0.0; n];
    window[0] = 1.0;
    window[1..l].fill(2.0);
    window[l] = 1.0;
    let mut h = tape.scale_positions(spectrum, window)?;
    let nk = interpolation as f64;
    if interpolation > 1 {
        h = tape.zero_pad(h, n * interpolation)?;
    }
    let t = tape.ifft_pair(h)?;
    let kept = tape.crop(t, 0, l / 2 * interpolation)?;
    let signs = (0..2 * c).map(|i| if i % 2 == 0 { nk } else { -nk }).collect();
    tape.scale_channels(kept, signs)
}

/// Apply the causality layer to plain arrays.
pub fn causal_spectrum(real: &Array1D, interpolation: usize) -> Result<Array1D> {
    let mut tape = Tape::new();
    let x = tape.leaf(real.clone());
    let y = cel_forward(&mut tape, x, interpolation)?;
    Ok(tape.value(y).clone())
}
