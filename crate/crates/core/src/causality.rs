//! Time-domain causality diagnostics for sampled spectra.
//!
//! A one-sided spectrum `S[0..f)` on a uniform grid starting at DC is
//! extended to `N = 2f` bins by conjugate symmetry (bin `f` filled with
//! `Re S[f-1]`), inverse transformed, and the share of energy in the second
//! half of the periodic time axis (`t < 0`) is reported.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sparam::SParamTensor;

/// Real impulse response of the conjugate-symmetric extension, length `2f`.
pub fn impulse_response(spectrum: &[Complex64]) -> Result<Vec<f64>> {
    let f = spectrum.len();
    if f < 2 {
        return Err(Error::InvalidArgument("need at least 2 spectrum samples".into()));
    }
    let n = 2 * f;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[0] = Complex64::new(spectrum[0].re, 0.0);
    for k in 1..f {
        buf[k] = spectrum[k];
        buf[n - k] = spectrum[k].conj();
    }
    buf[f] = Complex64::new(spectrum[f - 1].re, 0.0);
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|v| v.re / n as f64).collect())
}

/// Energy at `t < 0` divided by total energy.
pub fn negative_time_energy_ratio(spectrum: &[Complex64]) -> Result<f64> {
    let h = impulse_response(spectrum)?;
    let half = h.len() / 2;
    let total: f64 = h.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(h[half..].iter().map(|v| v * v).sum::<f64>() / total)
}

/// Worst entry of a tensor.
pub fn max_negative_time_energy_ratio(x: &SParamTensor) -> Result<f64> {
    let p = x.ports();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            worst = worst.max(negative_time_energy_ratio(x.entry(i, j))?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Array1D;
    use crate::net::causal_spectrum;
    use crate::synth::{generate, SynthSpec};
    use crate::vector_fit::vf_eval;
    use std::f64::consts::PI;

    fn pairs_to_complex(y: &Array1D) -> Vec<Complex64> {
        (0..y.len()).map(|k| Complex64::new(y.row(0)[k], y.row(1)[k])).collect()
    }

    #[test]
    fn impulse_response_of_delay() {
        // exp(-j w t0) with t0 = 3 samples is a delta at t = 3.
        let f = 32;
        let n = 2 * f;
        let s: Vec<Complex64> = (0..f).map(|k| Complex64::from_polar(1.0, -2.0 * PI * (3 * k) as f64 / n as f64)).collect();
        let h = impulse_response(&s).unwrap();
        assert!((h[3] - 1.0).abs() < 0.05);
        assert!(negative_time_energy_ratio(&s).unwrap() < 1e-3);
    }

    #[test]
    fn anticausal_delay_is_flagged() {
        let f = 32;
        let n = 2 * f;
        let s: Vec<Complex64> = (0..f).map(|k| Complex64::from_polar(1.0, 2.0 * PI * (3 * k) as f64 / n as f64)).collect();
        assert!(negative_time_energy_ratio(&s).unwrap() > 0.9);
    }

    #[test]
    fn cel_output_of_cosine_is_causal() {
        let l = 2048;
        for m in [2usize, 6, 20] {
            let r: Vec<f64> = (0..l).map(|k| (2.0 * PI * (m * k) as f64 / (2 * l) as f64).cos()).collect();
            let y = causal_spectrum(&Array1D::new(1, l, r).unwrap(), 1).unwrap();
            let ratio = negative_time_energy_ratio(&pairs_to_complex(&y)).unwrap();
            assert!(ratio <= 1e-6, "m = {m}: {ratio:e}");
        }
    }

    /// Resonances near the band edge leak into `t < 0` through truncation, so
    /// the generating model is sampled over four times the band.
    #[test]
    fn synthetic_spectra_are_causal() {
        for seed in 0..5 {
            for spec in [SynthSpec::acceptance(seed), SynthSpec::easy(2, 512, 6, seed)] {
                let (_, model) = generate(&spec).unwrap();
                let s = vf_eval(&model, &spec.extended_grid(4).unwrap()).unwrap();
                let ratio = max_negative_time_energy_ratio(&s).unwrap();
                assert!(ratio <= 1e-2, "seed {seed}: {ratio:e}");
            }
        }
    }

    #[test]
    fn wider_band_is_more_causal() {
        for seed in 0..4 {
            let spec = SynthSpec::easy(1, 256, 4, seed);
            let (narrow, model) = generate(&spec).unwrap();
            let wide = vf_eval(&model, &spec.extended_grid(2).unwrap()).unwrap();
            let a = negative_time_energy_ratio(narrow.entry(0, 0)).unwrap();
            let b = negative_time_energy_ratio(wide.entry(0, 0)).unwrap();
            assert!(b <= a, "{b:e} > {a:e}");
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(negative_time_energy_ratio(&[Complex64::new(1.0, 0.0)]).is_err());
        assert!(matches!(negative_time_energy_ratio(&[Complex64::new(0.0, 0.0); 4]), Err(Error::ZeroReference)));
    }
}
