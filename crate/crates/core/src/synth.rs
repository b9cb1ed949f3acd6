//! Random pole-residue ground truth.
//!
//! Poles are shared by all entries: `K'` conjugate pairs with imaginary parts
//! uniform over the band (rad/s) and real parts `-delta |imag|`, `delta`
//! uniform in the damping range. Each residue is a complex Gaussian scaled by
//! `amplitude * |Re p|`, which puts every resonance peak near `amplitude`
//! regardless of its damping. Passivity is not enforced.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::sparam::{FrequencyGrid, SParamTensor};
use crate::vector_fit::{vf_eval, RationalModel};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub ports: usize,
    pub freqs: usize,
    /// `[nu_min, nu_max]` in Hz.
    pub band: (f64, f64),
    pub pole_pairs: usize,
    pub damping: (f64, f64),
    pub amplitude: f64,
    /// Scale of the constant term `d`, relative to `amplitude`.
    pub direct_scale: f64,
    pub reciprocal: bool,
    pub seed: u64,
}

impl SynthSpec {
    /// Densely packed, lightly damped resonances.
    pub fn long_channel(ports: usize, freqs: usize, pole_pairs: usize, seed: u64) -> Self {
        Self {
            ports,
            freqs,
            band: (0.0, 20e9),
            pole_pairs,
            damping: (1e-3, 1e-2),
            amplitude: 0.5,
            direct_scale: 0.2,
            reciprocal: true,
            seed,
        }
    }

    /// Two ports, 1500 frequencies, 40 pole pairs.
    pub fn acceptance(seed: u64) -> Self {
        Self::long_channel(2, 1500, 40, seed)
    }

    /// Smooth, well-damped model for quick checks.
    pub fn easy(ports: usize, freqs: usize, pole_pairs: usize, seed: u64) -> Self {
        Self { damping: (0.05, 0.2), ..Self::long_channel(ports, freqs, pole_pairs, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=16).contains(&self.ports) {
            return bad(format!("ports must be in 1..=16, got {}", self.ports));
        }
        if self.freqs < 32 {
            return bad(format!("need >= 32 frequencies, got {}", self.freqs));
        }
        if self.pole_pairs == 0 {
            return bad("need >= 1 pole pair".into());
        }
        let (lo, hi) = self.band;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("invalid band [{lo}, {hi}]"));
        }
        let (a, b) = self.damping;
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return bad(format!("invalid damping range [{a}, {b}]"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite() && self.direct_scale >= 0.0) {
            return bad("amplitude must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::linspace(self.band.0, self.band.1, self.freqs)
    }

    /// Same spacing as [`SynthSpec::grid`], band widened `factor` times.
    pub fn extended_grid(&self, factor: usize) -> Result<FrequencyGrid> {
        let (lo, hi) = self.band;
        let count = (self.freqs - 1) * factor.max(1) + 1;
        FrequencyGrid::linspace(lo, lo + (hi - lo) * factor.max(1) as f64, count)
    }
}

fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

pub fn generate_model(spec: &SynthSpec) -> Result<RationalModel> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "synth");
    let p = spec.ports;
    let (w_lo, w_hi) = (2.0 * PI * spec.band.0, 2.0 * PI * spec.band.1);
    let mut pair_poles = Vec::with_capacity(spec.pole_pairs);
    for _ in 0..spec.pole_pairs {
        let im = rng.random_range(w_lo..w_hi).max(1e-9 * w_hi);
        let delta = if spec.damping.0 == spec.damping.1 { spec.damping.0 } else { rng.random_range(spec.damping.0..spec.damping.1) };
        pair_poles.push(Complex64::new(-delta * im, im));
    }
    pair_poles.sort_by(|a, b| a.im.total_cmp(&b.im));

    let mut poles = Vec::with_capacity(2 * spec.pole_pairs);
    let mut residues = Vec::with_capacity(2 * spec.pole_pairs * p * p);
    for pole in &pair_poles {
        let mut c: Vec<Complex64> = (0..p * p).map(|_| complex_gaussian(&mut rng) * spec.amplitude * pole.re.abs()).collect();
        if spec.reciprocal {
            symmetrize(&mut c, p);
        }
        poles.push(*pole);
        poles.push(pole.conj());
        residues.extend_from_slice(&c);
        residues.extend(c.iter().map(|v| v.conj()));
    }
    let mut d: Vec<f64> = (0..p * p)
        .map(|_| spec.amplitude * spec.direct_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    if spec.reciprocal {
        for i in 0..p {
            for j in i + 1..p {
                let m = 0.5 * (d[i * p + j] + d[j * p + i]);
                d[i * p + j] = m;
                d[j * p + i] = m;
            }
        }
    }
    Ok(RationalModel { ports: p, poles, residues, d, e: vec![0.0; p * p] })
}

fn symmetrize(c: &mut [Complex64], p: usize) {
    for i in 0..p {
        for j in i + 1..p {
            let m = 0.5 * (c[i * p + j] + c[j * p + i]);
            c[i * p + j] = m;
            c[j * p + i] = m;
        }
    }
}

/// Samples on the uniform grid over the band, plus the generating model.
pub fn generate(spec: &SynthSpec) -> Result<(SParamTensor, RationalModel)> {
    let model = generate_model(spec)?;
    let data = vf_eval(&model, &spec.grid()?)?;
    Ok((data, model))
}
