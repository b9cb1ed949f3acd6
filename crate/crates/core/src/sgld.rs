//! Deep-prior fit driven by stochastic gradient Langevin dynamics.
//!
//! Each iteration perturbs the latent with white noise whose variance decays
//! geometrically, evaluates the generator, and takes one SGLD step on
//! `||Y - A(G(Z_t))||^2 + R(G(Z_t))`. After burn-in the generator output is
//! recorded every `sample_every` iterations; mean and spread of those samples
//! form the posterior summary.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Array1D, Tape};
use crate::error::{Error, Result};
use crate::net::{forward_on_tape, NetworkSpec, WeightStore};
use crate::regularizer::{penalty_on_tape, RegConfig};
use crate::rng;
use crate::sparam::{flatten, psnr, subsample_adjoint, unflatten, MeasurementSet, RealChannels, SParamTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub step: f64,
    pub lambda: f64,
    pub sigma0_sq: f64,
    pub sigma_final_sq: f64,
    pub burn_in: usize,
    pub sample_every: usize,
    pub seed: u64,
    pub sgld_noise: bool,
    pub input_noise: bool,
    pub regularizer: bool,
    pub cel: bool,
    pub split_l1: bool,
    /// Record samples from the noisy latent of the current iteration
    /// (`true`) or from a separate pass on the clean latent.
    pub sample_noisy_latent: bool,
    /// Posterior temperature: the Langevin noise variance is `step *
    /// temperature` while the drift stays `(step / 2) * gradient`. `1.0` is
    /// the textbook update; at `1.0` the sum-of-squares likelihood is so flat
    /// relative to the prior that samples wander far from the data, so the
    /// default tempers it.
    pub temperature: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            step: 2e-4,
            lambda: 0.1,
            sigma0_sq: 1e-2,
            sigma_final_sq: 1e-6,
            burn_in: 15_000,
            sample_every: 100,
            seed: 0,
            sgld_noise: true,
            input_noise: true,
            regularizer: true,
            cel: true,
            split_l1: false,
            sample_noisy_latent: true,
            temperature: 1e-3,
        }
    }
}

impl FitConfig {
    /// Same schedule shape on a shorter budget: burn-in at 75% of `iterations`
    /// and 50 samples when the remaining window allows it.
    pub fn with_budget(iterations: usize) -> Self {
        let burn_in = iterations * 3 / 4;
        let sample_every = ((iterations - burn_in) / 50).max(1);
        Self { iterations, burn_in, sample_every, ..Self::default() }
    }

    /// Plain deep-prior fit: no Langevin noise, no input noise, no penalty,
    /// no causality layer.
    pub fn vanilla(mut self) -> Self {
        self.sgld_noise = false;
        self.input_noise = false;
        self.regularizer = false;
        self.cel = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!("burn_in {} must be < iterations {}", self.burn_in, self.iterations));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be >= 1".into());
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma_final_sq > 0.0) {
            return bad("noise variances must be > 0".into());
        }
        RegConfig::new(self.lambda)?;
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.iterations - self.burn_in) / self.sample_every
    }

    pub fn reg_config(&self) -> RegConfig {
        RegConfig { lambda: self.lambda, split_l1: self.split_l1 }
    }

    /// `key = value` lines for experiment records.
    pub fn to_config_block(&self) -> String {
        [
            format!("iterations = {}", self.iterations),
            format!("step = {:e}", self.step),
            format!("lambda = {}", self.lambda),
            format!("sigma0_sq = {:e}", self.sigma0_sq),
            format!("sigma_final_sq = {:e}", self.sigma_final_sq),
            format!("burn_in = {}", self.burn_in),
            format!("sample_every = {}", self.sample_every),
            format!("seed = {}", self.seed),
            format!("sgld_noise = {}", self.sgld_noise),
            format!("input_noise = {}", self.input_noise),
            format!("regularizer = {}", self.regularizer),
            format!("cel = {}", self.cel),
            format!("split_l1 = {}", self.split_l1),
            format!("sample_noisy_latent = {}", self.sample_noisy_latent),
            format!("temperature = {:e}", self.temperature),
        ]
        .join("\n")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub samples: Vec<SParamTensor>,
    pub mean: SParamTensor,
    /// Per-entry standard deviation of the real channels, `r x f`.
    pub std_channels: RealChannels,
    /// Per-entry standard deviation of `|S_ij|`, `p^2 x f` (row `i p + j`).
    pub std_magnitude: RealChannels,
    /// `(data term, regularizer)` per iteration.
    pub loss_trace: Vec<(f64, f64)>,
    /// `(iteration, psnr_db)` when a reference was supplied.
    pub checkpoints: Vec<(usize, f64)>,
}

impl PosteriorSummary {
    pub fn loss_trace_csv(&self) -> String {
        let mut s = String::from("iteration,data_loss,reg_loss\n");
        for (t, (d, r)) in self.loss_trace.iter().enumerate() {
            let _ = writeln!(s, "{},{:e},{:e}", t + 1, d, r);
        }
        s
    }

    pub fn checkpoints_csv(&self) -> String {
        let mut s = String::from("iteration,psnr_db\n");
        for (t, p) in &self.checkpoints {
            let _ = writeln!(s, "{t},{p}");
        }
        s
    }

    /// Per-frequency spread: mean over channels of `std_channels`.
    pub fn std_per_frequency(&self) -> Vec<f64> {
        let s = &self.std_channels;
        (0..s.cols())
            .map(|k| (0..s.rows()).map(|r| s.get(r, k)).sum::<f64>() / s.rows() as f64)
            .collect()
    }
}

/// Optional PSNR tracking against a known reference.
#[derive(Clone, Copy, Debug)]
pub struct Monitor<'a> {
    pub reference: &'a SParamTensor,
    pub every: usize,
}

/// `A^dagger(flatten(Y))`.
pub fn make_latent(m: &MeasurementSet) -> RealChannels {
    subsample_adjoint(&flatten(m.data()), m.indices(), m.full_grid().len())
        .expect("measurement set invariants guarantee valid indices")
}

/// `sigma_0^2 (sigma_T^2 / sigma_0^2)^(t / T)`.
pub fn input_noise_sigma(t: usize, cfg: &FitConfig) -> f64 {
    let ratio = cfg.sigma_final_sq / cfg.sigma0_sq;
    cfg.sigma0_sq * ratio.powf(t as f64 / cfg.iterations as f64)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `theta <- theta - (alpha / 2) (grad_data + grad_reg) + n`, `n ~ N(0, alpha)`
/// per coordinate when `noise` is given.
pub fn sgld_step(
    weights: &mut WeightStore,
    grad_data: &[Vec<f64>],
    grad_reg: Option<&[Vec<f64>]>,
    alpha: f64,
    noise: Option<&mut ChaCha8Rng>,
) -> Result<()> {
    tempered_step(weights, grad_data, grad_reg, alpha, alpha, noise)
}

fn tempered_step(
    weights: &mut WeightStore,
    grad_data: &[Vec<f64>],
    grad_reg: Option<&[Vec<f64>]>,
    alpha: f64,
    noise_var: f64,
    mut noise: Option<&mut ChaCha8Rng>,
) -> Result<()> {
    if grad_data.len() != weights.len() || grad_reg.is_some_and(|g| g.len() != weights.len()) {
        return Err(Error::shape(format!("{} gradient arrays", weights.len()), grad_data.len()));
    }
    let check = |g: &Vec<f64>, a: &Array1D| -> Result<()> {
        if g.len() != a.data().len() {
            return Err(Error::shape(a.data().len(), g.len()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "sgld_step" });
        }
        Ok(())
    };
    for (i, a) in weights.arrays().iter().enumerate() {
        check(&grad_data[i], a)?;
        if let Some(r) = grad_reg {
            check(&r[i], a)?;
        }
    }
    let half = alpha / 2.0;
    let std = noise_var.sqrt();
    for (i, a) in weights.arrays_mut().iter_mut().enumerate() {
        for (e, w) in a.data_mut().iter_mut().enumerate() {
            let g = grad_data[i][e] + grad_reg.map_or(0.0, |r| r[i][e]);
            *w -= half * g;
            if let Some(rng) = noise.as_deref_mut() {
                *w += std * gaussian(rng);
            }
        }
    }
    Ok(())
}

struct Evaluation {
    output: Array1D,
    data_loss: f64,
    reg_loss: f64,
    grads: Vec<Vec<f64>>,
}

fn evaluate(
    spec: &NetworkSpec,
    weights: &WeightStore,
    z: Array1D,
    indices: &[usize],
    target: &Array1D,
    reg: Option<&RegConfig>,
    with_grads: bool,
) -> Result<Evaluation> {
    let mut tape = Tape::new();
    let params = weights.to_tape(&mut tape);
    let zv = tape.leaf(z);
    let out = forward_on_tape(&mut tape, spec, &params, zv)?;
    let observed = tape.select_columns(out, indices)?;
    let resid = tape.sub_const(observed, target)?;
    let data = tape.sum_squares(resid)?;
    let (loss, reg_loss) = match reg {
        Some(cfg) => {
            let r = penalty_on_tape(&mut tape, out, cfg)?;
            let total = tape.add(data, r)?;
            (total, tape.scalar(r))
        }
        None => (data, 0.0),
    };
    let data_loss = tape.scalar(data);
    let grads = if with_grads {
        let mut g = tape.backward(loss)?;
        params
            .iter()
            .zip(weights.arrays())
            .map(|(v, a)| g.take(*v).unwrap_or_else(|| vec![0.0; a.data().len()]))
            .collect()
    } else {
        Vec::new()
    };
    Ok(Evaluation { output: tape.value(out).clone(), data_loss, reg_loss, grads })
}

fn diverged(iteration: usize, data_loss: f64, reg_loss: f64, trace: &[(f64, f64)]) -> Error {
    Error::Diverged {
        iteration,
        data_loss,
        reg_loss,
        trace_tail: trace[trace.len().saturating_sub(10)..].to_vec(),
    }
}

pub fn fit(m: &MeasurementSet, cfg: &FitConfig) -> Result<PosteriorSummary> {
    fit_monitored(m, cfg, None)
}

pub fn fit_monitored(m: &MeasurementSet, cfg: &FitConfig, monitor: Option<Monitor>) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let grid = m.full_grid();
    grid.require_fit_length()?;
    let f = grid.len();
    let ports = m.ports();
    let r = 2 * ports * ports;
    if m.indices().len() < 2 {
        return Err(Error::InvalidArgument(format!("need >= 2 observed frequencies, got {}", m.indices().len())));
    }
    if let Some(mon) = &monitor {
        if mon.reference.ports() != ports || mon.reference.freqs() != f {
            return Err(Error::GridMismatch);
        }
    }
    let spec = NetworkSpec::new(r, f, cfg.cel)?;
    let mut weights = WeightStore::init(&spec, cfg.seed);
    let mut sgld_rng = rng::stream(cfg.seed, "sgld");
    let mut input_rng = rng::stream(cfg.seed, "input-noise");

    let latent = make_latent(m);
    let latent = Array1D::new(r, f, latent.into_data())?;
    let y = flatten(m.data());
    let target = Array1D::new(y.rows(), y.cols(), y.into_data())?;
    let reg = cfg.regularizer.then(|| cfg.reg_config());
    let reference = monitor.map(|mon| flatten(mon.reference));

    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut samples = Vec::with_capacity(cfg.sample_count());
    let mut checkpoints = Vec::new();
    for t in 1..=cfg.iterations {
        let z = if cfg.input_noise {
            let std = input_noise_sigma(t, cfg).sqrt();
            let mut z = latent.clone();
            z.data_mut().iter_mut().for_each(|v| *v += std * gaussian(&mut input_rng));
            z
        } else {
            latent.clone()
        };
        let eval = match evaluate(&spec, &weights, z, m.indices(), &target, reg.as_ref(), true) {
            Ok(e) => e,
            Err(Error::NonFinite { .. }) => {
                let (d, g) = trace.last().copied().unwrap_or((f64::NAN, f64::NAN));
                return Err(diverged(t, d, g, &trace));
            }
            Err(e) => return Err(e),
        };
        trace.push((eval.data_loss, eval.reg_loss));
        if !(eval.data_loss + eval.reg_loss).is_finite() {
            return Err(diverged(t, eval.data_loss, eval.reg_loss, &trace));
        }

        let record = t > cfg.burn_in && (t - cfg.burn_in) % cfg.sample_every == 0;
        let checkpoint = monitor.is_some_and(|mon| mon.every > 0 && t % mon.every == 0);
        if record || checkpoint {
            let output = if cfg.sample_noisy_latent {
                eval.output.clone()
            } else {
                evaluate(&spec, &weights, latent.clone(), m.indices(), &target, None, false)?.output
            };
            let channels = RealChannels::new(r, f, output.into_data())?;
            if checkpoint {
                checkpoints.push((t, psnr(reference.as_ref().expect("monitor present"), &channels)?));
            }
            if record {
                samples.push(unflatten(&channels, ports, grid)?);
            }
        }

        let noise = if cfg.sgld_noise { Some(&mut sgld_rng) } else { None };
        match tempered_step(&mut weights, &eval.grads, None, cfg.step, cfg.step * cfg.temperature, noise) {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => return Err(diverged(t, eval.data_loss, eval.reg_loss, &trace)),
            Err(e) => return Err(e),
        }
    }
    summarize(samples, trace, checkpoints)
}

fn summarize(samples: Vec<SParamTensor>, loss_trace: Vec<(f64, f64)>, checkpoints: Vec<(usize, f64)>) -> Result<PosteriorSummary> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no posterior samples recorded".into()))?;
    let (ports, grid) = (first.ports(), first.grid().clone());
    let flat: Vec<RealChannels> = samples.iter().map(flatten).collect();
    let mags: Vec<Vec<f64>> = samples.iter().map(|s| s.data().iter().map(|c| c.norm()).collect()).collect();
    let (rows, cols) = (flat[0].rows(), flat[0].cols());
    let (mean, var) = moments(&flat.iter().map(|s| s.data()).collect::<Vec<_>>());
    let (_, mag_var) = moments(&mags.iter().map(|m| m.as_slice()).collect::<Vec<_>>());
    let entries = ports * ports;

    let mean = unflatten(&RealChannels::new(rows, cols, mean)?, ports, &grid)?;
    Ok(PosteriorSummary {
        samples,
        mean,
        std_channels: RealChannels::new(rows, cols, var.into_iter().map(f64::sqrt).collect())?,
        std_magnitude: RealChannels::new(entries, cols, mag_var.into_iter().map(f64::sqrt).collect())?,
        loss_trace,
        checkpoints,
    })
}

/// Elementwise mean and population variance. Deviations are taken from the
/// first sample so that identical samples give exactly zero variance.
fn moments(samples: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let first = samples[0];
    let n = samples.len() as f64;
    let mut shift = vec![0.0; first.len()];
    for s in &samples[1..] {
        shift.iter_mut().zip(s.iter().zip(first)).for_each(|(a, (v, f))| *a += v - f);
    }
    shift.iter_mut().for_each(|a| *a /= n);
    let mut var = vec![0.0; first.len()];
    for s in samples {
        for (e, a) in var.iter_mut().enumerate() {
            *a += (s[e] - first[e] - shift[e]).powi(2) / n;
        }
    }
    let mean = first.iter().zip(&shift).map(|(f, d)| f + d).collect();
    (mean, var)
}

#[cfg(test)]
mod tests;
