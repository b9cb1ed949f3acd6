use super::*;
use crate::net::build_network;
use crate::sparam::{subsample, uniform_indices, FrequencyGrid};
use crate::synth::{generate, SynthSpec};
use num_complex::Complex64;
use rand::SeedableRng;

fn grid(f: usize) -> FrequencyGrid {
    FrequencyGrid::linspace(0.0, 10e9, f).unwrap()
}

fn small_problem(f: usize, observed: usize, seed: u64) -> (SParamTensor, MeasurementSet) {
    let (s, _) = generate(&SynthSpec::easy(1, f, 2, seed)).unwrap();
    let idx = uniform_indices(f, observed).unwrap();
    let m = MeasurementSet::from_reference(&s, &idx).unwrap();
    (s, m)
}

fn short_config(iterations: usize) -> FitConfig {
    FitConfig { sample_every: 2, ..FitConfig::with_budget(iterations) }
}

#[test]
fn latent_of_full_observation_is_the_data() {
    let (s, m) = small_problem(32, 32, 0);
    assert_eq!(make_latent(&m), flatten(&s));
}

#[test]
fn latent_zero_fills_unobserved_columns() {
    let g = grid(4);
    let data = SParamTensor::new(1, g.select(&[0]).unwrap(), vec![Complex64::new(0.5, -2.0)]).unwrap();
    let m = MeasurementSet::new(vec![0], data, g).unwrap();
    let z = make_latent(&m);
    assert_eq!(z.data(), &[0.5, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn latent_restricted_to_observed_columns_is_the_data() {
    let (_, m) = small_problem(64, 9, 3);
    assert_eq!(subsample(&make_latent(&m), m.indices()).unwrap(), flatten(m.data()));
}

#[test]
fn input_noise_schedule_endpoints() {
    let cfg = FitConfig::default();
    assert_eq!(input_noise_sigma(0, &cfg), 1e-2);
    assert!((input_noise_sigma(20_000, &cfg) - 1e-6).abs() < 1e-18);
    assert!((input_noise_sigma(10_000, &cfg) - 1e-4).abs() < 1e-16);
}

fn unit_weights() -> WeightStore {
    build_network(2, 32, 7).unwrap().1
}

fn grads_like(w: &WeightStore, value: f64) -> Vec<Vec<f64>> {
    w.arrays().iter().map(|a| vec![value; a.data().len()]).collect()
}

#[test]
fn step_without_noise_is_gradient_descent() {
    let mut w = unit_weights();
    let before = w.clone();
    let g: Vec<Vec<f64>> = w
        .arrays()
        .iter()
        .map(|a| (0..a.data().len()).map(|e| (e as f64).sin()).collect())
        .collect();
    sgld_step(&mut w, &g, None, 2e-4, None).unwrap();
    for (i, (a, b)) in w.arrays().iter().zip(before.arrays()).enumerate() {
        for (e, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
            assert_eq!(*x, y - 1e-4 * g[i][e]);
        }
    }
}

#[test]
fn step_adds_both_gradients() {
    let mut a = unit_weights();
    let mut b = a.clone();
    let (g1, g2, g) = (grads_like(&a, 1.5), grads_like(&a, 0.5), grads_like(&a, 2.0));
    sgld_step(&mut a, &g1, Some(&g2), 0.1, None).unwrap();
    sgld_step(&mut b, &g, None, 0.1, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn step_noise_has_std_sqrt_alpha() {
    let alpha = 2e-4;
    let mut w = unit_weights();
    let before = w.clone();
    let zeros = grads_like(&w, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    sgld_step(&mut w, &zeros, None, alpha, Some(&mut rng)).unwrap();
    let diffs: Vec<f64> = w
        .arrays()
        .iter()
        .zip(before.arrays())
        .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect::<Vec<_>>())
        .collect();
    let n = diffs.len() as f64;
    assert!(n > 10_000.0);
    let mean = diffs.iter().sum::<f64>() / n;
    let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    // Standard error of the sample std is about std / sqrt(2n).
    assert!((std - alpha.sqrt()).abs() < 5.0 * alpha.sqrt() / (2.0 * n).sqrt(), "{std}");
    assert!(mean.abs() < 5.0 * alpha.sqrt() / n.sqrt());
}

#[test]
fn step_is_deterministic_and_validates() {
    let mut a = unit_weights();
    let mut b = a.clone();
    let g = grads_like(&a, 0.3);
    sgld_step(&mut a, &g, None, 1e-3, Some(&mut ChaCha8Rng::seed_from_u64(4))).unwrap();
    sgld_step(&mut b, &g, None, 1e-3, Some(&mut ChaCha8Rng::seed_from_u64(4))).unwrap();
    assert_eq!(a, b);

    let mut bad = g.clone();
    bad[0][0] = f64::NAN;
    assert!(matches!(sgld_step(&mut a, &bad, None, 1e-3, None), Err(Error::NonFinite { .. })));
    assert!(sgld_step(&mut a, &g[1..], None, 1e-3, None).is_err());
}

#[test]
fn default_protocol_records_fifty_samples() {
    let cfg = FitConfig::default();
    assert_eq!((cfg.iterations, cfg.burn_in, cfg.sample_every), (20_000, 15_000, 100));
    assert_eq!(cfg.sample_count(), 50);
    assert_eq!(FitConfig::with_budget(5000).sample_count(), 50);
    assert_eq!(FitConfig::with_budget(5000).burn_in, 3750);

    let (_, m) = small_problem(32, 8, 1);
    let cfg = FitConfig::with_budget(400);
    assert_eq!(cfg.sample_count(), 50);
    assert_eq!(fit(&m, &cfg).unwrap().samples.len(), 50);
}

#[test]
fn rejects_bad_configs() {
    let ok = FitConfig::default();
    for bad in [
        FitConfig { iterations: 0, ..ok.clone() },
        FitConfig { burn_in: 20_000, ..ok.clone() },
        FitConfig { sample_every: 0, ..ok.clone() },
        FitConfig { step: -1.0, ..ok.clone() },
        FitConfig { lambda: f64::NAN, ..ok.clone() },
        FitConfig { temperature: 0.0, ..ok.clone() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    let (_, m) = small_problem(32, 8, 1);
    let short = MeasurementSet::from_reference(&generate(&SynthSpec::easy(1, 32, 2, 0)).unwrap().0, &[0]).unwrap();
    assert!(fit(&short, &short_config(10)).is_err());
    let (other, _) = small_problem(64, 8, 1);
    let monitor = Monitor { reference: &other, every: 1 };
    assert!(matches!(fit_monitored(&m, &short_config(10), Some(monitor)), Err(Error::GridMismatch)));
}

/// Replays the fit by hand: fixed latent, data term only, `w -= (step / 2) g`.
#[test]
fn noiseless_unregularised_fit_is_plain_gradient_descent() {
    let (_, m) = small_problem(32, 8, 2);
    let cfg = FitConfig {
        sgld_noise: false,
        input_noise: false,
        lambda: 0.0,
        seed: 5,
        ..short_config(40)
    };
    let summary = fit(&m, &cfg).unwrap();

    let spec = NetworkSpec::new(2, 32, cfg.cel).unwrap();
    let mut w = WeightStore::init(&spec, cfg.seed);
    let z = make_latent(&m);
    let z = Array1D::new(z.rows(), z.cols(), z.into_data()).unwrap();
    let y = flatten(m.data());
    let target = Array1D::new(y.rows(), y.cols(), y.into_data()).unwrap();
    let mut outputs = Vec::new();
    for t in 1..=cfg.iterations {
        let mut tape = Tape::new();
        let params = w.to_tape(&mut tape);
        let zv = tape.leaf(z.clone());
        let out = forward_on_tape(&mut tape, &spec, &params, zv).unwrap();
        let sel = tape.select_columns(out, m.indices()).unwrap();
        let resid = tape.sub_const(sel, &target).unwrap();
        let loss = tape.sum_squares(resid).unwrap();
        assert_eq!(tape.scalar(loss), summary.loss_trace[t - 1].0);
        if t > cfg.burn_in && (t - cfg.burn_in) % cfg.sample_every == 0 {
            outputs.push(tape.value(out).data().to_vec());
        }
        let mut g = tape.backward(loss).unwrap();
        for (v, a) in params.iter().zip(w.arrays_mut()) {
            let grad = g.take(*v).unwrap();
            a.data_mut().iter_mut().zip(&grad).for_each(|(x, d)| *x -= cfg.step / 2.0 * d);
        }
    }
    assert_eq!(outputs.len(), summary.samples.len());
    for (o, s) in outputs.iter().zip(&summary.samples) {
        assert_eq!(o, flatten(s).data());
    }
}

#[test]
fn full_runs_are_bitwise_reproducible() {
    let (s, m) = small_problem(32, 8, 4);
    let cfg = FitConfig { seed: 9, ..short_config(60) };
    let monitor = Some(Monitor { reference: &s, every: 10 });
    let a = fit_monitored(&m, &cfg, monitor).unwrap();
    let b = fit_monitored(&m, &cfg, monitor).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.checkpoints.len(), 6);
    let c = fit(&m, &FitConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn posterior_std_is_zero_iff_samples_agree() {
    let g = grid(8);
    let a = SParamTensor::from_fn(1, g.clone(), |_, _, k| Complex64::new(k as f64, 1.0)).unwrap();
    let b = SParamTensor::from_fn(1, g, |_, _, k| Complex64::new(k as f64, if k == 3 { 3.0 } else { 1.0 })).unwrap();

    let same = summarize(vec![a.clone(), a.clone(), a.clone()], Vec::new(), Vec::new()).unwrap();
    assert!(same.std_channels.data().iter().all(|&v| v == 0.0));
    assert!(same.std_magnitude.data().iter().all(|&v| v == 0.0));
    assert_eq!(same.mean, a);

    let mixed = summarize(vec![a.clone(), b], Vec::new(), Vec::new()).unwrap();
    for r in 0..2 {
        for k in 0..8 {
            let v = mixed.std_channels.get(r, k);
            assert!(v >= 0.0);
            assert_eq!(v == 0.0, !(r == 1 && k == 3), "r={r} k={k}");
        }
    }
    assert_eq!(mixed.std_channels.get(1, 3), 1.0);
    assert!(summarize(Vec::new(), Vec::new(), Vec::new()).is_err());
}

#[test]
fn posterior_std_from_a_fit_is_non_negative() {
    let (_, m) = small_problem(32, 8, 6);
    let summary = fit(&m, &short_config(40)).unwrap();
    assert!(summary.std_channels.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    assert!(summary.std_per_frequency().iter().any(|&v| v > 0.0));
    assert_eq!(summary.std_per_frequency().len(), 32);
}

#[test]
fn huge_step_diverges_with_trace() {
    let (_, m) = small_problem(32, 8, 0);
    let cfg = FitConfig { step: 1e12, ..short_config(200) };
    match fit(&m, &cfg) {
        Err(Error::Diverged { iteration, trace_tail, .. }) => {
            assert!(iteration >= 1 && iteration <= 200);
            assert!(trace_tail.len() <= 10);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn csv_exports() {
    let (_, m) = small_problem(32, 8, 0);
    let summary = fit(&m, &short_config(20)).unwrap();
    let csv = summary.loss_trace_csv();
    assert!(csv.starts_with("iteration,data_loss,reg_loss\n1,"));
    assert_eq!(csv.lines().count(), 21);
    assert_eq!(summary.checkpoints_csv(), "iteration,psnr_db\n");
}

/// Fully observed easy 1-port: the data residual falls to 1% of the signal.
/// Both noise sources are off; with them on the residual plateaus near 10%.
#[test]
fn fully_observed_fit_converges() {
    let f = 64;
    let (s, m) = small_problem(f, f, 0);
    let cfg = FitConfig { seed: 1, ..FitConfig::with_budget(3000).vanilla() };
    let summary = fit(&m, &cfg).unwrap();
    let signal = flatten(&s);
    let signal_rms = (signal.data().iter().map(|v| v * v).sum::<f64>() / signal.data().len() as f64).sqrt();
    let final_data = summary.loss_trace.last().unwrap().0;
    let data_rms = (final_data / signal.data().len() as f64).sqrt();
    assert!(data_rms <= 1e-2 * signal_rms, "{data_rms:e} vs {signal_rms:e}");
}

