use super::*;
use crate::autodiff::gradcheck;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random(rng: &mut ChaCha8Rng, c: usize, l: usize) -> Array1D {
    Array1D::new(c, l, (0..c * l).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct O(N^2) evaluation of the causality layer for one channel with
/// `n_k = 1`: even extension, cosine transform, analytic-signal window,
/// inverse transform. Returns `(re, im)` of length `L / 2`.
fn cel_oracle(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = r.len();
    let n = 2 * l;
    let mut m = vec![0.0; n];
    m[..l].copy_from_slice(r);
    m[l] = r[l - 1];
    for k in 1..l {
        m[n - k] = r[k];
    }
    let h: Vec<f64> = (0..n)
        .map(|t| (0..n).map(|j| m[j] * (2.0 * PI * (j * t) as f64 / n as f64).cos()).sum())
        .collect();
    let w = |t: usize| match t {
        0 => 1.0,
        t if t < l => 2.0,
        t if t == l => 1.0,
        _ => 0.0,
    };
    let f = l / 2;
    let mut re = vec![0.0; f];
    let mut im = vec![0.0; f];
    for k in 0..f {
        for t in 0..n {
            let ph = 2.0 * PI * ((k * t) % n) as f64 / n as f64;
            re[k] += w(t) * h[t] * ph.cos() / n as f64;
            im[k] -= w(t) * h[t] * ph.sin() / n as f64;
        }
    }
    (re, im)
}

#[test]
fn filter_and_depth_rules() {
    assert_eq!(filters_for_channels(32), 141);
    assert_eq!(filters_for_channels(8), 71);
    assert_eq!(filters_for_channels(2), 35);
    assert_eq!(depth_for_freqs(1000).unwrap(), 6);
    assert_eq!(depth_for_freqs(32).unwrap(), 1);
    assert_eq!(depth_for_freqs(33).unwrap(), 2);
    assert!(depth_for_freqs(31).is_err());

    let s = NetworkSpec::new(8, 1000, true).unwrap();
    assert_eq!(s.padded_len, 1024);
    assert_eq!(s.input_filters, 71);
    assert_eq!(s.output_filters, 4);
    let s = NetworkSpec::new(8, 1500, true).unwrap();
    assert_eq!((s.depth, s.padded_len), (7, 1536));
    let s = NetworkSpec::new(8, 64, false).unwrap();
    assert_eq!((s.padded_len, s.output_filters), (64, 8));
    assert!(NetworkSpec::new(7, 64, true).is_err());
    assert!(build_network(8, 16, 0).is_err());
}

#[test]
fn build_is_deterministic() {
    let (s1, w1) = build_network(8, 100, 11).unwrap();
    let (s2, w2) = build_network(8, 100, 11).unwrap();
    let (_, w3) = build_network(8, 100, 12).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(w1, w2);
    assert_eq!(w1.parameter_count(), w3.parameter_count());
    assert_eq!(w1.parameter_count(), s1.parameter_count());
    assert_ne!(w1, w3);
    assert_eq!(w1.names()[0], "input.conv.weight");
    assert_eq!(w1.names().last().unwrap(), "output.conv.bias");
    assert!(w1.get("enc3.b.bn.gamma").unwrap().data().iter().all(|&g| g == 1.0));
}

#[test]
fn he_init_scale() {
    let (_, w) = build_network(8, 64, 3).unwrap();
    let a = w.get("dec1.merge.conv.weight").unwrap();
    let fan_in = a.len() as f64;
    let var = a.data().iter().map(|v| v * v).sum::<f64>() / a.data().len() as f64;
    let expected = 2.0 / fan_in;
    assert!((var / expected - 1.0).abs() < 0.05, "var {var} vs {expected}");
}

#[test]
fn config_block_lists_fields() {
    let s = NetworkSpec::new(8, 1000, true).unwrap();
    let block = s.to_config_block();
    assert!(block.contains("depth = 6"));
    assert!(block.contains("padded_len = 1024"));
    assert!(block.contains("encoder_filters = 71,71,71,71,71,71"));
    for line in block.lines() {
        assert_eq!(line.split(" = ").count(), 2, "{line}");
    }
}

#[test]
fn forward_shape_and_stages() {
    let (spec, w) = build_network(8, 64, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = random(&mut rng, 8, 64);
    let grid = FrequencyGrid::linspace(1e6, 1e9, 64).unwrap();
    let zc = RealChannels::new(8, 64, z.data().to_vec()).unwrap();
    let out = forward(&spec, &w, &zc, &grid).unwrap();
    assert_eq!((out.ports(), out.freqs()), (2, 64));

    let mut tape = Tape::new();
    let params = w.to_tape(&mut tape);
    let zv = tape.leaf(z);
    forward_on_tape(&mut tape, &spec, &params, zv).unwrap();
    assert!(tape.node_shapes().contains(&(4, 128)), "no r/2 x 2f stage");
}

#[test]
fn forward_is_pure() {
    let (spec, w) = build_network(8, 40, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = RealChannels::new(8, 40, random(&mut rng, 8, 40).into_data()).unwrap();
    let a = forward_channels(&spec, &w, &z).unwrap();
    let b = forward_channels(&spec, &w, &z).unwrap();
    assert_eq!(a.data(), b.data());
    assert!(forward_channels(&spec, &w, &RealChannels::zeros(8, 41)).is_err());
    assert!(forward_channels(&spec, &w, &RealChannels::zeros(2, 40)).is_err());
}

#[test]
fn forward_without_cel() {
    let spec = NetworkSpec::new(2, 50, false).unwrap();
    let w = WeightStore::init(&spec, 1);
    let out = forward_channels(&spec, &w, &RealChannels::zeros(2, 50)).unwrap();
    assert_eq!((out.rows(), out.cols()), (2, 50));
}

#[test]
fn network_gradient_check() {
    let spec = NetworkSpec::new(2, 32, true).unwrap();
    let w = WeightStore::init(&spec, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = random(&mut rng, 2, 32);
    let target = random(&mut rng, 2, 32);
    let mut inputs = w.arrays().to_vec();
    inputs.push(z);
    let n = inputs.len();
    let report = gradcheck(
        &inputs,
        |tape, vars| {
            let out = forward_on_tape(tape, &spec, &vars[..n - 1], vars[n - 1])?;
            let d = tape.sub_const(out, &target)?;
            tape.sum_squares(d)
        },
        |_, e, _| e % 13 != 0,
    )
    .unwrap();
    assert!(report.entries_checked > 500);
    assert!(report.relative_error < 1e-4, "{report:?}");
}

#[test]
fn cel_constant_is_real() {
    let r = Array1D::new(1, 64, vec![0.7; 64]).unwrap();
    let y = causal_spectrum(&r, 1).unwrap();
    assert_eq!((y.channels(), y.len()), (2, 32));
    for k in 0..32 {
        assert!((y.row(0)[k] - 0.7).abs() < 1e-12);
        assert!(y.row(1)[k].abs() <= 1e-10);
    }
}

#[test]
fn cel_real_part_is_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = random(&mut rng, 3, 80);
    let y = causal_spectrum(&r, 1).unwrap();
    for c in 0..3 {
        for k in 0..40 {
            assert!((y.row(2 * c)[k] - r.row(c)[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn cel_matches_direct_oracle() {
    let l = 128;
    for m in [2usize, 5, 12] {
        let r: Vec<f64> = (0..l).map(|k| (2.0 * PI * (m * k) as f64 / (2 * l) as f64).cos()).collect();
        let y = causal_spectrum(&Array1D::new(1, l, r.clone()).unwrap(), 1).unwrap();
        let (re, im) = cel_oracle(&r);
        for k in 0..l / 2 {
            assert!((y.row(0)[k] - re[k]).abs() < 1e-6);
            assert!((y.row(1)[k] - im[k]).abs() < 1e-6, "m={m} k={k}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = random(&mut rng, 1, 50);
    let y = causal_spectrum(&r, 1).unwrap();
    let (re, im) = cel_oracle(r.data());
    for k in 0..25 {
        assert!((y.row(0)[k] - re[k]).abs() < 1e-10);
        assert!((y.row(1)[k] - im[k]).abs() < 1e-10);
    }
}

/// A causal finite impulse response `h[t] = a_t` has spectrum
/// `sum a_t cos(wt) - i sum a_t sin(wt)`; feeding the cosine sum in must
/// return the sine sum as the imaginary part.
#[test]
fn cel_kramers_kronig_pair() {
    let f = 256;
    let l = 2 * f;
    let n = 2 * l;
    let taps: Vec<f64> = (0..l / 2).map(|t| 0.85f64.powi(t as i32) * (0.3 * t as f64).cos()).collect();
    let w = |k: usize| 2.0 * PI * k as f64 / n as f64;
    let re: Vec<f64> = (0..l)
        .map(|k| taps.iter().enumerate().map(|(t, a)| a * (w(k) * t as f64).cos()).sum())
        .collect();
    let im: Vec<f64> = (0..f)
        .map(|k| -taps.iter().enumerate().map(|(t, a)| a * (w(k) * t as f64).sin()).sum::<f64>())
        .collect();
    let y = causal_spectrum(&Array1D::new(1, l, re).unwrap(), 1).unwrap();
    let err: f64 = (0..f).map(|k| (y.row(1)[k] - im[k]).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = im.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err / norm < 1e-3, "relative rms {}", err / norm);
}

#[test]
fn cel_interpolation_keeps_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let r = random(&mut rng, 1, 40);
    let y1 = causal_spectrum(&r, 1).unwrap();
    let y3 = causal_spectrum(&r, 3).unwrap();
    assert_eq!(y3.len(), 60);
    for k in 0..20 {
        assert!((y3.row(0)[3 * k] - y1.row(0)[k]).abs() < 1e-10);
        assert!((y3.row(1)[3 * k] - y1.row(1)[k]).abs() < 1e-10);
    }
}

#[test]
fn cel_rejects_bad_lengths() {
    assert!(causal_spectrum(&Array1D::zeros(1, 7), 1).is_err());
    assert!(causal_spectrum(&Array1D::zeros(1, 8), 0).is_err());
}

#[test]
fn cel_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, 2, 24);
    let target = random(&mut rng, 4, 24);
    let report = gradcheck(
        &[x],
        |tape, v| {
            let y = cel_forward(tape, v[0], 2)?;
            let d = tape.sub_const(y, &target)?;
            tape.sum_squares(d)
        },
        |_, _, _| false,
    )
    .unwrap();
    assert!(report.relative_error < 1e-4, "{report:?}");
}

proptest::proptest! {
    #[test]
    fn cel_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = random(&mut rng, 2, 32);
        let r2 = random(&mut rng, 2, 32);
        let mix = Array1D::new(2, 32, r1.data().iter().zip(r2.data()).map(|(x, y)| a * x + b * y).collect()).unwrap();
        let y1 = causal_spectrum(&r1, 1).unwrap();
        let y2 = causal_spectrum(&r2, 1).unwrap();
        let ym = causal_spectrum(&mix, 1).unwrap();
        for i in 0..ym.data().len() {
            let lhs = ym.data()[i];
            let rhs = a * y1.data()[i] + b * y2.data()[i];
            proptest::prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
