use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_tensor(seed: u64, p: usize, f: usize) -> SParamTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = FrequencyGrid::new((0..f).map(|k| 1e7 * (k as f64 + 1.0) + rng.random_range(0.0..1e6)).collect()).unwrap();
    SParamTensor::from_fn(p, grid, |_, _, _| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).unwrap()
}

fn body(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.starts_with('!') && !l.starts_with('#'))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect()
}

#[test]
fn format_examples() {
    let (s, o) = parse_touchstone("# GHz S RI R 50\n1.0 0.5 -0.25\n", 1).unwrap();
    assert_eq!(s.grid().values(), &[1e9]);
    assert_eq!(s.get(0, 0, 0), c(0.5, -0.25));
    assert_eq!(o.format, DataFormat::Ri);

    let (s, _) = parse_touchstone("# GHz S MA R 50\n1.0 1.0 90\n", 1).unwrap();
    assert!((s.get(0, 0, 0) - c(0.0, 1.0)).norm() < 1e-15);

    let (s, _) = parse_touchstone("# GHz S DB R 50\n1.0 0 0\n", 1).unwrap();
    assert_eq!(s.get(0, 0, 0), c(1.0, 0.0));
}

#[test]
fn implicit_options() {
    let (s, o) = parse_touchstone("! no option line\n2 0.5 180\n", 1).unwrap();
    assert_eq!(o, TouchstoneOptions::implicit());
    assert_eq!(o.freq_unit, FreqUnit::GHz);
    assert_eq!(s.grid().values(), &[2e9]);
    assert!((s.get(0, 0, 0) - c(-0.5, 0.0)).norm() < 1e-15);
}

#[test]
fn options_are_case_insensitive() {
    let (s, o) = parse_touchstone("# mhz s ri r 75\n100 1 0\n", 1).unwrap();
    assert_eq!(o.freq_unit, FreqUnit::MHz);
    assert_eq!(o.reference_resistance, 75.0);
    assert_eq!(s.grid().values(), &[1e8]);
}

#[test]
fn two_port_order() {
    let text = "# Hz S RI R 50\n10 1 0 2 0 3 0 4 0\n";
    let (s, _) = parse_touchstone(text, 2).unwrap();
    assert_eq!(s.get(0, 0, 0).re, 1.0);
    assert_eq!(s.get(1, 0, 0).re, 2.0);
    assert_eq!(s.get(0, 1, 0).re, 3.0);
    assert_eq!(s.get(1, 1, 0).re, 4.0);
}

#[test]
fn writer_example() {
    let grid = FrequencyGrid::new(vec![1e9]).unwrap();
    let s = SParamTensor::new(1, grid, vec![c(1.0, 0.0)]).unwrap();
    let text = write_touchstone(&s, &TouchstoneOptions::default());
    assert!(text.contains("# GHz S RI R 50"));
    assert_eq!(body(&text), vec!["1 1 0"]);
}

#[test]
fn four_port_wrapping() {
    let s = random_tensor(1, 4, 3);
    let text = write_touchstone(&s, &TouchstoneOptions::default());
    let lines = body(&text);
    assert_eq!(lines.len(), 12);
    for block in lines.chunks(4) {
        assert_eq!(block[0].split(' ').count(), 9);
        for l in &block[1..] {
            assert_eq!(l.split(' ').count(), 8);
        }
    }
}

#[test]
fn many_port_rows_start_new_lines() {
    let s = random_tensor(2, 6, 2);
    let text = write_touchstone(&s, &TouchstoneOptions::default());
    // Each 6-pair row wraps as 4 + 2 pairs: 12 lines per frequency.
    assert_eq!(body(&text).len(), 24);
    let (back, _) = parse_touchstone(&text, 6).unwrap();
    assert_eq!(back, s);
}

#[test]
fn roundtrip_example_two_port() {
    let s = random_tensor(3, 2, 16);
    let (back, _) = parse_touchstone(&write_touchstone(&s, &TouchstoneOptions::default()), 2).unwrap();
    assert_eq!(back, s);
}

#[test]
fn tolerant_of_comments_and_whitespace() {
    let text = "! header\n\n#   GHz   S  RI  R 50 \n  1.0\t0.5   -0.25 ! trailing\n\n! mid\n2.0 0.1 0.2\n";
    let (s, _) = parse_touchstone(text, 1).unwrap();
    assert_eq!(s.freqs(), 2);
    assert_eq!(s.get(0, 0, 1), c(0.1, 0.2));
}

#[test]
fn parse_errors() {
    assert!(matches!(parse_touchstone("# GHz Y RI R 50\n1 0 0\n", 1), Err(Error::Touchstone { .. })));
    assert!(parse_touchstone("# GHz S XX R 50\n1 0 0\n", 1).is_err());
    assert!(parse_touchstone("# GHz S RI R\n1 0 0\n", 1).is_err());
    assert!(parse_touchstone("# GHz S RI R 50\n2 0 0\n1 0 0\n", 1).is_err());
    assert!(parse_touchstone("# GHz S RI R 50\n1 0 0\n1 0 0\n", 1).is_err());
    assert!(parse_touchstone("# GHz S RI R 50\n1 0 0 0 0\n", 1).is_err());
    assert!(parse_touchstone("# GHz S RI R 50\n1 0 0 0 0 0 0\n", 2).is_err());
    assert!(parse_touchstone("# GHz S RI R 50\n1 0 abc\n", 1).is_err());
    assert!(parse_touchstone("[Version] 2.0\n# GHz S RI R 50\n1 0 0\n", 1).is_err());
    assert!(parse_touchstone("# GHz S RI R 50\n", 1).is_err());
    let err = parse_touchstone("# GHz S RI R 50\n1 0 0 0\n", 1).unwrap_err();
    assert!(matches!(err, Error::Touchstone { .. }), "{err}");
}

#[test]
fn port_inference() {
    assert_eq!(ports_from_path(Path::new("a/b/thru.s2p")).unwrap(), 2);
    assert_eq!(ports_from_path(Path::new("x.S12P")).unwrap(), 12);
    assert!(ports_from_path(Path::new("x.txt")).is_err());
    assert!(ports_from_path(Path::new("x.s0p")).is_err());
}

#[test]
fn results_csv() {
    let grid = FrequencyGrid::new(vec![1e9, 2e9]).unwrap();
    let one = SParamTensor::new(1, grid.clone(), vec![c(1.0, 0.0); 2]).unwrap();
    let tenth = SParamTensor::new(1, grid.clone(), vec![c(0.0, 0.1); 2]).unwrap();
    let csv = write_results_csv(&grid, &[("truth", &one), ("fit", &tenth)]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "frequency_hz,truth_S11_db,fit_S11_db");
    let row: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 1e9);
    assert_eq!(row[1], 0.0);
    assert!((row[2] + 20.0).abs() < 1e-12);
    assert!(!csv.contains('\r'));

    let two = random_tensor(4, 2, 5);
    let csv = write_results_csv(two.grid(), &[("a", &two), ("b", &two)]).unwrap();
    assert!(csv.lines().all(|l| l.split(',').count() == 9));
    assert!(matches!(write_results_csv(&grid, &[("a", &two)]), Err(Error::GridMismatch)));
}

#[test]
fn number_format_is_exact() {
    for v in [0.0, 1.0, -0.25, 1e-20, 3.0e17, 0.1 + 0.2, f64::MIN_POSITIVE, 123456.789e-7] {
        assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn parse_write_roundtrip(seed in 0u64..1000, p in 1usize..=4, fmt in 0usize..3, unit in 0usize..4) {
        let x = random_tensor(seed, p, 7);
        let opts = TouchstoneOptions {
            format: [DataFormat::Ri, DataFormat::Ma, DataFormat::Db][fmt],
            freq_unit: [FreqUnit::Hz, FreqUnit::KHz, FreqUnit::MHz, FreqUnit::GHz][unit],
            reference_resistance: 50.0,
        };
        let (back, o) = parse_touchstone(&write_touchstone(&x, &opts), p).unwrap();
        prop_assert_eq!(o, opts);
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).norm() <= 1e-12 * b.norm());
        }
        for (a, b) in back.grid().values().iter().zip(x.grid().values()) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}
