//! Comparison sweeps, the ablation ladder and the uncertainty report.
//!
//! Every fit of a sweep gets its own seed derived from the sweep seed, the
//! method and the rate, so results do not depend on how many fits run
//! concurrently or in which order they finish.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sgld::{fit, FitConfig, PosteriorSummary};
use crate::sparam::{count_for_rate, flatten, psnr_tensor, uniform_indices, MeasurementSet, SParamTensor};
use crate::touchstone::fmt_num;
use crate::vector_fit::{vf_eval, vf_fit_auto, VfOptions, VfResult};

/// Largest pole count tried by automatic order selection.
pub const VF_K_CAP: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Dip,
    Vf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dip => "dip",
            Method::Vf => "vf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dip" => Ok(Method::Dip),
            "vf" => Ok(Method::Vf),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}` (expected dip or vf)"))),
        }
    }
}

/// Uniformly spaced observations of `truth` at `rate`.
pub fn observe(truth: &SParamTensor, rate: f64) -> Result<MeasurementSet> {
    let f = truth.freqs();
    MeasurementSet::from_reference(truth, &uniform_indices(f, count_for_rate(f, rate)?)?)
}

pub fn run_dip(truth: &SParamTensor, rate: f64, cfg: &FitConfig) -> Result<(PosteriorSummary, f64)> {
    let summary = fit(&observe(truth, rate)?, cfg)?;
    let psnr = psnr_tensor(truth, &summary.mean)?;
    Ok((summary, psnr))
}

/// Vector fitting with automatic order selection; returns the fit, the
/// chosen pole count and the dense estimate.
pub fn run_vf(truth: &SParamTensor, rate: f64, k_cap: usize) -> Result<(VfResult, usize, SParamTensor)> {
    let (res, k) = vf_fit_auto(&observe(truth, rate)?, k_cap, &VfOptions::default())?;
    let dense = vf_eval(&res.model, truth.grid())?;
    Ok((res, k, dense))
}

/// Per-frequency spread and error of a posterior, both averaged over the
/// real channels.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyProfile {
    pub std: Vec<f64>,
    pub abs_error: Vec<f64>,
}

impl UncertaintyProfile {
    pub fn new(truth: &SParamTensor, summary: &PosteriorSummary) -> Result<Self> {
        if truth.ports() != summary.mean.ports() || truth.grid() != summary.mean.grid() {
            return Err(Error::GridMismatch);
        }
        let (t, m) = (flatten(truth), flatten(&summary.mean));
        let rows = t.rows();
        let abs_error = (0..t.cols())
            .map(|k| (0..rows).map(|r| (t.get(r, k) - m.get(r, k)).abs()).sum::<f64>() / rows as f64)
            .collect();
        Ok(Self { std: summary.std_per_frequency(), abs_error })
    }

    pub fn rank_correlation(&self) -> f64 {
        spearman(&self.std, &self.abs_error)
    }
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation. NaN when either input is constant or the
/// lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return f64::NAN;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean).powi(2);
        sbb += (y - mean).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Outcome of one fit in a sweep or ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRecord {
    /// Method or variant name.
    pub label: String,
    pub rate: f64,
    pub seed: u64,
    pub fit_seed: u64,
    /// PSNR in dB, or the error message of a failed fit.
    pub psnr_db: std::result::Result<f64, String>,
    /// Chosen pole count for vector fitting.
    pub poles: Option<usize>,
    pub uncertainty: Option<UncertaintyProfile>,
}

/// Mean and sample standard deviation of the successful fits of a group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub rate: f64,
    pub mean_db: f64,
    pub std_db: f64,
    pub count: usize,
}

pub fn group_summaries(records: &[FitRecord]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(l, x)| *l == r.label && *x == r.rate) {
            keys.push((r.label.clone(), r.rate));
        }
    }
    keys.into_iter()
        .map(|(label, rate)| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.label == label && r.rate == rate)
                .filter_map(|r| r.psnr_db.as_ref().ok().copied())
                .collect();
            let n = v.len() as f64;
            let mean_db = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / n };
            let std_db = if v.len() < 2 { 0.0 } else { (v.iter().map(|x| (x - mean_db).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
            GroupSummary { label, rate, mean_db, std_db, count: v.len() }
        })
        .collect()
}

/// One row per fit, then one `seed = all` row per group with the mean in
/// `psnr_db` and the standard deviation in `psnr_std_db`.
pub fn records_csv(first_column: &str, records: &[FitRecord]) -> String {
    let mut s = format!("{first_column},rate,seed,psnr_db,psnr_std_db,error\n");
    for r in records {
        let (psnr, err) = match &r.psnr_db {
            Ok(v) => (fmt_num(*v), String::new()),
            Err(e) => (String::new(), csv_field(e)),
        };
        let _ = writeln!(s, "{},{},{},{psnr},,{err}", r.label, fmt_num(r.rate), r.seed);
    }
    for g in group_summaries(records) {
        let _ = writeln!(s, "{},{},all,{},{},", g.label, fmt_num(g.rate), fmt_num(g.mean_db), fmt_num(g.std_db));
    }
    s
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

/// Produces the ground truth for a sweep seed.
pub type InstanceFn<'a> = dyn Fn(u64) -> Result<SParamTensor> + Sync + 'a;

#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// DIP settings; `seed` is replaced per fit.
    pub dip: FitConfig,
    pub vf_k_cap: usize,
    /// Keep per-frequency std and error for DIP fits.
    pub keep_uncertainty: bool,
}

impl SweepPlan {
    pub fn new(methods: Vec<Method>, rates: Vec<f64>, seeds: Vec<u64>, dip: FitConfig) -> Self {
        Self { methods, rates, seeds, dip, vf_k_cap: VF_K_CAP, keep_uncertainty: false }
    }
}

pub fn fit_seed(seed: u64, label: &str, rate_index: usize) -> u64 {
    derive_seed(seed, label, rate_index as u64)
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// All `(method, rate, seed)` fits, in that nesting order. Failed fits are
/// recorded and the sweep continues.
pub fn sweep(instance: &InstanceFn, plan: &SweepPlan, jobs: usize) -> Result<Vec<FitRecord>> {
    let mut tasks = Vec::new();
    for &method in &plan.methods {
        for (ri, &rate) in plan.rates.iter().enumerate() {
            for &seed in &plan.seeds {
                tasks.push((method, ri, rate, seed));
            }
        }
    }
    in_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(method, ri, rate, seed)| {
                let fs = fit_seed(seed, method.name(), ri);
                let mut record = FitRecord {
                    label: method.name().to_string(),
                    rate,
                    seed,
                    fit_seed: fs,
                    psnr_db: Err(String::new()),
                    poles: None,
                    uncertainty: None,
                };
                let outcome = instance(seed).and_then(|truth| match method {
                    Method::Dip => {
                        let (summary, psnr) = run_dip(&truth, rate, &FitConfig { seed: fs, ..plan.dip.clone() })?;
                        if plan.keep_uncertainty {
                            record.uncertainty = Some(UncertaintyProfile::new(&truth, &summary)?);
                        }
                        Ok(psnr)
                    }
                    Method::Vf => {
                        let (_, k, dense) = run_vf(&truth, rate, plan.vf_k_cap)?;
                        record.poles = Some(k);
                        psnr_tensor(&truth, &dense)
                    }
                });
                record.psnr_db = outcome.map_err(|e| e.to_string());
                record
            })
            .collect()
    })
}

pub const ABLATION_VARIANTS: [&str; 5] = ["vanilla", "+reg", "+input_noise", "+sgld", "+cel"];

/// Vanilla deep prior, then the regularizer, input noise, Langevin noise and
/// causality layer switched on one at a time. The last entry equals `full`
/// with all four mechanisms on.
pub fn ablation_ladder(full: &FitConfig) -> Vec<(&'static str, FitConfig)> {
    let mut cfg = full.clone().vanilla();
    let mut out = vec![(ABLATION_VARIANTS[0], cfg.clone())];
    for (i, name) in ABLATION_VARIANTS.iter().enumerate().skip(1) {
        match i {
            1 => cfg.regularizer = true,
            2 => cfg.input_noise = true,
            3 => cfg.sgld_noise = true,
            _ => cfg.cel = true,
        }
        out.push((*name, cfg.clone()));
    }
    out
}

/// Every ladder variant at every `(rate, seed)`. All variants of one
/// `(rate, seed)` share the fit seed, so neighbours differ by one flag only.
pub fn ablate(instance: &InstanceFn, full: &FitConfig, rates: &[f64], seeds: &[u64], jobs: usize) -> Result<Vec<FitRecord>> {
    let ladder = ablation_ladder(full);
    let mut tasks = Vec::new();
    for (name, cfg) in &ladder {
        for (ri, &rate) in rates.iter().enumerate() {
            for &seed in seeds {
                tasks.push((*name, cfg, ri, rate, seed));
            }
        }
    }
    in_pool(jobs, || {
        tasks
            .par_iter()
            .map(|&(name, cfg, ri, rate, seed)| {
                let fs = fit_seed(seed, "ablate", ri);
                let psnr = instance(seed)
                    .and_then(|truth| run_dip(&truth, rate, &FitConfig { seed: fs, ..cfg.clone() }))
                    .map(|(_, p)| p)
                    .map_err(|e| e.to_string());
                FitRecord { label: name.to_string(), rate, seed, fit_seed: fs, psnr_db: psnr, poles: None, uncertainty: None }
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparam::FrequencyGrid;
    use crate::synth::{generate, SynthSpec};
    use num_complex::Complex64;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]), -1.0);
        // Monotone transforms leave the ranks alone.
        assert_eq!(spearman(&[0.1, 5.0, 2.0], &[0.01, 25.0, 4.0]), 1.0);
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_nan());
        assert!(spearman(&[1.0], &[1.0]).is_nan());
    }

    /// Pearson correlation of average ranks, computed the long way.
    #[test]
    fn spearman_with_ties_matches_pearson_of_ranks() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let b = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0];
        assert_eq!(ranks(&a), vec![4.0, 1.5, 5.0, 1.5, 6.0, 8.0, 3.0, 7.0]);
        assert_eq!(ranks(&b), vec![3.5, 5.0, 1.5, 7.0, 3.5, 7.0, 1.5, 7.0]);
        let (ra, rb) = (ranks(&a), ranks(&b));
        let ma = ra.iter().sum::<f64>() / 8.0;
        let mb = rb.iter().sum::<f64>() / 8.0;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        assert!((spearman(&a, &b) - cov / (va * vb).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ladder_adds_one_mechanism_at_a_time() {
        let full = FitConfig::with_budget(100);
        let ladder = ablation_ladder(&full);
        assert_eq!(ladder.iter().map(|(n, _)| *n).collect::<Vec<_>>(), ABLATION_VARIANTS);
        let flags = |c: &FitConfig| [c.regularizer, c.input_noise, c.sgld_noise, c.cel];
        assert_eq!(flags(&ladder[0].1), [false; 4]);
        for w in ladder.windows(2) {
            let (a, b) = (flags(&w[0].1), flags(&w[1].1));
            assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 1);
            assert_eq!(FitConfig { regularizer: false, input_noise: false, sgld_noise: false, cel: false, ..w[1].1.clone() }, ladder[0].1);
        }
        assert_eq!(ladder[4].1, full);
    }

    #[test]
    fn observe_uses_uniform_indices() {
        let g = FrequencyGrid::linspace(0.0, 1e9, 1000).unwrap();
        let t = SParamTensor::from_fn(1, g, |_, _, k| Complex64::new(k as f64, 0.0)).unwrap();
        let m = observe(&t, 0.132).unwrap();
        assert_eq!(m.indices().len(), 132);
        assert_eq!(m.indices()[0], 0);
        assert_eq!(*m.indices().last().unwrap(), 999);
    }

    fn record(label: &str, rate: f64, seed: u64, psnr: std::result::Result<f64, String>) -> FitRecord {
        FitRecord { label: label.into(), rate, seed, fit_seed: 0, psnr_db: psnr, poles: None, uncertainty: None }
    }

    #[test]
    fn summaries_skip_failures() {
        let records = vec![
            record("dip", 0.05, 0, Ok(10.0)),
            record("dip", 0.05, 1, Ok(14.0)),
            record("dip", 0.05, 2, Err("boom".into())),
            record("vf", 0.05, 0, Ok(3.0)),
        ];
        let g = group_summaries(&records);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].mean_db, g[0].count), (12.0, 2));
        assert!((g[0].std_db - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!((g[1].mean_db, g[1].std_db, g[1].count), (3.0, 0.0, 1));

        let csv = records_csv("method", &records);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,rate,seed,psnr_db,psnr_std_db,error");
        assert_eq!(lines[1], "dip,0.05,0,10,,");
        assert_eq!(lines[3], "dip,0.05,2,,,\"boom\"");
        assert_eq!(lines[5], "dip,0.05,all,12,2.8284271247461903,");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn small_sweep_counts_and_reproduces() {
        let instance = |seed: u64| generate(&SynthSpec::easy(1, 32, 2, seed)).map(|(s, _)| s);
        let plan = SweepPlan {
            keep_uncertainty: true,
            vf_k_cap: 6,
            ..SweepPlan::new(vec![Method::Dip, Method::Vf], vec![0.5, 1.0], vec![0, 1, 2], FitConfig::with_budget(8))
        };
        let a = sweep(&instance, &plan, 1).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(records_csv("method", &a).lines().count(), 1 + 12 + 4);
        assert!(a.iter().all(|r| r.psnr_db.is_ok()));
        assert!(a.iter().filter(|r| r.label == "vf").all(|r| r.poles.is_some()));
        assert!(a.iter().filter(|r| r.label == "dip").all(|r| r.uncertainty.is_some()));
        let b = sweep(&instance, &plan, 2).unwrap();
        assert_eq!(records_csv("method", &a), records_csv("method", &b));
    }

    #[test]
    fn failing_fits_are_recorded() {
        let instance = |seed: u64| {
            if seed == 1 {
                Err(Error::InvalidArgument("no such instance".into()))
            } else {
                generate(&SynthSpec::easy(1, 32, 2, seed)).map(|(s, _)| s)
            }
        };
        let records = ablate(&instance, &FitConfig::with_budget(4), &[0.5], &[0, 1], 1).unwrap();
        assert_eq!(records.len(), 10);
        assert_eq!(records.iter().filter(|r| r.psnr_db.is_err()).count(), 5);
    }

    #[test]
    fn uncertainty_profile_of_a_fit() {
        let (truth, _) = generate(&SynthSpec::easy(1, 32, 2, 0)).unwrap();
        let (summary, _) = run_dip(&truth, 0.5, &FitConfig::with_budget(40)).unwrap();
        let u = UncertaintyProfile::new(&truth, &summary).unwrap();
        assert_eq!((u.std.len(), u.abs_error.len()), (32, 32));
        assert!(u.std.iter().chain(&u.abs_error).all(|v| *v >= 0.0));
        let (other, _) = generate(&SynthSpec::easy(1, 40, 2, 0)).unwrap();
        assert!(UncertaintyProfile::new(&other, &summary).is_err());
    }
}
