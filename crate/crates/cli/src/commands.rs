use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use serde_json::json;

use spardip::experiment::{self, Method, SweepPlan, UncertaintyProfile, VF_K_CAP};
use spardip::regularizer::third_diff_penalty;
use spardip::sgld::{fit, fit_monitored, FitConfig, Monitor, PosteriorSummary};
use spardip::sparam::{count_for_rate, flatten, psnr_tensor, uniform_indices, MeasurementSet, SParamTensor};
use spardip::synth::{generate, SynthSpec};
use spardip::touchstone::{
    fmt_num, parse_touchstone, ports_from_path, write_results_csv, write_touchstone, DataFormat, TouchstoneOptions,
};
use spardip::vector_fit::{vf_eval, vf_fit, vf_fit_auto, VfOptions};

use crate::config::{parse_list, ConfigFile};
use crate::manifest::RunDir;
use crate::{AblateArgs, CliError, FitDipArgs, FitFlags, FitVfArgs, Format, Observation, Preset, SweepArgs, SynthArgs, UncertaintyArgs};

type Result<T> = std::result::Result<T, CliError>;

const FIT_KEYS: [&str; 14] = [
    "iterations",
    "step",
    "lambda",
    "sigma0_sq",
    "sigma_final_sq",
    "burn_in",
    "sample_every",
    "temperature",
    "sgld_noise",
    "input_noise",
    "regularizer",
    "cel",
    "split_l1",
    "sample_noisy_latent",
];

fn keys<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    FIT_KEYS.iter().copied().chain(extra.iter().copied()).collect()
}

fn usage(e: spardip::Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Defaults, then the config file, then flags. Burn-in and sampling
/// interval follow the iteration budget unless set explicitly.
fn resolve_fit(flags: &FitFlags, file: &ConfigFile, seed: u64) -> Result<FitConfig> {
    let d = FitConfig::default();
    let iterations = file.pick(flags.iterations, "iterations", d.iterations)?;
    let budget = FitConfig::with_budget(iterations);
    let cfg = FitConfig {
        iterations,
        step: file.pick(flags.step, "step", d.step)?,
        lambda: file.pick(flags.lambda, "lambda", d.lambda)?,
        sigma0_sq: file.pick(flags.sigma0_sq, "sigma0_sq", d.sigma0_sq)?,
        sigma_final_sq: file.pick(flags.sigma_final_sq, "sigma_final_sq", d.sigma_final_sq)?,
        burn_in: file.pick(flags.burn_in, "burn_in", budget.burn_in)?,
        sample_every: file.pick(flags.sample_every, "sample_every", budget.sample_every)?,
        seed,
        sgld_noise: file.pick(flags.sgld_noise, "sgld_noise", d.sgld_noise)?,
        input_noise: file.pick(flags.input_noise, "input_noise", d.input_noise)?,
        regularizer: file.pick(flags.regularizer, "regularizer", d.regularizer)?,
        cel: file.pick(flags.cel, "cel", d.cel)?,
        split_l1: file.pick(flags.split_l1, "split_l1", d.split_l1)?,
        sample_noisy_latent: file.pick(flags.sample_noisy_latent, "sample_noisy_latent", d.sample_noisy_latent)?,
        temperature: file.pick(flags.temperature, "temperature", d.temperature)?,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn read_sparams(path: &Path) -> Result<SParamTensor> {
    let ports = ports_from_path(path).map_err(usage)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (s, _) = parse_touchstone(&text, ports).with_context(|| format!("in {}", path.display()))?;
    Ok(s)
}

/// Input plus the reference it is scored against (the input itself unless
/// another file is given).
fn read_pair(run: &mut RunDir, input: &Path, reference: Option<&Path>) -> Result<(SParamTensor, SParamTensor)> {
    let data = read_sparams(input)?;
    run.input(input)?;
    let reference = match reference {
        Some(p) => {
            run.input(p)?;
            let r = read_sparams(p)?;
            if r.ports() != data.ports() || r.grid() != data.grid() {
                return Err(CliError::Runtime(anyhow::anyhow!(
                    "reference {} does not share the grid and port count of the input",
                    p.display()
                )));
            }
            r
        }
        None => data.clone(),
    };
    Ok((data, reference))
}

fn observe(obs: &Observation, data: &SParamTensor, run: &mut RunDir) -> Result<MeasurementSet> {
    let f = data.freqs();
    let count = match (obs.rate, obs.count) {
        (Some(rate), _) => {
            run.set("rate", fmt_num(rate));
            count_for_rate(f, rate).map_err(usage)?
        }
        (None, Some(count)) => count,
        (None, None) => return Err(CliError::Usage("one of --rate or --count is required".into())),
    };
    run.set("observed", count);
    let idx = uniform_indices(f, count).map_err(usage)?;
    Ok(MeasurementSet::from_reference(data, &idx)?)
}

fn ext(ports: usize) -> String {
    format!("s{ports}p")
}

fn json_text(v: serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(&v).context("serializing metrics")? + "\n")
}

fn entry_label(i: usize, j: usize, p: usize) -> String {
    if p > 9 {
        format!("S{}_{}", i + 1, j + 1)
    } else {
        format!("S{}{}", i + 1, j + 1)
    }
}

fn std_csv(summary: &PosteriorSummary) -> String {
    let mean = &summary.mean;
    let p = mean.ports();
    let mut s = String::from("frequency_hz");
    for i in 0..p {
        for j in 0..p {
            let l = entry_label(i, j, p);
            let _ = write!(s, ",{l}_std_re,{l}_std_im,{l}_std_mag");
        }
    }
    s.push_str(",std\n");
    let per_freq = summary.std_per_frequency();
    for (k, nu) in mean.grid().values().iter().enumerate() {
        s.push_str(&fmt_num(*nu));
        for e in 0..p * p {
            let c = &summary.std_channels;
            let _ = write!(s, ",{},{},{}", fmt_num(c.get(2 * e, k)), fmt_num(c.get(2 * e + 1, k)), fmt_num(summary.std_magnitude.get(e, k)));
        }
        let _ = writeln!(s, ",{}", fmt_num(per_freq[k]));
    }
    s
}

/// Root-mean-square misfit of `estimate` on the observed samples.
fn data_rms(estimate: &SParamTensor, m: &MeasurementSet) -> Result<f64> {
    let a = flatten(&estimate.select(m.indices())?);
    let b = flatten(m.data());
    let n = a.data().len() as f64;
    Ok((a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    file.check_keys(&[
        "seed", "preset", "ports", "freqs", "pole_pairs", "band_min_hz", "band_max_hz", "damping_min",
        "damping_max", "amplitude", "direct_scale", "reciprocal", "format",
    ])?;
    let seed = file.pick(a.common.seed, "seed", 0)?;
    let from_file = |key: &str| -> Result<Option<String>> { file.pick_opt(None, key) };
    let preset = match (a.preset, from_file("preset")?) {
        (Some(p), _) => p,
        (None, Some(s)) => Preset::from_str(&s, true).map_err(|_| CliError::Usage(format!("unknown preset `{s}`")))?,
        (None, None) => Preset::LongChannel,
    };
    let ports = file.pick(a.ports.map(|p| p as usize), "ports", 2)?;
    if !(1..=16).contains(&ports) {
        return Err(CliError::Usage(format!("ports must be in 1..=16, got {ports}")));
    }
    let freqs = file.pick(a.freqs, "freqs", 1000)?;
    let pole_pairs = file.pick(a.pole_pairs, "pole_pairs", 40)?;
    let base = match preset {
        Preset::LongChannel => SynthSpec::long_channel(ports, freqs, pole_pairs, seed),
        Preset::Easy => SynthSpec::easy(ports, freqs, pole_pairs, seed),
    };
    let spec = SynthSpec {
        band: (
            file.pick(a.band_min_hz, "band_min_hz", base.band.0)?,
            file.pick(a.band_max_hz, "band_max_hz", base.band.1)?,
        ),
        damping: (
            file.pick(a.damping_min, "damping_min", base.damping.0)?,
            file.pick(a.damping_max, "damping_max", base.damping.1)?,
        ),
        amplitude: file.pick(a.amplitude, "amplitude", base.amplitude)?,
        direct_scale: file.pick(a.direct_scale, "direct_scale", base.direct_scale)?,
        reciprocal: file.pick(a.reciprocal, "reciprocal", base.reciprocal)?,
        ..base
    };
    spec.validate().map_err(usage)?;
    let format = match (a.format, from_file("format")?) {
        (Some(f), _) => f,
        (None, Some(s)) => Format::from_str(&s, true).map_err(|_| CliError::Usage(format!("unknown format `{s}`")))?,
        (None, None) => Format::Ri,
    };
    let opts = TouchstoneOptions {
        format: match format {
            Format::Ri => DataFormat::Ri,
            Format::Ma => DataFormat::Ma,
            Format::Db => DataFormat::Db,
        },
        ..TouchstoneOptions::default()
    };

    let mut run = RunDir::create(&a.common.out, "synth")?;
    let (data, model) = generate(&spec)?;
    run.write(&format!("out.{}", ext(ports)), &write_touchstone(&data, &opts))?;
    run.write("out.model.txt", &model.to_text())?;
    run.set("preset", format!("{preset:?}"));
    run.set("ports", ports);
    run.set("freqs", freqs);
    run.set("pole_pairs", pole_pairs);
    run.set("band_min_hz", fmt_num(spec.band.0));
    run.set("band_max_hz", fmt_num(spec.band.1));
    run.set("damping_min", fmt_num(spec.damping.0));
    run.set("damping_max", fmt_num(spec.damping.1));
    run.set("amplitude", fmt_num(spec.amplitude));
    run.set("direct_scale", fmt_num(spec.direct_scale));
    run.set("reciprocal", spec.reciprocal);
    run.set("format", format!("{format:?}"));
    run.finish(seed)?;
    Ok(())
}

pub fn fit_dip(a: FitDipArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    file.check_keys(&keys(&["seed", "checkpoint_every"]))?;
    let seed = file.pick(a.common.seed, "seed", 0)?;
    let cfg = resolve_fit(&a.fit, &file, seed)?;
    let every = file.pick(a.checkpoint_every, "checkpoint_every", (cfg.iterations / 20).max(1))?;

    let mut run = RunDir::create(&a.common.out, "fit-dip")?;
    let (data, reference) = read_pair(&mut run, &a.input, a.reference.as_deref())?;
    let m = observe(&a.observation, &data, &mut run)?;
    let monitor = (every > 0).then_some(Monitor { reference: &reference, every });
    let summary = fit_monitored(&m, &cfg, monitor)?;

    let psnr = psnr_tensor(&reference, &summary.mean)?;
    let metrics = json!({
        "psnr_db": psnr,
        "data_rms": data_rms(&summary.mean, &m)?,
        "reg_value": third_diff_penalty(&summary.mean, &cfg.reg_config())?,
        "samples": summary.samples.len(),
        "seed": seed,
        "observed": m.indices().len(),
        "iterations": cfg.iterations,
    });
    let p = data.ports();
    run.write(&format!("out.{}", ext(p)), &write_touchstone(&summary.mean, &TouchstoneOptions::default()))?;
    run.write("std.csv", &std_csv(&summary))?;
    run.write("loss_trace.csv", &summary.loss_trace_csv())?;
    run.write("checkpoints.csv", &summary.checkpoints_csv())?;
    run.write("results.csv", &write_results_csv(reference.grid(), &[("reference", &reference), ("dip", &summary.mean)])?)?;
    run.write("metrics.json", &json_text(metrics)?)?;
    run.set_block("fit.", &cfg.to_config_block());
    run.set("checkpoint_every", every);
    run.finish(seed)?;
    eprintln!("psnr {psnr:.2} dB");
    Ok(())
}

pub fn fit_vf(a: FitVfArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    file.check_keys(&["seed", "k_cap", "max_iters", "tol", "fit_e"])?;
    let seed = file.pick(a.common.seed, "seed", 0)?;
    let d = VfOptions::default();
    let opts = VfOptions {
        max_iters: file.pick(a.max_iters, "max_iters", d.max_iters)?,
        tol: file.pick(a.tol, "tol", d.tol)?,
        fit_e: file.pick(a.fit_e, "fit_e", d.fit_e)?,
    };
    let k_cap = file.pick(a.k_cap, "k_cap", VF_K_CAP)?;

    let mut run = RunDir::create(&a.common.out, "fit-vf")?;
    let (data, reference) = read_pair(&mut run, &a.input, a.reference.as_deref())?;
    let m = observe(&a.observation, &data, &mut run)?;
    let (res, k) = match a.order.poles {
        Some(k) => (vf_fit(&m, k, &opts)?, k),
        None => vf_fit_auto(&m, k_cap, &opts)?,
    };
    if !res.converged {
        eprintln!("warning: vector fitting did not reach tol {} in {} iterations", opts.tol, opts.max_iters);
    }
    let dense = vf_eval(&res.model, data.grid())?;
    let psnr = psnr_tensor(&reference, &dense)?;
    let metrics = json!({
        "psnr_db": psnr,
        "data_rms": data_rms(&dense, &m)?,
        "relative_rms": res.relative_rms,
        "poles": k,
        "auto_k": a.order.auto_k,
        "iterations": res.iterations,
        "converged": res.converged,
        "observed": m.indices().len(),
        "seed": seed,
    });
    run.write(&format!("out.{}", ext(data.ports())), &write_touchstone(&dense, &TouchstoneOptions::default()))?;
    run.write("out.model.txt", &res.model.to_text())?;
    run.write("results.csv", &write_results_csv(reference.grid(), &[("reference", &reference), ("vf", &dense)])?)?;
    run.write("metrics.json", &json_text(metrics)?)?;
    run.set("poles", k);
    run.set("auto_k", a.order.auto_k);
    run.set("k_cap", k_cap);
    run.set("max_iters", opts.max_iters);
    run.set("tol", fmt_num(opts.tol));
    run.set("fit_e", opts.fit_e);
    run.finish(seed)?;
    eprintln!("psnr {psnr:.2} dB with {k} poles");
    Ok(())
}

struct Study {
    rates: Vec<f64>,
    seeds: Vec<u64>,
    jobs: usize,
}

fn study(file: &ConfigFile, rates: Option<String>, seeds: Option<String>, jobs: Option<usize>, run: &mut RunDir) -> Result<Study> {
    let rates_s = file.pick(rates, "rates", "0.05,0.1,0.15".to_string())?;
    let seeds_s = file.pick(seeds, "seeds", "0,1,2,3,4".to_string())?;
    let s = Study { rates: parse_list(&rates_s)?, seeds: parse_list(&seeds_s)?, jobs: file.pick(jobs, "jobs", 1)? };
    if s.rates.is_empty() || s.seeds.is_empty() {
        return Err(CliError::Usage("need at least one rate and one seed".into()));
    }
    if let Some(r) = s.rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(CliError::Usage(format!("rate {r} outside (0, 1]")));
    }
    if s.jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    run.set("rates", rates_s);
    run.set("seeds", seeds_s);
    run.set("jobs", s.jobs);
    Ok(s)
}

fn report_failures(records: &[experiment::FitRecord]) {
    for r in records {
        if let Err(e) = &r.psnr_db {
            eprintln!("warning: {} at rate {} seed {} failed: {e}", r.label, r.rate, r.seed);
        }
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    file.check_keys(&keys(&["seed", "rates", "seeds", "methods", "k_cap", "jobs"]))?;
    let seed = file.pick(a.common.seed, "seed", 0)?;
    let cfg = resolve_fit(&a.fit, &file, seed)?;
    let mut run = RunDir::create(&a.common.out, "sweep")?;
    let s = study(&file, a.rates, a.seeds, a.jobs, &mut run)?;
    let methods_s = file.pick(a.methods, "methods", "dip,vf".to_string())?;
    let methods = parse_list::<String>(&methods_s)?
        .iter()
        .map(|m| Method::parse(m).map_err(usage))
        .collect::<Result<Vec<_>>>()?;
    let data = read_sparams(&a.input)?;
    run.input(&a.input)?;

    let plan = SweepPlan {
        vf_k_cap: file.pick(a.k_cap, "k_cap", VF_K_CAP)?,
        ..SweepPlan::new(methods, s.rates, s.seeds, cfg.clone())
    };
    let records = experiment::sweep(&|_| Ok(data.clone()), &plan, s.jobs)?;
    report_failures(&records);
    run.write("sweep.csv", &experiment::records_csv("method", &records))?;
    run.set("methods", methods_s);
    run.set("k_cap", plan.vf_k_cap);
    run.set_block("fit.", &cfg.to_config_block());
    run.finish(seed)?;
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    file.check_keys(&keys(&["seed", "rates", "seeds", "jobs"]))?;
    let seed = file.pick(a.common.seed, "seed", 0)?;
    let cfg = resolve_fit(&a.fit, &file, seed)?;
    let mut run = RunDir::create(&a.common.out, "ablate")?;
    let s = study(&file, a.rates, a.seeds, a.jobs, &mut run)?;
    let data = read_sparams(&a.input)?;
    run.input(&a.input)?;

    let records = experiment::ablate(&|_| Ok(data.clone()), &cfg, &s.rates, &s.seeds, s.jobs)?;
    report_failures(&records);
    run.write("ablation.csv", &experiment::records_csv("variant", &records))?;
    for (name, variant) in experiment::ablation_ladder(&cfg) {
        run.set_block(&format!("variant.{name}."), &variant.to_config_block());
    }
    run.finish(seed)?;
    Ok(())
}

pub fn uncertainty(a: UncertaintyArgs) -> Result<()> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    file.check_keys(&keys(&["seed"]))?;
    let seed = file.pick(a.common.seed, "seed", 0)?;
    let cfg = resolve_fit(&a.fit, &file, seed)?;
    let mut run = RunDir::create(&a.common.out, "uncertainty")?;
    let (data, reference) = read_pair(&mut run, &a.input, a.reference.as_deref())?;
    let m = observe(&a.observation, &data, &mut run)?;
    let summary = fit(&m, &cfg)?;
    let profile = UncertaintyProfile::new(&reference, &summary)?;
    let rho = profile.rank_correlation();

    let p = data.ports();
    let mut csv = String::from("frequency_hz,std,abs_error");
    for i in 0..p {
        for j in 0..p {
            let l = entry_label(i, j, p);
            let _ = write!(csv, ",{l}_mean_re,{l}_mean_im,{l}_std_mag");
        }
    }
    csv.push('\n');
    for (k, nu) in data.grid().values().iter().enumerate() {
        let _ = write!(csv, "{},{},{}", fmt_num(*nu), fmt_num(profile.std[k]), fmt_num(profile.abs_error[k]));
        for i in 0..p {
            for j in 0..p {
                let v = summary.mean.get(i, j, k);
                let _ = write!(csv, ",{},{},{}", fmt_num(v.re), fmt_num(v.im), fmt_num(summary.std_magnitude.get(i * p + j, k)));
            }
        }
        csv.push('\n');
    }
    let metrics = json!({
        "rank_correlation": rho,
        "psnr_db": psnr_tensor(&reference, &summary.mean)?,
        "samples": summary.samples.len(),
        "observed": m.indices().len(),
        "seed": seed,
    });
    run.write("uncertainty.csv", &csv)?;
    run.write("metrics.json", &json_text(metrics)?)?;
    run.set_block("fit.", &cfg.to_config_block());
    run.finish(seed)?;
    eprintln!("rank correlation of std and |error|: {rho:.3}");
    Ok(())
}
