//! Pole-residue rational models and a classical vector fitting baseline.
//!
//! Model: `h(s) = d + s e + sum_k c_k / (s - p_k)` with `s = j 2 pi nu`
//! (`nu` in Hz, poles in rad/s). Poles are shared by all `p x p` entries.
//!
//! Fitting follows the usual relocation scheme: with the current poles, solve
//! `sigma(s) h(s) ~ d + s e + sum c_k phi_k(s)` and
//! `sigma(s) = 1 + sum ct_k phi_k(s)` jointly in least squares, move the poles
//! to the zeros of `sigma`, repeat. Complex pairs use the real basis
//! `phi_1 = 1/(s-p) + 1/(s-p*)`, `phi_2 = j/(s-p) - j/(s-p*)`, so every unknown
//! is real and conjugate symmetry holds by construction. Frequencies are
//! scaled by the largest observed angular frequency during the solve.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparam::{FrequencyGrid, MeasurementSet, SParamTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct RationalModel {
    pub ports: usize,
    /// Every pole, conjugates included.
    pub poles: Vec<Complex64>,
    /// `K x p x p`, index `(k p + i) p + j`.
    pub residues: Vec<Complex64>,
    /// Row-major `p x p`.
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl RationalModel {
    pub fn constant(ports: usize, d: Vec<f64>) -> Self {
        Self { ports, poles: Vec::new(), residues: Vec::new(), d, e: vec![0.0; ports * ports] }
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn residue(&self, k: usize, i: usize, j: usize) -> Complex64 {
        self.residues[(k * self.ports + i) * self.ports + j]
    }

    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.re < 0.0)
    }

    /// Evaluate entry `(i, j)` at complex frequency `s`.
    pub fn eval_entry(&self, i: usize, j: usize, s: Complex64) -> Complex64 {
        let n = i * self.ports + j;
        let mut h = Complex64::new(self.d[n], 0.0) + s * self.e[n];
        for (k, p) in self.poles.iter().enumerate() {
            h += self.residue(k, i, j) / (s - p);
        }
        h
    }

    /// Text export: one value per line, 17 significant digits, poles in rad/s.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# pole-residue model, s = j*2*pi*f, poles in rad/s");
        let _ = writeln!(s, "ports {}", self.ports);
        let _ = writeln!(s, "poles {}", self.poles.len());
        for p in &self.poles {
            let _ = writeln!(s, "{:.16e} {:.16e}", p.re, p.im);
        }
        let _ = writeln!(s, "residues k i j re im");
        for k in 0..self.poles.len() {
            for i in 0..self.ports {
                for j in 0..self.ports {
                    let c = self.residue(k, i, j);
                    let _ = writeln!(s, "{k} {i} {j} {:.16e} {:.16e}", c.re, c.im);
                }
            }
        }
        let _ = writeln!(s, "d");
        write_matrix(&mut s, &self.d, self.ports);
        let _ = writeln!(s, "e");
        write_matrix(&mut s, &self.e, self.ports);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("model text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        let mut header = |key: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(&format!("bad `{key}` count")))
        };
        let ports = header("ports")?;
        let k = header("poles")?;
        let nums = |line: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad("truncated"))?;
            let v: Vec<f64> = line.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(line))?;
            if v.len() != n {
                return Err(bad(line));
            }
            Ok(v)
        };
        let mut poles = Vec::with_capacity(k);
        for _ in 0..k {
            let v = nums(lines.next(), 2)?;
            poles.push(Complex64::new(v[0], v[1]));
        }
        if lines.next().map(str::trim) != Some("residues k i j re im") {
            return Err(bad("expected residues header"));
        }
        let mut residues = Vec::with_capacity(k * ports * ports);
        for _ in 0..k * ports * ports {
            let v = nums(lines.next(), 5)?;
            residues.push(Complex64::new(v[3], v[4]));
        }
        let mut matrix = |name: &str| -> Result<Vec<f64>> {
            if lines.next().map(str::trim) != Some(name) {
                return Err(bad(&format!("expected `{name}`")));
            }
            let mut m = Vec::with_capacity(ports * ports);
            for _ in 0..ports {
                m.extend(nums(lines.next(), ports)?);
            }
            Ok(m)
        };
        let d = matrix("d")?;
        let e = matrix("e")?;
        Ok(Self { ports, poles, residues, d, e })
    }
}

fn write_matrix(s: &mut String, m: &[f64], p: usize) {
    for row in m.chunks(p) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
}

fn s_of(nu: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * nu)
}

pub fn vf_eval(model: &RationalModel, grid: &FrequencyGrid) -> Result<SParamTensor> {
    for &nu in grid.values() {
        let s = s_of(nu);
        for p in &model.poles {
            if (s - p).norm() <= 1e-12 * p.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::PoleOnGrid { pole: format!("{p}"), frequency_hz: nu });
            }
        }
    }
    let p = model.ports;
    SParamTensor::from_fn(p, grid.clone(), |i, j, k| model.eval_entry(i, j, s_of(grid.values()[k])))
}

/// Poles in canonical real form: real poles, then one representative
/// (positive imaginary part) per conjugate pair.
#[derive(Clone, Debug)]
struct PoleSet {
    real: Vec<f64>,
    pairs: Vec<Complex64>,
}

impl PoleSet {
    fn count(&self) -> usize {
        self.real.len() + 2 * self.pairs.len()
    }

    fn from_eigenvalues(eig: &[Complex64]) -> Self {
        let mut real = Vec::new();
        let mut pairs = Vec::new();
        for z in eig {
            let tol = 1e-10 * z.norm().max(1e-300);
            if z.im.abs() <= tol {
                real.push(z.re);
            } else if z.im > 0.0 {
                pairs.push(*z);
            }
        }
        let unpaired = eig.len() - real.len() - 2 * pairs.len();
        // Eigenvalues of a real matrix come in exact conjugate pairs; any
        // leftover means the classification split a pair, keep its real part.
        for _ in 0..unpaired {
            if let Some(z) = eig.iter().find(|z| z.im < 0.0 && !pairs.iter().any(|p| (p.conj() - **z).norm() <= 1e-8 * z.norm())) {
                real.push(z.re);
            }
        }
        real.sort_by(|a, b| b.total_cmp(a));
        pairs.sort_by(|a, b| a.im.total_cmp(&b.im));
        Self { real, pairs }
    }

    fn stabilize(&mut self) {
        self.real.iter_mut().for_each(|r| *r = -r.abs());
        self.pairs.iter_mut().for_each(|p| p.re = -p.re.abs());
    }

    /// Real basis functions at `s`, one column per real unknown.
    fn basis(&self, s: Complex64, out: &mut Vec<Complex64>) {
        out.clear();
        for &a in &self.real {
            out.push(1.0 / (s - a));
        }
        let j = Complex64::i();
        for p in &self.pairs {
            let u = 1.0 / (s - p);
            let v = 1.0 / (s - p.conj());
            out.push(u + v);
            out.push(j * u - j * v);
        }
    }

    /// Zeros of `1 + sum ct_k phi_k(s)`.
    fn sigma_zeros(&self, ct: &[f64]) -> Vec<Complex64> {
        let n = self.count();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        let mut idx = 0;
        for &r in &self.real {
            a[(idx, idx)] = r;
            b[idx] = 1.0;
            idx += 1;
        }
        for p in &self.pairs {
            a[(idx, idx)] = p.re;
            a[(idx, idx + 1)] = p.im;
            a[(idx + 1, idx)] = -p.im;
            a[(idx + 1, idx + 1)] = p.re;
            b[idx] = 2.0;
            idx += 2;
        }
        let c = DVector::from_column_slice(ct);
        let m = a - b * c.transpose();
        m.complex_eigenvalues().iter().copied().collect()
    }

    fn to_poles(&self, scale: f64) -> Vec<Complex64> {
        let mut poles: Vec<Complex64> = self.real.iter().map(|&r| Complex64::new(r * scale, 0.0)).collect();
        for p in &self.pairs {
            poles.push(p * scale);
            poles.push(p.conj() * scale);
        }
        poles
    }
}

fn initial_poles(k: usize, w_lo: f64, w_hi: f64) -> PoleSet {
    let pairs_n = k / 2;
    let lo = if w_lo > 0.0 { w_lo } else { w_hi / (2.0 * pairs_n.max(1) as f64) };
    let pairs = (0..pairs_n)
        .map(|i| {
            let im = if pairs_n == 1 { 0.5 * (lo + w_hi) } else { lo + (w_hi - lo) * i as f64 / (pairs_n - 1) as f64 };
            Complex64::new(-im / 100.0, im)
        })
        .collect();
    let real = if k % 2 == 1 { vec![-0.5 * (lo + w_hi)] } else { Vec::new() };
    PoleSet { real, pairs }
}

#[derive(Clone, Debug)]
pub struct VfOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub fit_e: bool,
}

impl Default for VfOptions {
    fn default() -> Self {
        Self { max_iters: 30, tol: 1e-10, fit_e: true }
    }
}

#[derive(Clone, Debug)]
pub struct VfResult {
    pub model: RationalModel,
    /// `||fit - data|| / ||data||` on the observed samples.
    pub relative_rms: f64,
    pub iterations: usize,
    /// False when `tol` was not reached within `max_iters`; `model` is then
    /// the best iterate seen.
    pub converged: bool,
}

struct Problem {
    /// Normalised `s` per observed frequency.
    s: Vec<Complex64>,
    /// Per entry (row-major `i p + j`), observed samples.
    h: Vec<Vec<Complex64>>,
    ports: usize,
    scale: f64,
    norm: f64,
    fit_e: bool,
}

impl Problem {
    fn new(m: &MeasurementSet, fit_e: bool) -> Result<Self> {
        let grid = m.observed_grid();
        let w_max = 2.0 * PI * grid.values().last().copied().unwrap_or(0.0);
        if w_max <= 0.0 {
            return Err(Error::InvalidGrid("band must contain a positive frequency".into()));
        }
        let p = m.ports();
        let s = grid.values().iter().map(|&nu| s_of(nu) / w_max).collect();
        let h: Vec<Vec<Complex64>> = (0..p * p).map(|n| m.data().entry(n / p, n % p).to_vec()).collect();
        let norm = h.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        Ok(Self { s, h, ports: p, scale: w_max, norm, fit_e })
    }

    fn direct_cols(&self, k: usize) -> usize {
        k + 1 + usize::from(self.fit_e)
    }

    /// Rows of `[phi, 1, s]` (split into real and imaginary rows).
    fn direct_block(&self, poles: &PoleSet) -> DMatrix<f64> {
        let k = poles.count();
        let cols = self.direct_cols(k);
        let n = self.s.len();
        let mut a = DMatrix::<f64>::zeros(2 * n, cols);
        let mut phi = Vec::with_capacity(k);
        for (r, &s) in self.s.iter().enumerate() {
            poles.basis(s, &mut phi);
            for (c, v) in phi.iter().enumerate() {
                a[(2 * r, c)] = v.re;
                a[(2 * r + 1, c)] = v.im;
            }
            a[(2 * r, k)] = 1.0;
            if self.fit_e {
                a[(2 * r + 1, k + 1)] = s.im;
            }
        }
        a
    }

    /// One relocation step. Returns the zeros of sigma.
    fn relocate(&self, poles: &PoleSet) -> Result<Vec<Complex64>> {
        let k = poles.count();
        let direct = self.direct_block(poles);
        let dc = direct.ncols();
        let n = self.s.len();
        let mut phi = Vec::with_capacity(k);
        let phis: Vec<Vec<Complex64>> = self
            .s
            .iter()
            .map(|&s| {
                poles.basis(s, &mut phi);
                phi.clone()
            })
            .collect();

        let mut stacked_rows: Vec<Vec<f64>> = Vec::new();
        for h in &self.h {
            // [direct | -h phi | h]
            let mut a = DMatrix::<f64>::zeros(2 * n, dc + k + 1);
            a.view_mut((0, 0), (2 * n, dc)).copy_from(&direct);
            for r in 0..n {
                for c in 0..k {
                    let v = -h[r] * phis[r][c];
                    a[(2 * r, dc + c)] = v.re;
                    a[(2 * r + 1, dc + c)] = v.im;
                }
                a[(2 * r, dc + k)] = h[r].re;
                a[(2 * r + 1, dc + k)] = h[r].im;
            }
            // Column scaling keeps the QR well conditioned.
            let scales: Vec<f64> = (0..a.ncols())
                .map(|c| {
                    let s = a.column(c).norm();
                    if s > 0.0 { 1.0 / s } else { 1.0 }
                })
                .collect();
            for (c, s) in scales.iter().enumerate() {
                a.column_mut(c).scale_mut(*s);
            }
            let r = a.qr().r();
            for row in dc..(dc + k).min(r.nrows()) {
                let mut line = Vec::with_capacity(k + 1);
                for c in 0..k {
                    line.push(r[(row, dc + c)] / scales[dc + c]);
                }
                line.push(r[(row, dc + k)] / scales[dc + k]);
                stacked_rows.push(line);
            }
        }
        let rows = stacked_rows.len();
        let mut m = DMatrix::<f64>::zeros(rows, k);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (i, line) in stacked_rows.iter().enumerate() {
            for c in 0..k {
                m[(i, c)] = line[c];
            }
            rhs[i] = line[k];
        }
        let col_scale: Vec<f64> = (0..k)
            .map(|c| {
                let s = m.column(c).norm();
                if s > 0.0 { 1.0 / s } else { 1.0 }
            })
            .collect();
        for (c, s) in col_scale.iter().enumerate() {
            m.column_mut(c).scale_mut(*s);
        }
        let svd = m.svd(true, true);
        let x = svd
            .solve(&rhs, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::InvalidArgument(format!("sigma solve: {e}")))?;
        let ct: Vec<f64> = x.iter().zip(&col_scale).map(|(v, s)| v * s).collect();
        if ct.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "vector_fit relocation" });
        }
        Ok(poles.sigma_zeros(&ct))
    }

    /// Residues, d and e for fixed poles; also returns the absolute residual norm.
    fn residues(&self, poles: &PoleSet) -> Result<(RationalModel, f64)> {
        let k = poles.count();
        let mut a = self.direct_block(poles);
        let cols = a.ncols();
        let scales: Vec<f64> = (0..cols)
            .map(|c| {
                let s = a.column(c).norm();
                if s > 0.0 { 1.0 / s } else { 1.0 }
            })
            .collect();
        for (c, s) in scales.iter().enumerate() {
            a.column_mut(c).scale_mut(*s);
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if condition > 1e15 {
            return Err(Error::RankDeficient { condition });
        }
        let p = self.ports;
        let n = self.s.len();
        let mut residues = vec![Complex64::new(0.0, 0.0); k * p * p];
        let mut d = vec![0.0; p * p];
        let mut e = vec![0.0; p * p];
        let mut resid2 = 0.0;
        for (entry, h) in self.h.iter().enumerate() {
            let mut b = DVector::<f64>::zeros(2 * n);
            for r in 0..n {
                b[2 * r] = h[r].re;
                b[2 * r + 1] = h[r].im;
            }
            let x = svd.solve(&b, 0.0).map_err(|e| Error::InvalidArgument(format!("residue solve: {e}")))?;
            resid2 += (&a * &x - &b).norm_squared();
            let x: Vec<f64> = x.iter().zip(&scales).map(|(v, s)| v * s).collect();
            let mut idx = 0;
            let mut put = |kk: usize, c: Complex64| residues[(kk * p) * p + entry] = c * self.scale;
            let mut pole_idx = 0;
            for _ in &poles.real {
                put(pole_idx, Complex64::new(x[idx], 0.0));
                idx += 1;
                pole_idx += 1;
            }
            for _ in &poles.pairs {
                let c = Complex64::new(x[idx], x[idx + 1]);
                put(pole_idx, c);
                put(pole_idx + 1, c.conj());
                idx += 2;
                pole_idx += 2;
            }
            d[entry] = x[k];
            if self.fit_e {
                e[entry] = x[k + 1] / self.scale;
            }
        }
        let model = RationalModel { ports: p, poles: poles.to_poles(self.scale), residues, d, e };
        Ok((model, resid2.sqrt()))
    }

    fn relative(&self, resid: f64) -> f64 {
        if self.norm > 0.0 { resid / self.norm } else { resid }
    }
}

/// Fit `k` poles to the observed samples of `m`.
pub fn vf_fit(m: &MeasurementSet, k: usize, opts: &VfOptions) -> Result<VfResult> {
    let f = m.indices().len();
    if k == 0 {
        return Err(Error::InvalidArgument("pole count must be >= 1".into()));
    }
    if f < 2 * k + 2 {
        return Err(Error::InvalidArgument(format!("{f} samples cannot identify {k} poles (need >= {})", 2 * k + 2)));
    }
    let prob = Problem::new(m, opts.fit_e)?;
    let band = m.observed_grid().values();
    let mut poles = initial_poles(k, 2.0 * PI * band[0] / prob.scale, 1.0);

    let mut best: Option<(RationalModel, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let zeros = prob.relocate(&poles)?;
        let mut next = PoleSet::from_eigenvalues(&zeros);
        next.stabilize();
        poles = next;
        let (model, resid) = prob.residues(&poles)?;
        let rel = prob.relative(resid);
        if best.as_ref().is_none_or(|(_, b)| rel < *b) {
            best = Some((model, rel));
        }
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    let (model, relative_rms) = best.expect("at least one iteration");
    Ok(VfResult { model, relative_rms, iterations, converged })
}

/// Pick an even pole count from `{2, 4, ..., k_max}` by the error on a
/// holdout of every tenth observed sample, then refit on all samples.
pub fn vf_fit_auto(m: &MeasurementSet, k_cap: usize, opts: &VfOptions) -> Result<(VfResult, usize)> {
    let n = m.indices().len();
    let holdout: Vec<usize> = (0..n).filter(|i| i % 10 == 5).collect();
    let train: Vec<usize> = (0..n).filter(|i| i % 10 != 5).collect();
    let k_max = (train.len().saturating_sub(2) / 2).min(k_cap);
    if k_max < 2 {
        return Err(Error::InvalidArgument(format!("{n} samples are too few for automatic order selection")));
    }
    let sub = |pos: &[usize]| -> Result<MeasurementSet> {
        let idx: Vec<usize> = pos.iter().map(|&i| m.indices()[i]).collect();
        MeasurementSet::new(idx, m.data().select(pos)?, m.full_grid().clone())
    };
    let train_set = sub(&train)?;
    let hold_set = sub(&holdout)?;
    let hold_norm = hold_set.data().data().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    let mut best: Option<(usize, f64)> = None;
    for k in (2..=k_max).step_by(2) {
        let Ok(res) = vf_fit(&train_set, k, opts) else { continue };
        let Ok(pred) = vf_eval(&res.model, hold_set.observed_grid()) else { continue };
        let err = pred.data().iter().zip(hold_set.data().data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / hold_norm;
        if err.is_finite() && best.is_none_or(|(_, e)| err < e) {
            best = Some((k, err));
        }
    }
    let (k, _) = best.ok_or_else(|| Error::InvalidArgument("no pole count produced a usable fit".into()))?;
    Ok((vf_fit(m, k, opts)?, k))
}
