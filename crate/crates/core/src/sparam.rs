//! S-parameter frequency series, the real-channel view used by the fitters,
//! the frequency sub-sampling operator and its adjoint, and the PSNR metric.
//!
//! Layout conventions used throughout the crate:
//!
//! * complex data of a `p`-port tensor is stored entry-major: entry
//!   `(i, j)` (row-major, `k = i * p + j`) owns a contiguous run of `f`
//!   frequency samples;
//! * the real-channel view has `r = 2 p^2` rows; row `2k` is the real part and
//!   row `2k + 1` the imaginary part of entry `k`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of frequency points the fitters accept.
pub const MIN_FIT_FREQUENCIES: usize = 8;

/// Strictly increasing, non-negative frequencies in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    values: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "frequency {v} at position {k} is negative or not finite"
                )));
            }
            if k > 0 && values[k - 1] >= *v {
                return Err(Error::InvalidGrid(format!(
                    "frequencies not strictly increasing at position {k}"
                )));
            }
        }
        Ok(Self { values })
    }

    /// `count` equally spaced points spanning `[start, stop]` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid("linspace needs at least two points".into()));
        }
        let step = (stop - start) / (count - 1) as f64;
        Self::new((0..count).map(|k| start + step * k as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid restricted to the given (validated) positions.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        validate_indices(indices, self.len())?;
        Ok(Self {
            values: indices.iter().map(|&i| self.values[i]).collect(),
        })
    }

    /// Error unless the grid is long enough for fitting.
    pub fn require_fit_length(&self) -> Result<()> {
        if self.len() < MIN_FIT_FREQUENCIES {
            return Err(Error::InvalidGrid(format!(
                "{} frequencies, at least {MIN_FIT_FREQUENCIES} required",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Complex `p x p x f` frequency series.
#[derive(Clone, Debug, PartialEq)]
pub struct SParamTensor {
    ports: usize,
    grid: FrequencyGrid,
    data: Vec<Complex64>,
}

impl SParamTensor {
    pub fn new(ports: usize, grid: FrequencyGrid, data: Vec<Complex64>) -> Result<Self> {
        if ports == 0 {
            return Err(Error::InvalidArgument("port count must be positive".into()));
        }
        let expected = ports * ports * grid.len();
        if data.len() != expected {
            return Err(Error::shape(
                format!("{ports}x{ports}x{} = {expected} values", grid.len()),
                data.len(),
            ));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { op: "SParamTensor::new" });
        }
        Ok(Self { ports, grid, data })
    }

    pub fn zeros(ports: usize, grid: FrequencyGrid) -> Self {
        let n = ports * ports * grid.len();
        Self {
            ports,
            grid,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Build from a closure over `(i, j, k)`.
    pub fn from_fn(
        ports: usize,
        grid: FrequencyGrid,
        mut value: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Result<Self> {
        let f = grid.len();
        let mut data = Vec::with_capacity(ports * ports * f);
        for i in 0..ports {
            for j in 0..ports {
                for k in 0..f {
                    data.push(value(i, j, k));
                }
            }
        }
        Self::new(ports, grid, data)
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn freqs(&self) -> usize {
        self.grid.len()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: Complex64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    /// Samples of entry `(i, j)` across frequency.
    pub fn entry(&self, i: usize, j: usize) -> &[Complex64] {
        let f = self.freqs();
        let start = (i * self.ports + j) * f;
        &self.data[start..start + f]
    }

    /// `p x p` matrix (row-major) at frequency index `k`.
    pub fn matrix_at(&self, k: usize) -> Vec<Complex64> {
        let p = self.ports;
        (0..p * p).map(|e| self.data[e * self.freqs() + k]).collect()
    }

    /// Frequency columns at `indices`, with the matching sub-grid.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let grid = self.grid.select(indices)?;
        let f = self.freqs();
        let mut data = Vec::with_capacity(self.ports * self.ports * indices.len());
        for e in 0..self.ports * self.ports {
            data.extend(indices.iter().map(|&k| self.data[e * f + k]));
        }
        Ok(Self {
            ports: self.ports,
            grid,
            data,
        })
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ports + j) * self.freqs() + k
    }
}

/// Real `r x f` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealChannels {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealChannels {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{rows}x{cols}"), data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn dot(&self, other: &RealChannels) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

/// Sub-sampled observations of a dense series.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    indices: Vec<usize>,
    data: SParamTensor,
    full_grid: FrequencyGrid,
}

impl MeasurementSet {
    /// `data` holds the observed columns, in the order of `indices`.
    pub fn new(indices: Vec<usize>, data: SParamTensor, full_grid: FrequencyGrid) -> Result<Self> {
        validate_indices(&indices, full_grid.len())?;
        if data.freqs() != indices.len() {
            return Err(Error::shape(
                format!("{} observed frequencies", indices.len()),
                data.freqs(),
            ));
        }
        Ok(Self {
            indices,
            data,
            full_grid,
        })
    }

    /// Observe `reference` at `indices`.
    pub fn from_reference(reference: &SParamTensor, indices: &[usize]) -> Result<Self> {
        let data = reference.select(indices)?;
        Self::new(indices.to_vec(), data, reference.grid().clone())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &SParamTensor {
        &self.data
    }

    pub fn full_grid(&self) -> &FrequencyGrid {
        &self.full_grid
    }

    pub fn ports(&self) -> usize {
        self.data.ports()
    }

    pub fn observed_grid(&self) -> &FrequencyGrid {
        self.data.grid()
    }
}

pub fn channel_count(ports: usize) -> usize {
    2 * ports * ports
}

pub fn flatten(x: &SParamTensor) -> RealChannels {
    let f = x.freqs();
    let entries = x.ports() * x.ports();
    let mut data = vec![0.0; 2 * entries * f];
    for e in 0..entries {
        let src = &x.data()[e * f..(e + 1) * f];
        let (re, im) = data[2 * e * f..2 * (e + 1) * f].split_at_mut(f);
        for (k, z) in src.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
    }
    RealChannels {
        rows: 2 * entries,
        cols: f,
        data,
    }
}

pub fn unflatten(x: &RealChannels, ports: usize, grid: &FrequencyGrid) -> Result<SParamTensor> {
    let r = channel_count(ports);
    if x.rows() != r {
        return Err(Error::shape(format!("{r} rows for {ports} ports"), x.rows()));
    }
    if x.cols() != grid.len() {
        return Err(Error::shape(format!("{} columns", grid.len()), x.cols()));
    }
    let f = x.cols();
    let mut data = Vec::with_capacity(ports * ports * f);
    for e in 0..ports * ports {
        let re = x.row(2 * e);
        let im = x.row(2 * e + 1);
        data.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
    }
    SParamTensor::new(ports, grid.clone(), data)
}

pub fn validate_indices(indices: &[usize], len: usize) -> Result<()> {
    for (pos, &i) in indices.iter().enumerate() {
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        if pos > 0 && indices[pos - 1] >= i {
            return Err(Error::UnsortedIndices { position: pos });
        }
    }
    Ok(())
}

/// Keep the frequency columns at `indices`.
pub fn subsample(x: &RealChannels, indices: &[usize]) -> Result<RealChannels> {
    validate_indices(indices, x.cols())?;
    let mut data = Vec::with_capacity(x.rows() * indices.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        data.extend(indices.iter().map(|&k| row[k]));
    }
    RealChannels::new(x.rows(), indices.len(), data)
}

/// Scatter observed columns back to their positions in an `r x f` array; other
/// columns are zero.
pub fn subsample_adjoint(y: &RealChannels, indices: &[usize], f: usize) -> Result<RealChannels> {
    validate_indices(indices, f)?;
    if y.cols() != indices.len() {
        return Err(Error::shape(format!("{} columns", indices.len()), y.cols()));
    }
    let mut out = RealChannels::zeros(y.rows(), f);
    for r in 0..y.rows() {
        let src = y.row(r);
        let dst = &mut out.data[r * f..(r + 1) * f];
        for (&k, &v) in indices.iter().zip(src) {
            dst[k] = v;
        }
    }
    Ok(out)
}

/// Endpoint-inclusive, equally spaced indices `round(i (f - 1) / (count - 1))`.
pub fn uniform_indices(f: usize, count: usize) -> Result<Vec<usize>> {
    if count < 2 || count > f {
        return Err(Error::InvalidArgument(format!(
            "sample count {count} must lie in [2, {f}]"
        )));
    }
    let step = (f - 1) as f64 / (count - 1) as f64;
    Ok((0..count).map(|i| (i as f64 * step).round() as usize).collect())
}

/// Number of observed points for a sub-sampling `rate` in (0, 1].
pub fn count_for_rate(f: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate {rate} outside (0, 1]")));
    }
    Ok(((rate * f as f64).round() as usize).clamp(2.min(f), f))
}

/// Peak signal-to-noise ratio in dB over all real entries. The peak is the
/// largest absolute entry of `reference`; an exact match yields
/// `f64::INFINITY`.
pub fn psnr(reference: &RealChannels, estimate: &RealChannels) -> Result<f64> {
    if reference.rows() != estimate.rows() || reference.cols() != estimate.cols() {
        return Err(Error::shape(
            format!("{}x{}", reference.rows(), reference.cols()),
            format!("{}x{}", estimate.rows(), estimate.cols()),
        ));
    }
    let peak = reference.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::ZeroReference);
    }
    let n = reference.data().len() as f64;
    let mse = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR between two complex tensors through their real-channel views.
pub fn psnr_tensor(reference: &SParamTensor, estimate: &SParamTensor) -> Result<f64> {
    psnr(&flatten(reference), &flatten(estimate))
}
