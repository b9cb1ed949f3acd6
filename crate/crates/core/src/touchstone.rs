//! Touchstone v1 (`.sNp`) reading and writing, plus dB-magnitude CSV export.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparam::{FrequencyGrid, SParamTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub fn scale(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    fn label(self) -> &'static str {
        match self {
            FreqUnit::Hz => "Hz",
            FreqUnit::KHz => "kHz",
            FreqUnit::MHz => "MHz",
            FreqUnit::GHz => "GHz",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// Real, imaginary.
    Ri,
    /// Magnitude, angle in degrees.
    Ma,
    /// `20 log10 |S|`, angle in degrees.
    Db,
}

impl DataFormat {
    fn label(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, v: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (v.re, v.im),
            DataFormat::Ma => (v.norm(), v.arg().to_degrees()),
            DataFormat::Db => (20.0 * v.norm().log10(), v.arg().to_degrees()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TouchstoneOptions {
    pub freq_unit: FreqUnit,
    pub format: DataFormat,
    pub reference_resistance: f64,
}

impl Default for TouchstoneOptions {
    /// Writer default: GHz, real/imaginary, 50 ohm.
    fn default() -> Self {
        Self { freq_unit: FreqUnit::GHz, format: DataFormat::Ri, reference_resistance: 50.0 }
    }
}

impl TouchstoneOptions {
    /// What a file without an option line means: GHz, magnitude/angle, 50 ohm.
    pub fn implicit() -> Self {
        Self { format: DataFormat::Ma, ..Self::default() }
    }

    pub fn option_line(&self) -> String {
        format!(
            "# {} S {} R {}",
            self.freq_unit.label(),
            self.format.label(),
            fmt_num(self.reference_resistance)
        )
    }
}

/// Shortest text that parses back to exactly `v`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Port count from a `.sNp` extension (case-insensitive).
pub fn ports_from_path(path: &Path) -> Result<usize> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    ext.strip_prefix('s')
        .and_then(|e| e.strip_suffix('p'))
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::InvalidArgument(format!("cannot infer port count from {}", path.display())))
}

/// Position of each on-disk value pair in the row-major `p x p` matrix.
fn disk_order(p: usize) -> Vec<(usize, usize)> {
    if p == 2 {
        vec![(0, 0), (1, 0), (0, 1), (1, 1)]
    } else {
        (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).collect()
    }
}

fn parse_options(line: &str, lineno: usize) -> Result<TouchstoneOptions> {
    let err = |m: String| Error::Touchstone { line: lineno, message: m };
    let mut opts = TouchstoneOptions::implicit();
    let mut tokens = line.trim_start_matches('#').split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.freq_unit = FreqUnit::Hz,
            "KHZ" => opts.freq_unit = FreqUnit::KHz,
            "MHZ" => opts.freq_unit = FreqUnit::MHz,
            "GHZ" => opts.freq_unit = FreqUnit::GHz,
            "S" => {}
            "Y" | "Z" | "H" | "G" => return Err(err(format!("only S parameters are supported, got `{tok}`"))),
            "RI" => opts.format = DataFormat::Ri,
            "MA" => opts.format = DataFormat::Ma,
            "DB" => opts.format = DataFormat::Db,
            "R" => {
                let v = tokens.next().ok_or_else(|| err("`R` without a resistance".into()))?;
                opts.reference_resistance = v
                    .parse()
                    .ok()
                    .filter(|r: &f64| r.is_finite() && *r > 0.0)
                    .ok_or_else(|| err(format!("bad reference resistance `{v}`")))?;
            }
            _ => return Err(err(format!("unknown option `{tok}`"))),
        }
    }
    Ok(opts)
}

pub fn parse_touchstone(text: &str, ports: usize) -> Result<(SParamTensor, TouchstoneOptions)> {
    if ports == 0 {
        return Err(Error::InvalidArgument("port count must be >= 1".into()));
    }
    let per_block = 2 * ports * ports;
    let mut opts: Option<TouchstoneOptions> = None;
    let mut freqs: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut block_line = 0;

    let close_block = |values: &[Vec<f64>], block_line: usize| -> Result<()> {
        match values.last() {
            Some(v) if v.len() != per_block => Err(Error::Touchstone {
                line: block_line,
                message: format!("frequency block has {} values, expected {per_block}", v.len()),
            }),
            _ => Ok(()),
        }
    };

    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            return Err(Error::Touchstone {
                line: lineno,
                message: format!("Touchstone v2 keyword `{line}` is not supported"),
            });
        }
        if line.starts_with('#') {
            if opts.is_none() {
                opts = Some(parse_options(line, lineno)?);
            }
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Touchstone { line: lineno, message: format!("not a number: `{t}`") })
            })
            .collect::<Result<_>>()?;
        if nums.len() % 2 == 1 {
            close_block(&values, block_line)?;
            freqs.push(nums[0]);
            values.push(nums[1..].to_vec());
            block_line = lineno;
        } else {
            let Some(current) = values.last_mut() else {
                return Err(Error::Touchstone { line: lineno, message: "data before the first frequency".into() });
            };
            current.extend_from_slice(&nums);
        }
        if values.last().is_some_and(|v| v.len() > per_block) {
            return Err(Error::Touchstone {
                line: lineno,
                message: format!("frequency block has more than {per_block} values"),
            });
        }
    }
    close_block(&values, block_line)?;
    if freqs.is_empty() {
        return Err(Error::Touchstone { line: 0, message: "no data".into() });
    }
    let opts = opts.unwrap_or_else(TouchstoneOptions::implicit);
    let scale = opts.freq_unit.scale();
    if let Some(w) = freqs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Touchstone { line: 0, message: format!("frequencies not increasing at sample {}", w + 1) });
    }
    let grid = FrequencyGrid::new(freqs.iter().map(|f| f * scale).collect())?;
    let f = grid.len();
    let order = disk_order(ports);
    let mut data = vec![Complex64::new(0.0, 0.0); ports * ports * f];
    for (k, block) in values.iter().enumerate() {
        for (pair, &(i, j)) in order.iter().enumerate() {
            data[(i * ports + j) * f + k] = opts.format.decode(block[2 * pair], block[2 * pair + 1]);
        }
    }
    Ok((SParamTensor::new(ports, grid, data)?, opts))
}

pub fn write_touchstone(x: &SParamTensor, opts: &TouchstoneOptions) -> String {
    let p = x.ports();
    let order = disk_order(p);
    let scale = opts.freq_unit.scale();
    let mut s = String::new();
    let _ = writeln!(s, "! {p}-port S-parameters, {} frequencies", x.freqs());
    let _ = writeln!(s, "{}", opts.option_line());
    for k in 0..x.freqs() {
        let mut line = fmt_num(x.grid().values()[k] / scale);
        for (n, &(i, j)) in order.iter().enumerate() {
            // Rows of 3+ port matrices start on a new line, at most 4 pairs each.
            if p >= 3 && n > 0 && (n % p) % 4 == 0 {
                let _ = writeln!(s, "{line}");
                line = String::new();
            }
            let (a, b) = opts.format.encode(x.get(i, j, k));
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&fmt_num(a));
            line.push(' ');
            line.push_str(&fmt_num(b));
        }
        let _ = writeln!(s, "{line}");
    }
    s
}

fn entry_label(i: usize, j: usize, p: usize) -> String {
    if p > 9 {
        format!("S{}_{}", i + 1, j + 1)
    } else {
        format!("S{}{}", i + 1, j + 1)
    }
}

/// `frequency_hz` followed by `<name>_S<ij>_db` columns for every tensor.
pub fn write_results_csv(grid: &FrequencyGrid, tensors: &[(&str, &SParamTensor)]) -> Result<String> {
    if tensors.iter().any(|(_, t)| t.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    if let Some(first) = tensors.first() {
        if tensors.iter().any(|(_, t)| t.ports() != first.1.ports()) {
            return Err(Error::InvalidArgument("tensors have different port counts".into()));
        }
    }
    let mut s = String::from("frequency_hz");
    for (name, t) in tensors {
        let p = t.ports();
        for i in 0..p {
            for j in 0..p {
                let _ = write!(s, ",{name}_{}_db", entry_label(i, j, p));
            }
        }
    }
    s.push('\n');
    for (k, nu) in grid.values().iter().enumerate() {
        s.push_str(&fmt_num(*nu));
        for (_, t) in tensors {
            let p = t.ports();
            for i in 0..p {
                for j in 0..p {
                    let _ = write!(s, ",{}", fmt_num(20.0 * t.get(i, j, k).norm().log10()));
                }
            }
        }
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests;
