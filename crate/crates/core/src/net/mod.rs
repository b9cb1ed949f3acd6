//! The untrained 1-D U-Net generator.
//!
//! Topology (kernel 3 throughout, `cbl` = conv -> batchnorm -> LeakyReLU):
//!
//! * input block: `cbl(c0)` on the latent, edge-replicated to `f_pad`;
//! * encoder level `i = 1..N`: avg-pool(2) -> `cbl(c_E[i])` -> `cbl(c_E[i])`;
//! * decoder level `i = N..1`: upsample x2 -> `cbl(c_U[i])`, concatenate with
//!   the encoder output of the same resolution, then `cbl(c_D[i])`;
//! * output stage with the causality layer: upsample x2, conv to `r/2`
//!   real-part channels, crop to `2f`, then [`cel_forward`] to `r` channels
//!   (real/imag pairs) of length `f`. Without the causality layer the output
//!   stage is a conv to `r` channels cropped to `f`.
//!
//! The per-block operation order is a reconstruction of the usual 1-D DIP
//! U-Net, not a verbatim copy of any reference network.

mod cel;

pub use cel::{causal_spectrum, cel_forward};

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Array1D, Tape, Var, KERNEL};
use crate::error::{Error, Result};
use crate::rng;
use crate::sparam::{unflatten, FrequencyGrid, RealChannels, SParamTensor};

/// Smallest frequency count for which the depth rule yields at least one level.
pub const MIN_FREQUENCIES: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub depth: usize,
    pub input_filters: usize,
    pub encoder_filters: Vec<usize>,
    pub decoder_filters: Vec<usize>,
    pub upsample_filters: Vec<usize>,
    pub output_filters: usize,
    pub kernel: usize,
    pub channels: usize,
    pub freqs: usize,
    pub padded_len: usize,
    pub extrapolation: usize,
    pub interpolation: usize,
    pub leaky_slope: f64,
    pub bn_eps: f64,
    pub causal_output: bool,
}

/// `round(25 sqrt(r))`.
pub fn filters_for_channels(r: usize) -> usize {
    (25.0 * (r as f64).sqrt()).round() as usize
}

/// `ceil(log2 f) - 4`.
pub fn depth_for_freqs(f: usize) -> Result<usize> {
    if f < MIN_FREQUENCIES {
        return Err(Error::InvalidArgument(format!(
            "{f} frequencies: at least {MIN_FREQUENCIES} needed for a network of depth >= 1"
        )));
    }
    let ceil_log2 = usize::BITS - (f - 1).leading_zeros();
    Ok(ceil_log2 as usize - 4)
}

impl NetworkSpec {
    pub fn new(r: usize, f: usize, causal_output: bool) -> Result<Self> {
        if r == 0 || r % 2 != 0 {
            return Err(Error::InvalidArgument(format!("channel count {r} must be even and positive")));
        }
        let depth = depth_for_freqs(f)?;
        let width = filters_for_channels(r);
        let block = 1usize << depth;
        Ok(Self {
            depth,
            input_filters: width,
            encoder_filters: vec![width; depth],
            decoder_filters: vec![width; depth],
            upsample_filters: vec![width; depth],
            output_filters: if causal_output { r / 2 } else { r },
            kernel: KERNEL,
            channels: r,
            freqs: f,
            padded_len: f.div_ceil(block) * block,
            extrapolation: 2,
            interpolation: 1,
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            causal_output,
        })
    }

    /// Length of the feature maps at encoder level `i` (0 = input block).
    pub fn level_len(&self, i: usize) -> usize {
        self.padded_len >> i
    }

    /// `(name, shape)` of every learnable array, in enumeration order.
    pub fn parameter_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut shapes = Vec::new();
        let mut cbl = |prefix: &str, c_in: usize, c_out: usize| {
            shapes.push((format!("{prefix}.conv.weight"), (c_out, c_in * KERNEL)));
            shapes.push((format!("{prefix}.conv.bias"), (c_out, 1)));
            shapes.push((format!("{prefix}.bn.gamma"), (c_out, 1)));
            shapes.push((format!("{prefix}.bn.beta"), (c_out, 1)));
        };
        cbl("input", self.channels, self.input_filters);
        let mut c = self.input_filters;
        for i in 0..self.depth {
            cbl(&format!("enc{}.a", i + 1), c, self.encoder_filters[i]);
            cbl(&format!("enc{}.b", i + 1), self.encoder_filters[i], self.encoder_filters[i]);
            c = self.encoder_filters[i];
        }
        for i in (0..self.depth).rev() {
            cbl(&format!("dec{}.up", i + 1), c, self.upsample_filters[i]);
            let skip = if i == 0 { self.input_filters } else { self.encoder_filters[i - 1] };
            cbl(&format!("dec{}.merge", i + 1), self.upsample_filters[i] + skip, self.decoder_filters[i]);
            c = self.decoder_filters[i];
        }
        shapes.push(("output.conv.weight".into(), (self.output_filters, c * KERNEL)));
        shapes.push(("output.conv.bias".into(), (self.output_filters, 1)));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|(_, (a, b))| a * b).sum()
    }

    /// `key = value` lines for experiment records.
    pub fn to_config_block(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        [
            format!("depth = {}", self.depth),
            format!("input_filters = {}", self.input_filters),
            format!("encoder_filters = {}", list(&self.encoder_filters)),
            format!("decoder_filters = {}", list(&self.decoder_filters)),
            format!("upsample_filters = {}", list(&self.upsample_filters)),
            format!("output_filters = {}", self.output_filters),
            format!("kernel = {}", self.kernel),
            format!("channels = {}", self.channels),
            format!("freqs = {}", self.freqs),
            format!("padded_len = {}", self.padded_len),
            format!("extrapolation = {}", self.extrapolation),
            format!("interpolation = {}", self.interpolation),
            format!("leaky_slope = {}", self.leaky_slope),
            format!("bn_eps = {}", self.bn_eps),
            format!("causal_output = {}", self.causal_output),
            format!("parameters = {}", self.parameter_count()),
        ]
        .join("\n")
    }
}

/// Learnable arrays in a fixed enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    names: Vec<String>,
    arrays: Vec<Array1D>,
}

impl WeightStore {
    /// He-normal conv weights (`std = sqrt(2 / fan_in)`), zero biases,
    /// unit gammas and zero betas, drawn from the `"weights"` stream.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "weights");
        let mut names = Vec::new();
        let mut arrays = Vec::new();
        for (name, (rows, cols)) in spec.parameter_shapes() {
            let n = rows * cols;
            let data = if name.ends_with(".weight") {
                let std = (2.0 / cols as f64).sqrt();
                (0..n)
                    .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            } else if name.ends_with(".gamma") {
                vec![1.0; n]
            } else {
                vec![0.0; n]
            };
            names.push(name);
            arrays.push(Array1D::new(rows, cols, data).expect("shape from spec"));
        }
        Self { names, arrays }
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[Array1D] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [Array1D] {
        &mut self.arrays
    }

    pub fn get(&self, name: &str) -> Option<&Array1D> {
        self.names.iter().position(|n| n == name).map(|i| &self.arrays[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.arrays.iter().map(|a| a.data().len()).sum()
    }

    /// Register every array as a tape leaf, in enumeration order.
    pub fn to_tape(&self, tape: &mut Tape) -> Vec<Var> {
        self.arrays.iter().map(|a| tape.leaf(a.clone())).collect()
    }
}

pub fn build_network(r: usize, f: usize, seed: u64) -> Result<(NetworkSpec, WeightStore)> {
    let spec = NetworkSpec::new(r, f, true)?;
    let weights = WeightStore::init(&spec, seed);
    Ok((spec, weights))
}

struct ParamCursor<'a> {
    vars: &'a [Var],
    next: usize,
}

impl ParamCursor<'_> {
    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }
}

fn cbl(tape: &mut Tape, spec: &NetworkSpec, x: Var, params: &mut ParamCursor) -> Result<Var> {
    let (w, b, g, beta) = (params.take(), params.take(), params.take(), params.take());
    let y = tape.conv1d(x, w, b)?;
    let y = tape.batchnorm1d(y, g, beta, spec.bn_eps)?;
    tape.leaky_relu(y, spec.leaky_slope)
}

/// Record `G(z)` on `tape`. `params` are the leaves from
/// [`WeightStore::to_tape`]; `z` is `r x f`. Returns the `r x f` output in
/// real-channel layout.
pub fn forward_on_tape(tape: &mut Tape, spec: &NetworkSpec, params: &[Var], z: Var) -> Result<Var> {
    let zv = tape.value(z);
    if zv.channels() != spec.channels || zv.len() != spec.freqs {
        return Err(Error::shape(
            format!("{}x{}", spec.channels, spec.freqs),
            format!("{}x{}", zv.channels(), zv.len()),
        ));
    }
    let expected = spec.parameter_shapes().len();
    if params.len() != expected {
        return Err(Error::shape(format!("{expected} parameter arrays"), params.len()));
    }
    let mut cursor = ParamCursor { vars: params, next: 0 };

    let x = tape.edge_pad(z, spec.padded_len)?;
    let mut h = cbl(tape, spec, x, &mut cursor)?;
    let mut skips = vec![h];
    for _ in 0..spec.depth {
        h = tape.avg_pool1d(h)?;
        h = cbl(tape, spec, h, &mut cursor)?;
        h = cbl(tape, spec, h, &mut cursor)?;
        skips.push(h);
    }
    for i in (0..spec.depth).rev() {
        let skip = skips[i];
        let up = tape.upsample_linear(h, spec.level_len(i))?;
        let up = cbl(tape, spec, up, &mut cursor)?;
        let merged = tape.concat_channels(up, skip)?;
        h = cbl(tape, spec, merged, &mut cursor)?;
    }
    let (w, b) = (cursor.take(), cursor.take());
    if spec.causal_output {
        let up = tape.upsample_linear(h, 2 * spec.padded_len)?;
        let real = tape.conv1d(up, w, b)?;
        let real = tape.crop(real, 0, spec.extrapolation * spec.freqs)?;
        cel_forward(tape, real, spec.interpolation)
    } else {
        let y = tape.conv1d(h, w, b)?;
        tape.crop(y, 0, spec.freqs)
    }
}

/// Evaluate the generator without keeping the tape.
pub fn forward_channels(spec: &NetworkSpec, weights: &WeightStore, z: &RealChannels) -> Result<RealChannels> {
    let mut tape = Tape::new();
    let params = weights.to_tape(&mut tape);
    let zv = tape.leaf(Array1D::new(z.rows(), z.cols(), z.data().to_vec())?);
    let out = forward_on_tape(&mut tape, spec, &params, zv)?;
    let v = tape.value(out);
    RealChannels::new(v.channels(), v.len(), v.data().to_vec())
}

/// Evaluate the generator and interpret the output as a `p x p x f` tensor.
pub fn forward(spec: &NetworkSpec, weights: &WeightStore, z: &RealChannels, grid: &FrequencyGrid) -> Result<SParamTensor> {
    let out = forward_channels(spec, weights, z)?;
    let ports = ports_for_channels(spec.channels)?;
    unflatten(&out, ports, grid)
}

pub fn ports_for_channels(r: usize) -> Result<usize> {
    let p = ((r / 2) as f64).sqrt().round() as usize;
    if 2 * p * p != r {
        return Err(Error::InvalidArgument(format!("{r} channels is not 2 p^2")));
    }
    Ok(p)
}

#[cfg(test)]
mod tests;
