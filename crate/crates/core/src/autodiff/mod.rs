//! Reverse-mode automatic differentiation over dense `channels x length`
//! arrays.
//!
//! Only the operators the generator network, the causality layer and the
//! losses need are provided. Every forward call appends a node to a [`Tape`];
//! [`Tape::backward`] walks the tape once in reverse and accumulates gradients
//! for every node that feeds the root. Nodes are stored in creation order, so
//! inputs always precede their consumers.
//!
//! All arithmetic is `f64` and single-threaded, and gradient accumulation
//! follows tape order, which makes forward and backward passes bitwise
//! reproducible.

mod conv;
mod fft;
mod gradcheck;

pub use conv::KERNEL;
pub use gradcheck::{gradcheck, GradCheckReport};

use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Dense row-major `channels x len` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Array1D {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Array1D {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::shape(format!("{channels}x{len}"), data.len()));
        }
        Ok(Self { channels, len, data })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            channels: 1,
            len: 1,
            data: vec![value],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv1d { x: Var, w: Var, b: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    LeakyRelu { x: Var, slope: f64 },
    AvgPool { x: Var },
    Upsample { x: Var },
    Concat { a: Var, b: Var },
    Crop { x: Var, start: usize },
    EdgePad { x: Var },
    ZeroPad { x: Var },
    Fft { x: Var, inverse: bool },
    RealToPair { x: Var },
    PairReal { x: Var },
    MirrorEven { x: Var },
    ScalePositions { x: Var, weights: Vec<f64> },
    ScaleChannels { x: Var, weights: Vec<f64> },
    Scale { x: Var, factor: f64 },
    Add { a: Var, b: Var },
    SubConst { x: Var },
    SelectColumns { x: Var, indices: Vec<usize> },
    ThirdDiff { x: Var },
    SumSquares { x: Var },
    SumAbs { x: Var },
    PairAbsSum { x: Var },
}

struct Node {
    value: Array1D,
    op: Op,
}

/// Append-only record of a computation.
pub struct Tape {
    nodes: Vec<Node>,
    planner: FftPlanner<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar root with respect to every node that reached it.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the node does not influence the root.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when it is unreachable.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; len])
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(contribution).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(contribution),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            planner: FftPlanner::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array1D {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn leaf(&mut self, value: Array1D) -> Var {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Array1D, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Array1D, op: Op, name: &'static str) -> Result<Var> {
        value.check_finite(name)?;
        Ok(self.push(value, op))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let a = &self.nodes[v.0].value;
        (a.channels, a.len)
    }

    #[cfg(test)]
    /// `(channels, len)` of every recorded node, in recording order.
    pub(crate) fn node_shapes(&self) -> Vec<(usize, usize)> {
        self.nodes.iter().map(|n| (n.value.channels, n.value.len)).collect()
    }

    /// Per-channel normalisation over the length axis of this single
    /// instance, followed by the affine map `gamma * xhat + beta`.
    pub fn batchnorm1d(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (c, l) = self.shape(x);
        if self.value(gamma).data.len() != c || self.value(beta).data.len() != c {
            return Err(Error::shape(format!("{c} affine parameters"), self.value(gamma).data.len()));
        }
        let xv = self.value(x);
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut out = Array1D::zeros(c, l);
        let mut xhat = vec![0.0; c * l];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let row = xv.row(ch);
            let mean = row.iter().sum::<f64>() / l as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / l as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[ch] = inv;
            let xh = &mut xhat[ch * l..(ch + 1) * l];
            let o = out.row_mut(ch);
            for t in 0..l {
                xh[t] = (row[t] - mean) * inv;
                o[t] = g[ch] * xh[t] + b[ch];
            }
        }
        self.push_checked(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std }, "batchnorm1d")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| if v >= 0.0 { v } else { slope * v }).collect();
        let out = Array1D::new(xv.channels, xv.len, data)?;
        self.push_checked(out, Op::LeakyRelu { x, slope }, "leaky_relu")
    }

    /// Non-overlapping average pooling with window 2.
    pub fn avg_pool1d(&mut self, x: Var) -> Result<Var> {
        let (c, l) = self.shape(x);
        if l % 2 != 0 {
            return Err(Error::shape("even length", l));
        }
        let xv = self.value(x);
        let mut out = Array1D::zeros(c, l / 2);
        for ch in 0..c {
            let src = xv.row(ch);
            for (t, o) in out.row_mut(ch).iter_mut().enumerate() {
                *o = 0.5 * (src[2 * t] + src[2 * t + 1]);
            }
        }
        self.push_checked(out, Op::AvgPool { x }, "avg_pool1d")
    }

    /// Linear interpolation to `out_len` samples. Output position `j` reads
    /// the continuum at `u = j * len / out_len`, with the last sample
    /// replicated past the end.
    pub fn upsample_linear(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let (c, l) = self.shape(x);
        if out_len < l || l == 0 {
            return Err(Error::shape(format!("output length >= {l}"), out_len));
        }
        let taps = upsample_taps(l, out_len);
        let xv = self.value(x);
        let mut out = Array1D::zeros(c, out_len);
        for ch in 0..c {
            let src = xv.row(ch);
            for (o, &(i0, i1, w)) in out.row_mut(ch).iter_mut().zip(&taps) {
                *o = (1.0 - w) * src[i0] + w * src[i1];
            }
        }
        self.push_checked(out, Op::Upsample { x }, "upsample_linear")
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, la) = self.shape(a);
        let (cb, lb) = self.shape(b);
        if la != lb {
            return Err(Error::shape(format!("length {la}"), lb));
        }
        let mut data = Vec::with_capacity((ca + cb) * la);
        data.extend_from_slice(&self.value(a).data);
        data.extend_from_slice(&self.value(b).data);
        let out = Array1D::new(ca + cb, la, data)?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    /// Keep samples `start..start + len` of every channel.
    pub fn crop(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (c, l) = self.shape(x);
        if start + len > l {
            return Err(Error::shape(format!("at least {} samples", start + len), l));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(c * len);
        for ch in 0..c {
            data.extend_from_slice(&xv.row(ch)[start..start + len]);
        }
        let out = Array1D::new(c, len, data)?;
        Ok(self.push(out, Op::Crop { x, start }))
    }

    /// Extend every channel to `out_len` by repeating its last sample.
    pub fn edge_pad(&mut self, x: Var, out_len: usize) -> Result<Var> {
        self.pad_with(x, out_len, true)
    }

    /// Extend every channel to `out_len` with trailing zeros.
    pub fn zero_pad(&mut self, x: Var, out_len: usize) -> Result<Var> {
        self.pad_with(x, out_len, false)
    }

    fn pad_with(&mut self, x: Var, out_len: usize, replicate: bool) -> Result<Var> {
        let (c, l) = self.shape(x);
        if out_len < l || l == 0 {
            return Err(Error::shape(format!("padded length >= {l}"), out_len));
        }
        let xv = self.value(x);
        let mut out = Array1D::zeros(c, out_len);
        for ch in 0..c {
            let src = xv.row(ch);
            let dst = out.row_mut(ch);
            dst[..l].copy_from_slice(src);
            if replicate {
                dst[l..].fill(src[l - 1]);
            }
        }
        let op = if replicate { Op::EdgePad { x } } else { Op::ZeroPad { x } };
        Ok(self.push(out, op))
    }

    /// Even extension used by the causality layer: a length-`L` channel `R`
    /// becomes `M` of length `2L` with `M[0] = R[0]`, `M[k] = M[2L - k] = R[k]`
    /// for `0 < k < L`, and `M[L] = R[L - 1]`.
    pub fn mirror_even(&mut self, x: Var) -> Result<Var> {
        let (c, l) = self.shape(x);
        if l < 2 {
            return Err(Error::shape("length >= 2", l));
        }
        let xv = self.value(x);
        let mut out = Array1D::zeros(c, 2 * l);
        for ch in 0..c {
            let src = xv.row(ch);
            let dst = out.row_mut(ch);
            dst[..l].copy_from_slice(src);
            dst[l] = src[l - 1];
            for k in 1..l {
                dst[2 * l - k] = src[k];
            }
        }
        Ok(self.push(out, Op::MirrorEven { x }))
    }

    /// Multiply sample `t` of every channel by `weights[t]`.
    pub fn scale_positions(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let (c, l) = self.shape(x);
        if weights.len() != l {
            return Err(Error::shape(format!("{l} weights"), weights.len()));
        }
        let xv = self.value(x);
        let mut out = xv.clone();
        for ch in 0..c {
            out.row_mut(ch).iter_mut().zip(&weights).for_each(|(o, w)| *o *= w);
        }
        Ok(self.push(out, Op::ScalePositions { x, weights }))
    }

    /// Multiply channel `c` by `weights[c]`.
    pub fn scale_channels(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let (c, _) = self.shape(x);
        if weights.len() != c {
            return Err(Error::shape(format!("{c} weights"), weights.len()));
        }
        let mut out = self.value(x).clone();
        for (ch, w) in weights.iter().enumerate() {
            out.row_mut(ch).iter_mut().for_each(|o| *o *= w);
        }
        Ok(self.push(out, Op::ScaleChannels { x, weights }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        self.push_checked(out, Op::Scale { x, factor }, "scale")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!("{:?}", self.shape(a)), format!("{:?}", self.shape(b))));
        }
        let mut out = self.value(a).clone();
        out.data.iter_mut().zip(&self.value(b).data).for_each(|(o, v)| *o += v);
        self.push_checked(out, Op::Add { a, b }, "add")
    }

    /// `x - target` for a constant `target` of the same shape.
    pub fn sub_const(&mut self, x: Var, target: &Array1D) -> Result<Var> {
        let (c, l) = self.shape(x);
        if (target.channels, target.len) != (c, l) {
            return Err(Error::shape(format!("{c}x{l}"), format!("{}x{}", target.channels, target.len)));
        }
        let mut out = self.value(x).clone();
        out.data.iter_mut().zip(&target.data).for_each(|(o, t)| *o -= t);
        Ok(self.push(out, Op::SubConst { x }))
    }

    /// Keep the columns (length positions) listed in `indices`.
    pub fn select_columns(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (c, l) = self.shape(x);
        crate::sparam::validate_indices(indices, l)?;
        let xv = self.value(x);
        let mut data = Vec::with_capacity(c * indices.len());
        for ch in 0..c {
            let row = xv.row(ch);
            data.extend(indices.iter().map(|&k| row[k]));
        }
        let out = Array1D::new(c, indices.len(), data)?;
        Ok(self.push(out, Op::SelectColumns { x, indices: indices.to_vec() }))
    }

    /// Unit-spacing third-order forward difference along length:
    /// `y[k] = x[k+3] - 3 x[k+2] + 3 x[k+1] - x[k]`, length `L - 3`.
    pub fn third_diff(&mut self, x: Var) -> Result<Var> {
        let (c, l) = self.shape(x);
        if l < 4 {
            return Err(Error::shape("length >= 4", l));
        }
        let xv = self.value(x);
        let mut out = Array1D::zeros(c, l - 3);
        for ch in 0..c {
            let s = xv.row(ch);
            for (k, o) in out.row_mut(ch).iter_mut().enumerate() {
                *o = s[k + 3] - 3.0 * s[k + 2] + 3.0 * s[k + 1] - s[k];
            }
        }
        Ok(self.push(out, Op::ThirdDiff { x }))
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data.iter().map(|v| v * v).sum();
        self.push_checked(Array1D::scalar(s), Op::SumSquares { x }, "sum_squares")
    }

    /// Sum of absolute values; the subgradient at zero is zero.
    pub fn sum_abs(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data.iter().map(|v| v.abs()).sum();
        self.push_checked(Array1D::scalar(s), Op::SumAbs { x }, "sum_abs")
    }

    /// Sum of complex moduli `sqrt(re^2 + im^2)` over channel pairs
    /// `(2k, 2k + 1)`; the subgradient at zero is zero.
    pub fn pair_abs_sum(&mut self, x: Var) -> Result<Var> {
        let (c, l) = self.shape(x);
        if c % 2 != 0 {
            return Err(Error::shape("even channel count", c));
        }
        let xv = self.value(x);
        let mut s = 0.0;
        for pair in 0..c / 2 {
            let re = xv.row(2 * pair);
            let im = xv.row(2 * pair + 1);
            for t in 0..l {
                s += re[t].hypot(im[t]);
            }
        }
        self.push_checked(Array1D::scalar(s), Op::PairAbsSum { x }, "pair_abs_sum")
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let (c, l) = self.shape(root);
        if c * l != 1 {
            return Err(Error::shape("scalar root", format!("{c}x{l}")));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut planner = FftPlanner::new();
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads, &mut planner)?;
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        planner: &mut FftPlanner<f64>,
    ) -> Result<()> {
        let out_len = node.value.len;
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b } => {
                let (dx, dw, db) = conv::conv1d_backward(self.value(*x), self.value(*w), g)?;
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
                accumulate(grads, *b, db);
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let (c, l) = self.shape(*x);
                let gam = &self.value(*gamma).data;
                let mut dx = vec![0.0; c * l];
                let mut dg = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ch in 0..c {
                    let gr = &g[ch * l..(ch + 1) * l];
                    let xh = &xhat[ch * l..(ch + 1) * l];
                    let sum_g: f64 = gr.iter().sum();
                    let sum_gx: f64 = gr.iter().zip(xh).map(|(a, b)| a * b).sum();
                    dg[ch] = sum_gx;
                    dbeta[ch] = sum_g;
                    let k = gam[ch] * inv_std[ch] / l as f64;
                    for t in 0..l {
                        dx[ch * l + t] = k * (l as f64 * gr[t] - sum_g - xh[t] * sum_gx);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dg);
                accumulate(grads, *beta, dbeta);
            }
            Op::LeakyRelu { x, slope } => {
                let xv = &self.value(*x).data;
                let dx = xv.iter().zip(g).map(|(&v, &gr)| if v >= 0.0 { gr } else { slope * gr }).collect();
                accumulate(grads, *x, dx);
            }
            Op::AvgPool { x } => {
                let (c, l) = self.shape(*x);
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    for t in 0..l / 2 {
                        let v = 0.5 * g[ch * (l / 2) + t];
                        dx[ch * l + 2 * t] = v;
                        dx[ch * l + 2 * t + 1] = v;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Upsample { x } => {
                let (c, l) = self.shape(*x);
                let taps = upsample_taps(l, out_len);
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    let gr = &g[ch * out_len..(ch + 1) * out_len];
                    let d = &mut dx[ch * l..(ch + 1) * l];
                    for (&gv, &(i0, i1, w)) in gr.iter().zip(&taps) {
                        d[i0] += (1.0 - w) * gv;
                        d[i1] += w * gv;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).data.len();
                accumulate(grads, *a, g[..na].to_vec());
                accumulate(grads, *b, g[na..].to_vec());
            }
            Op::Crop { x, start } => {
                let (c, l) = self.shape(*x);
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    dx[ch * l + start..ch * l + start + out_len]
                        .copy_from_slice(&g[ch * out_len..(ch + 1) * out_len]);
                }
                accumulate(grads, *x, dx);
            }
            Op::EdgePad { x } | Op::ZeroPad { x } => {
                let replicate = matches!(node.op, Op::EdgePad { .. });
                let (c, l) = self.shape(*x);
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    let gr = &g[ch * out_len..(ch + 1) * out_len];
                    dx[ch * l..(ch + 1) * l].copy_from_slice(&gr[..l]);
                    if replicate {
                        dx[ch * l + l - 1] += gr[l..].iter().sum::<f64>();
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Fft { x, inverse } => {
                let dx = fft::fft_backward(planner, g, node.value.channels, out_len, *inverse);
                accumulate(grads, *x, dx);
            }
            Op::RealToPair { x } => {
                let (c, l) = self.shape(*x);
                let mut dx = Vec::with_capacity(c * l);
                for ch in 0..c {
                    dx.extend_from_slice(&g[2 * ch * l..(2 * ch + 1) * l]);
                }
                accumulate(grads, *x, dx);
            }
            Op::PairReal { x } => {
                let (c, l) = self.shape(*x);
                let mut dx = vec![0.0; c * l];
                for pair in 0..c / 2 {
                    dx[2 * pair * l..(2 * pair + 1) * l].copy_from_slice(&g[pair * l..(pair + 1) * l]);
                }
                accumulate(grads, *x, dx);
            }
            Op::MirrorEven { x } => {
                let (c, l) = self.shape(*x);
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    let gr = &g[ch * 2 * l..(ch + 1) * 2 * l];
                    let d = &mut dx[ch * l..(ch + 1) * l];
                    d.copy_from_slice(&gr[..l]);
                    d[l - 1] += gr[l];
                    for k in 1..l {
                        d[k] += gr[2 * l - k];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ScalePositions { x, weights } => {
                let dx = g
                    .chunks(out_len)
                    .flat_map(|row| row.iter().zip(weights).map(|(a, w)| a * w))
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::ScaleChannels { x, weights } => {
                let dx = g
                    .chunks(out_len)
                    .zip(weights)
                    .flat_map(|(row, w)| row.iter().map(move |a| a * w))
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::Scale { x, factor } => {
                accumulate(grads, *x, g.iter().map(|v| v * factor).collect());
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, g.to_vec());
            }
            Op::SubConst { x } => accumulate(grads, *x, g.to_vec()),
            Op::SelectColumns { x, indices } => {
                let (c, l) = self.shape(*x);
                let n = indices.len();
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    for (j, &k) in indices.iter().enumerate() {
                        dx[ch * l + k] += g[ch * n + j];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ThirdDiff { x } => {
                let (c, l) = self.shape(*x);
                let mut dx = vec![0.0; c * l];
                for ch in 0..c {
                    let gr = &g[ch * out_len..(ch + 1) * out_len];
                    let d = &mut dx[ch * l..(ch + 1) * l];
                    for (k, &gv) in gr.iter().enumerate() {
                        d[k + 3] += gv;
                        d[k + 2] -= 3.0 * gv;
                        d[k + 1] += 3.0 * gv;
                        d[k] -= gv;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SumSquares { x } => {
                let s = g[0];
                accumulate(grads, *x, self.value(*x).data.iter().map(|v| 2.0 * v * s).collect());
            }
            Op::SumAbs { x } => {
                let s = g[0];
                let dx = self.value(*x).data.iter().map(|&v| sign(v) * s).collect();
                accumulate(grads, *x, dx);
            }
            Op::PairAbsSum { x } => {
                let (c, l) = self.shape(*x);
                let xv = self.value(*x);
                let s = g[0];
                let mut dx = vec![0.0; c * l];
                for pair in 0..c / 2 {
                    let re = xv.row(2 * pair);
                    let im = xv.row(2 * pair + 1);
                    for t in 0..l {
                        let m = re[t].hypot(im[t]);
                        if m > 0.0 {
                            dx[2 * pair * l + t] = s * re[t] / m;
                            dx[(2 * pair + 1) * l + t] = s * im[t] / m;
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(left, right, weight_of_right)` for each output sample.
fn upsample_taps(len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|j| {
            let u = (j * len) as f64 / out_len as f64;
            let i0 = (u.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, u - i0 as f64)
        })
        .collect()
}
