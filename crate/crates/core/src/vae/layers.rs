//! Dense and (transposed) convolution layers with hand-written backward passes.
//!
//! Parameters live in flat slices. Layouts:
//!
//! * dense: weights `[out][in]`, then bias `[out]`
//! * conv: weights `[out_ch][in_ch][k][k]`, then bias `[out_ch]`
//! * transposed conv: weights `[in_ch][out_ch][k][k]`, then bias `[out_ch]`
//!
//! Activations are channel-major (`CHW`).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            other => return Err(Error::Input(format!("unknown activation `{other}`"))),
        })
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Channel-major tensor shape used by convolution layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChwShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ChwShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        ChwShape {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: ChwShape,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    fn conv_output(&self) -> Option<ChwShape> {
        let span_h = self.input.height + 2 * self.padding;
        let span_w = self.input.width + 2 * self.padding;
        if self.stride == 0 || self.kernel == 0 || span_h < self.kernel || span_w < self.kernel {
            return None;
        }
        Some(ChwShape::new(
            self.out_channels,
            (span_h - self.kernel) / self.stride + 1,
            (span_w - self.kernel) / self.stride + 1,
        ))
    }

    fn deconv_output(&self) -> Option<ChwShape> {
        if self.stride == 0 || self.kernel == 0 || self.input.height == 0 || self.input.width == 0 {
            return None;
        }
        let h = (self.input.height - 1) * self.stride + self.kernel;
        let w = (self.input.width - 1) * self.stride + self.kernel;
        if h <= 2 * self.padding || w <= 2 * self.padding {
            return None;
        }
        Some(ChwShape::new(self.out_channels, h - 2 * self.padding, w - 2 * self.padding))
    }

    fn weight_count(&self) -> usize {
        self.input.channels * self.out_channels * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv2d(ConvGeometry),
    ConvTranspose2d(ConvGeometry),
}

/// One layer descriptor: kind, sizes and activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense { inputs, outputs },
            activation,
        }
    }

    pub fn conv(geometry: ConvGeometry, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2d(geometry),
            activation,
        }
    }

    pub fn deconv(geometry: ConvGeometry, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::ConvTranspose2d(geometry),
            activation,
        }
    }

    /// Checks that the geometry produces a non-empty output.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            LayerKind::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerKind::Conv2d(g) => !g.input.is_empty() && g.out_channels > 0 && g.conv_output().is_some(),
            LayerKind::ConvTranspose2d(g) => {
                !g.input.is_empty() && g.out_channels > 0 && g.deconv_output().is_some()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("degenerate layer `{self}`")))
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d(g) | LayerKind::ConvTranspose2d(g) => g.input.len(),
        }
    }

    pub fn fan_out(&self) -> usize {
        match self.kind {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d(g) => g.conv_output().map_or(0, |s| s.len()),
            LayerKind::ConvTranspose2d(g) => g.deconv_output().map_or(0, |s| s.len()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerKind::Conv2d(g) | LayerKind::ConvTranspose2d(g) => g.weight_count() + g.out_channels,
        }
    }

    pub(crate) fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Conv2d(g) | LayerKind::ConvTranspose2d(g) => g.weight_count(),
        }
    }

    /// Fan sizes used for Glorot-uniform initialization.
    pub(crate) fn init_fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => (inputs, outputs),
            LayerKind::Conv2d(g) | LayerKind::ConvTranspose2d(g) => {
                let kk = g.kernel * g.kernel;
                (g.input.channels * kk, g.out_channels * kk)
            }
        }
    }

    /// Computes pre-activations into `pre`.
    fn forward_pre(&self, params: &[f64], input: &[f64], pre: &mut [f64]) {
        let (w, b) = params.split_at(self.weight_count());
        match self.kind {
            LayerKind::Dense { inputs, .. } => {
                for (o, (p, row)) in pre.iter_mut().zip(w.chunks_exact(inputs)).enumerate() {
                    *p = b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                }
            }
            LayerKind::Conv2d(g) => conv_forward(&g, w, b, input, pre),
            LayerKind::ConvTranspose2d(g) => deconv_forward(&g, w, b, input, pre),
        }
    }

    /// Accumulates parameter gradients and, if requested, the input gradient.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        grad_pre: &[f64],
        grad_params: &mut [f64],
        grad_input: Option<&mut [f64]>,
    ) {
        let (w, _) = params.split_at(self.weight_count());
        let (gw, gb) = grad_params.split_at_mut(self.weight_count());
        match self.kind {
            LayerKind::Dense { inputs, .. } => {
                for (o, &g) in grad_pre.iter().enumerate() {
                    gb[o] += g;
                    let row = &mut gw[o * inputs..(o + 1) * inputs];
                    for (gwi, x) in row.iter_mut().zip(input) {
                        *gwi += g * x;
                    }
                }
                if let Some(gi) = grad_input {
                    for (o, &g) in grad_pre.iter().enumerate() {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        for (gii, a) in gi.iter_mut().zip(row) {
                            *gii += g * a;
                        }
                    }
                }
            }
            LayerKind::Conv2d(g) => conv_backward(&g, w, input, grad_pre, gw, gb, grad_input),
            LayerKind::ConvTranspose2d(g) => deconv_backward(&g, w, input, grad_pre, gw, gb, grad_input),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let act = self.activation.name();
        match self.kind {
            LayerKind::Dense { inputs, outputs } => write!(f, "dense:{inputs}:{outputs}:{act}"),
            LayerKind::Conv2d(g) | LayerKind::ConvTranspose2d(g) => {
                let tag = if matches!(self.kind, LayerKind::Conv2d(_)) {
                    "conv"
                } else {
                    "deconv"
                };
                write!(
                    f,
                    "{tag}:{}x{}x{}:{}:{}:{}:{}:{act}",
                    g.input.channels, g.input.height, g.input.width, g.out_channels, g.kernel, g.stride, g.padding
                )
            }
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    /// Parses `dense:<in>:<out>:<act>` or `conv|deconv:<c>x<h>x<w>:<oc>:<k>:<s>:<p>:<act>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("malformed layer descriptor `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            ["dense", i, o, act] => LayerSpec::dense(num(i)?, num(o)?, act.parse()?),
            [tag @ ("conv" | "deconv"), shape, oc, k, st, p, act] => {
                let dims: Vec<usize> = shape.split('x').map(num).collect::<Result<_>>()?;
                let [c, h, w] = dims[..] else {
                    return Err(bad());
                };
                let g = ConvGeometry {
                    input: ChwShape::new(c, h, w),
                    out_channels: num(oc)?,
                    kernel: num(k)?,
                    stride: num(st)?,
                    padding: num(p)?,
                };
                if *tag == "conv" {
                    LayerSpec::conv(g, act.parse()?)
                } else {
                    LayerSpec::deconv(g, act.parse()?)
                }
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn conv_forward(g: &ConvGeometry, w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let os = g.conv_output().expect("validated geometry");
    let (ic, ih, iw) = (g.input.channels, g.input.height, g.input.width);
    let k = g.kernel;
    for o in 0..g.out_channels {
        for y in 0..os.height {
            for x in 0..os.width {
                let mut acc = b[o];
                for i in 0..ic {
                    for ky in 0..k {
                        let Some(iy) = (y * g.stride + ky).checked_sub(g.padding).filter(|&v| v < ih) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = (x * g.stride + kx).checked_sub(g.padding).filter(|&v| v < iw) else {
                                continue;
                            };
                            acc += w[((o * ic + i) * k + ky) * k + kx] * input[(i * ih + iy) * iw + ix];
                        }
                    }
                }
                out[(o * os.height + y) * os.width + x] = acc;
            }
        }
    }
}

fn conv_backward(
    g: &ConvGeometry,
    w: &[f64],
    input: &[f64],
    grad_out: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let os = g.conv_output().expect("validated geometry");
    let (ic, ih, iw) = (g.input.channels, g.input.height, g.input.width);
    let k = g.kernel;
    for o in 0..g.out_channels {
        for y in 0..os.height {
            for x in 0..os.width {
                let go = grad_out[(o * os.height + y) * os.width + x];
                gb[o] += go;
                for i in 0..ic {
                    for ky in 0..k {
                        let Some(iy) = (y * g.stride + ky).checked_sub(g.padding).filter(|&v| v < ih) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = (x * g.stride + kx).checked_sub(g.padding).filter(|&v| v < iw) else {
                                continue;
                            };
                            let wi = ((o * ic + i) * k + ky) * k + kx;
                            let xi = (i * ih + iy) * iw + ix;
                            gw[wi] += go * input[xi];
                            if let Some(gi) = grad_input.as_deref_mut() {
                                gi[xi] += go * w[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn deconv_forward(g: &ConvGeometry, w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let os = g.deconv_output().expect("validated geometry");
    let (ic, ih, iw) = (g.input.channels, g.input.height, g.input.width);
    let (oc, k) = (g.out_channels, g.kernel);
    let plane = os.height * os.width;
    for o in 0..oc {
        out[o * plane..(o + 1) * plane].fill(b[o]);
    }
    for i in 0..ic {
        for y in 0..ih {
            for x in 0..iw {
                let v = input[(i * ih + y) * iw + x];
                for o in 0..oc {
                    for ky in 0..k {
                        let Some(oy) = (y * g.stride + ky).checked_sub(g.padding).filter(|&v| v < os.height) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ox) = (x * g.stride + kx).checked_sub(g.padding).filter(|&v| v < os.width) else {
                                continue;
                            };
                            out[(o * os.height + oy) * os.width + ox] += v * w[((i * oc + o) * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
    }
}

fn deconv_backward(
    g: &ConvGeometry,
    w: &[f64],
    input: &[f64],
    grad_out: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let os = g.deconv_output().expect("validated geometry");
    let (ic, ih, iw) = (g.input.channels, g.input.height, g.input.width);
    let (oc, k) = (g.out_channels, g.kernel);
    let plane = os.height * os.width;
    for o in 0..oc {
        gb[o] += grad_out[o * plane..(o + 1) * plane].iter().sum::<f64>();
    }
    for i in 0..ic {
        for y in 0..ih {
            for x in 0..iw {
                let xi = (i * ih + y) * iw + x;
                let v = input[xi];
                let mut gacc = 0.0;
                for o in 0..oc {
                    for ky in 0..k {
                        let Some(oy) = (y * g.stride + ky).checked_sub(g.padding).filter(|&v| v < os.height) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ox) = (x * g.stride + kx).checked_sub(g.padding).filter(|&v| v < os.width) else {
                                continue;
                            };
                            let wi = ((i * oc + o) * k + ky) * k + kx;
                            let go = grad_out[(o * os.height + oy) * os.width + ox];
                            gw[wi] += v * go;
                            gacc += go * w[wi];
                        }
                    }
                }
                if let Some(gi) = grad_input.as_deref_mut() {
                    gi[xi] += gacc;
                }
            }
        }
    }
}

/// A chain of layers sharing one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Stack<'a> {
    layers: &'a [LayerSpec],
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct Trace {
    /// `acts[l]` is the input of layer `l`; the last entry is the stack output.
    acts: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

impl<'a> Stack<'a> {
    pub(crate) fn new(layers: &'a [LayerSpec]) -> Self {
        Stack { layers }
    }

    fn chunks<'p>(&self, params: &'p [f64]) -> impl Iterator<Item = (&'a LayerSpec, &'p [f64])> + use<'a, 'p> {
        let mut offset = 0;
        self.layers.iter().map(move |l| {
            let n = l.param_count();
            let slice = &params[offset..offset + n];
            offset += n;
            (l, slice)
        })
    }

    pub(crate) fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut cur = input.to_vec();
        for (layer, p) in self.chunks(params) {
            let mut pre = vec![0.0; layer.fan_out()];
            layer.forward_pre(p, &cur, &mut pre);
            let act = layer.activation;
            pre.iter_mut().for_each(|v| *v = act.apply(*v));
            cur = pre;
        }
        cur
    }

    pub(crate) fn forward_trace(&self, params: &[f64], input: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for (layer, p) in self.chunks(params) {
            let mut pre = vec![0.0; layer.fan_out()];
            layer.forward_pre(p, acts.last().unwrap(), &mut pre);
            let act = layer.activation;
            acts.push(pre.iter().map(|&v| act.apply(v)).collect());
            pres.push(pre);
        }
        Trace { acts, pres }
    }

    /// Backpropagates `grad_output` through the stack, accumulating into
    /// `grad_params`; returns the gradient with respect to the stack input.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        trace: &Trace,
        grad_output: &[f64],
        grad_params: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let mut offsets = Vec::with_capacity(self.layers.len() + 1);
        offsets.push(0);
        for l in self.layers {
            offsets.push(offsets.last().unwrap() + l.param_count());
        }
        let mut grad = grad_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.acts[l + 1];
            let grad_pre: Vec<f64> = grad
                .iter()
                .zip(&trace.pres[l])
                .zip(out)
                .map(|((g, &pre), &o)| g * layer.activation.derivative(pre, o))
                .collect();
            let range = offsets[l]..offsets[l + 1];
            let need_input = l > 0 || want_input_grad;
            let mut grad_in = if need_input {
                vec![0.0; layer.fan_in()]
            } else {
                Vec::new()
            };
            layer.backward(
                &params[range.clone()],
                &trace.acts[l],
                &grad_pre,
                &mut grad_params[range],
                need_input.then_some(grad_in.as_mut_slice()),
            );
            grad = grad_in;
        }
        want_input_grad.then_some(grad)
    }
}
