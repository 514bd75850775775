//! Building blocks of the encoder-separator-decoder pipeline.
//!
//! Each block records itself on a [`Tape`]; the streaming runtime re-uses the
//! scalar kernels below so both paths perform identical arithmetic.

use crate::error::{Error, Result};
use crate::neurons::{self, Dynamics, SpikeFn, SurrogateKind};
use crate::scalar::Scalar;
use crate::tensor::ops::{self, ConvSpec};
use crate::tensor::{Array, Function, Tape, Var};

/// Encoder/decoder framing: filter length `L`, hop, and feature channels `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub filter_len: usize,
    pub stride: usize,
    pub channels: usize,
}

impl EncoderConfig {
    /// 50% overlap: stride = L / 2.
    pub fn half_overlap(filter_len: usize, channels: usize) -> Self {
        EncoderConfig {
            filter_len,
            stride: (filter_len / 2).max(1),
            channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.filter_len {
            return Err(Error::Config(format!(
                "encoder stride must be in 1..=L (L = {}, stride = {})",
                self.filter_len, self.stride
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("encoder needs at least one channel".into()));
        }
        Ok(())
    }

    pub fn frames(&self, samples: usize) -> Result<usize> {
        if samples < self.filter_len {
            return Err(Error::TooShort(format!(
                "{samples} samples, one frame needs {}",
                self.filter_len
            )));
        }
        Ok((samples - self.filter_len) / self.stride + 1)
    }

    pub fn decoded_len(&self, frames: usize) -> usize {
        (frames - 1) * self.stride + self.filter_len
    }
}

/// Separator widths: bottleneck `B`, SCNN output `H`, SCNN context steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeparatorConfig {
    pub bottleneck: usize,
    pub hidden: usize,
    pub context: usize,
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bottleneck == 0 || self.hidden == 0 {
            return Err(Error::Config("separator channel counts must be positive".into()));
        }
        if self.hidden % self.bottleneck != 0 {
            return Err(Error::Config(format!(
                "H ({}) must be divisible by B ({})",
                self.hidden, self.bottleneck
            )));
        }
        if self.context == 0 {
            return Err(Error::Config("SCNN context must be at least one step".into()));
        }
        Ok(())
    }

    pub fn filters_per_group(&self) -> usize {
        self.hidden / self.bottleneck
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    /// 1 above the threshold, 0 below.
    Binarize,
    /// Input above the threshold, 0 below.
    PassAbove,
}

/// Activation suppression with a learnable threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuppressionGate<T> {
    pub threshold: T,
    pub mode: GateMode,
}

/// Gate output for one activation.
#[inline]
pub(crate) fn gate_value<T: Scalar>(x: T, threshold: T, mode: GateMode, spike: &SpikeFn) -> T {
    let open = spike.fire(x - threshold);
    match mode {
        GateMode::Binarize => open,
        GateMode::PassAbove => x * open,
    }
}

/// Applies a suppression gate without recording gradients.
pub fn suppress<T: Scalar>(x: &Array<T>, gate: &SuppressionGate<T>) -> Array<T> {
    let spike = gate_spike(neurons::SpikeMode::Heaviside);
    x.map(|v| gate_value(v, gate.threshold, gate.mode, &spike))
}

fn gate_spike(mode: neurons::SpikeMode) -> SpikeFn {
    SpikeFn::new(mode, SurrogateKind::Arctan)
}

struct GateFn {
    mode: GateMode,
    spike: SpikeFn,
}

impl<T: Scalar> Function<T> for GateFn {
    fn name(&self) -> &'static str {
        match self.mode {
            GateMode::Binarize => "suppress_binarize",
            GateMode::PassAbove => "suppress_pass_above",
        }
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (x, thr) = (inputs[0], inputs[1].data()[0]);
        let mut dthr = T::zero();
        let mut dx = Vec::with_capacity(x.len());
        for (&v, &g) in x.data().iter().zip(grad.data()) {
            let sg = self.spike.grad(v - thr);
            match self.mode {
                GateMode::Binarize => {
                    dthr -= g * sg;
                    dx.push(g * sg);
                }
                GateMode::PassAbove => {
                    dthr -= g * v * sg;
                    dx.push(g * (self.spike.fire(v - thr) + v * sg));
                }
            }
        }
        let dx = Array::new(x.shape(), dx).unwrap();
        vec![Some(dx), Some(Array::scalar(dthr))]
    }
}

fn gate<T: Scalar>(tape: &mut Tape<T>, x: Var, threshold: Var, mode: GateMode, dynamics: Dynamics) -> Result<Var> {
    tape.value(threshold).expect_shape(&[1])?;
    let thr = tape.value(threshold).data()[0];
    if !thr.is_finite() {
        return Err(Error::NonFinite("suppression threshold"));
    }
    let spike = gate_spike(dynamics.mode);
    let out = tape.value(x).map(|v| gate_value(v, thr, mode, &spike));
    Ok(tape.push(out, vec![x, threshold], Box::new(GateFn { mode, spike })))
}

/// `out = step(x - threshold)`; backward uses the arctan surrogate for both
/// the input and (negated) the threshold.
pub fn suppress_binarize<T: Scalar>(tape: &mut Tape<T>, x: Var, threshold: Var, dynamics: Dynamics) -> Result<Var> {
    gate(tape, x, threshold, GateMode::Binarize, dynamics)
}

/// `out = x * step(x - threshold)`.
pub fn suppress_pass_above<T: Scalar>(tape: &mut Tape<T>, x: Var, threshold: Var, dynamics: Dynamics) -> Result<Var> {
    gate(tape, x, threshold, GateMode::PassAbove, dynamics)
}

/// Waveform `[B,1,T]` -> ReLU(conv) features `[B,N,frames]`; frame `t` covers
/// samples `[t*stride, t*stride + L)`.
pub fn encode<T: Scalar>(tape: &mut Tape<T>, wave: Var, kernel: Var, cfg: &EncoderConfig) -> Result<Var> {
    let (_, c, samples) = tape.value(wave).dims3()?;
    if c != 1 {
        return Err(Error::dim(format!("encoder expects mono input, got {c} channels")));
    }
    tape.value(kernel).expect_shape(&[cfg.channels, 1, cfg.filter_len])?;
    cfg.frames(samples)?;
    let spec = ConvSpec {
        stride: cfg.stride,
        groups: 1,
        left_pad: 0,
    };
    let z = ops::conv1d(tape, wave, kernel, None, spec)?;
    Ok(ops::relu(tape, z))
}

/// Overlap-add decoder: `[B,N,frames]` -> `[B,1,(frames-1)*stride + L]`.
pub fn decode<T: Scalar>(tape: &mut Tape<T>, features: Var, kernel: Var, cfg: &EncoderConfig) -> Result<Var> {
    tape.value(kernel).expect_shape(&[cfg.channels, 1, cfg.filter_len])?;
    ops::deconv1d(tape, features, kernel, cfg.stride)
}

/// Parameters of the spiking convolution block.
#[derive(Clone, Copy, Debug)]
pub struct ScnnVars {
    pub kernel: Var,
    pub bias: Var,
    pub plif_a: Var,
}

/// Grouped causal convolution over time (`B` groups, `H/B` filters each,
/// `context` taps, left zero-padding) feeding PLIF neurons.
pub fn scnn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    vars: ScnnVars,
    cfg: &SeparatorConfig,
    theta: T,
    dynamics: Dynamics,
) -> Result<Var> {
    cfg.validate().map_err(|e| Error::dim(e.to_string()))?;
    let (_, c, _) = tape.value(x).dims3()?;
    if c != cfg.bottleneck {
        return Err(Error::dim(format!("SCNN expects {} channels, got {c}", cfg.bottleneck)));
    }
    let spec = ConvSpec {
        stride: 1,
        groups: cfg.bottleneck,
        left_pad: cfg.context - 1,
    };
    let current = ops::conv1d(tape, x, vars.kernel, Some(vars.bias), spec)?;
    neurons::plif_layer(tape, current, vars.plif_a, theta, dynamics)
}

#[derive(Clone, Copy, Debug)]
pub struct SrnnVars {
    pub w_in: Var,
    pub bias: Var,
    pub w_rec: Var,
    pub tau_m: Var,
    pub tau_adp: Var,
}

/// Fully connected recurrent ALIF layer: `I_t = W_in x_t + b + W_rec s_{t-1}`.
pub fn srnn_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, vars: SrnnVars, b0: T, beta: T, dynamics: Dynamics) -> Result<Var> {
    let ff = ops::conv1d(tape, x, vars.w_in, Some(vars.bias), ConvSpec::pointwise())?;
    neurons::alif_recurrent_layer(tape, ff, vars.w_rec, vars.tau_m, vars.tau_adp, b0, beta, dynamics)
}

#[derive(Clone, Copy, Debug)]
pub struct ReadoutVars {
    pub weight: Var,
    pub bias: Var,
    pub tau: Var,
}

/// Fully connected projection into non-spiking leaky integrators; outputs
/// the membrane potential.
pub fn readout_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, vars: ReadoutVars) -> Result<Var> {
    let current = ops::conv1d(tape, x, vars.weight, Some(vars.bias), ConvSpec::pointwise())?;
    neurons::leaky_integrator(tape, current, vars.tau)
}

/// 1x1 convolution followed by a sigmoid: a mask in (0, 1).
pub fn mask_head<T: Scalar>(tape: &mut Tape<T>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let z = ops::conv1d(tape, x, weight, Some(bias), ConvSpec::pointwise())?;
    Ok(ops::sigmoid(tape, z))
}
