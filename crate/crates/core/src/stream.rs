//! Block-based streaming inference.
//!
//! The stream consumes samples in arbitrary chunks, runs one separator step
//! per encoder hop and emits `stride` finished samples per frame. The first
//! sample leaves after `L` samples have arrived: `stride` samples of
//! buffering plus `L - stride` samples of look-ahead inside the frame.
//! Every buffer is sized by the model config, never by the stream length.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::layers::{gate_value, EncoderConfig, GateMode};
use crate::network::{DpsnnModel, ModelConfig};
use crate::neurons::{self, NeuronState, SpikeFn, SpikeMode, SurrogateKind};
use crate::scalar::Scalar;
use crate::tensor::ops::{normalize_column, Unary};

/// Algorithmic latency split into buffering (one hop) and look-ahead
/// (the rest of the frame).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyReport {
    pub buffering_ms: f64,
    pub lookahead_ms: f64,
    pub algorithmic_ms: f64,
}

pub fn latency(cfg: &EncoderConfig, sample_rate: u32) -> Result<LatencyReport> {
    if sample_rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    cfg.validate()?;
    let ms = |samples: usize| (samples as f64 * 1000.0) / sample_rate as f64;
    let buffering_ms = ms(cfg.stride);
    let lookahead_ms = ms(cfg.filter_len - cfg.stride);
    Ok(LatencyReport {
        buffering_ms,
        lookahead_ms,
        algorithmic_ms: buffering_ms + lookahead_ms,
    })
}

/// Everything needed to resume inference at the next sample.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamState<T> {
    config: ModelConfig,
    /// Last (up to) `L` input samples.
    window: Vec<T>,
    /// Samples still needed before the next frame can run.
    until_frame: usize,
    /// Last `K - 1` binarized bottleneck frames, newest at the back.
    context: VecDeque<Vec<T>>,
    scnn: NeuronState<T>,
    srnn: NeuronState<T>,
    readout: Vec<T>,
    /// Overlap-add accumulator for output samples `[t*stride, t*stride + L)`.
    tail: Vec<T>,
    frames_processed: usize,
    scratch: Scratch<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct Scratch<T> {
    features: Vec<T>,
    normed: Vec<T>,
    bottleneck: Vec<T>,
    current_h: Vec<T>,
    spikes_h: Vec<T>,
    current_b: Vec<T>,
    total_b: Vec<T>,
    suppressed: Vec<T>,
    masked: Vec<T>,
}

impl<T: Scalar> StreamState<T> {
    pub fn new(model: &DpsnnModel<T>) -> Self {
        let cfg = model.config;
        let (n, l) = (cfg.encoder.channels, cfg.encoder.filter_len);
        let (b, h) = (cfg.separator.bottleneck, cfg.separator.hidden);
        StreamState {
            config: cfg,
            window: Vec::with_capacity(l),
            until_frame: l,
            context: VecDeque::with_capacity(cfg.separator.context),
            scnn: NeuronState::new(h),
            srnn: NeuronState::new(b),
            readout: vec![T::zero(); b],
            tail: vec![T::zero(); l],
            frames_processed: 0,
            scratch: Scratch {
                features: vec![T::zero(); n],
                normed: vec![T::zero(); n],
                bottleneck: vec![T::zero(); b],
                current_h: vec![T::zero(); h],
                spikes_h: vec![T::zero(); h],
                current_b: vec![T::zero(); b],
                total_b: vec![T::zero(); b],
                suppressed: vec![T::zero(); b],
                masked: vec![T::zero(); n],
            },
        }
    }

    /// Returns the state to its freshly constructed value.
    pub fn reset(&mut self) {
        self.window.clear();
        self.until_frame = self.config.encoder.filter_len;
        self.context.clear();
        self.scnn.reset();
        self.srnn.reset();
        self.readout.fill(T::zero());
        self.tail.fill(T::zero());
        self.frames_processed = 0;
    }

    pub fn frames_processed(&self) -> usize {
        self.frames_processed
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Feeds samples and returns every output sample that became final.
    pub fn push_samples(&mut self, model: &DpsnnModel<T>, samples: &[T]) -> Result<Vec<T>> {
        if model.config != self.config {
            return Err(Error::Config("stream state was built for a different model config".into()));
        }
        let (l, stride) = (self.config.encoder.filter_len, self.config.encoder.stride);
        let mut out = Vec::with_capacity(samples.len() + stride);
        for &x in samples {
            if !x.is_finite() {
                return Err(Error::NonFinite("input sample"));
            }
            if self.window.len() == l {
                self.window.drain(..1);
            }
            self.window.push(x);
            self.until_frame -= 1;
            if self.until_frame == 0 {
                self.process_frame(model);
                out.extend_from_slice(&self.tail[..stride]);
                self.tail.copy_within(stride.., 0);
                let keep = l - stride;
                self.tail[keep..].fill(T::zero());
                self.until_frame = stride;
            }
        }
        Ok(out)
    }

    /// Output samples covered by processed frames but not yet emitted
    /// (the last `L - stride` samples of the offline output). Does not
    /// change the state.
    pub fn pending_tail(&self) -> Vec<T> {
        if self.frames_processed == 0 {
            return Vec::new();
        }
        let (l, stride) = (self.config.encoder.filter_len, self.config.encoder.stride);
        self.tail[..l - stride].to_vec()
    }

    fn process_frame(&mut self, model: &DpsnnModel<T>) {
        let cfg = &self.config;
        let (n, l) = (cfg.encoder.channels, cfg.encoder.filter_len);
        let (b, h, k) = (cfg.separator.bottleneck, cfg.separator.hidden, cfg.separator.context);
        let s = &mut self.scratch;
        let spike_gate = SpikeFn::new(SpikeMode::Heaviside, SurrogateKind::Arctan);

        // Encoder + ReLU.
        let enc = model.encoder.data();
        for o in 0..n {
            let mut acc = T::zero();
            for kk in 0..l {
                acc += enc[o * l + kk] * self.window[kk];
            }
            s.features[o] = Unary::Relu.apply(acc);
        }

        normalize_column(
            &s.features,
            model.norm_gain.data(),
            model.norm_bias.data(),
            T::lit(cfg.norm_eps),
            &mut s.normed,
        );

        // Bottleneck 1x1 conv, then the binarizing gate.
        let bw = model.bottleneck_weight.data();
        let bn_thr = model.bottleneck_threshold.data()[0];
        let mut binarized = vec![T::zero(); b];
        for o in 0..b {
            let mut acc = T::zero();
            for i in 0..n {
                acc += bw[o * n + i] * s.normed[i];
            }
            acc += model.bottleneck_bias.data()[o];
            s.bottleneck[o] = acc;
            binarized[o] = gate_value(acc, bn_thr, GateMode::Binarize, &spike_gate);
        }

        // Grouped causal conv over the last K binarized frames.
        let per_group = h / b;
        let sw = model.scnn_weight.data();
        for o in 0..h {
            let g = o / per_group;
            let mut acc = T::zero();
            for kk in 0..k {
                let back = k - 1 - kk;
                let v = if back == 0 {
                    binarized[g]
                } else if back <= self.context.len() {
                    self.context[self.context.len() - back][g]
                } else {
                    continue;
                };
                acc += sw[o * k + kk] * v;
            }
            acc += model.scnn_bias.data()[o];
            s.current_h[o] = acc;
        }
        self.context.push_back(binarized);
        if self.context.len() > k - 1 {
            self.context.pop_front();
        }
        let plif_spike = SpikeFn::new(SpikeMode::Heaviside, SurrogateKind::Arctan);
        let inv_tau = crate::scalar::sigmoid(model.scnn_plif_a.data()[0]);
        neurons::plif_column(
            &mut self.scnn,
            &s.current_h,
            inv_tau,
            T::lit(cfg.plif_theta),
            &plif_spike,
            &mut s.spikes_h,
            None,
        );

        // Recurrent ALIF layer.
        let win = model.srnn_w_in.data();
        for o in 0..b {
            let mut acc = T::zero();
            for i in 0..h {
                acc += win[o * h + i] * s.spikes_h[i];
            }
            acc += model.srnn_bias.data()[o];
            s.current_b[o] = acc;
        }
        neurons::recurrent_current(&s.current_b, model.srnn_w_rec.data(), &self.srnn.s_prev, &mut s.total_b);
        let alif_spike = SpikeFn::new(SpikeMode::Heaviside, SurrogateKind::MultiGaussian);
        let (b0, beta) = (T::lit(cfg.alif_b0), T::lit(cfg.alif_beta));
        for j in 0..b {
            let alpha = (-T::one() / model.srnn_tau_m.data()[j]).exp();
            let rho = (-T::one() / model.srnn_tau_adp.data()[j]).exp();
            neurons::alif_update(&mut self.srnn, j, s.total_b[j], alpha, rho, b0, beta, &alif_spike);
        }

        // Leaky readout, then the pass-above gate.
        let rw = model.readout_weight.data();
        let c = T::one() / model.readout_tau.data()[0];
        let ro_thr = model.readout_threshold.data()[0];
        for o in 0..b {
            let mut acc = T::zero();
            for i in 0..b {
                acc += rw[o * b + i] * self.srnn.s_prev[i];
            }
            acc += model.readout_bias.data()[o];
            self.readout[o] = neurons::leaky_charge(self.readout[o], acc, c);
            s.suppressed[o] = gate_value(self.readout[o], ro_thr, GateMode::PassAbove, &spike_gate);
        }

        // Mask head and masking.
        let mw = model.mask_weight.data();
        for o in 0..n {
            let mut acc = T::zero();
            for i in 0..b {
                acc += mw[o * b + i] * s.suppressed[i];
            }
            acc += model.mask_bias.data()[o];
            s.masked[o] = Unary::Sigmoid.apply(acc) * s.features[o];
        }

        // Overlap-add decoder.
        let dw = model.decoder.data();
        for kk in 0..l {
            let mut v = T::zero();
            for ci in 0..n {
                v += s.masked[ci] * dw[ci * l + kk];
            }
            self.tail[kk] += v;
        }
        self.frames_processed += 1;
    }
}

/// Runs a whole clip through a fresh stream in chunks of `chunk` samples and
/// appends the pending tail, reproducing the offline output layout.
pub fn stream_clip<T: Scalar>(model: &DpsnnModel<T>, samples: &[T], chunk: usize) -> Result<Vec<T>> {
    let mut state = StreamState::new(model);
    let mut out = Vec::with_capacity(samples.len() + model.config.encoder.filter_len);
    for piece in samples.chunks(chunk.max(1)) {
        out.extend(state.push_samples(model, piece)?);
    }
    out.extend(state.pending_tail());
    Ok(out)
}
