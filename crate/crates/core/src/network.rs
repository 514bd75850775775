//! The assembled DPSNN: encoder -> layer norm -> bottleneck -> binarize ->
//! SCNN -> SRNN -> readout -> pass-above suppression -> mask head ->
//! mask * features -> decoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::layers::{self, EncoderConfig, ReadoutVars, ScnnVars, SeparatorConfig, SrnnVars};
use crate::neurons::Dynamics;
use crate::scalar::Scalar;
use crate::tensor::ops::{self, ConvSpec};
use crate::tensor::{Array, Tape, Var};

/// Architecture and fixed neuron constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub separator: SeparatorConfig,
    pub sample_rate: u32,
    /// PLIF firing threshold.
    pub plif_theta: f64,
    /// ALIF minimal threshold.
    pub alif_b0: f64,
    /// ALIF adaptation strength.
    pub alif_beta: f64,
    pub norm_eps: f64,
}

impl ModelConfig {
    /// Config with 50% frame overlap and the default neuron constants.
    pub fn new(n: usize, b: usize, h: usize, filter_len: usize, context: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::half_overlap(filter_len, n),
            separator: SeparatorConfig {
                bottleneck: b,
                hidden: h,
                context,
            },
            sample_rate: 16_000,
            plif_theta: 1.0,
            alif_b0: 0.1,
            alif_beta: 1.8,
            norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.separator.validate()?;
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.alif_beta >= 0.0) || !self.alif_b0.is_finite() || !(self.norm_eps > 0.0) {
            return Err(Error::Config("invalid neuron constants".into()));
        }
        Ok(())
    }
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct DpsnnModel<T> {
    pub config: ModelConfig,
    /// `[N, 1, L]`
    pub encoder: Array<T>,
    /// `[N, 1, L]`
    pub decoder: Array<T>,
    pub norm_gain: Array<T>,
    pub norm_bias: Array<T>,
    /// `[B, N, 1]`
    pub bottleneck_weight: Array<T>,
    pub bottleneck_bias: Array<T>,
    pub bottleneck_threshold: Array<T>,
    /// `[H, 1, K]`
    pub scnn_weight: Array<T>,
    pub scnn_bias: Array<T>,
    pub scnn_plif_a: Array<T>,
    /// `[B, H, 1]`
    pub srnn_w_in: Array<T>,
    pub srnn_bias: Array<T>,
    /// `[B, B]`
    pub srnn_w_rec: Array<T>,
    pub srnn_tau_m: Array<T>,
    pub srnn_tau_adp: Array<T>,
    /// `[B, B, 1]`
    pub readout_weight: Array<T>,
    pub readout_bias: Array<T>,
    pub readout_tau: Array<T>,
    pub readout_threshold: Array<T>,
    /// `[N, B, 1]`
    pub mask_weight: Array<T>,
    pub mask_bias: Array<T>,
}

/// Learnable scalar counts per layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub per_layer: Vec<(&'static str, usize)>,
    pub total: usize,
}

macro_rules! param_table {
    ($self:ident, $($name:literal => $field:ident),* $(,)?) => {
        pub fn params(&$self) -> Vec<(&'static str, &Array<T>)> {
            vec![$(($name, &$self.$field)),*]
        }

        pub fn params_mut(&mut $self) -> Vec<(&'static str, &mut Array<T>)> {
            vec![$(($name, &mut $self.$field)),*]
        }
    };
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Array<T> {
    Array::from_fn(shape, |_| T::lit(rng.random_range(-bound..=bound)))
}

fn clamped_normal<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, mean: f64, std: f64) -> Array<T> {
    let dist = Normal::new(mean, std).expect("positive std");
    Array::from_fn(&[n], |_| T::lit(dist.sample(rng).max(1.0 + 1e-3)))
}

impl<T: Scalar> DpsnnModel<T> {
    param_table!(self,
        "encoder.weight" => encoder,
        "decoder.weight" => decoder,
        "norm.gain" => norm_gain,
        "norm.bias" => norm_bias,
        "bottleneck.weight" => bottleneck_weight,
        "bottleneck.bias" => bottleneck_bias,
        "bottleneck.threshold" => bottleneck_threshold,
        "scnn.weight" => scnn_weight,
        "scnn.bias" => scnn_bias,
        "scnn.plif_a" => scnn_plif_a,
        "srnn.w_in" => srnn_w_in,
        "srnn.bias" => srnn_bias,
        "srnn.w_rec" => srnn_w_rec,
        "srnn.tau_m" => srnn_tau_m,
        "srnn.tau_adp" => srnn_tau_adp,
        "readout.weight" => readout_weight,
        "readout.bias" => readout_bias,
        "readout.tau" => readout_tau,
        "readout.threshold" => readout_threshold,
        "mask.weight" => mask_weight,
        "mask.bias" => mask_bias,
    );

    /// Seeded initialization. Linear and conv maps are uniform with a
    /// fan-in scaled bound (He-uniform for feed-forward maps driving spiking
    /// neurons); biases, thresholds and the PLIF parameter start at zero.
    ///
    /// The recurrent matrix gets the smaller `1/sqrt(fan_in)` bound: with the
    /// He bound its spectral radius is about 1.4, and times the surrogate
    /// peak that makes the backward recurrence expanding.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, l) = (config.encoder.channels, config.encoder.filter_len);
        let (b, h, k) = (config.separator.bottleneck, config.separator.hidden, config.separator.context);
        let lecun = |fan_in: usize| (1.0 / fan_in as f64).sqrt();
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        let model = DpsnnModel {
            config,
            encoder: uniform(&mut rng, &[n, 1, l], lecun(l)),
            decoder: uniform(&mut rng, &[n, 1, l], lecun(n)),
            norm_gain: Array::full(&[n], T::one()),
            norm_bias: Array::zeros(&[n]),
            bottleneck_weight: uniform(&mut rng, &[b, n, 1], lecun(n)),
            bottleneck_bias: Array::zeros(&[b]),
            bottleneck_threshold: Array::scalar(T::zero()),
            scnn_weight: uniform(&mut rng, &[h, 1, k], he(k)),
            scnn_bias: Array::zeros(&[h]),
            scnn_plif_a: Array::scalar(T::zero()),
            srnn_w_in: uniform(&mut rng, &[b, h, 1], he(h)),
            srnn_bias: Array::zeros(&[b]),
            srnn_w_rec: uniform(&mut rng, &[b, b], lecun(b)),
            srnn_tau_m: clamped_normal(&mut rng, b, 20.0, 5.0),
            srnn_tau_adp: clamped_normal(&mut rng, b, 200.0, 50.0),
            readout_weight: uniform(&mut rng, &[b, b, 1], lecun(b)),
            readout_bias: Array::zeros(&[b]),
            readout_tau: Array::scalar(T::lit(2.0)),
            readout_threshold: Array::scalar(T::zero()),
            mask_weight: uniform(&mut rng, &[n, b, 1], lecun(b)),
            mask_bias: Array::zeros(&[n]),
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Verifies the N -> B -> H -> B -> N channel flow of every tensor.
    pub fn check_shapes(&self) -> Result<()> {
        let (n, l) = (self.config.encoder.channels, self.config.encoder.filter_len);
        let (b, h, k) = (
            self.config.separator.bottleneck,
            self.config.separator.hidden,
            self.config.separator.context,
        );
        let expected: [(&str, Vec<usize>); 21] = [
            ("encoder.weight", vec![n, 1, l]),
            ("decoder.weight", vec![n, 1, l]),
            ("norm.gain", vec![n]),
            ("norm.bias", vec![n]),
            ("bottleneck.weight", vec![b, n, 1]),
            ("bottleneck.bias", vec![b]),
            ("bottleneck.threshold", vec![1]),
            ("scnn.weight", vec![h, 1, k]),
            ("scnn.bias", vec![h]),
            ("scnn.plif_a", vec![1]),
            ("srnn.w_in", vec![b, h, 1]),
            ("srnn.bias", vec![b]),
            ("srnn.w_rec", vec![b, b]),
            ("srnn.tau_m", vec![b]),
            ("srnn.tau_adp", vec![b]),
            ("readout.weight", vec![b, b, 1]),
            ("readout.bias", vec![b]),
            ("readout.tau", vec![1]),
            ("readout.threshold", vec![1]),
            ("mask.weight", vec![n, b, 1]),
            ("mask.bias", vec![n]),
        ];
        for ((name, arr), (ename, shape)) in self.params().into_iter().zip(expected.iter()) {
            debug_assert_eq!(name, *ename);
            if arr.shape() != shape.as_slice() {
                return Err(Error::dim(format!("{name} has shape {:?}, expected {shape:?}", arr.shape())));
            }
        }
        Ok(())
    }

    pub fn count_params(&self) -> ParamCount {
        let mut per_layer: Vec<(&'static str, usize)> = Vec::new();
        for (name, arr) in self.params() {
            let layer = match name.split('.').next().unwrap() {
                "encoder" => "encoder",
                "decoder" => "decoder",
                "norm" => "layernorm",
                "bottleneck" => "bottleneck",
                "scnn" => "scnn",
                "srnn" => "srnn",
                "readout" => "readout",
                _ => "mask",
            };
            match per_layer.iter_mut().find(|(l, _)| *l == layer) {
                Some((_, c)) => *c += arr.len(),
                None => per_layer.push((layer, arr.len())),
            }
        }
        let total = per_layer.iter().map(|(_, c)| c).sum();
        ParamCount { per_layer, total }
    }

    pub fn cast<U: Scalar>(&self) -> DpsnnModel<U> {
        DpsnnModel {
            config: self.config,
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            norm_gain: self.norm_gain.cast(),
            norm_bias: self.norm_bias.cast(),
            bottleneck_weight: self.bottleneck_weight.cast(),
            bottleneck_bias: self.bottleneck_bias.cast(),
            bottleneck_threshold: self.bottleneck_threshold.cast(),
            scnn_weight: self.scnn_weight.cast(),
            scnn_bias: self.scnn_bias.cast(),
            scnn_plif_a: self.scnn_plif_a.cast(),
            srnn_w_in: self.srnn_w_in.cast(),
            srnn_bias: self.srnn_bias.cast(),
            srnn_w_rec: self.srnn_w_rec.cast(),
            srnn_tau_m: self.srnn_tau_m.cast(),
            srnn_tau_adp: self.srnn_tau_adp.cast(),
            readout_weight: self.readout_weight.cast(),
            readout_bias: self.readout_bias.cast(),
            readout_tau: self.readout_tau.cast(),
            readout_threshold: self.readout_threshold.cast(),
            mask_weight: self.mask_weight.cast(),
            mask_bias: self.mask_bias.cast(),
        }
    }

    /// Records the full pipeline for `wave[B,1,T]` on `tape`, registering
    /// every parameter as a trainable leaf.
    pub fn record(&self, tape: &mut Tape<T>, wave: Var, options: &ForwardOptions<T>) -> Result<Graph> {
        let cfg = &self.config;
        let (_, _, samples) = tape.value(wave).dims3()?;
        cfg.encoder.frames(samples)?;
        let params: Vec<Var> = self.params().into_iter().map(|(_, a)| tape.param(a.clone())).collect();
        let p = |i: usize| params[i];
        let dyn_ = options.dynamics;

        let features = layers::encode(tape, wave, p(0), &cfg.encoder)?;
        let normed = ops::channel_layernorm(tape, features, p(2), p(3), T::lit(cfg.norm_eps))?;
        let bottleneck = ops::conv1d(tape, normed, p(4), Some(p(5)), ConvSpec::pointwise())?;
        let bn_suppressed = layers::suppress_binarize(tape, bottleneck, p(6), dyn_)?;
        let scnn = layers::scnn_forward(
            tape,
            bn_suppressed,
            ScnnVars {
                kernel: p(7),
                bias: p(8),
                plif_a: p(9),
            },
            &cfg.separator,
            T::lit(cfg.plif_theta),
            dyn_,
        )?;
        let srnn = layers::srnn_forward(
            tape,
            scnn,
            SrnnVars {
                w_in: p(10),
                bias: p(11),
                w_rec: p(12),
                tau_m: p(13),
                tau_adp: p(14),
            },
            T::lit(cfg.alif_b0),
            T::lit(cfg.alif_beta),
            dyn_,
        )?;
        let readout = layers::readout_forward(
            tape,
            srnn,
            ReadoutVars {
                weight: p(15),
                bias: p(16),
                tau: p(17),
            },
        )?;
        let ro_suppressed = layers::suppress_pass_above(tape, readout, p(18), dyn_)?;
        let mask = match options.mask_override {
            Some(v) => tape.constant(Array::full(tape.value(features).shape(), v)),
            None => layers::mask_head(tape, ro_suppressed, p(19), p(20))?,
        };
        let masked = ops::mul(tape, mask, features)?;
        let enhanced = layers::decode(tape, masked, p(1), &cfg.encoder)?;
        Ok(Graph {
            params,
            features,
            bn_suppressed,
            scnn_spikes: scnn,
            srnn_spikes: srnn,
            readout,
            ro_suppressed,
            mask,
            enhanced,
        })
    }

    /// Offline inference on `wave[B,1,T]`.
    pub fn forward(&self, wave: &Array<T>) -> Result<ForwardOutput<T>> {
        self.forward_with(wave, &ForwardOptions::default())
    }

    pub fn forward_with(&self, wave: &Array<T>, options: &ForwardOptions<T>) -> Result<ForwardOutput<T>> {
        wave.ensure_finite("input waveform")?;
        let mut tape = Tape::new();
        let w = tape.constant(wave.clone());
        let g = self.record(&mut tape, w, options)?;
        let stats = g.spike_stats(&tape);
        Ok(ForwardOutput {
            enhanced: tape.value(g.enhanced).clone(),
            mask: tape.value(g.mask).clone(),
            bn_suppressed: tape.value(g.bn_suppressed).clone(),
            ro_suppressed: tape.value(g.ro_suppressed).clone(),
            stats,
        })
    }

    /// Enhances a single mono clip and trims/pads the result to its length.
    pub fn enhance(&self, samples: &[T]) -> Result<Vec<T>> {
        let wave = Array::new(&[1, 1, samples.len()], samples.to_vec())?;
        let out = self.forward(&wave)?;
        Ok(ops::fit_time_forward(&out.enhanced, samples.len())?.into_data())
    }
}

/// Knobs of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions<T> {
    pub dynamics: Dynamics,
    /// Replaces the separator's mask with a constant.
    pub mask_override: Option<T>,
}

impl<T> Default for ForwardOptions<T> {
    fn default() -> Self {
        ForwardOptions {
            dynamics: Dynamics::default(),
            mask_override: None,
        }
    }
}

/// Vars of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct Graph {
    /// One leaf per tensor, in [`DpsnnModel::params`] order.
    pub params: Vec<Var>,
    pub features: Var,
    pub bn_suppressed: Var,
    pub scnn_spikes: Var,
    pub srnn_spikes: Var,
    pub readout: Var,
    pub ro_suppressed: Var,
    pub mask: Var,
    pub enhanced: Var,
}

impl Graph {
    pub fn spike_stats<T: Scalar>(&self, tape: &Tape<T>) -> SpikeStats {
        let features = tape.value(self.features);
        let (batch, _, frames) = features.dims3().expect("rank-3 features");
        SpikeStats {
            frames: batch * frames,
            bottleneck_events: tape.value(self.bn_suppressed).count_nonzero(),
            scnn_spikes: tape.value(self.scnn_spikes).count_nonzero(),
            srnn_spikes: tape.value(self.srnn_spikes).count_nonzero(),
            readout_events: tape.value(self.ro_suppressed).count_nonzero(),
        }
    }
}

/// Event counts gathered during one forward pass (summed over the batch).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpikeStats {
    /// Separator time steps processed (frames x batch).
    pub frames: usize,
    /// Ones after the binarizing bottleneck gate.
    pub bottleneck_events: usize,
    pub scnn_spikes: usize,
    pub srnn_spikes: usize,
    /// Nonzero readout activations after the pass-above gate.
    pub readout_events: usize,
}

impl SpikeStats {
    pub fn merge(&mut self, other: &SpikeStats) {
        self.frames += other.frames;
        self.bottleneck_events += other.bottleneck_events;
        self.scnn_spikes += other.scnn_spikes;
        self.srnn_spikes += other.srnn_spikes;
        self.readout_events += other.readout_events;
    }

    /// Fraction of binary units (binarized bottleneck, SCNN, SRNN) that are
    /// active per step.
    pub fn spike_density(&self, cfg: &ModelConfig) -> f64 {
        let units = 2 * cfg.separator.bottleneck + cfg.separator.hidden;
        if self.frames == 0 {
            return 0.0;
        }
        (self.bottleneck_events + self.scnn_spikes + self.srnn_spikes) as f64 / (self.frames * units) as f64
    }
}

/// Result of an offline forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    /// `[B, 1, (frames-1)*stride + L]`
    pub enhanced: Array<T>,
    pub mask: Array<T>,
    pub bn_suppressed: Array<T>,
    pub ro_suppressed: Array<T>,
    pub stats: SpikeStats,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_reproducible() {
        let cfg = ModelConfig::new(8, 4, 8, 16, 4);
        let a = DpsnnModel::<f64>::init(cfg, 7).unwrap();
        let b = DpsnnModel::<f64>::init(cfg, 7).unwrap();
        let c = DpsnnModel::<f64>::init(cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.check_shapes().unwrap();
    }

    #[test]
    fn init_rejects_bad_channel_relation() {
        let cfg = ModelConfig::new(8, 3, 8, 16, 4);
        assert!(matches!(DpsnnModel::<f64>::init(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn count_total_is_sum_of_layers() {
        let m = DpsnnModel::<f32>::init(ModelConfig::new(16, 8, 16, 16, 4), 1).unwrap();
        let c = m.count_params();
        assert_eq!(c.total, c.per_layer.iter().map(|(_, n)| n).sum::<usize>());
        assert_eq!(c.total, m.params().iter().map(|(_, a)| a.len()).sum::<usize>());
    }

    #[test]
    fn alif_constants_are_clamped_above_one() {
        let m = DpsnnModel::<f64>::init(ModelConfig::new(8, 64, 64, 16, 4), 3).unwrap();
        assert!(m.srnn_tau_m.data().iter().all(|&t| t > 1.0));
        assert!(m.srnn_tau_adp.data().iter().all(|&t| t > 1.0));
    }
}
