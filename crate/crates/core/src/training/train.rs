use serde::Serialize;

use super::adam::{adam_step, clip_grad_norm, AdamConfig, AdamMoments};
use super::loss::{loss, LossBreakdown, LossConfig};
use super::synth::{synth_batch, Mixture, SynthSpec};
use crate::error::{Error, Result};
use crate::metrics::si_snr;
use crate::network::{DpsnnModel, ForwardOptions, SpikeStats};
use crate::scalar::Scalar;
use crate::tensor::{ops, Array, Tape};

/// Lower bound kept on every learnable time constant after each update.
pub const TAU_MIN: f64 = 1.001;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// Size of the fixed held-out set scored after every epoch.
    pub val_clips: usize,
    pub lr: f64,
    /// Global gradient-norm limit.
    pub clip_norm: f64,
    /// Epochs without validation improvement before the rate is halved.
    pub plateau_patience: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub synth: SynthSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            steps_per_epoch: 25,
            batch_size: 4,
            val_clips: 16,
            lr: 1e-2,
            clip_norm: 5.0,
            plateau_patience: 3,
            seed: 0,
            loss: LossConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_epoch == 0 || self.batch_size == 0 || self.val_clips == 0 {
            return Err(Error::Config("steps_per_epoch, batch_size and val_clips must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        self.loss.validate()?;
        self.synth.validate()
    }
}

/// One line of the training history. Field order is the on-disk order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_neg_si_snr: f64,
    pub train_mse: f64,
    pub train_l1_bn: f64,
    pub train_l1_ro: f64,
    pub grad_norm: f64,
    pub val_si_snr: f64,
    pub val_si_snri: f64,
    pub spike_density: f64,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain numeric record")
    }
}

/// Held-out scores of a model on fixed mixtures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub si_snr: f64,
    pub si_snri: f64,
    pub stats: SpikeStats,
    /// Mean absolute suppressed bottleneck and readout activity.
    pub l1_bn: f64,
    pub l1_ro: f64,
}

fn stack<T: Scalar>(clips: &[&[T]]) -> Result<Array<T>> {
    let t = clips[0].len();
    let mut data = Vec::with_capacity(clips.len() * t);
    for c in clips {
        if c.len() != t {
            return Err(Error::dim("clips in a batch must share one length"));
        }
        data.extend_from_slice(c);
    }
    Array::new(&[clips.len(), 1, t], data)
}

/// Offline enhancement of every mixture, scored against its clean signal.
pub fn evaluate<T: Scalar>(model: &DpsnnModel<T>, set: &[Mixture<T>]) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let mut stats = SpikeStats::default();
    let (mut snr, mut snri, mut l1_bn, mut l1_ro) = (0.0, 0.0, 0.0, 0.0);
    for m in set {
        let wave = stack(&[&m.noisy])?;
        let out = model.forward(&wave)?;
        let enhanced = ops::fit_time_forward(&out.enhanced, m.noisy.len())?;
        let s = si_snr(enhanced.data(), &m.clean)?.value_db;
        snr += s;
        snri += s - si_snr(&m.noisy, &m.clean)?.value_db;
        l1_bn += mean_abs(&out.bn_suppressed);
        l1_ro += mean_abs(&out.ro_suppressed);
        stats.merge(&out.stats);
    }
    let n = set.len() as f64;
    Ok(Evaluation {
        si_snr: snr / n,
        si_snri: snri / n,
        stats,
        l1_bn: l1_bn / n,
        l1_ro: l1_ro / n,
    })
}

fn mean_abs<T: Scalar>(a: &Array<T>) -> f64 {
    a.data().iter().map(|v| v.as_f64().abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Seed of the held-out set for a run seed.
pub fn validation_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f_da7a
}

fn batch_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((epoch as u64) << 32).wrapping_add(step as u64)
}

/// Clamps learnable time constants into their valid range.
pub fn project_constraints<T: Scalar>(model: &mut DpsnnModel<T>) {
    let min = T::lit(TAU_MIN);
    for tau in [&mut model.srnn_tau_m, &mut model.srnn_tau_adp, &mut model.readout_tau] {
        tau.data_mut().iter_mut().for_each(|v| {
            if !(*v >= min) {
                *v = min;
            }
        });
    }
}

/// Forward, loss and gradients of one batch; returns the loss terms and
/// the per-tensor gradients in parameter order.
pub fn batch_gradients<T: Scalar>(
    model: &DpsnnModel<T>,
    noisy: &Array<T>,
    clean: &Array<T>,
    cfg: &LossConfig,
    options: &ForwardOptions<T>,
) -> Result<(LossBreakdown, Vec<Array<T>>, SpikeStats)> {
    let (_, _, len) = clean.dims3()?;
    let mut tape = Tape::new();
    let x = tape.constant(noisy.clone());
    let graph = model.record(&mut tape, x, options)?;
    let enhanced = ops::fit_time(&mut tape, graph.enhanced, len)?;
    let (l, breakdown) = loss(&mut tape, enhanced, clean, graph.bn_suppressed, graph.ro_suppressed, cfg)?;
    let stats = graph.spike_stats(&tape);
    let grads = tape.backward(l)?;
    let grads = graph.params.iter().map(|&p| grads.get(p)).collect();
    Ok((breakdown, grads, stats))
}

/// Mini-batch BPTT training on freshly synthesized mixtures. `on_epoch`
/// sees each history record as soon as it is complete. On return `model`
/// holds the parameters with the best validation SI-SNR.
pub fn train<T: Scalar>(
    model: &mut DpsnnModel<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let val = synth_batch::<T>(&cfg.synth, cfg.val_clips, validation_seed(cfg.seed))?;
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|(_, a)| a.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut moments = AdamMoments::new(&shape_refs);
    let adam = AdamConfig::default();
    let options = ForwardOptions::default();
    let mut lr = cfg.lr;
    let mut best = f64::NEG_INFINITY;
    let mut best_state = (model.clone(), moments.clone());
    let mut stale = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut sum = LossBreakdown::default();
        let mut norm_sum = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let batch = synth_batch::<T>(&cfg.synth, cfg.batch_size, batch_seed(cfg.seed, epoch, step))?;
            let noisy = stack(&batch.iter().map(|m| m.noisy.as_slice()).collect::<Vec<_>>())?;
            let clean = stack(&batch.iter().map(|m| m.clean.as_slice()).collect::<Vec<_>>())?;
            let (terms, mut grads, _) = batch_gradients(model, &noisy, &clean, &cfg.loss, &options).map_err(|e| match e {
                Error::NonFinite(what) => Error::Diverged(format!("non-finite {what} at epoch {epoch}, step {step}")),
                other => other,
            })?;
            if let Some((name, _)) = model.params().iter().zip(&grads).find(|(_, g)| !g.is_finite()).map(|(p, _)| *p) {
                return Err(Error::Diverged(format!("non-finite gradient of {name} at epoch {epoch}, step {step}")));
            }
            norm_sum += clip_grad_norm(&mut grads, cfg.clip_norm);
            let mut params: Vec<&mut Array<T>> = model.params_mut().into_iter().map(|(_, a)| a).collect();
            adam_step(&mut params, &grads, &mut moments, lr, &adam)?;
            project_constraints(model);
            sum.total += terms.total;
            sum.neg_si_snr += terms.neg_si_snr;
            sum.mse += terms.mse;
            sum.l1_bn += terms.l1_bn;
            sum.l1_ro += terms.l1_ro;
        }
        let eval = evaluate(model, &val)?;
        if !eval.si_snr.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation score at epoch {epoch}")));
        }
        let steps = cfg.steps_per_epoch as f64;
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: sum.total / steps,
            train_neg_si_snr: sum.neg_si_snr / steps,
            train_mse: sum.mse / steps,
            train_l1_bn: sum.l1_bn / steps,
            train_l1_ro: sum.l1_ro / steps,
            grad_norm: norm_sum / steps,
            val_si_snr: eval.si_snr,
            val_si_snri: eval.si_snri,
            spike_density: eval.stats.spike_density(&model.config),
        };
        on_epoch(&record)?;
        history.push(record);

        if eval.si_snr > best + 1e-3 {
            best = eval.si_snr;
            best_state = (model.clone(), moments.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience.max(1) {
                // A plateau is often a recurrent-gradient blow-up that has
                // already damaged the weights, so resume from the best point.
                lr *= 0.5;
                (*model, moments) = best_state.clone();
                stale = 0;
            }
        }
    }
    if best.is_finite() {
        *model = best_state.0;
    }
    Ok(history)
}
