use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{ModelConfig, SpikeStats};
use crate::stream::latency;

/// Operation counts behind a [`PowerReport`], before rate normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct OpCounts {
    /// Event-driven synaptic operations: each nonzero input fans out to
    /// its downstream connections.
    pub event_ops: f64,
    /// Multiply-accumulates of real-valued layers inside the separator.
    pub dense_ops: f64,
    /// Encoder and decoder multiply-accumulates.
    pub codec_ops: f64,
    pub neuron_updates: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerReport {
    pub synops_per_s: f64,
    pub neuron_updates_per_s: f64,
    pub power_proxy: f64,
    /// `power_proxy` times the algorithmic latency in seconds.
    pub pdp_proxy: f64,
    pub excludes_codec: bool,
}

/// Counts operations for the recorded activity.
///
/// * bottleneck events fan out to the `H / B` SCNN filters of their group,
///   `K` taps each;
/// * SCNN spikes fan out to the `B` SRNN input weights;
/// * SRNN spikes fan out to `B` recurrent and `B` readout weights;
/// * nonzero readout values fan out to the `N` mask channels;
/// * the 1x1 bottleneck on real-valued normalized features is dense;
/// * each SCNN, SRNN and readout unit is updated once per frame.
pub fn count_ops(stats: &SpikeStats, cfg: &ModelConfig) -> OpCounts {
    let n = cfg.encoder.channels as f64;
    let l = cfg.encoder.filter_len as f64;
    let b = cfg.separator.bottleneck as f64;
    let h = cfg.separator.hidden as f64;
    let k = cfg.separator.context as f64;
    let frames = stats.frames as f64;
    OpCounts {
        event_ops: stats.bottleneck_events as f64 * (h / b) * k
            + stats.scnn_spikes as f64 * b
            + stats.srnn_spikes as f64 * 2.0 * b
            + stats.readout_events as f64 * n,
        dense_ops: frames * n * b,
        codec_ops: frames * 2.0 * n * l,
        neuron_updates: frames * (h + 2.0 * b),
    }
}

/// Effective synaptic operations per second of audio, and its product with
/// the model's algorithmic latency.
pub fn power_proxy(stats: &SpikeStats, cfg: &ModelConfig, audio_seconds: f64, excludes_codec: bool) -> Result<PowerReport> {
    if !(audio_seconds > 0.0 && audio_seconds.is_finite()) {
        return Err(Error::Config(format!("power proxy needs a positive duration, got {audio_seconds}")));
    }
    let ops = count_ops(stats, cfg);
    let mut synops = ops.event_ops + ops.dense_ops;
    if !excludes_codec {
        synops += ops.codec_ops;
    }
    let synops_per_s = synops / audio_seconds;
    let latency_s = latency(&cfg.encoder, cfg.sample_rate)?.algorithmic_ms / 1000.0;
    Ok(PowerReport {
        synops_per_s,
        neuron_updates_per_s: ops.neuron_updates / audio_seconds,
        power_proxy: synops_per_s,
        pdp_proxy: synops_per_s * latency_s,
        excludes_codec,
    })
}
