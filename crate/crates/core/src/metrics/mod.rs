//! Objective metrics: SI-SNR, STOI and the synaptic-operation power proxy.

mod power;
mod si_snr;
mod stoi;

pub(crate) use si_snr::Decomposition;

pub use power::{count_ops, power_proxy, OpCounts, PowerReport};
pub use si_snr::{si_snr, si_snri, SiSnrResult, SI_SNR_CAP_DB, SI_SNR_EPS, SI_SNR_FLOOR_DB};
pub use stoi::{stoi, STOI_DEGENERATE};

use serde::Serialize;

/// One row of an evaluation report. Field order is the on-disk order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub file: String,
    pub si_snr: f64,
    pub si_snri: f64,
    pub stoi: f64,
    pub power_proxy: f64,
    pub pdp_proxy: f64,
    pub latency_ms: f64,
    pub pesq: &'static str,
    pub dnsmos: &'static str,
}

/// Marker for metrics this crate does not compute.
pub const UNAVAILABLE: &str = "unavailable";

impl MetricRecord {
    /// Field-wise mean of `rows`, labelled `file`.
    pub fn mean(file: &str, rows: &[MetricRecord]) -> Option<MetricRecord> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricRecord) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Some(MetricRecord {
            file: file.to_string(),
            si_snr: avg(|r| r.si_snr),
            si_snri: avg(|r| r.si_snri),
            stoi: avg(|r| r.stoi),
            power_proxy: avg(|r| r.power_proxy),
            pdp_proxy: avg(|r| r.pdp_proxy),
            latency_ms: avg(|r| r.latency_ms),
            pesq: UNAVAILABLE,
            dnsmos: UNAVAILABLE,
        })
    }
}
