use dpsnn::metrics::{count_ops, power_proxy, si_snr, si_snri, stoi, SI_SNR_CAP_DB, SI_SNR_EPS};
use dpsnn::training::{synth_batch, NoiseKind, SynthSpec};
use dpsnn::{Array, Model64, ModelConfig, SpikeStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: u32 = 16_000;

fn random(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn si_snr_is_scale_invariant() {
    let reference = random(1, 4000);
    let noise = random(2, 4000);
    let est: Vec<f64> = reference.iter().zip(&noise).map(|(r, n)| r + 0.3 * n).collect();
    let base = si_snr(&est, &reference).unwrap();
    assert!(!base.capped);
    for k in [-6, -1, 1, 3, 10] {
        let a = 2f64.powi(k);
        let scaled: Vec<f64> = est.iter().map(|v| v * a).collect();
        assert_eq!(si_snr(&scaled, &reference).unwrap().value_db, base.value_db, "2^{k}");
    }
    for a in [0.37, 7.3, 1e-3, 250.0] {
        let scaled: Vec<f64> = est.iter().map(|v| v * a).collect();
        let v = si_snr(&scaled, &reference).unwrap().value_db;
        assert!((v - base.value_db).abs() < 1e-12, "{a}: {v} vs {}", base.value_db);
    }
    // Offsets vanish with mean removal.
    let shifted: Vec<f64> = est.iter().map(|v| v + 0.5).collect();
    assert!((si_snr(&shifted, &reference).unwrap().value_db - base.value_db).abs() < 1e-12);
}

#[test]
fn si_snr_matches_exact_integer_oracle() {
    // Integer inputs: with x' = 8x - sum(x) every energy below is an
    // integer well under 2^53, so the ratio is formed without rounding.
    let est: [i64; 8] = [3, -1, 4, 1, -5, 9, 2, -6];
    let reference: [i64; 8] = [2, 0, 5, 1, -4, 7, 3, -5];
    let center = |x: &[i64; 8]| -> Vec<i64> {
        let s: i64 = x.iter().sum();
        x.iter().map(|v| 8 * v - s).collect()
    };
    let (e, r) = (center(&est), center(&reference));
    let dot = |a: &[i64], b: &[i64]| -> i128 { a.iter().zip(b).map(|(x, y)| (*x as i128) * (*y as i128)).sum() };
    let (c, es, ee) = (dot(&e, &r), dot(&r, &r), dot(&e, &e));
    let target = c * c;
    let noise = es * ee - target;
    let guarded = noise as f64 + SI_SNR_EPS * (es * ee) as f64;
    let want = 10.0 * (target as f64 / guarded).log10();

    let est_f: Vec<f64> = est.iter().map(|&v| v as f64).collect();
    let ref_f: Vec<f64> = reference.iter().map(|&v| v as f64).collect();
    let got = si_snr(&est_f, &ref_f).unwrap().value_db;
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn si_snr_cap_and_improvement() {
    let r = random(3, 1000);
    let perfect = si_snr(&r, &r).unwrap();
    assert_eq!(perfect.value_db, SI_SNR_CAP_DB);
    assert!(perfect.capped);
    let noisy: Vec<f64> = r.iter().zip(random(4, 1000)).map(|(a, b)| a + b).collect();
    assert!((si_snri(&noisy, &noisy, &r).unwrap()).abs() < 1e-15);
    assert!(si_snri(&r, &noisy, &r).unwrap() > 50.0);
}

/// Deterministic test signals; the same formulas produced the reference
/// scores below with the Python `pystoi` package (`extended=False`).
fn stoi_signals() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    let fs = FS as f64;
    let (mut clean, mut noise, mut gate) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..24_000 {
        let n = i as f64;
        let t = n / fs;
        clean.push(
            (2.0 * PI * 220.0 * t).sin() * (0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin())
                + 0.3 * (2.0 * PI * 1250.0 * t + 0.7 * (2.0 * PI * 5.0 * t).sin()).sin(),
        );
        noise.push(0.4 * (0.7 * n + 0.0003 * n * n).sin() + 0.2 * (2.3 * n + 0.00011 * n * n).sin());
        gate.push(if (2.0 * PI * 1.1 * t).sin() > -0.3 { 1.0 } else { 0.0 });
    }
    (clean, noise, gate)
}

#[test]
fn stoi_matches_reference_implementation() {
    let (clean, noise, gate) = stoi_signals();
    let mix = |g: f64| -> Vec<f64> { clean.iter().zip(&noise).map(|(c, n)| c + g * n).collect() };
    for (g, want) in [(1.0, 0.32313082951564104), (0.3, 0.35277554952381696), (3.0, 0.29522955712727444)] {
        let got = stoi(&mix(g), &clean, FS).unwrap();
        assert!((got - want).abs() < 1e-6, "noise gain {g}: {got} vs {want}");
    }
    // Exercises silent-frame removal.
    let gated: Vec<f64> = clean.iter().zip(&gate).zip(&noise).map(|((c, g), n)| c * g + 1e-4 * n).collect();
    let noisy: Vec<f64> = clean
        .iter()
        .zip(&gate)
        .zip(&noise)
        .map(|((c, g), n)| c * g + 0.5 * n * g + 1e-4 * n)
        .collect();
    let got = stoi(&noisy, &gated, FS).unwrap();
    assert!((got - 0.7548301300042993).abs() < 1e-6, "gated: {got}");
}

#[test]
fn stoi_of_reference_against_itself() {
    let (clean, _, _) = stoi_signals();
    assert!(stoi(&clean, &clean, FS).unwrap() >= 0.999);
}

fn ladder_mixtures(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let spec = SynthSpec {
        clip_seconds: 2.0,
        snr_db: vec![0.0],
        noise: vec![NoiseKind::White],
        ..SynthSpec::default()
    };
    let m = synth_batch::<f64>(&spec, 1, seed).unwrap().remove(0);
    (m.clean, m.noise)
}

#[test]
fn stoi_decreases_along_snr_ladder() {
    for seed in 0..3 {
        let (clean, noise) = ladder_mixtures(seed);
        let p = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let (pc, pn) = (p(&clean), p(&noise));
        let mut last = f64::INFINITY;
        for snr in [20.0, 10.0, 5.0, 0.0, -5.0] {
            let g = (pc / (pn * 10f64.powf(snr / 10.0))).sqrt();
            let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + g * n).collect();
            let s = stoi(&noisy, &clean, FS).unwrap();
            assert!(s <= last, "seed {seed}: STOI rose to {s} at {snr} dB (was {last})");
            assert!((0.0..=1.0).contains(&s));
            last = s;
        }
    }
}

#[test]
fn silent_model_costs_only_dense_ops() {
    let cfg = ModelConfig::new(64, 32, 64, 80, 4);
    let mut model = Model64::init(cfg, 0).unwrap();
    for (name, a) in model.params_mut() {
        if name == "bottleneck.threshold" {
            *a = Array::scalar(1e9);
        }
    }
    let x = random(5, 16_000);
    let out = model.forward(&Array::new(&[1, 1, 16_000], x).unwrap()).unwrap();
    let s = out.stats;
    assert_eq!(
        (s.bottleneck_events, s.scnn_spikes, s.srnn_spikes, s.readout_events),
        (0, 0, 0, 0)
    );
    // (16000 - 80) / 40 + 1 = 399 frames of a 64 -> 32 dense projection.
    let r = power_proxy(&s, &cfg, 1.0, true).unwrap();
    assert_eq!(r.power_proxy, 817_152.0);
    // plus 399 frames x (encoder + decoder) x 64 channels x 80 taps
    let r = power_proxy(&s, &cfg, 1.0, false).unwrap();
    assert_eq!(r.power_proxy, 817_152.0 + 4_085_760.0);
    assert_eq!(r.pdp_proxy, r.power_proxy * 0.005);
}

#[test]
fn power_counts_each_event_fan_out() {
    let cfg = ModelConfig::new(64, 32, 64, 80, 4);
    let stats = SpikeStats {
        frames: 10,
        bottleneck_events: 3,
        scnn_spikes: 5,
        srnn_spikes: 7,
        readout_events: 11,
    };
    let ops = count_ops(&stats, &cfg);
    // 3 x 2 filters x 4 taps + 5 x 32 + 7 x 64 + 11 x 64
    assert_eq!(ops.event_ops, 24.0 + 160.0 + 448.0 + 704.0);
    assert_eq!(ops.neuron_updates, 10.0 * (64.0 + 64.0));
    // Doubling the audio length at equal activity halves the rate.
    let one = power_proxy(&stats, &cfg, 1.0, true).unwrap();
    let two = power_proxy(&stats, &cfg, 2.0, true).unwrap();
    assert_eq!(two.power_proxy * 2.0, one.power_proxy);
    assert!(power_proxy(&stats, &cfg, 0.0, true).is_err());
}
