use dpsnn::layers::EncoderConfig;
use dpsnn::tensor::ops::{conv1d_forward, deconv1d_forward, unary_forward, ConvSpec, Unary};
use dpsnn::{latency, Array, DpsnnModel, ForwardOptions, Model64, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn signal(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}

#[test]
fn latency_is_one_filter_length() {
    for (l, ms) in [(80, 5.0), (40, 2.5), (160, 10.0)] {
        let r = latency(&EncoderConfig::half_overlap(l, 64), 16_000).unwrap();
        assert_eq!(r.algorithmic_ms, ms);
        assert_eq!(r.buffering_ms, ms / 2.0);
    }
}

#[test]
fn parameter_counts_are_near_published_sizes() {
    for ((n, b, h), published) in [
        ((256, 256, 256), 372_000.0),
        ((512, 128, 512), 317_000.0),
        ((512, 256, 512), 613_000.0),
        ((512, 512, 512), 1_400_000.0),
    ] {
        let model = Model64::init(ModelConfig::new(n, b, h, 80, 4), 0).unwrap();
        let total = model.count_params().total as f64;
        let rel = (total - published) / published;
        println!("N={n} B={b} H={h}: {total} params ({:+.2}%)", rel * 100.0);
        assert!(rel.abs() <= 0.02, "N={n} B={b} H={h}: {total}");
    }
}

#[test]
fn silence_in_silence_out() {
    let model = Model64::init(ModelConfig::new(16, 8, 16, 16, 4), 1).unwrap();
    let out = model.enhance(&vec![0.0; 400]).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn unit_mask_reduces_to_the_codec() {
    let cfg = ModelConfig::new(16, 8, 16, 16, 4);
    let model = Model64::init(cfg, 2).unwrap();
    let x = Array::new(&[1, 1, 320], signal(2, 320)).unwrap();
    let opts = ForwardOptions {
        mask_override: Some(1.0),
        ..ForwardOptions::default()
    };
    let out = model.forward_with(&x, &opts).unwrap();

    let (encoder, decoder) = (&model.params()[0].1, &model.params()[1].1);
    let spec = ConvSpec { stride: 8, groups: 1, left_pad: 0 };
    let features = unary_forward(Unary::Relu, &conv1d_forward(&x, encoder, None, spec).unwrap());
    let want = deconv1d_forward(&features, decoder, 8).unwrap();
    assert_eq!(out.enhanced.data(), want.data());
}

#[test]
fn perturbing_a_frame_never_changes_earlier_output() {
    let cfg = ModelConfig::new(16, 8, 16, 16, 4);
    let (l, hop) = (cfg.encoder.filter_len, cfg.encoder.stride);
    let model = DpsnnModel::<f64>::init(cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..10 {
        let n = 480;
        let x = signal(100 + trial, n);
        let base = model.enhance(&x).unwrap();
        let frames = cfg.encoder.frames(n).unwrap();
        let t = rng.random_range(1..frames);
        // The newest hop of frame t is first seen by frame t.
        let mut y = x.clone();
        for v in &mut y[t * hop + (l - hop)..t * hop + l] {
            *v += rng.random_range(-1.0..1.0);
        }
        let moved = model.enhance(&y).unwrap();
        assert_eq!(&base[..t * hop], &moved[..t * hop], "trial {trial}, frame {t}");
        assert_ne!(base, moved, "trial {trial}: perturbation had no effect at all");
    }
}

#[test]
fn forward_rejects_non_finite_and_short_input() {
    let model = Model64::init(ModelConfig::new(16, 8, 16, 16, 4), 0).unwrap();
    let mut x = signal(0, 64);
    assert!(model.enhance(&x[..10]).is_err());
    x[5] = f64::NAN;
    assert!(model.enhance(&x).is_err());
}

#[test]
fn outputs_are_binary_where_they_should_be() {
    let cfg = ModelConfig::new(16, 8, 16, 16, 4);
    let model = Model64::init(cfg, 4).unwrap();
    let x = Array::new(&[2, 1, 400], signal(4, 800)).unwrap();
    let out = model.forward(&x).unwrap();
    assert!(out.bn_suppressed.data().iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(out.mask.data().iter().all(|&m| m > 0.0 && m < 1.0));
    assert_eq!(out.stats.frames, 2 * cfg.encoder.frames(400).unwrap());
    assert!(out.stats.spike_density(&cfg) > 0.0);
}
