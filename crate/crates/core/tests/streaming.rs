use dpsnn::stream::stream_clip;
use dpsnn::{Array, DpsnnModel, ModelConfig, Scalar, StreamState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise<T: Scalar>(seed: u64, n: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| T::lit(rng.random_range(-0.5..0.5))).collect()
}

fn offline<T: Scalar>(model: &DpsnnModel<T>, x: &[T]) -> Vec<T> {
    let wave = Array::new(&[1, 1, x.len()], x.to_vec()).unwrap();
    model.forward(&wave).unwrap().enhanced.into_data()
}

#[test]
fn one_sample_chunks_match_offline_exactly() {
    let model = DpsnnModel::<f64>::init(ModelConfig::new(16, 8, 16, 16, 4), 3).unwrap();
    let x = noise::<f64>(1, 800);
    let off = offline(&model, &x);
    let on = stream_clip(&model, &x, 1).unwrap();
    assert_eq!(on.len(), off.len());
    assert_eq!(on, off);
}

#[test]
fn chunking_does_not_change_output() {
    let model = DpsnnModel::<f32>::init(ModelConfig::new(16, 8, 16, 20, 3), 5).unwrap();
    let x = noise::<f32>(2, 1000);
    let reference = stream_clip(&model, &x, 1).unwrap();
    for chunk in [7, 64, 333, 1000] {
        assert_eq!(stream_clip(&model, &x, chunk).unwrap(), reference, "chunk {chunk}");
    }
}

#[test]
fn streams_do_not_interfere() {
    let model = DpsnnModel::<f64>::init(ModelConfig::new(8, 4, 8, 16, 4), 9).unwrap();
    let (a, b) = (noise::<f64>(3, 400), noise::<f64>(4, 400));
    let mut sa = StreamState::new(&model);
    let mut sb = StreamState::new(&model);
    let mut out_a = Vec::new();
    for (ca, cb) in a.chunks(13).zip(b.chunks(13)) {
        out_a.extend(sa.push_samples(&model, ca).unwrap());
        sb.push_samples(&model, cb).unwrap();
    }
    out_a.extend(sa.pending_tail());
    assert_eq!(out_a, stream_clip(&model, &a, 400).unwrap());
}

#[test]
fn output_is_delayed_by_one_frame() {
    let cfg = ModelConfig::new(8, 4, 8, 16, 4);
    let model = DpsnnModel::<f64>::init(cfg, 1).unwrap();
    let mut st = StreamState::new(&model);
    let x = noise::<f64>(5, 200);
    let mut emitted = 0;
    for (i, &s) in x.iter().enumerate() {
        emitted += st.push_samples(&model, &[s]).unwrap().len();
        let arrived = i + 1;
        let expected = if arrived < 16 { 0 } else { (arrived - 16) / 8 * 8 + 8 };
        assert_eq!(emitted, expected, "after {arrived} samples");
    }
}
