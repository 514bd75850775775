use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpsnn::io::{load_checkpoint, read_wav, save_checkpoint, write_wav, AudioClip};
use dpsnn::training::{synth_batch, SynthSpec};
use dpsnn::{Model32, ModelConfig};
use serde_json::Value;
use tempfile::tempdir;

fn dpsnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsnn")).args(args).output().expect("spawn dpsnn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn machine_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.strip_prefix("@json "))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &str = "\
n = 8
b = 4
h = 8
l = 16
epochs = 2
steps_per_epoch = 2
batch_size = 2
val_clips = 2
clip_seconds = 0.1
seed = 5
";

fn tiny_checkpoint(dir: &Path, filter_len: usize) -> PathBuf {
    let path = dir.join(format!("tiny{filter_len}.ckpt"));
    let model = Model32::init(ModelConfig::new(16, 8, 16, filter_len, 4), 3).unwrap();
    save_checkpoint(&model, &path).unwrap();
    path
}

fn mixture(seed: u64, seconds: f64) -> (Vec<f32>, Vec<f32>) {
    let spec = SynthSpec {
        clip_seconds: seconds,
        ..SynthSpec::default()
    };
    let m = synth_batch::<f32>(&spec, 1, seed).unwrap().remove(0);
    (m.noisy, m.clean)
}

#[test]
fn train_writes_checkpoint_and_reproducible_history() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let mut histories = Vec::new();
    for run in 0..2 {
        let ckpt = dir.path().join(format!("m{run}.ckpt"));
        let out = dpsnn(&["train", "--config", s(&cfg), "--out", s(&ckpt)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let model = load_checkpoint::<f32>(&ckpt).unwrap();
        assert_eq!(model.config.encoder.channels, 8);
        let summary = machine_lines(&out);
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0]["epochs"], 2);
        let history = std::fs::read_to_string(format!("{}.history.jsonl", ckpt.display())).unwrap();
        assert_eq!(history.lines().count(), 2);
        for line in history.lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            for key in ["epoch", "train_loss", "val_si_snr", "spike_density"] {
                assert!(v.get(key).is_some(), "{key} missing from {line}");
            }
        }
        histories.push(history);
    }
    assert_eq!(histories[0], histories[1]);
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "n = 8\nlearnig_rate = 0.1\n").unwrap();
    let out = dpsnn(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("m.ckpt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("learnig_rate"), "{}", stderr(&out));
    assert!(!dir.path().join("m.ckpt").exists());

    let out = dpsnn(&["train", "--config", s(&dir.path().join("nope.cfg")), "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn streaming_and_offline_enhancement_agree() {
    let dir = tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), 16);
    let (noisy, _) = mixture(1, 0.5);
    let input = dir.path().join("in.wav");
    write_wav(&input, &AudioClip::new(noisy.clone(), 16_000)).unwrap();
    let (a, b) = (dir.path().join("stream.wav"), dir.path().join("offline.wav"));

    let out = dpsnn(&["enhance", "--checkpoint", s(&ckpt), "--in", s(&input), "--out", s(&a), "--streaming", "--chunk-ms", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let info = &machine_lines(&out)[0];
    assert_eq!(info["mode"], "streaming");
    assert_eq!(info["algorithmic_ms"], 1.0);
    let out = dpsnn(&["enhance", "--checkpoint", s(&ckpt), "--in", s(&input), "--out", s(&b), "--offline"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let (a, b) = (read_wav::<f32>(&a).unwrap(), read_wav::<f32>(&b).unwrap());
    assert_eq!(a.samples.len(), noisy.len());
    let dev = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    assert!(dev < 1e-4, "{dev}");
}

#[test]
fn enhance_rejects_wrong_rate_and_missing_files() {
    let dir = tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), 16);
    let input = dir.path().join("8k.wav");
    write_wav(&input, &AudioClip::new(vec![0.1f32; 800], 8_000)).unwrap();
    let outp = dir.path().join("o.wav");
    let out = dpsnn(&["enhance", "--checkpoint", s(&ckpt), "--in", s(&input), "--out", s(&outp)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!outp.exists());

    let out = dpsnn(&["enhance", "--checkpoint", s(&dir.path().join("none.ckpt")), "--in", s(&input), "--out", s(&outp)]);
    assert_eq!(out.status.code(), Some(4));

    let out = dpsnn(&["enhance", "--checkpoint", s(&ckpt), "--in", s(&input), "--out", s(&outp), "--offline", "--streaming"]);
    assert_eq!(out.status.code(), Some(2));
}

const REPORT_KEYS: [&str; 9] = [
    "file",
    "si_snr",
    "si_snri",
    "stoi",
    "power_proxy",
    "pdp_proxy",
    "latency_ms",
    "pesq",
    "dnsmos",
];

fn eval_dirs(dir: &Path) -> (PathBuf, PathBuf) {
    let (noisy_dir, clean_dir) = (dir.join("noisy"), dir.join("clean"));
    std::fs::create_dir(&noisy_dir).unwrap();
    std::fs::create_dir(&clean_dir).unwrap();
    for (i, name) in ["a.wav", "b.wav"].iter().enumerate() {
        let (noisy, clean) = mixture(10 + i as u64, 1.0);
        write_wav(&noisy_dir.join(name), &AudioClip::new(noisy, 16_000)).unwrap();
        write_wav(&clean_dir.join(name), &AudioClip::new(clean, 16_000)).unwrap();
    }
    write_wav(&noisy_dir.join("orphan.wav"), &AudioClip::new(vec![0.0f32; 1600], 16_000)).unwrap();
    (noisy_dir, clean_dir)
}

#[test]
fn eval_report_schema_and_aggregate() {
    let dir = tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), 16);
    let (noisy_dir, clean_dir) = eval_dirs(dir.path());
    let report = dir.path().join("report.jsonl");
    let out = dpsnn(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--noisy-dir",
        s(&noisy_dir),
        "--clean-dir",
        s(&clean_dir),
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("orphan.wav"));

    let text = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<serde_json::Map<String, Value>> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for line in text.lines() {
        // Keys appear in the documented order.
        let mut last = 0;
        for key in REPORT_KEYS {
            let at = line.find(&format!("\"{key}\"")).unwrap_or_else(|| panic!("{key} missing"));
            assert!(at >= last, "{key} out of order in {line}");
            last = at;
        }
    }
    assert_eq!(rows[0]["file"], "a.wav");
    assert_eq!(rows[2]["file"], "mean");
    assert_eq!(rows[0]["pesq"], "unavailable");
    assert_eq!(rows[0]["latency_ms"], 1.0);
    let mean = (rows[0]["si_snr"].as_f64().unwrap() + rows[1]["si_snr"].as_f64().unwrap()) / 2.0;
    assert!((rows[2]["si_snr"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(rows[0]["power_proxy"].as_f64().unwrap() > 0.0);
}

#[test]
fn eval_of_clean_against_itself_is_perfect() {
    let dir = tempdir().unwrap();
    let (_, clean_dir) = eval_dirs(dir.path());
    let report = dir.path().join("r.jsonl");
    let out = dpsnn(&[
        "eval",
        "--passthrough",
        "--noisy-dir",
        s(&clean_dir),
        "--clean-dir",
        s(&clean_dir),
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for line in std::fs::read_to_string(&report).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["si_snr"], 60.0);
        assert_eq!(v["si_snri"], 0.0);
        assert!(v["stoi"].as_f64().unwrap() >= 0.999);
    }
}

#[test]
fn eval_with_nothing_paired_fails() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("x"), dir.path().join("y"));
    std::fs::create_dir(&a).unwrap();
    std::fs::create_dir(&b).unwrap();
    write_wav(&a.join("one.wav"), &AudioClip::new(vec![0.0f32; 100], 16_000)).unwrap();
    write_wav(&b.join("two.wav"), &AudioClip::new(vec![0.0f32; 100], 16_000)).unwrap();
    let report = dir.path().join("r.jsonl");
    let out = dpsnn(&["eval", "--passthrough", "--noisy-dir", s(&a), "--clean-dir", s(&b), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!report.exists());
}

#[test]
fn bench_reports_pdp_as_proxy_times_latency() {
    let dir = tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), 80);
    let out = dpsnn(&["bench", "--checkpoint", s(&ckpt), "--seconds", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = machine_lines(&out);
    assert_eq!(lines.len(), 3);
    let (without, with) = (&lines[0], &lines[1]);
    assert_eq!(without["excludes_codec"], true);
    assert_eq!(with["excludes_codec"], false);
    for r in [without, with] {
        let proxy = r["power_proxy"].as_f64().unwrap();
        let pdp = r["pdp_proxy"].as_f64().unwrap();
        assert!((pdp - proxy * 0.005).abs() <= 1e-12 * pdp, "{pdp} vs {proxy}");
    }
    assert!(with["power_proxy"].as_f64().unwrap() > without["power_proxy"].as_f64().unwrap());
    assert!(lines[2]["real_time_factor_streaming"].as_f64().unwrap() > 0.0);
}
