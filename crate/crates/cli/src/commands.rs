use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dpsnn::io::{load_checkpoint, read_wav, save_checkpoint, write_wav, AudioClip, MODEL_SAMPLE_RATE};
use dpsnn::metrics::{power_proxy, si_snr, stoi, MetricRecord, UNAVAILABLE};
use dpsnn::stream::stream_clip;
use dpsnn::training::{synth_batch, train as train_model, EpochRecord, SynthSpec};
use dpsnn::{latency, Array, DpsnnModel, Model32};
use serde_json::json;

use crate::config::{Precision, RunConfig};
use crate::{CliError, EnhanceArgs};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn machine(value: impl serde::Serialize) {
    println!("@json {}", serde_json::to_string(&value).expect("serializable record"));
}

fn require_parent_dir(path: &Path) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("output directory {} does not exist", dir.display())))
    }
}

fn load_model(path: &Path) -> Result<Model32, CliError> {
    Ok(load_checkpoint::<f32>(path)?)
}

pub fn train(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    require_parent_dir(out)?;
    let history_path = cfg
        .history
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.jsonl", out.display())));
    let file = File::create(&history_path).map_err(|e| io_err(&history_path, e))?;
    let mut log = BufWriter::new(file);
    eprintln!(
        "training N={} B={} H={} L={} K={} for {} epochs x {} steps",
        cfg.model.encoder.channels,
        cfg.model.separator.bottleneck,
        cfg.model.separator.hidden,
        cfg.model.encoder.filter_len,
        cfg.model.separator.context,
        cfg.train.epochs,
        cfg.train.steps_per_epoch
    );
    let mut on_epoch = |r: &EpochRecord| -> dpsnn::Result<()> {
        writeln!(log, "{}", r.to_json_line())?;
        log.flush()?;
        eprintln!(
            "epoch {:>3}  loss {:8.4}  val SI-SNR {:6.2} dB  SI-SNRi {:5.2} dB  density {:.4}  lr {:.2e}",
            r.epoch, r.train_loss, r.val_si_snr, r.val_si_snri, r.spike_density, r.lr
        );
        Ok(())
    };
    let (model, history): (Model32, Vec<EpochRecord>) = match cfg.precision {
        Precision::F64 => {
            let mut m = DpsnnModel::<f64>::init(cfg.model, cfg.init_seed)?;
            let h = train_model(&mut m, &cfg.train, &mut on_epoch)?;
            (m.cast(), h)
        }
        Precision::F32 => {
            let mut m = DpsnnModel::<f32>::init(cfg.model, cfg.init_seed)?;
            let h = train_model(&mut m, &cfg.train, &mut on_epoch)?;
            (m, h)
        }
    };
    save_checkpoint(&model, out)?;
    let last = history.last();
    machine(json!({
        "checkpoint": out.display().to_string(),
        "history": history_path.display().to_string(),
        "epochs": history.len(),
        "params": model.count_params().total,
        "val_si_snr": last.map(|r| r.val_si_snr),
        "val_si_snri": last.map(|r| r.val_si_snri),
    }));
    Ok(())
}

pub fn enhance(args: &EnhanceArgs) -> Result<(), CliError> {
    let model = load_model(&args.checkpoint)?;
    let clip = read_wav::<f32>(&args.input)?;
    require_parent_dir(&args.output)?;
    let n = clip.samples.len();
    let cfg = &model.config;
    if n < cfg.encoder.filter_len {
        return Err(CliError::Usage(format!(
            "{}: {} samples is shorter than one {}-sample frame",
            args.input.display(),
            n,
            cfg.encoder.filter_len
        )));
    }
    let started = Instant::now();
    let (mode, mut out) = if args.offline {
        ("offline", model.enhance(&clip.samples)?)
    } else {
        if !(args.chunk_ms > 0.0 && args.chunk_ms.is_finite()) {
            return Err(CliError::Usage(format!("--chunk-ms must be positive, got {}", args.chunk_ms)));
        }
        let chunk = ((args.chunk_ms * clip.sample_rate as f64 / 1000.0).round() as usize).max(1);
        ("streaming", stream_clip(&model, &clip.samples, chunk)?)
    };
    let seconds = started.elapsed().as_secs_f64();
    out.resize(n, 0.0);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("enhanced signal contains non-finite samples".into()));
    }
    write_wav(&args.output, &AudioClip::new(out, clip.sample_rate))?;
    let lat = latency(&cfg.encoder, cfg.sample_rate)?;
    eprintln!(
        "{mode}: {:.2} s of audio in {:.3} s (real-time factor {:.3}); algorithmic latency {} ms",
        clip.duration_s(),
        seconds,
        seconds / clip.duration_s(),
        lat.algorithmic_ms
    );
    machine(json!({
        "mode": mode,
        "samples": n,
        "chunk_ms": if args.offline { None } else { Some(args.chunk_ms) },
        "real_time_factor": seconds / clip.duration_s(),
        "buffering_ms": lat.buffering_ms,
        "lookahead_ms": lat.lookahead_ms,
        "algorithmic_ms": lat.algorithmic_ms,
    }));
    Ok(())
}

fn wav_names(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".wav") && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn score_file(model: Option<&Model32>, noisy_path: &Path, clean_path: &Path, name: &str) -> Result<MetricRecord, CliError> {
    let noisy = read_wav::<f32>(noisy_path)?;
    let clean = read_wav::<f32>(clean_path)?;
    if noisy.samples.len() != clean.samples.len() {
        return Err(CliError::Usage(format!(
            "length mismatch: {} vs {} samples",
            noisy.samples.len(),
            clean.samples.len()
        )));
    }
    let (est, power, pdp, latency_ms) = match model {
        None => (noisy.samples.clone(), 0.0, 0.0, 0.0),
        Some(m) => {
            let n = noisy.samples.len();
            let wave = Array::new(&[1, 1, n], noisy.samples.clone())?;
            let out = m.forward(&wave)?;
            let mut est = out.enhanced.into_data();
            est.resize(n, 0.0);
            let report = power_proxy(&out.stats, &m.config, noisy.duration_s(), true)?;
            let lat = latency(&m.config.encoder, m.config.sample_rate)?;
            (est, report.power_proxy, report.pdp_proxy, lat.algorithmic_ms)
        }
    };
    let s = si_snr(&est, &clean.samples)?.value_db;
    let s_noisy = si_snr(&noisy.samples, &clean.samples)?.value_db;
    Ok(MetricRecord {
        file: name.to_string(),
        si_snr: s,
        si_snri: s - s_noisy,
        stoi: stoi(&est, &clean.samples, MODEL_SAMPLE_RATE)?,
        power_proxy: power,
        pdp_proxy: pdp,
        latency_ms,
        pesq: UNAVAILABLE,
        dnsmos: UNAVAILABLE,
    })
}

pub fn eval(checkpoint: Option<&Path>, noisy_dir: &Path, clean_dir: &Path, report: &Path, passthrough: bool) -> Result<(), CliError> {
    let model = match (passthrough, checkpoint) {
        (true, _) => None,
        (false, Some(p)) => Some(load_model(p)?),
        (false, None) => return Err(CliError::Usage("--checkpoint is required unless --passthrough is given".into())),
    };
    require_parent_dir(report)?;
    let noisy = wav_names(noisy_dir)?;
    let clean = wav_names(clean_dir)?;
    for name in clean.iter().filter(|n| !noisy.contains(n)) {
        eprintln!("skipping {name}: no noisy counterpart");
    }
    let mut rows = Vec::new();
    for name in &noisy {
        if !clean.contains(name) {
            eprintln!("skipping {name}: no clean counterpart");
            continue;
        }
        match score_file(model.as_ref(), &noisy_dir.join(name), &clean_dir.join(name), name) {
            Ok(row) => rows.push(row),
            Err(CliError::Io(m)) => return Err(CliError::Io(m)),
            Err(e) => eprintln!("skipping {name}: {e}"),
        }
    }
    let Some(mean) = MetricRecord::mean("mean", &rows) else {
        return Err(CliError::Usage("no paired files could be evaluated".into()));
    };
    let mut text = String::new();
    for row in rows.iter().chain(std::iter::once(&mean)) {
        text.push_str(&serde_json::to_string(row).expect("serializable record"));
        text.push('\n');
    }
    std::fs::write(report, text).map_err(|e| io_err(report, e))?;
    eprintln!(
        "{} files: SI-SNR {:.2} dB, SI-SNRi {:.2} dB, STOI {:.3}",
        rows.len(),
        mean.si_snr,
        mean.si_snri,
        mean.stoi
    );
    machine(&mean);
    Ok(())
}

pub fn bench(checkpoint: &Path, seconds: f64, seed: u64) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let spec = SynthSpec {
        clip_seconds: seconds,
        sample_rate: model.config.sample_rate,
        ..SynthSpec::default()
    };
    let input = synth_batch::<f32>(&spec, 1, seed)?.remove(0).noisy;
    let n = input.len();
    let started = Instant::now();
    let out = model.forward(&Array::new(&[1, 1, n], input.clone())?)?;
    let offline_s = started.elapsed().as_secs_f64();
    let started = Instant::now();
    stream_clip(&model, &input, model.config.encoder.stride)?;
    let streaming_s = started.elapsed().as_secs_f64();
    let audio_s = n as f64 / model.config.sample_rate as f64;
    for excludes_codec in [true, false] {
        let report = power_proxy(&out.stats, &model.config, audio_s, excludes_codec)?;
        eprintln!(
            "power proxy ({} codec): {:.4e} synops/s, PDP {:.4e}, neuron updates {:.4e}/s",
            if excludes_codec { "without" } else { "with" },
            report.power_proxy,
            report.pdp_proxy,
            report.neuron_updates_per_s
        );
        machine(report);
    }
    let density = out.stats.spike_density(&model.config);
    machine(json!({
        "audio_seconds": audio_s,
        "spike_density": density,
        "real_time_factor_offline": offline_s / audio_s,
        "real_time_factor_streaming": streaming_s / audio_s,
    }));
    eprintln!(
        "real-time factor: offline {:.4}, streaming {:.4}",
        offline_s / audio_s,
        streaming_s / audio_s
    );
    Ok(())
}
