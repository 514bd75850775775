use std::io::BufWriter;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The only rate the model reads or writes.
pub const MODEL_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        AudioClip { samples, sample_rate }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file at 16 kHz.
pub fn read_wav<T: Scalar>(path: &Path) -> Result<AudioClip<T>> {
    let clip = read_wav_any_rate(path)?;
    if clip.sample_rate != MODEL_SAMPLE_RATE {
        return Err(Error::UnsupportedAudio(format!(
            "{}: sample rate {} Hz, expected {} Hz (resample first)",
            path.display(),
            clip.sample_rate,
            MODEL_SAMPLE_RATE
        )));
    }
    Ok(clip)
}

/// Like [`read_wav`] but accepts any sample rate.
pub fn read_wav_any_rate<T: Scalar>(path: &Path) -> Result<AudioClip<T>> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| T::lit(v as f64 / 32768.0)))
            .collect::<std::result::Result<Vec<T>, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| T::lit(v as f64)))
            .collect::<std::result::Result<Vec<T>, _>>()?,
        (format, bits) => {
            return Err(Error::UnsupportedAudio(format!(
                "{}: {bits}-bit {format:?} samples; expected 16-bit PCM or 32-bit float",
                path.display()
            )))
        }
    };
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// 16-bit code of a sample after clamping to `[-1, 1]`.
pub fn quantize_pcm16<T: Scalar>(x: T) -> i16 {
    let v = x.as_f64();
    let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes 16-bit PCM mono, replacing `path` atomically.
pub fn write_wav<T: Scalar>(path: &Path, clip: &AudioClip<T>) -> Result<()> {
    if clip.sample_rate == 0 {
        return Err(Error::UnsupportedAudio("sample rate must be positive".into()));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    atomic_write(path, |file| {
        let mut writer = WavWriter::new(BufWriter::new(file), spec)?;
        for &s in &clip.samples {
            writer.write_sample(quantize_pcm16(s))?;
        }
        writer.finalize()?;
        Ok(())
    })
}
