//! Speech-like synthetic mixtures: voiced harmonic syllables separated by
//! pauses, mixed with stationary or looped noise at an exact SNR.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Samples are rounded to multiples of this step so that `clean + noise`
/// and its difference with `noise` are exact at 32-bit precision.
const GRID: f64 = 1.0 / (1u64 << 20) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    /// A short synthetic texture (resonant clatter over coloured noise)
    /// repeated for the whole clip.
    Texture,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "white" => Some(NoiseKind::White),
            "pink" => Some(NoiseKind::Pink),
            "texture" => Some(NoiseKind::Texture),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthSpec {
    pub sample_rate: u32,
    pub clip_seconds: f64,
    /// Each clip draws its SNR uniformly from this set.
    pub snr_db: Vec<f64>,
    pub noise: Vec<NoiseKind>,
    /// Fundamental frequency range of the voiced syllables, Hz.
    pub f0_range: (f64, f64),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sample_rate: 16_000,
            clip_seconds: 1.0,
            snr_db: vec![0.0, 5.0, 10.0, 15.0],
            noise: vec![NoiseKind::White, NoiseKind::Pink, NoiseKind::Texture],
            f0_range: (90.0, 260.0),
        }
    }
}

impl SynthSpec {
    pub fn samples(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate < 8_000 {
            return Err(Error::Config(format!("synth sample rate {} too low", self.sample_rate)));
        }
        if !(self.clip_seconds > 0.0) || self.samples() < 64 {
            return Err(Error::Config(format!("synth clip length {} s too short", self.clip_seconds)));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("synth needs at least one finite SNR".into()));
        }
        if self.noise.is_empty() {
            return Err(Error::Config("synth needs at least one noise kind".into()));
        }
        let (lo, hi) = self.f0_range;
        if !(lo > 0.0 && hi >= lo && hi < self.sample_rate as f64 / 4.0) {
            return Err(Error::Config(format!("bad f0 range {lo}..{hi}")));
        }
        Ok(())
    }
}

/// One generated example; `noisy == clean + noise` holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture<T> {
    pub clean: Vec<T>,
    pub noise: Vec<T>,
    pub noisy: Vec<T>,
    pub snr_db: f64,
    pub kind: NoiseKind,
}

/// `count` reproducible mixtures for `seed`.
pub fn synth_batch<T: Scalar>(spec: &SynthSpec, count: usize, seed: u64) -> Result<Vec<Mixture<T>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synth_one(spec, &mut rng)).collect()
}

fn synth_one<T: Scalar>(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Mixture<T>> {
    let n = spec.samples();
    let sr = spec.sample_rate as f64;
    let snr_db = *spec.snr_db.choose(rng).expect("validated non-empty");
    let kind = *spec.noise.choose(rng).expect("validated non-empty");
    let clean = speech_like(n, sr, spec.f0_range, rng);
    let raw_noise = match kind {
        NoiseKind::White => white(n, rng),
        NoiseKind::Pink => pink(n, rng),
        NoiseKind::Texture => texture(n, sr, rng),
    };
    let pc = power(&clean);
    let pn = power(&raw_noise);
    if pc == 0.0 || pn == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let g = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut noise: Vec<f64> = raw_noise.iter().map(|v| v * g).collect();
    let mut clean = clean;

    // common gain keeps every signal well inside [-1, 1]
    let peak = clean
        .iter()
        .zip(&noise)
        .map(|(c, v)| c.abs().max(v.abs()).max((c + v).abs()))
        .fold(0.0, f64::max);
    let level = rng.random_range(0.3..0.9) / peak;
    for v in clean.iter_mut().chain(noise.iter_mut()) {
        *v = (*v * level / GRID).round() * GRID;
    }
    let clean: Vec<T> = clean.into_iter().map(T::lit).collect();
    let noise: Vec<T> = noise.into_iter().map(T::lit).collect();
    let noisy = clean.iter().zip(&noise).map(|(&c, &v)| c + v).collect();
    Ok(Mixture {
        clean,
        noise,
        noisy,
        snr_db,
        kind,
    })
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn raised_cosine(pos: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    let edge = pos.min(len - 1 - pos);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
    }
}

/// Formant-shaped harmonic syllables with gliding pitch, amplitude
/// modulation and pauses.
fn speech_like(n: usize, sr: f64, f0_range: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let nyquist_guard = 0.45 * sr;
    let mut pos = (rng.random_range(0.0..0.15) * sr) as usize;
    while pos < n {
        let len = ((rng.random_range(0.08..0.3) * sr) as usize).min(n - pos);
        let f0 = rng.random_range(f0_range.0..=f0_range.1);
        let glide: f64 = rng.random_range(-0.15..0.15);
        let f1 = rng.random_range(300.0..900.0);
        let f2 = rng.random_range(900.0..2500.0);
        let am_rate = rng.random_range(3.0..8.0);
        let am_depth = rng.random_range(0.0..0.5);
        let loud = rng.random_range(0.4..1.0);
        let ramp = (rng.random_range(0.01..0.03) * sr) as usize;
        let harmonics = ((nyquist_guard.min(4000.0)) / (f0 * (1.0 + glide.max(0.0)))) as usize;
        let amps: Vec<f64> = (1..=harmonics)
            .map(|k| {
                let f = k as f64 * f0;
                let formant = |fc: f64, bw: f64| 1.0 / (1.0 + ((f - fc) / bw).powi(2));
                (formant(f1, 120.0) + 0.6 * formant(f2, 200.0) + 0.05) / (k as f64).sqrt()
            })
            .collect();
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut phase = 0.0;
        for i in 0..len {
            let t = i as f64 / len as f64;
            let f = f0 * (1.0 + glide * t);
            phase += 2.0 * PI * f / sr;
            let env = raised_cosine(i, len, ramp) * (1.0 - am_depth * (0.5 - 0.5 * (2.0 * PI * am_rate * i as f64 / sr).cos()));
            let mut v = 0.0;
            for (k, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
                v += a * ((k + 1) as f64 * phase + p).sin();
            }
            out[pos + i] += loud * env * v;
        }
        pos += len + (rng.random_range(0.03..0.2) * sr) as usize;
    }
    if out.iter().all(|&v| v == 0.0) {
        // degenerate draw; keep the clip non-silent
        out[n / 2] = 1e-3;
    }
    out
}

fn white(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// 1/f noise from white noise through Kellet's filter bank.
fn pink(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

/// Loops a 60 to 250 ms segment of damped resonant impulses over lowpassed
/// noise.
fn texture(n: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let seg = ((rng.random_range(0.06..0.25) * sr) as usize).clamp(1, n);
    let mut base = vec![0.0; seg];
    let mut lp = 0.0;
    let a = rng.random_range(0.5..0.95);
    for v in base.iter_mut() {
        let w: f64 = StandardNormal.sample(rng);
        lp = a * lp + (1.0 - a) * w;
        *v = lp;
    }
    for _ in 0..rng.random_range(2..6) {
        let at = rng.random_range(0..seg);
        let f = rng.random_range(300.0..5000.0);
        let decay = rng.random_range(0.002..0.02) * sr;
        let amp = rng.random_range(0.5..2.0);
        for (i, v) in base[at..].iter_mut().enumerate() {
            *v += amp * (-(i as f64) / decay).exp() * (2.0 * PI * f * i as f64 / sr).sin();
        }
    }
    (0..n).map(|i| base[i % seg]).collect()
}
