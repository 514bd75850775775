//! Short-time objective intelligibility, numerically following the widely
//! used Python implementation (Octave-compatible resampler, silent-frame
//! removal, 1/3-octave band envelopes, 30-frame correlation).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FS: u32 = 10_000;
const N_FRAME: usize = 256;
const HOP: usize = N_FRAME / 2;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Returned when too few non-silent frames remain to form one segment.
pub const STOI_DEGENERATE: f64 = 1e-5;

/// STOI of `est` against the clean `reference`, in `[0, 1]`.
pub fn stoi<T: Scalar>(est: &[T], reference: &[T], sample_rate: u32) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "stoi: estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Config("stoi: sample rate must be positive".into()));
    }
    let to_f64 = |s: &[T]| -> Result<Vec<f64>> {
        let v: Vec<f64> = s.iter().map(|x| x.as_f64()).collect();
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::NonFinite("stoi input"))
        }
    };
    let (mut x, mut y) = (to_f64(reference)?, to_f64(est)?);
    if sample_rate != FS {
        let filter = Resampler::new(FS, sample_rate);
        x = filter.apply(&x);
        y = filter.apply(&y);
    }
    let min_len = N_FRAME + (SEGMENT - 1) * HOP + 1;
    if x.len() < min_len {
        return Err(Error::TooShort(format!(
            "stoi needs at least {:.3} s of audio",
            min_len as f64 / FS as f64
        )));
    }

    let (x, y) = remove_silent_frames(&x, &y);
    let x_tob = band_envelopes(&x);
    let y_tob = band_envelopes(&y);
    let frames = x_tob.first().map_or(0, Vec::len);
    if frames < SEGMENT {
        return Ok(STOI_DEGENERATE);
    }

    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - SEGMENT + 1;
    for m in SEGMENT..=frames {
        for band in 0..NUM_BANDS {
            let xs = &x_tob[band][m - SEGMENT..m];
            let ys = &y_tob[band][m - SEGMENT..m];
            let scale = norm(xs) / (norm(ys) + EPS);
            let mut yp: Vec<f64> = ys.iter().zip(xs).map(|(&yv, &xv)| (yv * scale).min(xv * (1.0 + clip))).collect();
            let mut xp = xs.to_vec();
            center_and_normalize(&mut yp);
            center_and_normalize(&mut xp);
            total += yp.iter().zip(&xp).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok((total / (segments * NUM_BANDS) as f64).clamp(0.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn center_and_normalize(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let n = norm(v) + EPS;
    v.iter_mut().for_each(|x| *x /= n);
}

/// Symmetric Hann window of `len` points without its zero endpoints.
fn hann(len: usize) -> Vec<f64> {
    let m = (len + 2) as f64 - 1.0;
    (1..=len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / m).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(N_FRAME)).step_by(HOP)
}

/// Drops frames more than 40 dB below the loudest reference frame and
/// overlap-adds the survivors.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hann(N_FRAME);
    let window = |s: &[f64], i: usize| -> Vec<f64> { w.iter().zip(&s[i..i + N_FRAME]).map(|(a, b)| a * b).collect() };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let xf: Vec<Vec<f64>> = starts.iter().map(|&i| window(x, i)).collect();
    let energies: Vec<f64> = xf.iter().map(|f| 20.0 * (norm(f) + EPS).log10()).collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = (0..starts.len()).filter(|&k| max - DYN_RANGE_DB - energies[k] < 0.0).collect();
    let out_len = if kept.is_empty() { 0 } else { (kept.len() - 1) * HOP + N_FRAME };
    let (mut xs, mut ys) = (vec![0.0; out_len], vec![0.0; out_len]);
    for (slot, &k) in kept.iter().enumerate() {
        let yf = window(y, starts[k]);
        let at = slot * HOP;
        for j in 0..N_FRAME {
            xs[at + j] += xf[k][j];
            ys[at + j] += yf[j];
        }
    }
    (xs, ys)
}

/// 1/3-octave band magnitudes `[band][frame]`.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let bands = third_octave_bands();
    let w = hann(N_FRAME);
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let mut buf = vec![Complex::new(0.0, 0.0); NFFT];
    let mut out = vec![Vec::new(); NUM_BANDS];
    for i in frame_starts(x.len()) {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for j in 0..N_FRAME {
            buf[j].re = w[j] * x[i + j];
        }
        fft.process(&mut buf);
        for (band, &(lo, hi)) in bands.iter().enumerate() {
            let power: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[band].push(power.sqrt());
        }
    }
    out
}

/// FFT bin ranges `[lo, hi)` of each band.
fn third_octave_bands() -> [(usize, usize); NUM_BANDS] {
    let bins: Vec<f64> = (0..=NFFT / 2).map(|k| k as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |freq: f64| -> usize {
        let mut best = 0;
        for (k, &f) in bins.iter().enumerate() {
            if (f - freq).powi(2) < (bins[best] - freq).powi(2) {
                best = k;
            }
        }
        best
    };
    let mut out = [(0, 0); NUM_BANDS];
    for (k, slot) in out.iter_mut().enumerate() {
        let k = k as f64;
        let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
        let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
        *slot = (nearest(lo), nearest(hi));
    }
    out
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Polyphase rational resampler with the Octave `resample` Kaiser design.
struct Resampler {
    up: usize,
    down: usize,
    taps: Vec<f64>,
}

impl Resampler {
    fn new(target: u32, source: u32) -> Self {
        let g = gcd(target, source);
        let (p, q) = ((target / g) as f64, (source / g) as f64);
        let cutoff = 1.0 / (2.0 * p.max(q));
        let roll_off = cutoff / 10.0;
        let rejection_db = 60.0;
        let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
        let beta = 0.1102 * (rejection_db - 8.7);
        let len = (2 * half + 1) as usize;
        let mut taps: Vec<f64> = (-half..=half)
            .enumerate()
            .map(|(n, t)| {
                let ideal = 2.0 * p * cutoff * sinc(2.0 * cutoff * t as f64);
                kaiser(n, len, beta) * ideal
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|h| *h = *h / sum * p);
        Resampler {
            up: p as usize,
            down: q as usize,
            taps,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n_out = (x.len() * self.up).div_ceil(self.down);
        let half = (self.taps.len() - 1) / 2;
        (0..n_out)
            .map(|m| {
                // taps index: m*down - n*up + half, valid in [0, len)
                let centre = m * self.down + half;
                let n_hi = (centre / self.up).min(x.len().saturating_sub(1));
                let mut acc = 0.0;
                let mut n = n_hi as i64;
                while n >= 0 {
                    let k = centre as i64 - n * self.up as i64;
                    if k >= self.taps.len() as i64 {
                        break;
                    }
                    acc += x[n as usize] * self.taps[k as usize];
                    n -= 1;
                }
                acc
            })
            .collect()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn kaiser(n: usize, len: usize, beta: f64) -> f64 {
    let r = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
    bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta)
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}
