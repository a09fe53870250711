use std::sync::OnceLock;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Kernel half-width in zero crossings (32 taps per phase).
const HALF_TAPS: usize = 16;
/// Table resolution between zero crossings; intermediate phases are linearly
/// interpolated.
const PHASES: usize = 512;
const KAISER_BETA: f64 = 8.6;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = HALF_TAPS * PHASES;
        let norm = bessel_i0(KAISER_BETA);
        (0..=n + 1)
            .map(|i| {
                let u = i as f64 / PHASES as f64;
                if u >= HALF_TAPS as f64 {
                    return 0.0;
                }
                let sinc = if i == 0 {
                    1.0
                } else {
                    let a = std::f64::consts::PI * u;
                    a.sin() / a
                };
                let r = u / HALF_TAPS as f64;
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect()
    })
}

#[inline]
fn kernel(table: &[f64], u: f64) -> f64 {
    let pos = u.abs() * PHASES as f64;
    let i = pos as usize;
    if i >= HALF_TAPS * PHASES {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Band-limited resampling of a raw sample sequence to `out_len` samples,
/// where output sample `n` sits at input position `n / factor`.
///
/// When `factor < 1` the kernel is widened so its cutoff follows the new
/// Nyquist frequency.
pub fn resample_to_len(samples: &[f64], factor: f64, out_len: usize) -> Vec<f64> {
    let table = sinc_table();
    let cutoff = factor.min(1.0);
    let half = HALF_TAPS as f64 / cutoff;
    let n_in = samples.len() as isize;
    (0..out_len)
        .map(|n| {
            let t = n as f64 / factor;
            let lo = ((t - half).ceil() as isize).max(0);
            let hi = ((t + half).floor() as isize).min(n_in - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += samples[k as usize] * kernel(table, cutoff * (t - k as f64));
            }
            acc * cutoff
        })
        .collect()
}

/// Resamples by a real `factor`; the output has `round(len * factor)` samples.
pub fn resample_by(samples: &[f64], factor: f64) -> Vec<f64> {
    let out_len = (samples.len() as f64 * factor).round() as usize;
    resample_to_len(samples, factor, out_len)
}

/// Converts `audio` to `target_rate`. Output length is
/// `round(len * target / source)`.
pub fn resample(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::Precondition("target rate must be positive".into()));
    }
    if target_rate == audio.sample_rate {
        return Ok(audio.clone());
    }
    let (len, src, dst) = (
        audio.len() as u64,
        audio.sample_rate as u64,
        target_rate as u64,
    );
    let out_len = ((2 * len * dst + src) / (2 * src)) as usize;
    let factor = dst as f64 / src as f64;
    let out = resample_to_len(&audio.to_f64(), factor, out_len);
    Ok(AudioBuffer::from_f64(&out, target_rate))
}
