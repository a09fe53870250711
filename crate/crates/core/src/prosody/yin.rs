//! YIN fundamental-frequency estimation.

use crate::audio::{frame_samples, AudioBuffer, FrameConfig, Window};
use crate::error::{Error, Result};

pub const YIN_THRESHOLD: f64 = 0.15;

/// Cumulative-mean-normalized difference function for lags `0..=max_lag`
/// over an integration window of `frame.len() - max_lag` samples.
pub(crate) fn cmnd(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let w = frame.len() - max_lag;
    let mut d = vec![0.0; max_lag + 1];
    for (tau, slot) in d.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for j in 0..w {
            let diff = frame[j] - frame[j + tau];
            acc += diff * diff;
        }
        *slot = acc;
    }
    let mut out = vec![1.0; max_lag + 1];
    let mut running = 0.0;
    for tau in 1..=max_lag {
        running += d[tau];
        out[tau] = if running > 0.0 {
            d[tau] * tau as f64 / running
        } else {
            1.0
        };
    }
    out
}

/// Period estimate in (fractional) samples, or `None` when no lag dips
/// below the threshold.
pub(crate) fn yin_period(frame: &[f64], min_lag: usize, max_lag: usize, threshold: f64) -> Option<f64> {
    if frame.iter().all(|&v| v == 0.0) {
        return None;
    }
    let d = cmnd(frame, max_lag);
    let mut tau = (min_lag..=max_lag).find(|&t| d[t] < threshold)?;
    while tau < max_lag && d[tau + 1] < d[tau] {
        tau += 1;
    }
    if tau == 0 || tau >= max_lag {
        return Some(tau as f64);
    }
    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Some(tau as f64 + shift)
}

/// Per-frame f0 in Hz on the shared frame grid, `0` for unvoiced frames.
pub fn extract_f0(audio: &AudioBuffer, frame: &FrameConfig, f_min: f64, f_max: f64) -> Result<Vec<f64>> {
    let sr = audio.sample_rate as f64;
    if !(f_min > 0.0 && f_min < f_max && f_max < sr / 2.0) {
        return Err(Error::Parameter(format!(
            "need 0 < f_min < f_max < {} Hz, got {f_min}..{f_max}",
            sr / 2.0
        )));
    }
    let frame_len = frame.frame_len(audio.sample_rate);
    if audio.len() < frame_len {
        return Err(Error::Precondition(format!(
            "audio has {} samples, shorter than one {frame_len}-sample frame",
            audio.len()
        )));
    }
    let max_lag = (sr / f_min).ceil() as usize;
    let min_lag = ((sr / f_max).floor() as usize).max(2);
    if max_lag + 2 >= frame_len {
        return Err(Error::Parameter(format!(
            "f_min {f_min} Hz needs lags beyond the {frame_len}-sample frame"
        )));
    }
    let frames = frame_samples(
        &audio.to_f64(),
        audio.sample_rate,
        &frame.with_window(Window::Rectangular),
    )?;
    Ok(frames
        .iter()
        .map(|fr| match yin_period(fr, min_lag, max_lag, YIN_THRESHOLD) {
            Some(p) if p > 0.0 => {
                let f = sr / p;
                if f >= f_min && f <= f_max {
                    f
                } else {
                    0.0
                }
            }
            _ => 0.0,
        })
        .collect())
}
