use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::periodic_hann;
use crate::error::{Error, Result};

/// Added under the square root of every bin magnitude, so `|X|` is never
/// zero and its derivative always exists.
pub const STFT_EPS: f64 = 1e-12;

/// One STFT resolution: FFT size, hop and (periodic Hann) window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftResolution {
    pub fft: usize,
    pub hop: usize,
    pub win: usize,
}

impl StftResolution {
    pub const fn new(fft: usize, hop: usize, win: usize) -> Self {
        StftResolution { fft, hop, win }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.win || self.win > self.fft {
            return Err(Error::Parameter(format!(
                "STFT resolution needs 0 < hop <= win <= fft, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Frames for an `len`-sample signal. Frames start every `hop` samples
    /// and must fit entirely; a signal shorter than one window is
    /// zero-padded to a single frame.
    pub fn frames(&self, len: usize) -> usize {
        if len <= self.win {
            1
        } else {
            1 + (len - self.win) / self.hop
        }
    }
}

pub(crate) fn stft_forward(x: &[f64], res: StftResolution) -> (Vec<f64>, Vec<Complex64>, usize) {
    let frames = res.frames(x.len());
    let bins = res.fft / 2 + 1;
    let win = periodic_hann(res.win);
    let offset = (res.fft - res.win) / 2;
    let fft = FftPlanner::new().plan_fft_forward(res.fft);
    let mut mags = Vec::with_capacity(frames * bins);
    let mut spectra = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); res.fft];
    for m in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (j, w) in win.iter().enumerate() {
            if let Some(&v) = x.get(m * res.hop + j) {
                buf[offset + j].re = v * w;
            }
        }
        fft.process(&mut buf);
        for c in &buf[..bins] {
            mags.push((c.norm_sqr() + STFT_EPS).sqrt());
            spectra.push(*c);
        }
    }
    (mags, spectra, frames)
}

/// Gradient of `sum(g * |STFT(x)|)` with respect to `x`.
pub(crate) fn stft_backward(
    g: &[f64],
    spectra: &[Complex64],
    len: usize,
    res: StftResolution,
) -> Vec<f64> {
    let bins = res.fft / 2 + 1;
    let frames = spectra.len() / bins;
    let win = periodic_hann(res.win);
    let offset = (res.fft - res.win) / 2;
    let ifft = FftPlanner::new().plan_fft_inverse(res.fft);
    let mut dx = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); res.fft];
    for m in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for k in 0..bins {
            let z = spectra[m * bins + k];
            let mag = (z.norm_sqr() + STFT_EPS).sqrt();
            buf[k] = z * (g[m * bins + k] / mag);
        }
        ifft.process(&mut buf);
        for (j, w) in win.iter().enumerate() {
            if let Some(d) = dx.get_mut(m * res.hop + j) {
                *d += buf[offset + j].re * w;
            }
        }
    }
    dx
}

/// Plain (non-graph) magnitude spectrogram, row-major `[frames, bins]`.
pub fn stft_magnitude_values(x: &[f64], res: StftResolution) -> Result<(Vec<f64>, usize)> {
    res.validate()?;
    let (m, _, frames) = stft_forward(x, res);
    Ok((m, frames))
}
