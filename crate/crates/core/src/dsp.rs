//! Small spectral helpers shared by the perturbation chain, the losses and
//! the test oracles.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward FFT of a real signal, zero-padded or truncated to `n`.
pub fn fft_real(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// One-sided power spectrum `|X_k|^2`, `k = 0..=n/2`.
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    fft_real(x, n)[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Frequency of the strongest non-DC bin of the whole-signal spectrum.
pub fn dominant_frequency(x: &[f64], sample_rate: u32) -> f64 {
    let p = power_spectrum(x);
    let k = (1..p.len())
        .max_by(|&a, &b| p[a].total_cmp(&p[b]))
        .unwrap_or(0);
    k as f64 * sample_rate as f64 / x.len() as f64
}

/// Summed power of the bins whose centre lies in `[lo_hz, hi_hz]`.
pub fn band_power(x: &[f64], sample_rate: u32, lo_hz: f64, hi_hz: f64) -> f64 {
    let p = power_spectrum(x);
    let df = sample_rate as f64 / x.len() as f64;
    p.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            f >= lo_hz && f <= hi_hz
        })
        .map(|(_, v)| v)
        .sum()
}

/// Periodic Hann window (sums to a constant under 50% overlap-add).
pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
