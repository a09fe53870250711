//! Waveform-similarity overlap-add time stretching.

use crate::dsp::periodic_hann;

/// Segment length (40 ms at 24 kHz); synthesis hop is half of it.
const FRAME_SECS: f64 = 0.040;
/// Maximum alignment search offset; covers half a period down to ~42 Hz.
const TOLERANCE_SECS: f64 = 0.012;

#[inline]
fn at(x: &[f64], i: isize) -> f64 {
    if i < 0 || i as usize >= x.len() {
        0.0
    } else {
        x[i as usize]
    }
}

/// Normalized cross-correlation of `x[a..a+n]` and `x[b..b+n]`, zero when
/// either segment is silent.
fn ncc(x: &[f64], a: isize, b: isize, n: usize) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for j in 0..n as isize {
        let u = at(x, a + j);
        let v = at(x, b + j);
        ab += u * v;
        aa += u * u;
        bb += v * v;
    }
    let d = (aa * bb).sqrt();
    if d > 0.0 {
        ab / d
    } else {
        0.0
    }
}

/// Time-stretches `x` to exactly `out_len` samples without changing pitch.
///
/// Each synthesis frame reads the input segment, within the tolerance
/// window around its ideal position, that best continues the previously
/// copied segment. Ties resolve toward the smaller offset, so a unit stretch
/// reproduces the input.
pub fn wsola_stretch(x: &[f64], out_len: usize, sample_rate: u32) -> Vec<f64> {
    if x.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    let n = ((FRAME_SECS * sample_rate as f64).round() as usize).max(4) & !1;
    let hop = n / 2;
    let tol = (TOLERANCE_SECS * sample_rate as f64).round() as isize;
    let rate = x.len() as f64 / out_len as f64;
    let win = periodic_hann(n);

    let mut acc = vec![0.0; out_len + n];
    let mut wsum = vec![0.0; out_len + n];
    let mut prev: Option<isize> = None;
    let mut out_pos = 0usize;
    while out_pos < out_len {
        let ideal = (out_pos as f64 * rate).round() as isize;
        let chosen = match prev {
            None => ideal,
            Some(p) => {
                let natural = p + hop as isize;
                let mut best = (ideal, f64::NEG_INFINITY);
                for step in 0..=2 * tol {
                    let delta = if step % 2 == 0 { -step / 2 } else { step / 2 + 1 };
                    let cand = ideal + delta;
                    let score = ncc(x, natural, cand, n);
                    if score > best.1 + 1e-12 {
                        best = (cand, score);
                    }
                }
                best.0
            }
        };
        for j in 0..n {
            acc[out_pos + j] += at(x, chosen + j as isize) * win[j];
            wsum[out_pos + j] += win[j];
        }
        prev = Some(chosen);
        out_pos += hop;
    }
    (0..out_len)
        .map(|i| {
            if wsum[i] > 1e-3 {
                acc[i] / wsum[i]
            } else {
                at(x, (i as f64 * rate).round() as isize)
            }
        })
        .collect()
}
