//! Time-domain pitch-synchronous overlap-add pitch modification.
//!
//! Analysis epochs come from the f0 track: the first epoch of a voiced run is
//! the largest-magnitude sample in its first period, each following epoch is
//! the strongest same-polarity sample within a quarter period of where the
//! previous period predicts it. Unvoiced stretches are re-synthesized with a
//! fixed pseudo-period and unit-sum windows, which copies them.

use crate::dsp::median;

/// Symmetric Hann of length `2 * half + 1` with zero end points; shifted
/// copies spaced `half` apart sum to one.
fn hann_half(half: usize) -> Vec<f64> {
    (0..=2 * half)
        .map(|j| 0.5 - 0.5 * (std::f64::consts::PI * j as f64 / half as f64).cos())
        .collect()
}

struct Grid<'a> {
    f0: &'a [f64],
    hop: usize,
}

impl Grid<'_> {
    fn f0_at(&self, i: usize) -> f64 {
        let t = ((i as f64 / self.hop as f64).round() as usize).min(self.f0.len() - 1);
        self.f0[t]
    }
}

/// Pitch marks of every voiced run, sorted.
fn analysis_epochs(x: &[f64], grid: &Grid, sample_rate: u32) -> Vec<usize> {
    let n = x.len();
    let sr = sample_rate as f64;
    let mut epochs = Vec::new();
    let mut i = 0usize;
    while i < n {
        let f = grid.f0_at(i);
        if f <= 0.0 {
            i += 1;
            continue;
        }
        let period = (sr / f).round().max(2.0) as usize;
        let end = (i + period).min(n);
        let mut e = (i..end)
            .max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()))
            .unwrap_or(i);
        let polarity = if x[e] < 0.0 { -1.0 } else { 1.0 };
        epochs.push(e);
        loop {
            let f = grid.f0_at(e);
            if f <= 0.0 {
                break;
            }
            let p = sr / f;
            let expected = e as f64 + p;
            if expected >= n as f64 || grid.f0_at(expected as usize) <= 0.0 {
                i = (expected.max(e as f64 + 1.0)) as usize;
                break;
            }
            let lo = ((expected - p / 4.0).round() as usize).max(e + 1);
            let hi = ((expected + p / 4.0).round() as usize).min(n - 1);
            if lo > hi {
                i = e + 1;
                break;
            }
            e = (lo..=hi)
                .max_by(|&a, &b| (polarity * x[a]).total_cmp(&(polarity * x[b])))
                .unwrap_or(lo);
            epochs.push(e);
        }
        if let Some(&last) = epochs.last() {
            i = i.max(last + 1);
        }
    }
    epochs.dedup();
    epochs
}

fn nearest(epochs: &[usize], t: usize) -> usize {
    match epochs.binary_search(&t) {
        Ok(k) => k,
        Err(0) => 0,
        Err(k) if k == epochs.len() => k - 1,
        Err(k) => {
            if t - epochs[k - 1] <= epochs[k] - t {
                k - 1
            } else {
                k
            }
        }
    }
}

/// Re-synthesizes `x` so voiced frames follow
/// `f0'(t) = target_median * (f0(t) / median(f0))^range`.
///
/// Returns `None` when the track has no voiced frames.
pub(crate) fn psola_to_median(
    x: &[f64],
    sample_rate: u32,
    f0: &[f64],
    hop: usize,
    target_median: f64,
    range: f64,
) -> Option<Vec<f64>> {
    let voiced: Vec<f64> = f0.iter().copied().filter(|&v| v > 0.0).collect();
    let med = median(&voiced)?;
    if target_median == med && range == 1.0 {
        return Some(x.to_vec());
    }
    let n = x.len();
    let sr = sample_rate as f64;
    let grid = Grid { f0, hop };
    let epochs = analysis_epochs(x, &grid, sample_rate);
    let pseudo = (hop / 2).max(2);

    let mut acc = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    let mut overlap_add = |centre_in: isize, centre_out: isize, half: usize| {
        let w = hann_half(half);
        for (j, wj) in w.iter().enumerate() {
            let off = j as isize - half as isize;
            let (src, dst) = (centre_in + off, centre_out + off);
            if dst < 0 || dst as usize >= n {
                continue;
            }
            let v = if src < 0 || src as usize >= n {
                0.0
            } else {
                x[src as usize]
            };
            acc[dst as usize] += v * wj;
            wsum[dst as usize] += wj;
        }
    };

    let mut t = 0.0f64;
    while (t.round() as usize) < n {
        let ti = t.round() as usize;
        let f = grid.f0_at(ti);
        if f > 0.0 && !epochs.is_empty() {
            let e = epochs[nearest(&epochs, ti)];
            let fe = grid.f0_at(e);
            let pa = if fe > 0.0 { sr / fe } else { sr / f };
            let target = target_median * (f / med).powf(range);
            overlap_add(e as isize, ti as isize, pa.round().max(1.0) as usize);
            t += (sr / target).max(1.0);
        } else {
            overlap_add(ti as isize, ti as isize, pseudo);
            t += pseudo as f64;
        }
    }
    Some(
        acc.iter()
            .zip(&wsum)
            .map(|(a, w)| a / w.max(1.0))
            .collect(),
    )
}
