use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
    Hamming,
}

impl Window {
    /// Symmetric window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / denom;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                }
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
            Window::Hamming => "hamming",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "rectangular" | "rect" => Some(Window::Rectangular),
            "hann" => Some(Window::Hann),
            "hamming" => Some(Window::Hamming),
            _ => None,
        }
    }
}

/// Analysis frame geometry. Frame `t` is centred on sample `t * hop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub window: Window,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            frame_len_ms: 50.0,
            hop_ms: 10.0,
            window: Window::Hann,
        }
    }
}

impl FrameConfig {
    pub fn with_window(self, window: Window) -> Self {
        FrameConfig { window, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.frame_len_ms > 0.0) {
            return Err(Error::Parameter("frame length and hop must be positive".into()));
        }
        if self.hop_ms > self.frame_len_ms {
            return Err(Error::Parameter("hop exceeds frame length".into()));
        }
        Ok(())
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        ((self.frame_len_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        ((self.hop_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }
}

/// Number of frames for a signal of `len` samples: `ceil(len / hop)`.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

/// Index into a signal of length `n` extended by mirror reflection about
/// its first and last samples (the edge sample is not repeated).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    data: Vec<f64>,
    pub frame_len: usize,
    pub count: usize,
}

impl Frames {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.frame_len..(t + 1) * self.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len)
    }
}

pub(crate) fn frame_samples(
    samples: &[f64],
    sample_rate: u32,
    config: &FrameConfig,
) -> Result<Frames> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Precondition("cannot frame an empty signal".into()));
    }
    let frame_len = config.frame_len(sample_rate);
    let hop = config.hop(sample_rate);
    let count = frame_count(samples.len(), hop);
    let window = config.window.coefficients(frame_len);
    let half = (frame_len / 2) as isize;
    let mut data = Vec::with_capacity(count * frame_len);
    for t in 0..count {
        let start = (t * hop) as isize - half;
        for (j, w) in window.iter().enumerate() {
            data.push(samples[reflect_index(start + j as isize, samples.len())] * w);
        }
    }
    Ok(Frames {
        data,
        frame_len,
        count,
    })
}

/// Splits audio into windowed frames on the shared analysis grid. The
/// signal is reflection-padded by half a frame at both ends so that every
/// per-frame feature has exactly `ceil(len / hop)` frames.
pub fn frame_signal(audio: &AudioBuffer, config: &FrameConfig) -> Result<Frames> {
    frame_samples(&audio.to_f64(), audio.sample_rate, config)
}
