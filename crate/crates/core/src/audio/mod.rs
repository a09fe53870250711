//! Mono PCM container, WAV I/O, band-limited resampling and framing.

mod frame;
mod resample;
mod wav;

pub use frame::{frame_count, frame_signal, FrameConfig, Frames, Window};
pub use resample::{resample, resample_by, resample_to_len};
pub(crate) use frame::frame_samples;
pub use wav::{read_wav, write_wav, BitDepth};

use crate::error::{Error, Result};

/// Sample rate the whole pipeline runs at.
pub const PIPELINE_RATE: u32 = 24_000;

/// Mono audio. Samples are nominally in `[-1, 1]`; values outside that range
/// are tolerated in memory and clipped on write.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Precondition("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub(crate) fn from_f64(samples: &[f64], sample_rate: u32) -> Self {
        AudioBuffer {
            samples: samples.iter().map(|&s| s as f32).collect(),
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }
}
