use std::path::Path;

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Int16,
    Float32,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::io(path, io)
        }
        // hound reports short reads as `Other` ("Failed to read enough bytes")
        hound::Error::IoError(io)
            if matches!(io.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            Error::Format(format!("{}: truncated file", path.display()))
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => {
            Error::Unsupported(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a 16-bit integer or 32-bit float RIFF/WAVE file, downmixing any
/// channel count to mono by averaging.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{}: {bits}-bit {fmt:?} PCM",
                path.display()
            )))
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes mono audio. Samples outside `[-1, 1]` are clipped and reported
/// through `log::warn!`.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    if audio.is_empty() {
        return Err(Error::Precondition("cannot write an empty buffer".into()));
    }
    if audio.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("audio samples".into()));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: match depth {
            BitDepth::Int16 => 16,
            BitDepth::Float32 => 32,
        },
        sample_format: match depth {
            BitDepth::Int16 => hound::SampleFormat::Int,
            BitDepth::Float32 => hound::SampleFormat::Float,
        },
    };
    let clipped = audio.samples.iter().filter(|s| s.abs() > 1.0).count();
    if clipped > 0 {
        log::warn!("{}: clipping {clipped} samples to [-1, 1]", path.display());
    }
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &audio.samples {
        let s = s.clamp(-1.0, 1.0);
        match depth {
            BitDepth::Int16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)
            }
            BitDepth::Float32 => writer.write_sample(s),
        }
        .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}
