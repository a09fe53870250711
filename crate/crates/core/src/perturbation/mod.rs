//! Speaker-information perturbation: random parametric EQ, formant shifting
//! and pitch randomization, composed as `pr(fs(peq(audio)))`, plus speed
//! augmentation.

mod biquad;
mod psola;
mod wsola;

pub use biquad::{eq_cascade, BandKind, BiquadCoeffs, EqBand};
pub use wsola::wsola_stretch;

use std::fmt::Write as _;

use crate::audio::{frame_count, resample_by, AudioBuffer, FrameConfig, PIPELINE_RATE};
use crate::dsp::median;
use crate::error::{Error, Result};
use crate::prosody::{extract_f0, F0_MAX_HZ, F0_MIN_HZ};
use crate::rng::SeededRng;

/// Sampling ranges for [`sample_perturb_config_with`]. Each ratio is drawn
/// uniformly from `[1, max]` and inverted with probability one half.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbRanges {
    pub formant_max: f64,
    pub pitch_shift_max: f64,
    pub pitch_range_max: f64,
    pub peaking_bands: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub gain_db: f64,
}

impl Default for PerturbRanges {
    fn default() -> Self {
        PerturbRanges {
            formant_max: 1.4,
            pitch_shift_max: 2.0,
            pitch_range_max: 1.5,
            peaking_bands: 8,
            low_hz: 60.0,
            high_hz: 10_000.0,
            q_min: 2.0,
            q_max: 5.0,
            gain_db: 12.0,
        }
    }
}

impl PerturbRanges {
    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |m: f64| (1.0..4.0).contains(&m);
        if !ratio_ok(self.formant_max) || !ratio_ok(self.pitch_shift_max) || !ratio_ok(self.pitch_range_max) {
            return Err(Error::Parameter("ratio maxima must lie in [1, 4)".into()));
        }
        if self.formant_max > 2.0 {
            return Err(Error::Parameter("formant ratio maximum above 2".into()));
        }
        if !(self.q_min > 0.0 && self.q_min <= self.q_max) {
            return Err(Error::Parameter("Q range must be positive and ordered".into()));
        }
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz) || self.gain_db < 0.0 {
            return Err(Error::Parameter("bad EQ frequency or gain range".into()));
        }
        Ok(())
    }
}

/// Band fields as they are parsed: kind, centre, Q, gain.
type PartialBand = (Option<BandKind>, Option<f64>, Option<f64>, Option<f64>);

/// A fully sampled perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    pub seed: u64,
    pub peq: Vec<EqBand>,
    pub formant_ratio: f64,
    pub pitch_shift_ratio: f64,
    pub pitch_range_ratio: f64,
}

impl PerturbConfig {
    /// Configuration whose every stage is the identity.
    pub fn neutral() -> Self {
        let peq = sample_perturb_config(0, PIPELINE_RATE)
            .peq
            .into_iter()
            .map(|b| EqBand { gain_db: 0.0, ..b })
            .collect();
        PerturbConfig {
            seed: 0,
            peq,
            formant_ratio: 1.0,
            pitch_shift_ratio: 1.0,
            pitch_range_ratio: 1.0,
        }
    }

    /// `key=value` lines, one field per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "formant_ratio={}", self.formant_ratio);
        let _ = writeln!(s, "pitch_shift_ratio={}", self.pitch_shift_ratio);
        let _ = writeln!(s, "pitch_range_ratio={}", self.pitch_range_ratio);
        let _ = writeln!(s, "peq.count={}", self.peq.len());
        for (i, b) in self.peq.iter().enumerate() {
            let _ = writeln!(s, "peq.{i}.kind={}", b.kind.name());
            let _ = writeln!(s, "peq.{i}.center_hz={}", b.center_hz);
            let _ = writeln!(s, "peq.{i}.Q={}", b.q);
            let _ = writeln!(s, "peq.{i}.gain_db={}", b.gain_db);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("perturbation config: {m}"));
        let mut seed = None;
        let (mut fr, mut ps, mut pr) = (None, None, None);
        let mut count = None;
        let mut bands: Vec<PartialBand> = Vec::new();
        let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}")));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("missing '=' in {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(format!("{v}: {e}")))?),
                "formant_ratio" => fr = Some(num(v)?),
                "pitch_shift_ratio" => ps = Some(num(v)?),
                "pitch_range_ratio" => pr = Some(num(v)?),
                "peq.count" => {
                    let c = v.parse::<usize>().map_err(|e| bad(format!("{v}: {e}")))?;
                    bands.resize(c, (None, None, None, None));
                    count = Some(c);
                }
                _ => {
                    let rest = k
                        .strip_prefix("peq.")
                        .ok_or_else(|| bad(format!("unknown key {k}")))?;
                    let (idx, field) = rest
                        .split_once('.')
                        .ok_or_else(|| bad(format!("unknown key {k}")))?;
                    let idx: usize = idx.parse().map_err(|_| bad(format!("bad band index in {k}")))?;
                    let slot = bands
                        .get_mut(idx)
                        .ok_or_else(|| bad(format!("band {idx} beyond peq.count")))?;
                    match field {
                        "kind" => {
                            slot.0 = Some(BandKind::from_name(v).ok_or_else(|| bad(format!("band kind {v}")))?)
                        }
                        "center_hz" => slot.1 = Some(num(v)?),
                        "Q" => slot.2 = Some(num(v)?),
                        "gain_db" => slot.3 = Some(num(v)?),
                        _ => return Err(bad(format!("unknown key {k}"))),
                    }
                }
            }
        }
        count.ok_or_else(|| bad("missing peq.count".into()))?;
        let peq = bands
            .into_iter()
            .enumerate()
            .map(|(i, b)| match b {
                (Some(kind), Some(center_hz), Some(q), Some(gain_db)) => Ok(EqBand {
                    kind,
                    center_hz,
                    q,
                    gain_db,
                }),
                _ => Err(bad(format!("band {i} incomplete"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PerturbConfig {
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
            peq,
            formant_ratio: fr.ok_or_else(|| bad("missing formant_ratio".into()))?,
            pitch_shift_ratio: ps.ok_or_else(|| bad("missing pitch_shift_ratio".into()))?,
            pitch_range_ratio: pr.ok_or_else(|| bad("missing pitch_range_ratio".into()))?,
        })
    }
}

fn inverted_ratio(rng: &mut SeededRng, max: f64) -> f64 {
    let r = rng.uniform(1.0, max);
    if rng.coin() {
        1.0 / r
    } else {
        r
    }
}

pub fn sample_perturb_config(seed: u64, sample_rate: u32) -> PerturbConfig {
    sample_perturb_config_with(seed, sample_rate, &PerturbRanges::default())
}

/// Draws a perturbation from `ranges`. The EQ is a low shelf at `low_hz`,
/// `peaking_bands` log-spaced peaking bands over `[low_hz, high_hz]` and a
/// high shelf at `high_hz`, with the top frequency capped at 0.45 of the
/// sample rate.
pub fn sample_perturb_config_with(seed: u64, sample_rate: u32, ranges: &PerturbRanges) -> PerturbConfig {
    let mut rng = SeededRng::new(seed);
    let formant_ratio = inverted_ratio(&mut rng, ranges.formant_max);
    let pitch_shift_ratio = inverted_ratio(&mut rng, ranges.pitch_shift_max);
    let pitch_range_ratio = inverted_ratio(&mut rng, ranges.pitch_range_max);

    let hi = ranges.high_hz.min(0.45 * sample_rate as f64);
    let lo = ranges.low_hz.min(hi);
    let mut centres = vec![(BandKind::LowShelf, lo)];
    let k = ranges.peaking_bands;
    for i in 0..k {
        let frac = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.5 };
        centres.push((BandKind::Peaking, lo * (hi / lo).powf(frac)));
    }
    centres.push((BandKind::HighShelf, hi));
    let peq = centres
        .into_iter()
        .map(|(kind, center_hz)| {
            let q = rng.uniform(ranges.q_min, ranges.q_max);
            let gain_db = rng.uniform(-ranges.gain_db, ranges.gain_db);
            EqBand {
                kind,
                center_hz,
                q,
                gain_db,
            }
        })
        .collect();
    PerturbConfig {
        seed,
        peq,
        formant_ratio,
        pitch_shift_ratio,
        pitch_range_ratio,
    }
}

/// Serial biquad cascade; output length equals input length.
pub fn parametric_eq(audio: &AudioBuffer, bands: &[EqBand]) -> Result<AudioBuffer> {
    let mut x = audio.to_f64();
    eq_cascade(&mut x, bands, audio.sample_rate)?;
    Ok(AudioBuffer::from_f64(&x, audio.sample_rate))
}

/// Scales the spectral envelope by `ratio` while keeping the duration:
/// resample by `1 / ratio`, then WSOLA-stretch back to the original length.
/// Pitch scales by `ratio` as well.
pub fn formant_shift(audio: &AudioBuffer, ratio: f64) -> Result<AudioBuffer> {
    if !(0.5..=2.0).contains(&ratio) {
        return Err(Error::Precondition(format!("formant ratio {ratio} outside [0.5, 2]")));
    }
    if ratio == 1.0 {
        return Ok(audio.clone());
    }
    let squeezed = resample_by(&audio.to_f64(), 1.0 / ratio);
    let out = wsola_stretch(&squeezed, audio.len(), audio.sample_rate);
    Ok(AudioBuffer::from_f64(&out, audio.sample_rate))
}

/// Output of [`pitch_randomize`].
#[derive(Debug, Clone, PartialEq)]
pub struct PitchEdit {
    pub audio: AudioBuffer,
    /// Set when the track had no voiced frames and the input was returned
    /// unchanged.
    pub unvoiced_passthrough: bool,
}

fn check_ratio(name: &str, r: f64) -> Result<()> {
    if r > 0.25 && r < 4.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} {r} outside (0.25, 4)")))
    }
}

fn check_track(audio: &AudioBuffer, f0: &[f64], frame: &FrameConfig) -> Result<usize> {
    let hop = frame.hop(audio.sample_rate);
    let t = frame_count(audio.len(), hop);
    if f0.len() != t {
        return Err(Error::Shape(format!("f0 track has {} frames, audio grid has {t}", f0.len())));
    }
    Ok(hop)
}

/// TD-PSOLA pitch edit towards
/// `f0'(t) = shift * median(f0) * (f0(t) / median(f0))^range` on voiced frames.
pub fn pitch_randomize(
    audio: &AudioBuffer,
    shift_ratio: f64,
    range_ratio: f64,
    f0_track: &[f64],
    frame: &FrameConfig,
) -> Result<PitchEdit> {
    check_ratio("pitch shift ratio", shift_ratio)?;
    check_ratio("pitch range ratio", range_ratio)?;
    let hop = check_track(audio, f0_track, frame)?;
    let voiced: Vec<f64> = f0_track.iter().copied().filter(|&v| v > 0.0).collect();
    let Some(med) = median(&voiced) else {
        return Ok(PitchEdit {
            audio: audio.clone(),
            unvoiced_passthrough: true,
        });
    };
    let out = psola::psola_to_median(
        &audio.to_f64(),
        audio.sample_rate,
        f0_track,
        hop,
        shift_ratio * med,
        range_ratio,
    )
    .expect("track has voiced frames");
    Ok(PitchEdit {
        audio: AudioBuffer::from_f64(&out, audio.sample_rate),
        unvoiced_passthrough: false,
    })
}

/// The full chain `pr(fs(peq(audio)))`.
///
/// Formant shifting also moves the pitch, so the pitch stage aims at
/// `pitch_shift_ratio` times the median f0 of its *input to the chain*,
/// not of the formant-shifted signal.
pub fn perturb(audio: &AudioBuffer, config: &PerturbConfig) -> Result<AudioBuffer> {
    if audio.sample_rate != PIPELINE_RATE {
        return Err(Error::Precondition(format!(
            "perturbation expects {PIPELINE_RATE} Hz audio, got {}",
            audio.sample_rate
        )));
    }
    check_ratio("pitch shift ratio", config.pitch_shift_ratio)?;
    check_ratio("pitch range ratio", config.pitch_range_ratio)?;
    let frame = FrameConfig::default();
    let eq = parametric_eq(audio, &config.peq)?;
    let shifted = formant_shift(&eq, config.formant_ratio)?;

    let source_f0 = extract_f0(&eq, &frame, F0_MIN_HZ, F0_MAX_HZ)?;
    let voiced: Vec<f64> = source_f0.iter().copied().filter(|&v| v > 0.0).collect();
    let Some(source_median) = median(&voiced) else {
        return Ok(shifted);
    };
    let shifted_f0 = if config.formant_ratio == 1.0 {
        source_f0
    } else {
        extract_f0(&shifted, &frame, F0_MIN_HZ, F0_MAX_HZ)?
    };
    let hop = frame.hop(audio.sample_rate);
    match psola::psola_to_median(
        &shifted.to_f64(),
        audio.sample_rate,
        &shifted_f0,
        hop,
        config.pitch_shift_ratio * source_median,
        config.pitch_range_ratio,
    ) {
        Some(out) => Ok(AudioBuffer::from_f64(&out, audio.sample_rate)),
        None => Ok(shifted),
    }
}

/// Playback-rate change: duration divides by `factor`, pitch multiplies by it.
pub fn speed_augment(audio: &AudioBuffer, factor: f64) -> Result<AudioBuffer> {
    if !(1.0..=2.0).contains(&factor) {
        return Err(Error::Precondition(format!("speed factor {factor} outside [1, 2]")));
    }
    if factor == 1.0 {
        return Ok(audio.clone());
    }
    let out = resample_by(&audio.to_f64(), 1.0 / factor);
    Ok(AudioBuffer::from_f64(&out, audio.sample_rate))
}
