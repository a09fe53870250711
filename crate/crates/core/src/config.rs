//! Pipeline configuration in a flat `[section]` / `key = value` text format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::audio::{FrameConfig, Window, PIPELINE_RATE};
use crate::content::{DEFAULT_BNF_DIM, DEFAULT_FEATURE_DIM, DEFAULT_PWAV_STRIDES};
use crate::error::{Error, Result};
use crate::perturbation::PerturbRanges;
use crate::prosody::{Activation, SPEAKER_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDims {
    pub bnf_dim: usize,
    pub feature_dim: usize,
    pub bnf_kernel: usize,
    pub pwav_strides: Vec<usize>,
    pub pwav_channels: Vec<usize>,
    pub speaker_dim: usize,
    pub prosody_activation: Activation,
}

impl Default for EncoderDims {
    fn default() -> Self {
        EncoderDims {
            bnf_dim: DEFAULT_BNF_DIM,
            feature_dim: DEFAULT_FEATURE_DIM,
            bnf_kernel: 5,
            pwav_strides: DEFAULT_PWAV_STRIDES.to_vec(),
            pwav_channels: vec![64, 128, 192, DEFAULT_FEATURE_DIM],
            speaker_dim: SPEAKER_DIM,
            prosody_activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub perturb: PerturbRanges,
    pub encoder: EncoderDims,
    pub speaker_path: Option<PathBuf>,
    pub weights_path: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sample_rate: PIPELINE_RATE,
            frame: FrameConfig::default(),
            perturb: PerturbRanges::default(),
            encoder: EncoderDims::default(),
            speaker_path: None,
            weights_path: None,
            seed: None,
        }
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| Error::Format(format!("config line {}: {m}: {raw:?}", n + 1));
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if out.contains_key(&name) {
                return Err(bad("duplicate section"));
            }
            out.insert(name.clone(), BTreeMap::new());
            current = Some(name);
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
        let section = current.as_ref().ok_or_else(|| bad("key outside any section"))?;
        let entries = out.get_mut(section).expect("section inserted");
        if entries.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(bad("duplicate key"));
        }
    }
    Ok(out)
}

struct Lookup<'a> {
    sections: &'a mut Sections,
}

impl Lookup<'_> {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section)?.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Format(format!("[{section}] {key}: cannot parse {v:?}"))),
        }
    }

    fn list(&mut self, section: &str, key: &str, default: Vec<usize>) -> Result<Vec<usize>> {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("[{section}] {key}: expected integers, got {v:?}"))),
        }
    }
}

impl PipelineConfig {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.perturb;
        let e = &self.encoder;
        let _ = writeln!(s, "[audio]\nsample_rate = {}\n", self.sample_rate);
        let _ = writeln!(
            s,
            "[frame]\nframe_len_ms = {}\nhop_ms = {}\nwindow = {}\n",
            self.frame.frame_len_ms,
            self.frame.hop_ms,
            self.frame.window.name()
        );
        let _ = writeln!(
            s,
            "[perturb]\nformant_max = {}\npitch_shift_max = {}\npitch_range_max = {}\npeaking_bands = {}\nlow_hz = {}\nhigh_hz = {}\nq_min = {}\nq_max = {}\ngain_db = {}\n",
            p.formant_max, p.pitch_shift_max, p.pitch_range_max, p.peaking_bands, p.low_hz, p.high_hz, p.q_min, p.q_max, p.gain_db
        );
        let _ = writeln!(
            s,
            "[encoder]\nbnf_dim = {}\nfeature_dim = {}\nbnf_kernel = {}\npwav_strides = {}\npwav_channels = {}\nspeaker_dim = {}\nprosody_activation = {}\n",
            e.bnf_dim,
            e.feature_dim,
            e.bnf_kernel,
            list(&e.pwav_strides),
            list(&e.pwav_channels),
            e.speaker_dim,
            e.prosody_activation.name()
        );
        s.push_str("[paths]\n");
        if let Some(p) = &self.speaker_path {
            let _ = writeln!(s, "speaker = {}", p.display());
        }
        if let Some(p) = &self.weights_path {
            let _ = writeln!(s, "weights = {}", p.display());
        }
        s.push_str("\n[run]\n");
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        s
    }

    /// Parses the text form; absent keys keep their defaults, unknown keys
    /// are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut sections = parse_sections(text)?;
        let d = PipelineConfig::default();
        let mut l = Lookup { sections: &mut sections };
        let window = match l.take("frame", "window") {
            None => d.frame.window,
            Some(w) => Window::from_name(&w).ok_or_else(|| Error::Format(format!("unknown window {w:?}")))?,
        };
        let activation = match l.take("encoder", "prosody_activation") {
            None => d.encoder.prosody_activation,
            Some(a) => Activation::from_name(&a).ok_or_else(|| Error::Format(format!("unknown activation {a:?}")))?,
        };
        let c = PipelineConfig {
            sample_rate: l.parse("audio", "sample_rate", d.sample_rate)?,
            frame: FrameConfig {
                frame_len_ms: l.parse("frame", "frame_len_ms", d.frame.frame_len_ms)?,
                hop_ms: l.parse("frame", "hop_ms", d.frame.hop_ms)?,
                window,
            },
            perturb: PerturbRanges {
                formant_max: l.parse("perturb", "formant_max", d.perturb.formant_max)?,
                pitch_shift_max: l.parse("perturb", "pitch_shift_max", d.perturb.pitch_shift_max)?,
                pitch_range_max: l.parse("perturb", "pitch_range_max", d.perturb.pitch_range_max)?,
                peaking_bands: l.parse("perturb", "peaking_bands", d.perturb.peaking_bands)?,
                low_hz: l.parse("perturb", "low_hz", d.perturb.low_hz)?,
                high_hz: l.parse("perturb", "high_hz", d.perturb.high_hz)?,
                q_min: l.parse("perturb", "q_min", d.perturb.q_min)?,
                q_max: l.parse("perturb", "q_max", d.perturb.q_max)?,
                gain_db: l.parse("perturb", "gain_db", d.perturb.gain_db)?,
            },
            encoder: EncoderDims {
                bnf_dim: l.parse("encoder", "bnf_dim", d.encoder.bnf_dim)?,
                feature_dim: l.parse("encoder", "feature_dim", d.encoder.feature_dim)?,
                bnf_kernel: l.parse("encoder", "bnf_kernel", d.encoder.bnf_kernel)?,
                pwav_strides: l.list("encoder", "pwav_strides", d.encoder.pwav_strides.clone())?,
                pwav_channels: l.list("encoder", "pwav_channels", d.encoder.pwav_channels.clone())?,
                speaker_dim: l.parse("encoder", "speaker_dim", d.encoder.speaker_dim)?,
                prosody_activation: activation,
            },
            speaker_path: l.take("paths", "speaker").map(PathBuf::from),
            weights_path: l.take("paths", "weights").map(PathBuf::from),
            seed: match l.take("run", "seed") {
                None => None,
                Some(v) => Some(v.parse().map_err(|_| Error::Format(format!("[run] seed: {v:?}")))?),
            },
        };
        for (section, keys) in &sections {
            if let Some(k) = keys.keys().next() {
                return Err(Error::Format(format!("unknown key [{section}] {k}")));
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != PIPELINE_RATE {
            return Err(Error::Unsupported(format!(
                "sample_rate {}: the pipeline runs at {PIPELINE_RATE} Hz",
                self.sample_rate
            )));
        }
        self.frame.validate()?;
        self.perturb.validate()?;
        let e = &self.encoder;
        if e.pwav_strides.len() != e.pwav_channels.len() || e.pwav_channels.last() != Some(&e.feature_dim) {
            return Err(Error::Parameter(
                "pwav_channels must match pwav_strides in length and end in feature_dim".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every referenced file must exist before a run starts.
    pub fn check_paths(&self) -> Result<()> {
        for p in self.speaker_path.iter().chain(&self.weights_path) {
            if !p.is_file() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    /// The seed, required by every randomized command.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Precondition("a seed is required for randomized commands".into()))
    }
}
