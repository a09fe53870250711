//! Pitch and energy tracks, utterance-level pitch normalization, conditional
//! layer norm and the prosody encoder producing `H_p`.

mod yin;

pub use yin::{extract_f0, YIN_THRESHOLD};

use crate::audio::{frame_samples, AudioBuffer, FrameConfig, Window};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::SeededRng;
use crate::tensor::{BoundParams, Graph, Param, ParamStore, Tensor};

pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 600.0;
/// Default speaker-embedding size.
pub const SPEAKER_DIM: usize = 256;
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Below this voiced-frame deviation the normalized track is all zeros.
pub const ZNORM_SIGMA_FLOOR: f64 = 1e-6;

/// Per-frame pitch (Hz, `0` = unvoiced) and RMS energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyTrack {
    pub f0: Vec<f64>,
    pub energy: Vec<f64>,
    pub frame_config: FrameConfig,
}

impl ProsodyTrack {
    /// Pitch over the default 50-600 Hz search range, plus energy.
    pub fn extract(audio: &AudioBuffer, frame_config: &FrameConfig) -> Result<Self> {
        Ok(ProsodyTrack {
            f0: extract_f0(audio, frame_config, F0_MIN_HZ, F0_MAX_HZ)?,
            energy: extract_energy(audio, frame_config)?,
            frame_config: *frame_config,
        })
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    /// `frame_index,f0_hz,energy` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame_index,f0_hz,energy\n");
        for (i, (f, e)) in self.f0.iter().zip(&self.energy).enumerate() {
            s.push_str(&format!("{i},{f},{e}\n"));
        }
        s
    }

    pub fn from_csv(text: &str, frame_config: FrameConfig) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("frame_index,f0_hz,energy") {
            return Err(Error::Format("prosody CSV header must be frame_index,f0_hz,energy".into()));
        }
        let (mut f0, mut energy) = (Vec::new(), Vec::new());
        for (n, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("prosody CSV row {}: {line:?}", n + 1));
            if cols.len() != 3 || cols[0].parse::<usize>().ok() != Some(n) {
                return Err(bad());
            }
            let f: f64 = cols[1].parse().map_err(|_| bad())?;
            let e: f64 = cols[2].parse().map_err(|_| bad())?;
            if !(f >= 0.0 && e >= 0.0) {
                return Err(bad());
            }
            f0.push(f);
            energy.push(e);
        }
        Ok(ProsodyTrack {
            f0,
            energy,
            frame_config,
        })
    }
}

/// Per-frame RMS of the unwindowed frame.
pub fn extract_energy(audio: &AudioBuffer, frame_config: &FrameConfig) -> Result<Vec<f64>> {
    let frames = frame_samples(
        &audio.to_f64(),
        audio.sample_rate,
        &frame_config.with_window(Window::Rectangular),
    )?;
    Ok(frames.iter().map(crate::dsp::rms).collect())
}

/// Z-scores the voiced frames with their own mean and population deviation;
/// unvoiced frames stay `0`.
pub fn znorm_f0(f0: &[f64]) -> Result<Vec<f64>> {
    let voiced: Vec<f64> = f0.iter().copied().filter(|&v| v > 0.0).collect();
    if voiced.is_empty() {
        return Err(Error::NoVoicedFrames);
    }
    let n = voiced.len() as f64;
    let mu = voiced.iter().sum::<f64>() / n;
    let sigma = (voiced.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
    Ok(f0
        .iter()
        .map(|&v| {
            if v > 0.0 && sigma >= ZNORM_SIGMA_FLOOR {
                (v - mu) / sigma
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub values: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("speaker embedding".into()));
        }
        Ok(SpeakerEmbedding { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Speaker-to-channel affine maps, each `C x D`:
/// `gamma = 1 + W_gamma spk`, `beta = W_beta spk`.
#[derive(Debug, Clone, PartialEq)]
pub struct CLNParams {
    pub w_gamma: FeatureMatrix,
    pub w_beta: FeatureMatrix,
}

impl CLNParams {
    pub fn zeros(channels: usize, spk_dim: usize) -> Self {
        CLNParams {
            w_gamma: FeatureMatrix::zeros(channels, spk_dim),
            w_beta: FeatureMatrix::zeros(channels, spk_dim),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_gamma.rows
    }

    pub fn gamma_beta(&self, spk: &SpeakerEmbedding) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = spk.dim();
        if self.w_gamma.cols != d || self.w_beta.shape() != self.w_gamma.shape() {
            return Err(Error::Shape(format!(
                "CLN weights {:?}/{:?} for a {d}-dim speaker",
                self.w_gamma.shape(),
                self.w_beta.shape()
            )));
        }
        let dot = |r: &[f64]| r.iter().zip(&spk.values).map(|(a, b)| a * b).sum::<f64>();
        let gamma = self.w_gamma.iter_rows().map(|r| 1.0 + dot(r)).collect();
        let beta = self.w_beta.iter_rows().map(dot).collect();
        Ok((gamma, beta))
    }
}

fn layer_norm_row(row: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mu = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    row.iter().map(|v| (v - mu) * inv).collect()
}

/// Conditional layer norm of each frame of `x` (`T x C`).
pub fn cln(x: &FeatureMatrix, spk: &SpeakerEmbedding, params: &CLNParams) -> Result<FeatureMatrix> {
    if params.channels() != x.cols {
        return Err(Error::Shape(format!("CLN for {} channels on {} columns", params.channels(), x.cols)));
    }
    let (gamma, beta) = params.gamma_beta(spk)?;
    let mut out = Vec::with_capacity(x.data.len());
    for row in x.iter_rows() {
        for (c, v) in layer_norm_row(row).into_iter().enumerate() {
            out.push(gamma[c] * v + beta[c]);
        }
    }
    FeatureMatrix::new(x.rows, x.cols, out)
}

/// Differentiable [`cln`]: `x` is `[T, C]`, `spk` `[D]`, both weight
/// matrices `[C, D]`.
pub fn cln_tensor<'g>(
    x: Tensor<'g>,
    spk: Tensor<'g>,
    w_gamma: Tensor<'g>,
    w_beta: Tensor<'g>,
) -> Result<Tensor<'g>> {
    let d = spk.numel();
    let col = spk.reshape(&[d, 1])?;
    let c = w_gamma.shape()[0];
    let gamma = w_gamma.matmul(col)?.reshape(&[c])?.add_scalar(1.0);
    let beta = w_beta.matmul(col)?.reshape(&[c])?;
    x.layer_norm(LAYER_NORM_EPS)?.mul_channels(gamma)?.add_channels(beta)
}

/// Trailing nonlinearity of the prosody projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    pub fn apply_tensor<'g>(self, t: Tensor<'g>) -> Tensor<'g> {
        match self {
            Activation::Tanh => t.tanh(),
            Activation::Identity => t,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Prosody encoder weights: one-channel CLN on the normalized pitch, then a
/// `2 -> F` linear map (`proj_w` is `2 x F`) and an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyWeights {
    pub cln: CLNParams,
    pub proj_w: FeatureMatrix,
    pub proj_b: Vec<f64>,
    pub activation: Activation,
}

impl ProsodyWeights {
    /// Zero CLN maps (identity conditioning) and a seeded He-uniform
    /// projection with zero bias.
    pub fn init(spk_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = SeededRng::for_stage(seed, "prosody_encoder");
        let w = Param::he_uniform(&[2, out_dim], 2, &mut rng);
        ProsodyWeights {
            cln: CLNParams::zeros(1, spk_dim),
            proj_w: FeatureMatrix {
                rows: 2,
                cols: out_dim,
                data: w.data,
            },
            proj_b: vec![0.0; out_dim],
            activation: Activation::Tanh,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.proj_w.cols
    }

    /// Parameter names: `w_gamma`, `w_beta`, `proj_w`, `proj_b`.
    pub fn to_params(&self) -> ParamStore {
        let mut s = ParamStore::new();
        let c = &self.cln;
        s.insert("w_gamma", Param { shape: vec![c.w_gamma.rows, c.w_gamma.cols], data: c.w_gamma.data.clone() });
        s.insert("w_beta", Param { shape: vec![c.w_beta.rows, c.w_beta.cols], data: c.w_beta.data.clone() });
        s.insert("proj_w", Param { shape: vec![2, self.proj_w.cols], data: self.proj_w.data.clone() });
        s.insert("proj_b", Param { shape: vec![self.proj_b.len()], data: self.proj_b.clone() });
        s
    }

    pub fn from_params(s: &ParamStore, activation: Activation) -> Result<Self> {
        let mat = |name: &str| -> Result<FeatureMatrix> {
            let p = s.get(name)?;
            match p.shape.as_slice() {
                &[r, c] => FeatureMatrix::new(r, c, p.data.clone()),
                sh => Err(Error::Shape(format!("{name}: expected rank 2, got {sh:?}"))),
            }
        };
        let w = ProsodyWeights {
            cln: CLNParams {
                w_gamma: mat("w_gamma")?,
                w_beta: mat("w_beta")?,
            },
            proj_w: mat("proj_w")?,
            proj_b: s.get("proj_b")?.data.clone(),
            activation,
        };
        if w.cln.channels() != 1 || w.proj_w.rows != 2 || w.proj_b.len() != w.proj_w.cols {
            return Err(Error::Shape("prosody weights need 1-channel CLN and a 2xF projection".into()));
        }
        Ok(w)
    }
}

/// Normalized pitch for the encoder; an all-unvoiced track maps to zeros.
fn normalized_or_zero(f0: &[f64]) -> Result<Vec<f64>> {
    match znorm_f0(f0) {
        Ok(z) => Ok(z),
        Err(Error::NoVoicedFrames) => Ok(vec![0.0; f0.len()]),
        Err(e) => Err(e),
    }
}

/// `H_p = act([gamma * znorm(f0) + beta, e] W + b)`, one row per frame.
pub fn prosody_encode(
    f0: &[f64],
    energy: &[f64],
    spk: &SpeakerEmbedding,
    weights: &ProsodyWeights,
) -> Result<FeatureMatrix> {
    if f0.len() != energy.len() {
        return Err(Error::Shape(format!("f0 has {} frames, energy {}", f0.len(), energy.len())));
    }
    let z = normalized_or_zero(f0)?;
    let (gamma, beta) = weights.cln.gamma_beta(spk)?;
    let f = weights.out_dim();
    let w = &weights.proj_w;
    let mut out = Vec::with_capacity(f0.len() * f);
    for (zt, et) in z.iter().zip(energy) {
        let p = gamma[0] * zt + beta[0];
        for j in 0..f {
            let v = p * w.data[j] + et * w.data[f + j] + weights.proj_b[j];
            out.push(weights.activation.apply(v));
        }
    }
    FeatureMatrix::new(f0.len(), f, out)
}

/// Differentiable encoder on the graph. `f0` and `energy` are raw tracks;
/// normalization happens outside the graph. Parameters come from `params`
/// under the names of [`ProsodyWeights::to_params`].
pub fn prosody_encode_tensor<'g>(
    graph: &'g Graph,
    f0: &[f64],
    energy: &[f64],
    spk: Tensor<'g>,
    params: &BoundParams<'g>,
    activation: Activation,
) -> Result<Tensor<'g>> {
    if f0.len() != energy.len() {
        return Err(Error::Shape(format!("f0 has {} frames, energy {}", f0.len(), energy.len())));
    }
    let t = f0.len();
    let z = graph.constant(normalized_or_zero(f0)?, &[t, 1])?;
    let e = graph.constant(energy.to_vec(), &[t, 1])?;
    prosody_project(z, e, spk, params, activation)
}

/// Graph part of the encoder from an already normalized pitch column.
pub fn prosody_project<'g>(
    z: Tensor<'g>,
    e: Tensor<'g>,
    spk: Tensor<'g>,
    params: &BoundParams<'g>,
    activation: Activation,
) -> Result<Tensor<'g>> {
    let d = spk.numel();
    let col = spk.reshape(&[d, 1])?;
    let gamma = params.get("w_gamma")?.matmul(col)?.reshape(&[1])?.add_scalar(1.0);
    let beta = params.get("w_beta")?.matmul(col)?.reshape(&[1])?;
    let p = z.mul_channels(gamma)?.add_channels(beta)?;
    let x = Tensor::concat_last(&[p, e])?;
    let h = x.matmul(params.get("proj_w")?)?.add_channels(params.get("proj_b")?)?;
    Ok(activation.apply_tensor(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::median;

    fn sine(freq: f64, secs: f64, sr: u32, amp: f64) -> AudioBuffer {
        let n = (secs * sr as f64) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect::<Vec<_>>();
        AudioBuffer::from_f64(&s, sr)
    }

    #[test]
    fn yin_sine_220() {
        let a = sine(220.0, 1.0, 24_000, 0.5);
        let f0 = extract_f0(&a, &FrameConfig::default(), F0_MIN_HZ, F0_MAX_HZ).unwrap();
        assert_eq!(f0.len(), 100);
        let voiced: Vec<f64> = f0.iter().copied().filter(|&f| f > 0.0).collect();
        assert!(voiced.len() >= 95);
        for f in voiced {
            assert!((f - 220.0).abs() <= 1.0, "{f}");
        }
    }

    #[test]
    fn yin_silence_unvoiced() {
        let a = AudioBuffer::from_f64(&vec![0.0; 24_000], 24_000);
        let f0 = extract_f0(&a, &FrameConfig::default(), F0_MIN_HZ, F0_MAX_HZ).unwrap();
        assert!(f0.iter().all(|&f| f == 0.0));
    }

    /// Autocorrelation peak over lags of one clean frame: independent
    /// period estimate.
    fn acf_f0(frame: &[f64], sr: f64, lo: usize, hi: usize) -> f64 {
        let best = (lo..=hi)
            .max_by(|&a, &b| {
                let r = |l: usize| (0..frame.len() - l).map(|j| frame[j] * frame[j + l]).sum::<f64>();
                r(a).partial_cmp(&r(b)).unwrap()
            })
            .unwrap();
        sr / best as f64
    }

    #[test]
    fn yin_noisy_pulse_train() {
        let sr = 24_000;
        let period = 160;
        let clean: Vec<f64> = (0..sr).map(|i| if i % period == 0 { 1.0 } else { 0.0 }).collect();
        let power = 1.0 / period as f64;
        let sd = (power / 100.0).sqrt();
        let mut rng = SeededRng::new(11);
        let noisy: Vec<f64> = clean.iter().map(|v| v + sd * rng.normal()).collect();
        let oracle = acf_f0(&clean[..1200], sr as f64, 40, 480);
        assert!((oracle - 150.0).abs() < 1e-9);
        let f0 = extract_f0(&AudioBuffer::from_f64(&noisy, sr as u32), &FrameConfig::default(), F0_MIN_HZ, F0_MAX_HZ)
            .unwrap();
        let voiced: Vec<f64> = f0.into_iter().filter(|&f| f > 0.0).collect();
        let m = median(&voiced).unwrap();
        assert!((m - oracle).abs() / oracle <= 0.02, "{m}");
    }

    #[test]
    fn yin_rejects_short_audio_and_bad_range() {
        let a = AudioBuffer::from_f64(&[0.1; 100], 24_000);
        assert!(extract_f0(&a, &FrameConfig::default(), 50.0, 600.0).is_err());
        let b = sine(200.0, 1.0, 24_000, 0.5);
        assert!(extract_f0(&b, &FrameConfig::default(), 600.0, 50.0).is_err());
    }

    #[test]
    fn energy_examples() {
        let cfg = FrameConfig::default();
        let z = extract_energy(&AudioBuffer::from_f64(&vec![0.0; 2400], 24_000), &cfg).unwrap();
        assert!(z.iter().all(|&e| e == 0.0));
        let c = extract_energy(&AudioBuffer::from_f64(&vec![0.5; 24_000], 24_000), &cfg).unwrap();
        assert!(c[1..c.len() - 1].iter().all(|&e| (e - 0.5).abs() < 1e-12));
    }

    #[test]
    fn energy_matches_direct_loop() {
        let mut rng = SeededRng::new(2);
        let x: Vec<f64> = (0..4800).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let e = extract_energy(&AudioBuffer::from_f64(&x, 24_000), &FrameConfig::default()).unwrap();
        let xf: Vec<f64> = x.iter().map(|&v| v as f32 as f64).collect();
        // frame 10 is centred on sample 2400 and lies fully inside the signal
        let frame = &xf[2400 - 600..2400 + 600];
        let mut acc = 0.0;
        for v in frame {
            acc += v * v;
        }
        assert!((e[10] - (acc / 1200.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn znorm_examples() {
        let z = znorm_f0(&[100.0, 200.0, 300.0]).unwrap();
        let want = 1.5f64.sqrt();
        assert!((z[0] + want).abs() < 1e-12 && z[1].abs() < 1e-12 && (z[2] - want).abs() < 1e-12);
        assert_eq!(znorm_f0(&[120.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(znorm_f0(&[0.0, 100.0, 0.0, 300.0]).unwrap(), vec![0.0, -1.0, 0.0, 1.0]);
        assert!(matches!(znorm_f0(&[0.0, 0.0]), Err(Error::NoVoicedFrames)));
    }

    fn random_matrix(rng: &mut SeededRng, r: usize, c: usize) -> FeatureMatrix {
        FeatureMatrix::new(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn cln_zero_conditioning_is_layer_norm() {
        let mut rng = SeededRng::new(5);
        let x = random_matrix(&mut rng, 6, 8);
        let spk = SpeakerEmbedding::new((0..4).map(|_| rng.normal()).collect()).unwrap();
        let y = cln(&x, &spk, &CLNParams::zeros(8, 4)).unwrap();
        for row in y.iter_rows() {
            let m = row.iter().sum::<f64>() / 8.0;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-3);
        }
        let zero_spk = SpeakerEmbedding::new(vec![0.0; 4]).unwrap();
        let p = CLNParams {
            w_gamma: random_matrix(&mut rng, 8, 4),
            w_beta: random_matrix(&mut rng, 8, 4),
        };
        assert_eq!(cln(&x, &zero_spk, &p).unwrap(), y);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn cln_matches_elementwise_oracle_and_tensor() {
        let mut rng = SeededRng::new(6);
        let (t, c, d) = (5, 7, 3);
        let x = random_matrix(&mut rng, t, c);
        let spk = SpeakerEmbedding::new((0..d).map(|_| rng.normal()).collect()).unwrap();
        let p = CLNParams {
            w_gamma: random_matrix(&mut rng, c, d),
            w_beta: random_matrix(&mut rng, c, d),
        };
        let y = cln(&x, &spk, &p).unwrap();
        for ti in 0..t {
            let row = x.row(ti);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            for ci in 0..c {
                let mut g = 1.0;
                let mut b = 0.0;
                for di in 0..d {
                    g += p.w_gamma.data[ci * d + di] * spk.values[di];
                    b += p.w_beta.data[ci * d + di] * spk.values[di];
                }
                let want = g * (row[ci] - mean) / (var + 1e-5).sqrt() + b;
                assert!((y.data[ti * c + ci] - want).abs() < 1e-6);
            }
        }
        let g = Graph::new();
        let out = cln_tensor(
            x.to_tensor(&g).unwrap(),
            g.constant(spk.values.clone(), &[d]).unwrap(),
            p.w_gamma.to_tensor(&g).unwrap(),
            p.w_beta.to_tensor(&g).unwrap(),
        )
        .unwrap();
        for (a, b) in out.value().iter().zip(&y.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_projection_gives_raw_concat() {
        let spk = SpeakerEmbedding::new(vec![0.3, -0.2]).unwrap();
        let w = ProsodyWeights {
            cln: CLNParams::zeros(1, 2),
            proj_w: FeatureMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            proj_b: vec![0.0; 2],
            activation: Activation::Identity,
        };
        let f0 = [0.0, 100.0, 0.0, 300.0];
        let e = [0.1, 0.2, 0.3, 0.4];
        let h = prosody_encode(&f0, &e, &spk, &w).unwrap();
        assert_eq!(h.data, vec![0.0, 0.1, -1.0, 0.2, 0.0, 0.3, 1.0, 0.4]);
    }

    #[test]
    fn zero_inputs_zero_output() {
        let spk = SpeakerEmbedding::new(vec![1.0; 4]).unwrap();
        let w = ProsodyWeights::init(4, 8, 1);
        let h = prosody_encode(&[0.0; 10], &[0.0; 10], &spk, &w).unwrap();
        assert!(h.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_matches_matmul_oracle_and_tensor() {
        let mut rng = SeededRng::new(9);
        let (t, d, f) = (12, 5, 6);
        let f0: Vec<f64> = (0..t).map(|i| if i % 3 == 0 { 0.0 } else { rng.uniform(80.0, 300.0) }).collect();
        let e: Vec<f64> = (0..t).map(|_| rng.uniform(0.0, 0.5)).collect();
        let spk = SpeakerEmbedding::new((0..d).map(|_| rng.normal()).collect()).unwrap();
        let w = ProsodyWeights {
            cln: CLNParams {
                w_gamma: random_matrix(&mut rng, 1, d),
                w_beta: random_matrix(&mut rng, 1, d),
            },
            proj_w: random_matrix(&mut rng, 2, f),
            proj_b: (0..f).map(|_| rng.normal()).collect(),
            activation: Activation::Tanh,
        };
        let h = prosody_encode(&f0, &e, &spk, &w).unwrap();
        let z = znorm_f0(&f0).unwrap();
        let g: f64 = 1.0 + (0..d).map(|i| w.cln.w_gamma.data[i] * spk.values[i]).sum::<f64>();
        let b: f64 = (0..d).map(|i| w.cln.w_beta.data[i] * spk.values[i]).sum();
        for ti in 0..t {
            let x = [g * z[ti] + b, e[ti]];
            for j in 0..f {
                let mut acc = w.proj_b[j];
                for (k, xv) in x.iter().enumerate() {
                    acc += xv * w.proj_w.data[k * f + j];
                }
                assert!((h.data[ti * f + j] - acc.tanh()).abs() < 1e-6);
            }
        }
        let graph = Graph::new();
        let bound = w.to_params().bind(&graph, false).unwrap();
        let spk_t = graph.constant(spk.values.clone(), &[d]).unwrap();
        let ht = prosody_encode_tensor(&graph, &f0, &e, spk_t, &bound, Activation::Tanh).unwrap();
        for (a, b) in ht.value().iter().zip(&h.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = ProsodyTrack {
            f0: vec![0.0, 123.456789, 0.1 + 0.2],
            energy: vec![0.25, 1e-9, 0.0],
            frame_config: FrameConfig::default(),
        };
        let csv = t.to_csv();
        assert!(csv.starts_with("frame_index,f0_hz,energy\n0,0,0.25\n"));
        assert_eq!(ProsodyTrack::from_csv(&csv, FrameConfig::default()).unwrap(), t);
    }
}
