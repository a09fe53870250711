//! Deterministic convolutional encoders for the BNF and perturbed-waveform
//! branches. Both run on the autodiff graph so the same code serves
//! inference and gradient checks.

use super::bnf::interp_positions;
use crate::audio::{frame_count, AudioBuffer, FrameConfig};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::SeededRng;
use crate::tensor::{BoundParams, Graph, Param, ParamStore, Tensor};

pub const ENCODER_LN_EPS: f64 = 1e-5;
pub const DEFAULT_FEATURE_DIM: usize = 192;
/// Product 240: one output frame per 10 ms hop at 24 kHz.
pub const DEFAULT_PWAV_STRIDES: [usize; 4] = [6, 5, 4, 2];
/// Product 300; output is interpolated onto the frame grid.
pub const ALT_PWAV_STRIDES: [usize; 4] = [6, 5, 5, 2];

fn expect_shape(params: &ParamStore, name: &str, shape: &[usize]) -> Result<()> {
    let p = params.get(name)?;
    if p.shape != shape {
        return Err(Error::Shape(format!("{name}: shape {:?}, expected {shape:?}", p.shape)));
    }
    if p.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

fn init_block(store: &mut ParamStore, i: usize, c_in: usize, c_out: usize, k: usize, rng: &mut SeededRng) {
    store.insert(format!("conv{i}.w"), Param::he_uniform(&[c_out, c_in, k], c_in * k, rng));
    store.insert(format!("conv{i}.b"), Param::zeros(&[c_out]));
    store.insert(format!("ln{i}.g"), Param::filled(&[c_out], 1.0));
    store.insert(format!("ln{i}.b"), Param::zeros(&[c_out]));
}

fn check_block(params: &ParamStore, i: usize, c_in: usize, c_out: usize, k: usize) -> Result<()> {
    expect_shape(params, &format!("conv{i}.w"), &[c_out, c_in, k])?;
    expect_shape(params, &format!("conv{i}.b"), &[c_out])?;
    expect_shape(params, &format!("ln{i}.g"), &[c_out])?;
    expect_shape(params, &format!("ln{i}.b"), &[c_out])
}

/// conv -> layer norm (affine) -> ReLU.
fn block<'g>(
    x: Tensor<'g>,
    p: &BoundParams<'g>,
    i: usize,
    stride: usize,
    pad_left: usize,
    pad_right: usize,
) -> Result<Tensor<'g>> {
    let h = x.conv1d(p.get(&format!("conv{i}.w"))?, p.opt(&format!("conv{i}.b")), stride, pad_left, pad_right)?;
    Ok(h.layer_norm(ENCODER_LN_EPS)?
        .mul_channels(p.get(&format!("ln{i}.g"))?)?
        .add_channels(p.get(&format!("ln{i}.b"))?)?
        .relu())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnfEncoderConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kernel: usize,
}

impl Default for BnfEncoderConfig {
    fn default() -> Self {
        BnfEncoderConfig {
            in_dim: super::DEFAULT_BNF_DIM,
            out_dim: DEFAULT_FEATURE_DIM,
            kernel: 5,
        }
    }
}

/// Two `same`-padded convolutions over aligned BNF frames, each followed by
/// layer norm and ReLU. Parameters: `conv{1,2}.{w,b}`, `ln{1,2}.{g,b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BnfEncoder {
    pub config: BnfEncoderConfig,
    pub params: ParamStore,
}

impl BnfEncoder {
    pub fn init(config: BnfEncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::for_stage(seed, "bnf_encoder");
        let mut params = ParamStore::new();
        init_block(&mut params, 1, config.in_dim, config.out_dim, config.kernel, &mut rng);
        init_block(&mut params, 2, config.out_dim, config.out_dim, config.kernel, &mut rng);
        Self::from_params(config, params)
    }

    pub fn from_params(config: BnfEncoderConfig, params: ParamStore) -> Result<Self> {
        if config.kernel == 0 || config.in_dim == 0 || config.out_dim == 0 {
            return Err(Error::Parameter(format!("invalid BNF encoder config {config:?}")));
        }
        check_block(&params, 1, config.in_dim, config.out_dim, config.kernel)?;
        check_block(&params, 2, config.out_dim, config.out_dim, config.kernel)?;
        Ok(BnfEncoder { config, params })
    }

    /// `x` is `[T, D]`; output `[T, F]`.
    pub fn forward<'g>(&self, x: Tensor<'g>, p: &BoundParams<'g>) -> Result<Tensor<'g>> {
        let k = self.config.kernel;
        let (left, right) = ((k - 1) / 2, k - 1 - (k - 1) / 2);
        let h = block(x, p, 1, 1, left, right)?;
        block(h, p, 2, 1, left, right)
    }

    pub fn encode(&self, bnf_aligned: &FeatureMatrix) -> Result<FeatureMatrix> {
        if bnf_aligned.cols != self.config.in_dim {
            return Err(Error::Shape(format!(
                "BNF has {} columns, encoder expects {}",
                bnf_aligned.cols, self.config.in_dim
            )));
        }
        let g = Graph::new();
        let p = self.params.bind(&g, false)?;
        let out = self.forward(bnf_aligned.to_tensor(&g)?, &p)?;
        FeatureMatrix::from_tensor(&out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwavEncoderConfig {
    pub strides: Vec<usize>,
    /// Output channels per layer; the last entry is the feature size `F`.
    pub channels: Vec<usize>,
}

impl Default for PwavEncoderConfig {
    fn default() -> Self {
        PwavEncoderConfig {
            strides: DEFAULT_PWAV_STRIDES.to_vec(),
            channels: vec![64, 128, 192, DEFAULT_FEATURE_DIM],
        }
    }
}

impl PwavEncoderConfig {
    pub fn out_dim(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty()
            || self.strides.len() != self.channels.len()
            || self.strides.contains(&0)
            || self.channels.contains(&0)
        {
            return Err(Error::Parameter(format!("invalid waveform encoder config {self:?}")));
        }
        Ok(())
    }
}

/// Strided convolutions straight from the waveform, kernel twice the
/// stride, each followed by layer norm and ReLU. The result is fitted onto
/// the shared frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PwavEncoder {
    pub config: PwavEncoderConfig,
    pub params: ParamStore,
}

impl PwavEncoder {
    pub fn init(config: PwavEncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::for_stage(seed, "pwav_encoder");
        let mut params = ParamStore::new();
        let mut c_in = 1;
        for (i, (&s, &c)) in config.strides.iter().zip(&config.channels).enumerate() {
            init_block(&mut params, i + 1, c_in, c, 2 * s, &mut rng);
            c_in = c;
        }
        Self::from_params(config, params)
    }

    pub fn from_params(config: PwavEncoderConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut c_in = 1;
        for (i, (&s, &c)) in config.strides.iter().zip(&config.channels).enumerate() {
            check_block(&params, i + 1, c_in, c, 2 * s)?;
            c_in = c;
        }
        Ok(PwavEncoder { config, params })
    }

    /// Frames produced before fitting to the grid.
    pub fn raw_frames(&self, samples: usize) -> usize {
        self.config.strides.iter().fold(samples, |n, &s| n / s)
    }

    /// `x` is the waveform as `[L, 1]`; output `[frames, F]`.
    pub fn forward<'g>(&self, x: Tensor<'g>, frames: usize, p: &BoundParams<'g>) -> Result<Tensor<'g>> {
        let mut h = x;
        for (i, &s) in self.config.strides.iter().enumerate() {
            // kernel 2s with s zeros of padding: floor(L / s) outputs
            h = block(h, p, i + 1, s, s / 2, s - s / 2)?;
        }
        fit_rows(h, frames)
    }

    pub fn encode(&self, audio: &AudioBuffer, frame: &FrameConfig) -> Result<FeatureMatrix> {
        let frames = frame_count(audio.len(), frame.hop(audio.sample_rate));
        if audio.len() < self.config.total_stride() {
            return Err(Error::Precondition(format!(
                "{} samples is shorter than the encoder's total stride {}",
                audio.len(),
                self.config.total_stride()
            )));
        }
        let g = Graph::new();
        let p = self.params.bind(&g, false)?;
        let x = g.constant(audio.to_f64(), &[audio.len(), 1])?;
        FeatureMatrix::from_tensor(&self.forward(x, frames, &p)?)
    }
}

/// Fits `[n, F]` onto `frames` rows: identical lengths pass through, an
/// off-by-one is trimmed or edge-padded, anything else is linearly
/// interpolated end to end.
pub(crate) fn fit_rows<'g>(h: Tensor<'g>, frames: usize) -> Result<Tensor<'g>> {
    let shape = h.shape();
    let n = shape[0];
    if n == 0 || frames == 0 {
        return Err(Error::Shape(format!("cannot fit {n} rows onto {frames}")));
    }
    if n == frames {
        return Ok(h);
    }
    if n == frames + 1 {
        return h.slice_rows(0, frames);
    }
    let mut m = vec![0.0; frames * n];
    if frames == n + 1 {
        for r in 0..frames {
            m[r * n + r.min(n - 1)] = 1.0;
        }
    } else {
        for (r, (lo, hi, frac)) in interp_positions(n, frames).into_iter().enumerate() {
            m[r * n + lo] += 1.0 - frac;
            m[r * n + hi] += frac;
        }
    }
    let m = h.graph().constant(m, &[frames, n])?;
    m.matmul(h)
}
