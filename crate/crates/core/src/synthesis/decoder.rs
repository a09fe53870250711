use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::SeededRng;
use crate::tensor::{BoundParams, Graph, Param, ParamStore, Tensor};

use super::discriminators::LEAKY_SLOPE;

/// Mirror of the waveform encoder's default strides; product 240.
pub const DEFAULT_DECODER_STRIDES: [usize; 4] = [2, 4, 5, 6];

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub in_dim: usize,
    pub prosody_dim: usize,
    pub strides: Vec<usize>,
    /// Output channels per upsampling layer; the last must be 1.
    pub channels: Vec<usize>,
}

impl DecoderConfig {
    pub fn new(in_dim: usize, prosody_dim: usize) -> Self {
        DecoderConfig {
            in_dim,
            prosody_dim,
            strides: DEFAULT_DECODER_STRIDES.to_vec(),
            channels: vec![32, 16, 8, 1],
        }
    }

    pub fn hop(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty()
            || self.strides.len() != self.channels.len()
            || self.strides.contains(&0)
            || self.channels.contains(&0)
            || self.channels.last() != Some(&1)
            || self.in_dim == 0
        {
            return Err(Error::Parameter(format!("invalid decoder config {self:?}")));
        }
        Ok(())
    }
}

/// Toy waveform decoder: `h + h_p W_p`, then transposed convolutions
/// (kernel `2s`, stride `s`) with leaky ReLU between them and a final
/// `tanh`. Emits exactly `hop * T` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub params: ParamStore,
}

impl Decoder {
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::for_stage(seed, "decoder");
        let mut params = ParamStore::new();
        params.insert(
            "proj_p.w",
            Param::he_uniform(&[config.prosody_dim, config.in_dim], config.prosody_dim, &mut rng),
        );
        let mut c_in = config.in_dim;
        for (i, (&s, &c)) in config.strides.iter().zip(&config.channels).enumerate() {
            // every output sample sees two taps from each input channel
            params.insert(format!("up{}.w", i + 1), Param::he_uniform(&[c_in, c, 2 * s], 2 * c_in, &mut rng));
            params.insert(format!("up{}.b", i + 1), Param::zeros(&[c]));
            c_in = c;
        }
        Ok(Decoder { config, params })
    }

    pub fn zeroed(config: DecoderConfig) -> Result<Self> {
        let mut d = Self::init(config, 0)?;
        let names: Vec<String> = d.params.names().map(String::from).collect();
        for n in names {
            d.params.get_mut(&n)?.data.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(d)
    }

    /// `h` `[T, F]`, `h_p` `[T, F_p]`; returns the waveform `[T * hop]`.
    pub fn forward<'g>(&self, h: Tensor<'g>, h_p: Tensor<'g>, p: &BoundParams<'g>) -> Result<Tensor<'g>> {
        let (hs, ps) = (h.shape(), h_p.shape());
        if hs.len() != 2 || ps.len() != 2 || hs[0] != ps[0] {
            return Err(Error::Shape(format!("decoder inputs {hs:?} and {ps:?}")));
        }
        let t = hs[0];
        let mut x = h.add(h_p.matmul(p.get("proj_p.w")?)?)?;
        let mut len = t;
        let n = self.config.strides.len();
        for (i, &s) in self.config.strides.iter().enumerate() {
            len *= s;
            let w = p.get(&format!("up{}.w", i + 1))?;
            let b = p.opt(&format!("up{}.b", i + 1));
            x = x.conv_transpose1d(w, b, s, s / 2, len)?;
            x = if i + 1 < n { x.leaky_relu(LEAKY_SLOPE) } else { x.tanh() };
        }
        x.reshape(&[len])
    }

    pub fn decode(&self, h: &FeatureMatrix, h_p: &FeatureMatrix, sample_rate: u32) -> Result<AudioBuffer> {
        let g = Graph::new();
        let p = self.params.bind(&g, false)?;
        let y = self.forward(h.to_tensor(&g)?, h_p.to_tensor(&g)?, &p)?;
        Ok(AudioBuffer::from_f64(&y.value(), sample_rate))
    }
}

/// Plain-matrix entry point for [`Decoder::decode`].
pub fn toy_decode(h: &FeatureMatrix, h_p: &FeatureMatrix, decoder: &Decoder) -> Result<AudioBuffer> {
    decoder.decode(h, h_p, crate::audio::PIPELINE_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DecoderConfig {
        DecoderConfig {
            in_dim: 3,
            prosody_dim: 2,
            strides: DEFAULT_DECODER_STRIDES.to_vec(),
            channels: vec![3, 2, 2, 1],
        }
    }

    #[test]
    fn output_length_is_hop_times_frames() {
        let d = Decoder::init(small(), 1).unwrap();
        for t in [1, 2, 7, 100, 199] {
            let h = FeatureMatrix::zeros(t, 3);
            let p = FeatureMatrix::zeros(t, 2);
            assert_eq!(toy_decode(&h, &p, &d).unwrap().len(), 240 * t);
        }
    }

    #[test]
    fn zero_weights_zero_output() {
        let d = Decoder::zeroed(small()).unwrap();
        let mut r = SeededRng::new(1);
        let h = FeatureMatrix::new(4, 3, (0..12).map(|_| r.normal()).collect()).unwrap();
        let p = FeatureMatrix::new(4, 2, (0..8).map(|_| r.normal()).collect()).unwrap();
        assert!(toy_decode(&h, &p, &d).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic() {
        let mut r = SeededRng::new(2);
        let h = FeatureMatrix::new(5, 3, (0..15).map(|_| r.normal()).collect()).unwrap();
        let p = FeatureMatrix::new(5, 2, (0..10).map(|_| r.normal()).collect()).unwrap();
        let a = toy_decode(&h, &p, &Decoder::init(small(), 7).unwrap()).unwrap();
        let b = toy_decode(&h, &p, &Decoder::init(small(), 7).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().any(|&v| v != 0.0));
    }
}
