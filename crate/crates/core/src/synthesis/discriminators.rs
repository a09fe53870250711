//! Small multi-period, multi-scale and spectrogram discriminators, three
//! convolutions each with leaky ReLU between them.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{BoundParams, Graph, Param, ParamStore, StftResolution, Tensor};

use super::losses::DEFAULT_STFT_RESOLUTIONS;

pub const LEAKY_SLOPE: f64 = 0.1;
pub const DEFAULT_PERIODS: [usize; 5] = [2, 3, 5, 7, 11];
pub const DEFAULT_SCALES: [usize; 3] = [1, 2, 4];

/// Final score map and intermediate activations of one sub-discriminator.
#[derive(Debug, Clone)]
pub struct DiscOutput<'g> {
    pub score: Tensor<'g>,
    pub features: Vec<Tensor<'g>>,
}

/// Anything that scores a waveform `[L]` with one or more sub-discriminators.
pub trait Discriminator<'g> {
    fn discriminate(&self, x: Tensor<'g>) -> Result<Vec<DiscOutput<'g>>>;
}

/// `(kernel, stride, padding)` of the three layers.
const WAVE_LAYERS: [(usize, usize, usize); 3] = [(5, 3, 2), (5, 3, 2), (3, 1, 1)];
const SPEC_LAYERS: [(usize, usize, usize); 3] = [(3, 1, 1), (3, 2, 1), (3, 1, 1)];

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorSet {
    pub periods: Vec<usize>,
    pub scales: Vec<usize>,
    pub resolutions: Vec<StftResolution>,
    pub channels: usize,
    pub params: ParamStore,
}

impl DiscriminatorSet {
    pub fn new(
        periods: Vec<usize>,
        scales: Vec<usize>,
        resolutions: Vec<StftResolution>,
        channels: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut set = DiscriminatorSet {
            periods,
            scales,
            resolutions,
            channels,
            params: ParamStore::new(),
        };
        set.validate()?;
        let mut rng = SeededRng::for_stage(seed, "discriminators");
        for name in set.wave_names() {
            set.init_stack(&name, 1, &WAVE_LAYERS, &mut rng);
        }
        for r in set.resolutions.clone() {
            set.init_stack(&format!("spec{}", r.fft), r.fft / 2 + 1, &SPEC_LAYERS, &mut rng);
        }
        Ok(set)
    }

    pub fn with_defaults(channels: usize, seed: u64) -> Result<Self> {
        Self::new(
            DEFAULT_PERIODS.to_vec(),
            DEFAULT_SCALES.to_vec(),
            DEFAULT_STFT_RESOLUTIONS.to_vec(),
            channels,
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = self.periods.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.periods.len() || !self.periods.iter().all(|&p| is_prime(p)) {
            return Err(Error::Parameter(format!("periods must be distinct primes: {:?}", self.periods)));
        }
        if self.scales.contains(&0) || self.channels == 0 {
            return Err(Error::Parameter("scales and channels must be positive".into()));
        }
        for r in &self.resolutions {
            r.validate()?;
        }
        Ok(())
    }

    fn wave_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.periods.iter().map(|p| format!("mpd{p}")).collect();
        v.extend(self.scales.iter().map(|s| format!("msd{s}")));
        v
    }

    fn init_stack(&mut self, prefix: &str, c_in: usize, layers: &[(usize, usize, usize)], rng: &mut SeededRng) {
        let c = self.channels;
        let dims = [(c_in, c), (c, c), (c, 1)];
        for (i, (&(k, _, _), &(ci, co))) in layers.iter().zip(&dims).enumerate() {
            self.params
                .insert(format!("{prefix}.conv{}.w", i + 1), Param::he_uniform(&[co, ci, k], ci * k, rng));
            self.params.insert(format!("{prefix}.conv{}.b", i + 1), Param::zeros(&[co]));
        }
    }

    /// Binds the parameters to `graph`; trainable for the discriminator step.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> Result<BoundDiscriminators<'g>> {
        Ok(BoundDiscriminators {
            periods: self.periods.clone(),
            scales: self.scales.clone(),
            resolutions: self.resolutions.clone(),
            params: self.params.bind(graph, trainable)?,
        })
    }
}

pub struct BoundDiscriminators<'g> {
    periods: Vec<usize>,
    scales: Vec<usize>,
    resolutions: Vec<StftResolution>,
    pub params: BoundParams<'g>,
}

impl<'g> BoundDiscriminators<'g> {
    fn stack(&self, prefix: &str, x: Tensor<'g>, layers: &[(usize, usize, usize)]) -> Result<DiscOutput<'g>> {
        let mut h = x;
        let mut features = Vec::new();
        for (i, &(_, s, p)) in layers.iter().enumerate() {
            let w = self.params.get(&format!("{prefix}.conv{}.w", i + 1))?;
            let b = self.params.opt(&format!("{prefix}.conv{}.b", i + 1));
            h = h.conv1d(w, b, s, p, p)?;
            if i + 1 < layers.len() {
                h = h.leaky_relu(LEAKY_SLOPE);
            }
            features.push(h);
        }
        Ok(DiscOutput { score: h, features })
    }
}

impl<'g> Discriminator<'g> for BoundDiscriminators<'g> {
    fn discriminate(&self, x: Tensor<'g>) -> Result<Vec<DiscOutput<'g>>> {
        let len = x.numel();
        let col = x.reshape(&[len, 1])?;
        let mut out = Vec::new();
        for &p in &self.periods {
            // fold the waveform into p interleaved phases, one batch item each
            let rows = len.div_ceil(p);
            let padded = col.pad_rows(0, rows * p - len)?;
            let folded = padded.reshape(&[rows, p])?.transpose()?.reshape(&[p, rows, 1])?;
            out.push(self.stack(&format!("mpd{p}"), folded, &WAVE_LAYERS)?);
        }
        for &s in &self.scales {
            let pooled = if s == 1 { col } else { col.avg_pool_rows(s)? };
            out.push(self.stack(&format!("msd{s}"), pooled, &WAVE_LAYERS)?);
        }
        for &r in &self.resolutions {
            // log(1 + |S|) stays bounded for silent inputs
            let spec = x.stft_magnitude(r)?.add_scalar(1.0).log();
            out.push(self.stack(&format!("spec{}", r.fft), spec, &SPEC_LAYERS)?);
        }
        Ok(out)
    }
}

/// Scores every input with a constant and reports the input itself as the
/// only feature layer. Useful for checking loss algebra in isolation.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDiscriminator {
    pub value: f64,
}

impl<'g> Discriminator<'g> for ConstantDiscriminator {
    fn discriminate(&self, x: Tensor<'g>) -> Result<Vec<DiscOutput<'g>>> {
        let score = x.graph().constant(vec![self.value; 4], &[4])?;
        Ok(vec![DiscOutput {
            score,
            features: vec![x],
        }])
    }
}
