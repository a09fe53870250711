//! Loss stack, toy decoder, discriminators and the smoke-training loop.
//!
//! The generator objective is applied once per reconstruction path (the
//! fused feature and the auxiliary waveform-only feature) and summed; the
//! discriminator objective likewise sums both paths.

mod decoder;
mod discriminators;
mod losses;
mod train;

pub use decoder::{toy_decode, Decoder, DecoderConfig, DEFAULT_DECODER_STRIDES};
pub use discriminators::{
    BoundDiscriminators, ConstantDiscriminator, DiscOutput, Discriminator, DiscriminatorSet, DEFAULT_PERIODS,
    DEFAULT_SCALES, LEAKY_SLOPE,
};
pub use losses::{
    adversarial_losses, adversarial_losses_tensor, feature_matching_loss, feature_matching_loss_tensor, stft_loss,
    stft_loss_tensor, DEFAULT_STFT_RESOLUTIONS,
};
pub use train::{band_energy_features, history_csv, smoke_train, SmokeConfig};

use crate::error::{Error, Result};
use crate::tensor::{Graph, StftResolution, Tensor};

/// Relative weights of the generator terms and of the auxiliary path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub adv: f64,
    pub fm: f64,
    pub stft: f64,
    /// Multiplies every term of the waveform-only path; `0` disables it.
    pub aux_path: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 1.0,
            fm: 1.0,
            stft: 1.0,
            aux_path: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub adv_g: f64,
    pub adv_d: f64,
    pub fm: f64,
    pub stft: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.adv_g, self.adv_d, self.fm, self.stft, self.total_g, self.total_d]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Graph scalars of one reconstruction path.
#[derive(Debug, Clone, Copy)]
pub struct PathLoss<'g> {
    pub adv_g: Tensor<'g>,
    pub adv_d: Tensor<'g>,
    pub fm: Tensor<'g>,
    pub stft: Tensor<'g>,
}

impl<'g> PathLoss<'g> {
    pub fn generator_total(&self, w: &LossWeights) -> Result<Tensor<'g>> {
        self.adv_g.scale(w.adv).add(self.fm.scale(w.fm))?.add(self.stft.scale(w.stft))
    }
}

/// Generator and discriminator terms of `y_hat` against the reference `y`.
pub fn path_loss<'g>(
    y: Tensor<'g>,
    y_hat: Tensor<'g>,
    disc: &dyn Discriminator<'g>,
    resolutions: &[StftResolution],
) -> Result<PathLoss<'g>> {
    let real = disc.discriminate(y)?;
    path_loss_with_real(&real, y, y_hat, disc, resolutions)
}

fn path_loss_with_real<'g>(
    real: &[DiscOutput<'g>],
    y: Tensor<'g>,
    y_hat: Tensor<'g>,
    disc: &dyn Discriminator<'g>,
    resolutions: &[StftResolution],
) -> Result<PathLoss<'g>> {
    let fake = disc.discriminate(y_hat)?;
    let (adv_g, adv_d) = adversarial_terms(real, &fake)?;
    let rf: Vec<Vec<Tensor<'g>>> = real.iter().map(|o| o.features.clone()).collect();
    let ff: Vec<Vec<Tensor<'g>>> = fake.into_iter().map(|o| o.features).collect();
    let fm = feature_matching_loss_tensor(&rf, &ff)?;
    let stft = stft_loss_tensor(y, y_hat, resolutions)?;
    Ok(PathLoss { adv_g, adv_d, fm, stft })
}

fn adversarial_terms<'g>(real: &[DiscOutput<'g>], fake: &[DiscOutput<'g>]) -> Result<(Tensor<'g>, Tensor<'g>)> {
    let rs: Vec<Tensor<'g>> = real.iter().map(|o| o.score).collect();
    let fs: Vec<Tensor<'g>> = fake.iter().map(|o| o.score).collect();
    adversarial_losses_tensor(&rs, &fs)
}

/// Discriminator objective alone, summed over both paths. Cheaper than
/// [`total_losses_tensor`] for the discriminator update.
pub fn discriminator_loss_tensor<'g>(
    y: Tensor<'g>,
    y_hat_f: Tensor<'g>,
    y_hat_w: Tensor<'g>,
    disc: &dyn Discriminator<'g>,
    weights: &LossWeights,
) -> Result<Tensor<'g>> {
    let real = disc.discriminate(y)?;
    let (_, d_f) = adversarial_terms(&real, &disc.discriminate(y_hat_f)?)?;
    let (_, d_w) = adversarial_terms(&real, &disc.discriminate(y_hat_w)?)?;
    d_f.add(d_w.scale(weights.aux_path))
}

/// Both paths combined on one graph.
#[derive(Debug, Clone, Copy)]
pub struct TotalLoss<'g> {
    pub fused: PathLoss<'g>,
    pub aux: PathLoss<'g>,
    pub total_g: Tensor<'g>,
    pub total_d: Tensor<'g>,
    pub breakdown: LossBreakdown,
}

pub fn total_losses_tensor<'g>(
    y: Tensor<'g>,
    y_hat_f: Tensor<'g>,
    y_hat_w: Tensor<'g>,
    disc: &dyn Discriminator<'g>,
    weights: &LossWeights,
    resolutions: &[StftResolution],
) -> Result<TotalLoss<'g>> {
    if y.numel() != y_hat_f.numel() || y.numel() != y_hat_w.numel() {
        return Err(Error::Shape(format!(
            "waveforms of {}, {} and {} samples",
            y.numel(),
            y_hat_f.numel(),
            y_hat_w.numel()
        )));
    }
    let real = disc.discriminate(y)?;
    let fused = path_loss_with_real(&real, y, y_hat_f, disc, resolutions)?;
    let aux = path_loss_with_real(&real, y, y_hat_w, disc, resolutions)?;
    let a = weights.aux_path;
    let total_g = fused.generator_total(weights)?.add(aux.generator_total(weights)?.scale(a))?;
    let total_d = fused.adv_d.add(aux.adv_d.scale(a))?;
    let both = |f: Tensor<'g>, w: Tensor<'g>| f.item() + a * w.item();
    let (adv_g, fm, stft) = (both(fused.adv_g, aux.adv_g), both(fused.fm, aux.fm), both(fused.stft, aux.stft));
    let breakdown = LossBreakdown {
        adv_g,
        adv_d: total_d.item(),
        fm,
        stft,
        total_g: weights.adv * adv_g + weights.fm * fm + weights.stft * stft,
        total_d: total_d.item(),
    };
    Ok(TotalLoss {
        fused,
        aux,
        total_g,
        total_d,
        breakdown,
    })
}

/// Something that can place a discriminator on a graph.
pub trait DiscriminatorFactory {
    fn on_graph<'g>(&'g self, graph: &'g Graph) -> Result<Box<dyn Discriminator<'g> + 'g>>;
}

impl DiscriminatorFactory for DiscriminatorSet {
    fn on_graph<'g>(&'g self, graph: &'g Graph) -> Result<Box<dyn Discriminator<'g> + 'g>> {
        Ok(Box::new(self.bind(graph, false)?))
    }
}

impl DiscriminatorFactory for ConstantDiscriminator {
    fn on_graph<'g>(&'g self, _graph: &'g Graph) -> Result<Box<dyn Discriminator<'g> + 'g>> {
        Ok(Box::new(*self))
    }
}

/// Value-level [`total_losses_tensor`].
pub fn total_losses(
    y: &[f64],
    y_hat_f: &[f64],
    y_hat_w: &[f64],
    disc: &dyn DiscriminatorFactory,
    weights: &LossWeights,
    resolutions: &[StftResolution],
) -> Result<LossBreakdown> {
    let g = Graph::new();
    let d = disc.on_graph(&g)?;
    let c = |v: &[f64]| g.constant(v.to_vec(), &[v.len()]);
    Ok(total_losses_tensor(c(y)?, c(y_hat_f)?, c(y_hat_w)?, d.as_ref(), weights, resolutions)?.breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut r = SeededRng::new(seed);
        (0..n).map(|_| r.uniform(-0.5, 0.5)).collect()
    }

    const RES: [StftResolution; 2] = [StftResolution::new(64, 16, 64), StftResolution::new(128, 32, 128)];

    #[test]
    fn perfect_reconstruction_with_saturated_oracle() {
        let y = noise(600, 1);
        let b = total_losses(&y, &y, &y, &ConstantDiscriminator { value: 1.0 }, &LossWeights::default(), &RES)
            .unwrap();
        assert_eq!(b.total_g, 0.0);
        // each path: (1 - 1)^2 + 1^2
        assert_eq!(b.total_d, 2.0);
    }

    #[test]
    fn disabled_aux_path_is_single_path() {
        let (y, f, w) = (noise(600, 1), noise(600, 2), noise(600, 3));
        let set = DiscriminatorSet::new(vec![2, 3], vec![1, 2], RES.to_vec(), 3, 4).unwrap();
        let weights = LossWeights {
            aux_path: 0.0,
            ..LossWeights::default()
        };
        let b = total_losses(&y, &f, &w, &set, &weights, &RES).unwrap();
        let g = Graph::new();
        let d = set.bind(&g, false).unwrap();
        let c = |v: &[f64]| g.constant(v.to_vec(), &[v.len()]).unwrap();
        let single = path_loss(c(&y), c(&f), &d, &RES).unwrap().generator_total(&weights).unwrap().item();
        assert_eq!(b.total_g, single);
    }

    #[test]
    fn additive_over_paths() {
        let (y, f, w) = (noise(600, 5), noise(600, 6), noise(600, 7));
        let set = DiscriminatorSet::new(vec![2, 5], vec![1, 4], RES.to_vec(), 3, 9).unwrap();
        let weights = LossWeights::default();
        let b = total_losses(&y, &f, &w, &set, &weights, &RES).unwrap();
        let one = |yh: &[f64]| {
            let g = Graph::new();
            let d = set.bind(&g, false).unwrap();
            let c = |v: &[f64]| g.constant(v.to_vec(), &[v.len()]).unwrap();
            let p = path_loss(c(&y), c(yh), &d, &RES).unwrap();
            (p.generator_total(&weights).unwrap().item(), p.adv_d.item())
        };
        let (gf, df) = one(&f);
        let (gw, dw) = one(&w);
        assert!((b.total_g - (gf + gw)).abs() < 1e-9);
        assert!((b.total_d - (df + dw)).abs() < 1e-9);
        assert!((b.total_g - (b.adv_g + b.fm + b.stft)).abs() < 1e-12);
        let g = Graph::new();
        let d = set.bind(&g, false).unwrap();
        let c = |v: &[f64]| g.constant(v.to_vec(), &[v.len()]).unwrap();
        let dl = discriminator_loss_tensor(c(&y), c(&f), c(&w), &d, &weights).unwrap().item();
        assert!((dl - b.total_d).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths() {
        let y = noise(600, 1);
        let r = total_losses(&y, &y[..500], &y, &ConstantDiscriminator { value: 0.0 }, &LossWeights::default(), &RES);
        assert!(r.is_err());
    }
}
