//! Desk-scale training loop: alternating generator and discriminator steps
//! with plain gradient descent, fed alternately with original and
//! speed-augmented clips.

use crate::audio::{frame_count, frame_signal, resample, AudioBuffer, FrameConfig, PIPELINE_RATE};
use crate::content::{BnfEncoder, BnfEncoderConfig, PwavEncoder, PwavEncoderConfig, DEFAULT_PWAV_STRIDES};
use crate::dsp::fft_real;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fusion::fuse_tensor;
use crate::perturbation::{perturb, sample_perturb_config, speed_augment};
use crate::prosody::{prosody_encode_tensor, Activation, ProsodyTrack, ProsodyWeights};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{Graph, StftResolution};

use super::{
    discriminator_loss_tensor, total_losses_tensor, Decoder, DecoderConfig, DiscriminatorSet, LossBreakdown, LossWeights, DEFAULT_PERIODS,
    DEFAULT_SCALES, DEFAULT_STFT_RESOLUTIONS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SmokeConfig {
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Size of the band-energy features standing in for BNFs.
    pub bnf_dim: usize,
    pub feature_dim: usize,
    pub speaker_dim: usize,
    pub pwav_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub disc_channels: usize,
    /// Speed-augmentation factors are drawn uniformly from this range.
    pub speed_range: (f64, f64),
    pub weights: LossWeights,
    pub resolutions: Vec<StftResolution>,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        SmokeConfig {
            steps: 200,
            seed: 0,
            learning_rate: 1e-4,
            bnf_dim: 16,
            feature_dim: 16,
            speaker_dim: 8,
            pwav_channels: vec![8, 8, 16, 16],
            decoder_channels: vec![16, 8, 8, 1],
            disc_channels: 8,
            speed_range: (1.1, 1.5),
            weights: LossWeights::default(),
            resolutions: DEFAULT_STFT_RESOLUTIONS.to_vec(),
        }
    }
}

/// Per-frame log band energies on the shared grid: a deterministic stand-in
/// for recognizer bottleneck features when none are available.
pub fn band_energy_features(audio: &AudioBuffer, dim: usize, frame: &FrameConfig) -> Result<FeatureMatrix> {
    let frames = frame_signal(audio, frame)?;
    let n_fft = frames.frame_len.next_power_of_two();
    let sr = audio.sample_rate as f64;
    let (lo, hi) = (60.0f64, (0.45 * sr).min(10_000.0));
    let edges: Vec<f64> = (0..=dim).map(|i| lo * (hi / lo).powf(i as f64 / dim as f64)).collect();
    let mut out = FeatureMatrix::zeros(frames.count, dim);
    for t in 0..frames.count {
        let spec = fft_real(frames.frame(t), n_fft);
        let row = out.row_mut(t);
        for (b, slot) in row.iter_mut().enumerate() {
            let k0 = (edges[b] * n_fft as f64 / sr).floor() as usize;
            let k1 = ((edges[b + 1] * n_fft as f64 / sr).ceil() as usize).max(k0 + 1);
            let p: f64 = spec[k0..k1].iter().map(|c| c.norm_sqr()).sum::<f64>() / (k1 - k0) as f64;
            *slot = (p + 1e-6).ln();
        }
    }
    Ok(out)
}

struct Generator {
    bnf: BnfEncoder,
    pwav: PwavEncoder,
    prosody: crate::tensor::ParamStore,
    decoder: Decoder,
    speaker: Vec<f64>,
}

/// Runs `config.steps` alternating updates over `clips` (cycled) and
/// returns one loss breakdown per step.
pub fn smoke_train(clips: &[AudioBuffer], config: &SmokeConfig) -> Result<Vec<LossBreakdown>> {
    if clips.is_empty() || config.steps == 0 {
        return Err(Error::Precondition("smoke training needs at least one clip and one step".into()));
    }
    let clips = clips
        .iter()
        .map(|c| resample(c, PIPELINE_RATE))
        .collect::<Result<Vec<_>>>()?;
    if let Some(c) = clips.iter().find(|c| c.duration_secs() < 0.5) {
        return Err(Error::Precondition(format!("clip of {:.3} s is shorter than 0.5 s", c.duration_secs())));
    }
    let (lo, hi) = config.speed_range;
    if !(1.0 <= lo && lo <= hi && hi <= 2.0) {
        return Err(Error::Parameter(format!("speed range {lo}..{hi} outside [1, 2]")));
    }
    let frame = FrameConfig::default();
    let seed = config.seed;
    let f = config.feature_dim;
    let mut gen = Generator {
        bnf: BnfEncoder::init(
            BnfEncoderConfig {
                in_dim: config.bnf_dim,
                out_dim: f,
                kernel: 5,
            },
            seed,
        )?,
        pwav: PwavEncoder::init(
            PwavEncoderConfig {
                strides: DEFAULT_PWAV_STRIDES.to_vec(),
                channels: config.pwav_channels.clone(),
            },
            seed,
        )?,
        prosody: ProsodyWeights::init(config.speaker_dim, f, seed).to_params(),
        decoder: Decoder::init(
            DecoderConfig {
                in_dim: f,
                prosody_dim: f,
                strides: super::DEFAULT_DECODER_STRIDES.to_vec(),
                channels: config.decoder_channels.clone(),
            },
            seed,
        )?,
        speaker: {
            let mut r = SeededRng::for_stage(seed, "speaker");
            (0..config.speaker_dim).map(|_| r.normal()).collect()
        },
    };
    if gen.pwav.config.out_dim() != f {
        return Err(Error::Parameter("waveform encoder must end in feature_dim channels".into()));
    }
    let mut disc = DiscriminatorSet::new(
        DEFAULT_PERIODS.to_vec(),
        DEFAULT_SCALES.to_vec(),
        config.resolutions.clone(),
        config.disc_channels,
        seed,
    )?;
    let mut speed_rng = SeededRng::for_stage(seed, "speed");
    let lr = config.learning_rate;
    let mut history = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let clip = &clips[step % clips.len()];
        let target = if step % 2 == 1 {
            speed_augment(clip, speed_rng.uniform(lo, hi))?
        } else {
            clip.clone()
        };
        let pc = sample_perturb_config(derive_seed(seed, &format!("perturb.{step}")), PIPELINE_RATE);
        let perturbed = perturb(&target, &pc)?;
        let hop = frame.hop(PIPELINE_RATE);
        let t = frame_count(target.len(), hop);
        let bnf = band_energy_features(&target, config.bnf_dim, &frame)?;
        let track = ProsodyTrack::extract(&target, &frame)?;
        let mut y = target.to_f64();
        y.resize(t * hop, 0.0);

        // generator step, discriminator frozen
        let (breakdown, y_f, y_w) = {
            let g = Graph::new();
            let pb = gen.bnf.params.bind(&g, true)?;
            let pw = gen.pwav.params.bind(&g, true)?;
            let pp = gen.prosody.bind(&g, true)?;
            let pd = gen.decoder.params.bind(&g, true)?;
            let d = disc.bind(&g, false)?;
            let h_b = gen.bnf.forward(bnf.to_tensor(&g)?, &pb)?;
            let x = g.constant(perturbed.to_f64(), &[perturbed.len(), 1])?;
            let h_w = gen.pwav.forward(x, t, &pw)?;
            let spk = g.constant(gen.speaker.clone(), &[config.speaker_dim])?;
            let h_p = prosody_encode_tensor(&g, &track.f0, &track.energy, spk, &pp, Activation::Tanh)?;
            let (h_f, _) = fuse_tensor(h_b, h_w, h_p)?;
            let y_f = gen.decoder.forward(h_f, h_p, &pd)?;
            let y_w = gen.decoder.forward(h_w, h_p, &pd)?;
            let yt = g.constant(y.clone(), &[y.len()])?;
            let loss = total_losses_tensor(yt, y_f, y_w, &d, &config.weights, &config.resolutions)?;
            if !loss.breakdown.is_finite() {
                return Err(Error::Divergence {
                    step,
                    what: "generator loss".into(),
                });
            }
            loss.total_g.backward()?;
            gen.bnf.params.sgd_step(&pb, lr);
            gen.pwav.params.sgd_step(&pw, lr);
            gen.prosody.sgd_step(&pp, lr);
            gen.decoder.params.sgd_step(&pd, lr);
            (loss.breakdown, y_f.value(), y_w.value())
        };

        // discriminator step on the generator's detached outputs
        {
            let g = Graph::new();
            let d = disc.bind(&g, true)?;
            let c = |v: &[f64]| g.constant(v.to_vec(), &[v.len()]);
            let loss = discriminator_loss_tensor(c(&y)?, c(&y_f)?, c(&y_w)?, &d, &config.weights)?;
            if !loss.item().is_finite() {
                return Err(Error::Divergence {
                    step,
                    what: "discriminator loss".into(),
                });
            }
            loss.backward()?;
            disc.params.sgd_step(&d.params, lr);
        }
        log::debug!("step {step}: {breakdown:?}");
        history.push(breakdown);
    }
    Ok(history)
}

/// History CSV: `step,adv_g,adv_d,fm,stft,total_g,total_d`.
pub fn history_csv(history: &[LossBreakdown]) -> String {
    let mut s = String::from("step,adv_g,adv_d,fm,stft,total_g,total_d\n");
    for (i, b) in history.iter().enumerate() {
        s.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            b.adv_g, b.adv_d, b.fm, b.stft, b.total_g, b.total_d
        ));
    }
    s
}
