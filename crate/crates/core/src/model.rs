//! The content-extractor forward pass: both encoders, the prosody encoder
//! and fusion, with their weights in one prefixed parameter store.

use crate::audio::{resample, AudioBuffer, PIPELINE_RATE};
use crate::config::PipelineConfig;
use crate::content::{align_bnf, BnfEncoder, BnfEncoderConfig, BnfMatrix, PwavEncoder, PwavEncoderConfig};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::fusion::{fuse, FusionOutput};
use crate::prosody::{prosody_encode, ProsodyTrack, ProsodyWeights, SpeakerEmbedding};
use crate::rng::derive_seed;
use crate::tensor::{NamedTensor, ParamStore, WeightFile};

pub const BNF_PREFIX: &str = "bnf_encoder.";
pub const PWAV_PREFIX: &str = "pwav_encoder.";
pub const PROSODY_PREFIX: &str = "prosody_encoder.";
/// Tensor name of a speaker embedding in its own weight file.
pub const SPEAKER_TENSOR: &str = "speaker";

#[derive(Debug, Clone, PartialEq)]
pub struct ContentModel {
    pub bnf: BnfEncoder,
    pub pwav: PwavEncoder,
    pub prosody: ProsodyWeights,
}

/// Every intermediate of one forward pass, all on the same `T` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentOutput {
    pub track: ProsodyTrack,
    pub h_b: FeatureMatrix,
    pub h_w: FeatureMatrix,
    pub h_p: FeatureMatrix,
    pub fusion: FusionOutput,
}

fn encoder_configs(cfg: &PipelineConfig) -> (BnfEncoderConfig, PwavEncoderConfig) {
    let e = &cfg.encoder;
    (
        BnfEncoderConfig {
            in_dim: e.bnf_dim,
            out_dim: e.feature_dim,
            kernel: e.bnf_kernel,
        },
        PwavEncoderConfig {
            strides: e.pwav_strides.clone(),
            channels: e.pwav_channels.clone(),
        },
    )
}

impl ContentModel {
    pub fn init(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (bc, pc) = encoder_configs(cfg);
        let mut prosody = ProsodyWeights::init(cfg.encoder.speaker_dim, cfg.encoder.feature_dim, derive_seed(seed, "prosody"));
        prosody.activation = cfg.encoder.prosody_activation;
        Ok(ContentModel {
            bnf: BnfEncoder::init(bc, derive_seed(seed, "bnf"))?,
            pwav: PwavEncoder::init(pc, derive_seed(seed, "pwav"))?,
            prosody,
        })
    }

    pub fn to_params(&self) -> ParamStore {
        let mut s = ParamStore::new();
        s.merge_prefixed(BNF_PREFIX, self.bnf.params.clone());
        s.merge_prefixed(PWAV_PREFIX, self.pwav.params.clone());
        s.merge_prefixed(PROSODY_PREFIX, self.prosody.to_params());
        s
    }

    pub fn from_params(cfg: &PipelineConfig, store: &ParamStore) -> Result<Self> {
        let (bc, pc) = encoder_configs(cfg);
        let prosody = ProsodyWeights::from_params(&store.sub_store(PROSODY_PREFIX), cfg.encoder.prosody_activation)?;
        if prosody.out_dim() != cfg.encoder.feature_dim || prosody.cln.w_gamma.cols != cfg.encoder.speaker_dim {
            return Err(Error::Shape("prosody weights disagree with the configured dimensions".into()));
        }
        Ok(ContentModel {
            bnf: BnfEncoder::from_params(bc, store.sub_store(BNF_PREFIX))?,
            pwav: PwavEncoder::from_params(pc, store.sub_store(PWAV_PREFIX))?,
            prosody,
        })
    }

    /// Resamples to the pipeline rate, extracts prosody on the shared grid,
    /// aligns the BNFs onto it and fuses.
    pub fn run(
        &self,
        cfg: &PipelineConfig,
        bnf: &BnfMatrix,
        audio: &AudioBuffer,
        speaker: &SpeakerEmbedding,
    ) -> Result<ContentOutput> {
        let audio = resample(audio, PIPELINE_RATE)?;
        let track = ProsodyTrack::extract(&audio, &cfg.frame)?;
        let h_b = self.bnf.encode(&align_bnf(bnf, track.len())?)?;
        let h_w = self.pwav.encode(&audio, &cfg.frame)?;
        let h_p = prosody_encode(&track.f0, &track.energy, speaker, &self.prosody)?;
        let fusion = fuse(&h_b, &h_w, &h_p)?;
        Ok(ContentOutput {
            track,
            h_b,
            h_w,
            h_p,
            fusion,
        })
    }
}

pub fn speaker_to_weight_file(spk: &SpeakerEmbedding) -> WeightFile {
    WeightFile {
        tensors: vec![NamedTensor {
            name: SPEAKER_TENSOR.into(),
            shape: vec![spk.dim()],
            data: spk.values.iter().map(|&v| v as f32).collect(),
        }],
    }
}

pub fn speaker_from_weight_file(w: &WeightFile) -> Result<SpeakerEmbedding> {
    let t = w
        .get(SPEAKER_TENSOR)
        .ok_or_else(|| Error::Format(format!("no {SPEAKER_TENSOR:?} tensor in speaker file")))?;
    if t.shape.len() != 1 {
        return Err(Error::Format(format!("speaker tensor has shape {:?}, expected rank 1", t.shape)));
    }
    SpeakerEmbedding::new(t.data.iter().map(|&v| v as f64).collect())
}
