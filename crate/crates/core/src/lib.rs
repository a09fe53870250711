//! Signal chain, feature encoders, attention fusion and loss stack of a
//! BNF plus perturbed-waveform voice-conversion model.

pub mod audio;
pub mod config;
pub mod content;
pub mod dsp;
mod error;
pub mod features;
pub mod fusion;
pub mod gradsuite;
pub mod metrics;
pub mod model;
pub mod perturbation;
pub mod prosody;
pub mod rng;
pub mod synthesis;
pub mod tensor;

pub use audio::{AudioBuffer, FrameConfig, Window};
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use perturbation::PerturbConfig;
pub use prosody::{ProsodyTrack, SpeakerEmbedding};
pub use rng::SeededRng;
pub use tensor::{Graph, Tensor};
