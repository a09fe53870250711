//! Linguistic (BNF) and para-linguistic (perturbed waveform) branches.

mod bnf;
mod encoders;

pub use bnf::{align_bnf, read_bnf, write_bnf, BnfMatrix, CSV_SOURCE_HOP_MS, DEFAULT_BNF_DIM};
pub use encoders::{
    BnfEncoder, BnfEncoderConfig, PwavEncoder, PwavEncoderConfig, ALT_PWAV_STRIDES, DEFAULT_FEATURE_DIM,
    DEFAULT_PWAV_STRIDES, ENCODER_LN_EPS,
};
