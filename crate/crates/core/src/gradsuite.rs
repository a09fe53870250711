//! Named gradient-check cases over the differentiable model components.
//!
//! Each case packs every checked input into one flat vector, unpacks it on
//! the graph and reduces the output to a scalar with a fixed random
//! weighting, so a single [`grad_check`] covers all inputs at once.

use crate::content::{BnfEncoder, BnfEncoderConfig, PwavEncoder, PwavEncoderConfig};
use crate::error::{Error, Result};
use crate::fusion::fuse_tensor;
use crate::prosody::{cln_tensor, prosody_project, Activation, ProsodyWeights};
use crate::rng::{derive_seed, SeededRng};
use crate::synthesis::{adversarial_losses_tensor, feature_matching_loss_tensor, stft_loss_tensor};
use crate::tensor::{grad_check, numel, Graph, StftResolution, Tensor};

/// Pass threshold on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_EPS: f64 = 1e-6;
pub const SUITES: [&str; 5] = ["fusion", "cln", "encoders", "losses", "all"];
const SUITE_SEED: u64 = 0x6772_6164;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_err: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_TOLERANCE
    }
}

/// Splits a flat `[N]` tensor into consecutive pieces of the given shapes.
fn unpack<'g>(x: Tensor<'g>, shapes: &[&[usize]]) -> Result<Vec<Tensor<'g>>> {
    let mut off = 0;
    let mut out = Vec::with_capacity(shapes.len());
    for s in shapes {
        let n = numel(s);
        out.push(x.slice_last(off, off + n)?.reshape(s)?);
        off += n;
    }
    Ok(out)
}

fn random(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

/// `sum(t * c)` for a fixed random `c`, so every output element matters.
fn project<'g>(g: &'g Graph, t: Tensor<'g>, seed: u64) -> Result<Tensor<'g>> {
    let mut rng = SeededRng::new(seed);
    let c = g.constant(random(&mut rng, t.numel(), 1.0), &t.shape())?;
    Ok(t.mul(c)?.sum())
}

type Case = fn(u64, f64) -> Result<f64>;

fn fusion(seed: u64, eps: f64) -> Result<f64> {
    let (t, f) = (5, 4);
    let x = random(&mut SeededRng::new(seed), 3 * t * f, 1.0);
    grad_check(
        |g, x| {
            let p = unpack(x, &[&[t, f], &[t, f], &[t, f]])?;
            let (h_f, w) = fuse_tensor(p[0], p[1], p[2])?;
            project(g, h_f, seed ^ 1)?.add(project(g, w, seed ^ 2)?)
        },
        &x,
        &[x.len()],
        eps,
    )
}

fn cln(seed: u64, eps: f64) -> Result<f64> {
    let (t, c, d) = (4, 3, 5);
    let x = random(&mut SeededRng::new(seed), t * c + d + 2 * c * d, 0.8);
    grad_check(
        |g, x| {
            let p = unpack(x, &[&[t, c], &[d], &[c, d], &[c, d]])?;
            project(g, cln_tensor(p[0], p[1], p[2], p[3])?, seed ^ 1)
        },
        &x,
        &[x.len()],
        eps,
    )
}

fn prosody_projection(seed: u64, eps: f64) -> Result<f64> {
    let (t, d, out) = (6, 4, 3);
    let store = ProsodyWeights::init(d, out, seed).to_params();
    let x = random(&mut SeededRng::new(seed), 2 * t + d + 2 * d + 2 * out + out, 0.7);
    grad_check(
        |g, x| {
            let p = unpack(x, &[&[t, 1], &[t, 1], &[d], &[1, d], &[1, d], &[2, out], &[out]])?;
            let bound = store
                .bind(g, false)?
                .with("w_gamma", p[3])
                .with("w_beta", p[4])
                .with("proj_w", p[5])
                .with("proj_b", p[6]);
            project(g, prosody_project(p[0], p[1], p[2], &bound, Activation::Tanh)?, seed ^ 1)
        },
        &x,
        &[x.len()],
        eps,
    )
}

fn small_bnf_encoder(seed: u64) -> Result<BnfEncoder> {
    BnfEncoder::init(
        BnfEncoderConfig {
            in_dim: 4,
            out_dim: 3,
            kernel: 3,
        },
        seed,
    )
}

fn bnf_encoder_input(seed: u64, eps: f64) -> Result<f64> {
    let enc = small_bnf_encoder(seed)?;
    let t = 6;
    let x = random(&mut SeededRng::new(seed ^ 7), t * 4, 1.0);
    grad_check(
        |g, x| {
            let p = enc.params.bind(g, false)?;
            project(g, enc.forward(x, &p)?, seed ^ 1)
        },
        &x,
        &[t, 4],
        eps,
    )
}

fn bnf_encoder_weights(seed: u64, eps: f64) -> Result<f64> {
    let enc = small_bnf_encoder(seed)?;
    let t = 6;
    let input = random(&mut SeededRng::new(seed ^ 7), t * 4, 1.0);
    let w1 = enc.params.get("conv1.w")?.clone();
    let g2 = enc.params.get("ln2.g")?.clone();
    let x: Vec<f64> = w1.data.iter().chain(&g2.data).copied().collect();
    grad_check(
        |g, x| {
            let p = unpack(x, &[&w1.shape, &g2.shape])?;
            let bound = enc.params.bind(g, false)?.with("conv1.w", p[0]).with("ln2.g", p[1]);
            let input = g.constant(input.clone(), &[t, 4])?;
            project(g, enc.forward(input, &bound)?, seed ^ 1)
        },
        &x,
        &[x.len()],
        eps,
    )
}

fn small_pwav_encoder(seed: u64) -> Result<PwavEncoder> {
    PwavEncoder::init(
        PwavEncoderConfig {
            strides: vec![2, 3],
            channels: vec![3, 4],
        },
        seed,
    )
}

fn pwav_encoder_input(seed: u64, eps: f64) -> Result<f64> {
    let enc = small_pwav_encoder(seed)?;
    let len = 36;
    let x = random(&mut SeededRng::new(seed ^ 7), len, 0.5);
    grad_check(
        |g, x| {
            let p = enc.params.bind(g, false)?;
            // 6 raw frames fitted onto 7 exercises the edge-pad path
            project(g, enc.forward(x, 7, &p)?, seed ^ 1)
        },
        &x,
        &[len, 1],
        eps,
    )
}

fn pwav_encoder_weights(seed: u64, eps: f64) -> Result<f64> {
    let enc = small_pwav_encoder(seed)?;
    let len = 36;
    let input = random(&mut SeededRng::new(seed ^ 7), len, 0.5);
    let w1 = enc.params.get("conv1.w")?.clone();
    let w2 = enc.params.get("conv2.w")?.clone();
    let x: Vec<f64> = w1.data.iter().chain(&w2.data).copied().collect();
    grad_check(
        |g, x| {
            let p = unpack(x, &[&w1.shape, &w2.shape])?;
            let bound = enc.params.bind(g, false)?.with("conv1.w", p[0]).with("conv2.w", p[1]);
            let input = g.constant(input.clone(), &[len, 1])?;
            project(g, enc.forward(input, 4, &bound)?, seed ^ 1)
        },
        &x,
        &[x.len()],
        eps,
    )
}

const SMALL_RESOLUTIONS: [StftResolution; 2] = [StftResolution::new(32, 8, 32), StftResolution::new(64, 16, 48)];

fn stft_loss(seed: u64, eps: f64) -> Result<f64> {
    let len = 160;
    let mut rng = SeededRng::new(seed);
    let y = random(&mut rng, len, 0.5);
    let y_hat = random(&mut rng, len, 0.5);
    grad_check(
        |g, x| stft_loss_tensor(g.constant(y.clone(), &[len])?, x, &SMALL_RESOLUTIONS),
        &y_hat,
        &[len],
        eps,
    )
}

const FM_SHAPES: [&[usize]; 4] = [&[5, 2], &[3], &[4, 3], &[2]];

fn feature_matching(seed: u64, eps: f64) -> Result<f64> {
    let n: usize = FM_SHAPES.iter().map(|s| numel(s)).sum();
    let mut rng = SeededRng::new(seed);
    let real = random(&mut rng, n, 1.0);
    let fake = random(&mut rng, n, 1.0);
    grad_check(
        |g, x| {
            let r = unpack(g.constant(real.clone(), &[n])?, &FM_SHAPES)?;
            let f = unpack(x, &FM_SHAPES)?;
            // two discriminators with two layers each
            feature_matching_loss_tensor(&[r[..2].to_vec(), r[2..].to_vec()], &[f[..2].to_vec(), f[2..].to_vec()])
        },
        &fake,
        &[n],
        eps,
    )
}

fn adversarial(seed: u64, eps: f64) -> Result<f64> {
    let shapes: [&[usize]; 3] = [&[4], &[7], &[3]];
    let n: usize = shapes.iter().map(|s| numel(s)).sum();
    let x = random(&mut SeededRng::new(seed), 2 * n, 1.0);
    grad_check(
        |_, x| {
            let real = unpack(x.slice_last(0, n)?, &shapes)?;
            let fake = unpack(x.slice_last(n, 2 * n)?, &shapes)?;
            let (adv_g, adv_d) = adversarial_losses_tensor(&real, &fake)?;
            // distinct weights keep both terms visible in the gradient
            adv_g.add(adv_d.scale(0.7))
        },
        &x,
        &[2 * n],
        eps,
    )
}

fn cases(suite: &str) -> Result<Vec<(&'static str, Case)>> {
    let fusion_cases: Vec<(&'static str, Case)> = vec![("fusion", fusion)];
    let cln_cases: Vec<(&'static str, Case)> = vec![("cln", cln), ("prosody_projection", prosody_projection)];
    let encoder_cases: Vec<(&'static str, Case)> = vec![
        ("bnf_encoder.input", bnf_encoder_input),
        ("bnf_encoder.weights", bnf_encoder_weights),
        ("pwav_encoder.input", pwav_encoder_input),
        ("pwav_encoder.weights", pwav_encoder_weights),
    ];
    let loss_cases: Vec<(&'static str, Case)> = vec![
        ("stft_loss", stft_loss),
        ("feature_matching_loss", feature_matching),
        ("adversarial_losses", adversarial),
    ];
    Ok(match suite {
        "fusion" => fusion_cases,
        "cln" => cln_cases,
        "encoders" => encoder_cases,
        "losses" => loss_cases,
        "all" => [fusion_cases, cln_cases, encoder_cases, loss_cases].concat(),
        other => {
            return Err(Error::Parameter(format!(
                "unknown grad-check suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    })
}

/// Runs every case of `suite` with central-difference step `eps`.
pub fn run_suite(suite: &str, eps: f64) -> Result<Vec<CheckResult>> {
    cases(suite)?
        .into_iter()
        .map(|(name, case)| {
            let max_rel_err = case(derive_seed(SUITE_SEED, name), eps)?;
            Ok(CheckResult {
                name,
                max_rel_err,
            })
        })
        .collect()
}
