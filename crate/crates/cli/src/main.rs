//! `fusevc`: perturbation, feature extraction, fusion, correlation,
//! gradient checks and smoke training from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fusevc_core::audio::{read_wav, resample, write_wav, BitDepth, PIPELINE_RATE};
use fusevc_core::config::PipelineConfig;
use fusevc_core::content::{read_bnf, write_bnf, BnfMatrix};
use fusevc_core::fusion::trajectory_csv;
use fusevc_core::gradsuite::{run_suite, DEFAULT_EPS, GRAD_TOLERANCE, SUITES};
use fusevc_core::metrics::correlate_prosody;
use fusevc_core::model::{speaker_from_weight_file, speaker_to_weight_file, ContentModel};
use fusevc_core::perturbation::{perturb, sample_perturb_config_with};
use fusevc_core::synthesis::{history_csv, smoke_train, SmokeConfig};
use fusevc_core::tensor::{read_tsr, write_tsr, ParamStore};
use fusevc_core::{AudioBuffer, PerturbConfig, ProsodyTrack, SeededRng, SpeakerEmbedding};
use log::info;

#[derive(Parser)]
#[command(name = "fusevc", version, about = "BNF plus perturbed-waveform voice-conversion toolkit")]
struct Cli {
    /// Pipeline config file (`[section]` / `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a seeded random perturbation and print the sampled config.
    Perturb {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the identity configuration instead of sampling one.
        #[arg(long)]
        neutral: bool,
    },
    /// Write the f0/energy track as CSV.
    Features { input: PathBuf, output: PathBuf },
    /// Run the content extractor and fusion.
    Fuse {
        bnf: PathBuf,
        input: PathBuf,
        speaker: PathBuf,
        weights: PathBuf,
        /// Per-frame BNF weight as CSV.
        #[arg(long)]
        emit_weights: Option<PathBuf>,
        /// Fused features in the BNF1 layout.
        #[arg(long)]
        emit_hf: Option<PathBuf>,
    },
    /// Pearson correlation of log-f0 and energy between two recordings.
    Correlate { a: PathBuf, b: PathBuf },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: String,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Short deterministic GAN run on one clip; writes the loss history.
    Smoketrain {
        clip: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write seeded encoder weights, and optionally a speaker embedding.
    InitWeights {
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        speaker: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.check_paths()?;
    Ok(cfg)
}

fn seed(flag: Option<u64>, cfg: &PipelineConfig) -> Result<u64> {
    match flag {
        Some(s) => Ok(s),
        None => Ok(cfg.require_seed()?),
    }
}

fn read_pipeline_audio(path: &Path) -> Result<AudioBuffer> {
    let a = read_wav(path)?;
    info!("{}: {} samples at {} Hz", path.display(), a.len(), a.sample_rate);
    Ok(resample(&a, PIPELINE_RATE)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| fusevc_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Perturb {
            input,
            output,
            seed: s,
            neutral,
        } => {
            let audio = read_pipeline_audio(&input)?;
            let pc = if neutral {
                PerturbConfig::neutral()
            } else {
                sample_perturb_config_with(seed(s, &cfg)?, PIPELINE_RATE, &cfg.perturb)
            };
            let out = perturb(&audio, &pc)?;
            write_wav(&output, &out, BitDepth::Float32)?;
            print!("{}", pc.to_text());
        }
        Command::Features { input, output } => {
            let audio = read_pipeline_audio(&input)?;
            let track = ProsodyTrack::extract(&audio, &cfg.frame)?;
            write_text(&output, &track.to_csv())?;
            info!("{} frames", track.len());
        }
        Command::Fuse {
            bnf,
            input,
            speaker,
            weights,
            emit_weights,
            emit_hf,
        } => {
            let bnf = read_bnf(&bnf)?;
            let audio = read_wav(&input)?;
            let spk = speaker_from_weight_file(&read_tsr(&speaker)?)?;
            let store = ParamStore::from_weight_file(&read_tsr(&weights)?)?;
            let model = ContentModel::from_params(&cfg, &store).context("loading encoder weights")?;
            let out = model.run(&cfg, &bnf, &audio, &spk)?;
            if let Some(p) = emit_weights {
                write_text(&p, &trajectory_csv(&out.fusion))?;
            }
            if let Some(p) = emit_hf {
                write_bnf(&p, &BnfMatrix::from_features(&out.fusion.h_f, cfg.frame.hop_ms.round() as u32)?)?;
            }
            let w = &out.fusion.weights;
            let mean_wb = (0..w.rows).map(|t| w.row(t)[0]).sum::<f64>() / w.rows as f64;
            println!("frames={}\nfeature_dim={}\nmean_w_b={mean_wb:.6}", w.rows, out.fusion.h_f.cols);
        }
        Command::Correlate { a, b } => {
            let ta = ProsodyTrack::extract(&read_pipeline_audio(&a)?, &cfg.frame)?;
            let tb = ProsodyTrack::extract(&read_pipeline_audio(&b)?, &cfg.frame)?;
            print!("{}", correlate_prosody(&ta, &tb)?.to_key_value());
        }
        Command::Gradcheck { suite, eps } => {
            println!("suite={suite} eps={eps:e} tolerance={GRAD_TOLERANCE:e}");
            let results = run_suite(&suite, eps)?;
            for r in &results {
                let verdict = if r.passed() { "PASS" } else { "FAIL" };
                println!("{:<24} {:.3e} {verdict}", r.name, r.max_rel_err);
            }
            if !results.iter().all(|r| r.passed()) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Smoketrain {
            clip,
            output,
            steps,
            seed: s,
        } => {
            let audio = read_wav(&clip)?;
            let sc = SmokeConfig {
                steps,
                seed: seed(s, &cfg)?,
                ..SmokeConfig::default()
            };
            let history = smoke_train(&[audio], &sc)?;
            write_text(&output, &history_csv(&history))?;
            if let Some(last) = history.last() {
                println!("steps={} final_stft={:.6} final_total_g={:.6}", history.len(), last.stft, last.total_g);
            }
        }
        Command::InitWeights {
            output,
            seed: s,
            speaker,
        } => {
            let s = seed(s, &cfg)?;
            write_tsr(&output, &ContentModel::init(&cfg, s)?.to_params().to_weight_file())?;
            if let Some(p) = speaker {
                let mut rng = SeededRng::for_stage(s, "speaker");
                let d = cfg.encoder.speaker_dim;
                let scale = 1.0 / (d as f64).sqrt();
                let spk = SpeakerEmbedding::new((0..d).map(|_| scale * rng.normal()).collect())?;
                write_tsr(&p, &speaker_to_weight_file(&spk))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// 2 for bad files or arguments, 1 for failures of the computation.
fn exit_code(e: &anyhow::Error) -> u8 {
    let input = e
        .chain()
        .filter_map(|c| c.downcast_ref::<fusevc_core::Error>())
        .any(|c| c.is_input_error());
    if input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
