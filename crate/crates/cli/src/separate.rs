use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dgmo_core::mask_optim::write_loss_trace_csv;
use dgmo_core::refio::{read_header, write_mask, ExecProvider, ExecSettings, FileProvider, OracleProvider};
use dgmo_core::{
    load_waveform, optimize_mask, pad_and_normalize, AnalyzedMixture, Error, PadLayout, ReferenceProvider, Waveform,
};
use serde::Serialize;

use crate::config::{ProviderKind, RunConfig};

pub const SEPARATED_WAV: &str = "separated.wav";
pub const MASK_FILE: &str = "mask.dgm1";
pub const TRACE_CSV: &str = "loss_trace.csv";
pub const META_JSON: &str = "meta.json";

#[derive(Debug, Serialize)]
struct SeparationMeta<'a> {
    tool_version: &'static str,
    config: &'a RunConfig,
    original_len: usize,
    padded_len: usize,
    pad_offset: usize,
    gain_applied: f64,
    spectrogram_shape: [usize; 2],
    provider: String,
    final_loss: f64,
    initial_loss: f64,
}

/// What `separate` wrote.
#[derive(Debug, Clone)]
pub struct SeparateOutput {
    pub dir: PathBuf,
    pub final_loss: f64,
    pub initial_loss: f64,
}

/// Loads the mixture, centers it in the fixed-length buffer and
/// peak-normalizes it.
fn prepare(path: &Path, cfg: &RunConfig) -> Result<(Waveform, PadLayout)> {
    let raw = load_waveform(path, cfg.sample_rate)?;
    let layout = PadLayout::for_duration(raw.len(), cfg.sample_rate, cfg.duration_s);
    Ok((pad_and_normalize(&raw, cfg.duration_s, 1.0)?, layout))
}

/// Reference files must describe exactly the analysis the mixture gets.
fn check_refs_header(path: &Path, cfg: &RunConfig, padded_len: usize) -> Result<()> {
    let header = read_header(path)?;
    let frames = cfg.stft.n_frames(padded_len);
    let mut problems = Vec::new();
    if header.stft_config != cfg.stft {
        problems.push(format!("stft_config {:?} != {:?}", header.stft_config, cfg.stft));
    }
    if header.sample_rate != cfg.sample_rate {
        problems.push(format!("sample_rate {} != {}", header.sample_rate, cfg.sample_rate));
    }
    if header.shape[1] != frames {
        problems.push(format!("{} frames != {frames} mixture frames", header.shape[1]));
    }
    let domain = header.domain.or(header.mel_config.map(|m| m.loss_domain));
    if domain != Some(cfg.loss_domain) {
        problems.push(format!("domain {domain:?} != {:?}", cfg.loss_domain));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("{} does not match the run: {}", path.display(), problems.join("; "))).into())
    }
}

fn build_provider(cfg: &RunConfig, mixture: &Waveform, layout: &PadLayout) -> Result<Box<dyn ReferenceProvider>> {
    Ok(match cfg.provider {
        ProviderKind::File => {
            let refs = cfg.refs.as_ref().expect("validated");
            check_refs_header(refs, cfg, mixture.len())?;
            Box::new(FileProvider::new(refs))
        }
        ProviderKind::Oracle => {
            let path = cfg.target.as_ref().expect("validated");
            let raw = load_waveform(path, cfg.sample_rate).with_context(|| format!("loading {}", path.display()))?;
            if raw.len() != layout.original_len {
                return Err(Error::Contract(format!(
                    "oracle target has {} samples, mixture has {}",
                    raw.len(),
                    layout.original_len
                ))
                .into());
            }
            // same placement and gain as the mixture
            let gain = mixture.gain_applied();
            let samples = layout.pad(raw.samples()).into_iter().map(|s| s * gain).collect();
            let target = Waveform::new(samples, cfg.sample_rate)?;
            Box::new(OracleProvider::new(target, cfg.mel_config(), cfg.stft, cfg.jitter_db))
        }
        ProviderKind::DiffusionExec => {
            let bin = cfg.refgen_bin.as_ref().expect("validated");
            let settings = ExecSettings {
                query: cfg.query.clone(),
                ratio: cfg.refgen_ratio,
                steps: cfg.refgen_steps,
                mode: cfg.refgen_mode.clone(),
            };
            Box::new(ExecProvider::new(bin, settings)?)
        }
    })
}

pub fn cmd_separate(cfg: &RunConfig) -> Result<SeparateOutput> {
    cfg.validate()?;
    let mixture_path = cfg.mixture.as_ref().expect("validated");
    let out_dir = cfg.out.as_ref().expect("validated");

    let (mixture, layout) = prepare(mixture_path, cfg).with_context(|| format!("loading {}", mixture_path.display()))?;
    let mut provider = build_provider(cfg, &mixture, &layout)?;
    let analyzed = AnalyzedMixture::new(mixture, &cfg.stft)?;
    let result = optimize_mask(&analyzed, provider.as_mut(), &cfg.optimizer())?;
    let separated = layout.strip(&result.waveform);

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    dgmo_core::write_wav(&separated, out_dir.join(SEPARATED_WAV))?;
    write_mask(
        &result.final_mask.values(),
        &cfg.stft,
        cfg.sample_rate,
        out_dir.join(MASK_FILE),
    )?;
    let trace_path = out_dir.join(TRACE_CSV);
    let file = fs::File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    let mut w = BufWriter::new(file);
    write_loss_trace_csv(&result.loss_trace, &mut w)?;
    w.flush()?;

    let initial_loss = result.loss_trace[0][0];
    let shape = analyzed.magnitude.shape();
    let meta = SeparationMeta {
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        original_len: layout.original_len,
        padded_len: layout.padded_len,
        pad_offset: layout.offset(),
        gain_applied: analyzed.waveform.gain_applied(),
        spectrogram_shape: [shape.0, shape.1],
        provider: provider.name().to_string(),
        final_loss: result.final_loss(),
        initial_loss,
    };
    fs::write(out_dir.join(META_JSON), serde_json::to_string_pretty(&meta)?)?;
    Ok(SeparateOutput {
        dir: out_dir.clone(),
        final_loss: result.final_loss(),
        initial_loss,
    })
}
