//! Run configuration: defaults, then the `--config` JSON file, then flags.

use std::path::{Path, PathBuf};

use dgmo_core::mask_optim::StepRule;
use dgmo_core::{Error, MaskInit, MelConfig, MelDomain, OptimizerConfig, StftConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    File,
    Oracle,
    DiffusionExec,
}

/// Every flag of `dgmo separate` has a key of the same name here (dashes
/// become underscores). Analysis settings without a flag live under `stft`
/// and `mel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mixture: Option<PathBuf>,
    pub query: String,
    pub refs: Option<PathBuf>,
    pub provider: ProviderKind,
    pub refgen_bin: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub iterations: usize,
    pub n_refs: usize,
    pub loss_domain: MelDomain,
    /// Clean target for the oracle provider.
    pub target: Option<PathBuf>,
    pub jitter_db: f64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub mask_init: MaskInit,
    pub step_rule: StepRule,
    pub refgen_ratio: f64,
    pub refgen_steps: u32,
    pub refgen_mode: String,
    pub stft: StftConfig,
    pub mel: MelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            mixture: None,
            query: String::new(),
            refs: None,
            provider: ProviderKind::File,
            refgen_bin: None,
            out: None,
            jobs: 1,
            seed: opt.seed,
            lr: opt.learning_rate,
            epochs: opt.epochs_per_iteration,
            iterations: opt.iterations,
            n_refs: opt.n_refs,
            loss_domain: opt.loss_domain,
            target: None,
            jitter_db: 0.0,
            sample_rate: dgmo_core::audio::DEFAULT_SAMPLE_RATE,
            duration_s: dgmo_core::audio::DEFAULT_DURATION_S,
            mask_init: opt.mask_init,
            step_rule: opt.step_rule,
            refgen_ratio: 0.7,
            refgen_steps: 25,
            refgen_mode: "ddim_inversion".into(),
            stft: StftConfig::default(),
            mel: MelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.lr,
            epochs_per_iteration: self.epochs,
            iterations: self.iterations,
            n_refs: self.n_refs,
            loss_domain: self.loss_domain,
            mask_init: self.mask_init,
            seed: self.seed,
            step_rule: self.step_rule,
        }
    }

    /// Mel settings for providers that build references locally; the loss
    /// domain always follows `loss_domain`.
    pub fn mel_config(&self) -> MelConfig {
        MelConfig {
            loss_domain: self.loss_domain,
            ..self.mel
        }
    }

    /// Checks everything that can be checked before touching any input file.
    pub fn validate(&self) -> Result<(), Error> {
        if self.mixture.is_none() {
            return Err(Error::Config("--mixture is required".into()));
        }
        if self.out.is_none() {
            return Err(Error::Config("--out is required".into()));
        }
        match self.provider {
            ProviderKind::File if self.refs.is_none() => {
                return Err(Error::Config("provider 'file' requires --refs".into()));
            }
            ProviderKind::Oracle if self.target.is_none() => {
                return Err(Error::Config("provider 'oracle' requires --target".into()));
            }
            ProviderKind::DiffusionExec if self.refgen_bin.is_none() => {
                return Err(Error::Config(
                    "provider 'diffusion-exec' requires --refgen-bin or DGMO_REFGEN_BIN".into(),
                ));
            }
            _ => {}
        }
        if self.jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!("duration_s must be positive, got {}", self.duration_s)));
        }
        if !(self.jitter_db >= 0.0 && self.jitter_db.is_finite()) {
            return Err(Error::Config(format!("jitter_db must be >= 0, got {}", self.jitter_db)));
        }
        self.stft.validate()?;
        self.stft.check_invertible()?;
        self.mel_config().validate(self.sample_rate)?;
        self.optimizer().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"lr": 0.05, "stft": {"hop_length": 256}}"#).unwrap();
        assert_eq!(cfg.lr, 0.05);
        assert_eq!(cfg.stft.hop_length, 256);
        assert_eq!(cfg.stft.fft_size, 2048);
        assert_eq!(cfg.epochs, 300);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"learning_rate": 1}"#).is_err());
    }

    #[test]
    fn provider_requirements() {
        let base = RunConfig {
            mixture: Some("m.wav".into()),
            out: Some("o".into()),
            ..RunConfig::default()
        };
        assert!(base.validate().unwrap_err().is_usage());
        let exec = RunConfig {
            provider: ProviderKind::DiffusionExec,
            ..base.clone()
        };
        assert!(matches!(exec.validate(), Err(Error::Config(m)) if m.contains("refgen")));
        let file = RunConfig {
            refs: Some("r.dgm1".into()),
            ..base
        };
        file.validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig {
            query: "a cat".into(),
            jitter_db: 1.5,
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
