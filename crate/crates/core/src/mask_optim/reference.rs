use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mel::{MelConfig, MelDomain, MelSpectrogram};
use crate::stft::StftConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatedBy {
    Diffusion,
    Oracle,
    File,
}

/// Where a reference set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub query: String,
    pub backend_id: String,
    pub noising_ratio: f64,
    pub ddim_steps: u32,
    pub created_by: CreatedBy,
}

impl Provenance {
    pub fn oracle(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            backend_id: "oracle".into(),
            noising_ratio: 0.0,
            ddim_steps: 0,
            created_by: CreatedBy::Oracle,
        }
    }
}

/// The `n` target mel spectrograms the mask is fit against, together with
/// the exact analysis parameters they were computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    mels: Vec<MelSpectrogram>,
    mel_config: MelConfig,
    stft_config: StftConfig,
    sample_rate: u32,
    provenance: Provenance,
}

impl ReferenceSet {
    pub fn new(
        mels: Vec<MelSpectrogram>,
        mel_config: MelConfig,
        stft_config: StftConfig,
        sample_rate: u32,
        provenance: Provenance,
    ) -> Result<Self> {
        let first = mels
            .first()
            .ok_or_else(|| Error::Contract("a reference set needs at least one mel".into()))?;
        let shape = first.shape();
        let domain = first.domain;
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Contract(format!("reference shape {shape:?} must be positive")));
        }
        if shape.0 != mel_config.n_mels {
            return Err(Error::Contract(format!(
                "references have {} mel bins, header says {}",
                shape.0, mel_config.n_mels
            )));
        }
        if domain != mel_config.loss_domain {
            return Err(Error::Contract(format!(
                "references are in {domain:?} domain, config says {:?}",
                mel_config.loss_domain
            )));
        }
        if !(0.0..=1.0).contains(&provenance.noising_ratio) {
            return Err(Error::Contract(format!(
                "noising ratio {} outside [0, 1]",
                provenance.noising_ratio
            )));
        }
        for (i, m) in mels.iter().enumerate() {
            if m.shape() != shape || m.domain != domain {
                return Err(Error::Contract(format!(
                    "reference {i} has shape {:?}/{:?}, expected {shape:?}/{domain:?}",
                    m.shape(),
                    m.domain
                )));
            }
            if m.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("reference {i} contains non-finite values")));
            }
        }
        let mel_config = mel_config.resolved(sample_rate);
        let mels = mels
            .into_iter()
            .map(|m| MelSpectrogram {
                config: mel_config,
                ..m
            })
            .collect();
        Ok(Self {
            mels,
            mel_config,
            stft_config,
            sample_rate,
            provenance,
        })
    }

    pub fn mels(&self) -> &[MelSpectrogram] {
        &self.mels
    }

    pub fn len(&self) -> usize {
        self.mels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mels.is_empty()
    }

    /// `(n_mels, frames)` shared by every reference.
    pub fn shape(&self) -> (usize, usize) {
        self.mels[0].shape()
    }

    pub fn domain(&self) -> MelDomain {
        self.mels[0].domain
    }

    pub fn mel_config(&self) -> &MelConfig {
        &self.mel_config
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft_config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}
