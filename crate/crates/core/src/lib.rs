//! Training-free, text-queried audio source separation by mask optimization.
//!
//! A ratio mask over the mixture's magnitude spectrogram is fit so that the
//! masked mixture's mel spectrogram matches a set of reference mels (produced
//! by a text-to-audio diffusion model, read from DGM1 files, or built from a
//! known target for testing). The estimate is resynthesized with the
//! mixture's own phase.
//!
//! Modules:
//! - [`audio`], [`stft`], [`mel`]: signal-processing kernel
//! - [`mask_optim`]: mask, objective, gradient, optimizer loop
//! - [`metrics`]: SI-SDR / SDR / SDRi
//! - [`mixkit`]: evaluation mixtures and synthetic sources
//! - [`refio`]: DGM1 reference files and reference providers

pub mod audio;
pub mod error;
pub mod mask_optim;
pub mod mel;
pub mod metrics;
pub mod mixkit;
pub mod refio;
pub mod stft;

pub use audio::{load_waveform, pad_and_normalize, write_wav, PadLayout, Waveform};
pub use error::{Error, Result};
pub use mask_optim::{
    apply_mask_reconstruct, dgmo_grad, dgmo_loss, optimize_mask, AnalyzedMixture, Mask, MaskInit, OptimizerConfig,
    ReferenceProvider, ReferenceSet, SeparationResult,
};
pub use mel::{apply_mel, MelConfig, MelDomain, MelFilterbank, MelSpectrogram};
pub use metrics::{sdr, sdri, si_sdr, EvalResult};
pub use stft::{istft, magphase, stft, MagnitudeSpectrogram, PhaseSpectrogram, StftConfig};
