use std::path::{Path, PathBuf};
use std::process::Command;

use crate::audio::{write_wav, Waveform};
use crate::error::{Error, Result};
use crate::mask_optim::{ReferenceProvider, ReferenceRequest, ReferenceSet};
use crate::mel::MelConfig;
use crate::stft::StftConfig;

use super::format::read_refset;
use super::oracle::oracle_refs;

/// Returns the same in-memory set on every request.
#[derive(Debug, Clone)]
pub struct StaticProvider {
    refs: ReferenceSet,
}

impl StaticProvider {
    pub fn new(refs: ReferenceSet) -> Self {
        Self { refs }
    }
}

impl ReferenceProvider for StaticProvider {
    fn provide(&mut self, _request: &ReferenceRequest<'_>) -> Result<ReferenceSet> {
        Ok(self.refs.clone())
    }

    fn name(&self) -> &str {
        "static"
    }
}

/// Reads a DGM1 file on every request.
#[derive(Debug, Clone)]
pub struct FileProvider {
    path: PathBuf,
}

impl FileProvider {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl ReferenceProvider for FileProvider {
    fn provide(&mut self, _request: &ReferenceRequest<'_>) -> Result<ReferenceSet> {
        read_refset(&self.path)
    }

    fn name(&self) -> &str {
        "file"
    }
}

/// Builds references from a known target (see [`oracle_refs`]). The target
/// must be padded and scaled exactly like the analyzed mixture. The set is
/// built once, from the first request's count and seed.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    target: Waveform,
    mel_config: MelConfig,
    stft_config: StftConfig,
    jitter_db: f64,
    cached: Option<ReferenceSet>,
}

impl OracleProvider {
    pub fn new(target: Waveform, mel_config: MelConfig, stft_config: StftConfig, jitter_db: f64) -> Self {
        Self {
            target,
            mel_config,
            stft_config,
            jitter_db,
            cached: None,
        }
    }
}

impl ReferenceProvider for OracleProvider {
    fn provide(&mut self, request: &ReferenceRequest<'_>) -> Result<ReferenceSet> {
        if let Some(refs) = &self.cached {
            return Ok(refs.clone());
        }
        let refs = oracle_refs(
            &self.target,
            &self.mel_config,
            &self.stft_config,
            request.n_refs,
            self.jitter_db,
            request.seed,
        )?;
        self.cached = Some(refs.clone());
        Ok(refs)
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Settings forwarded to an external reference generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecSettings {
    pub query: String,
    pub ratio: f64,
    pub steps: u32,
    pub mode: String,
}

impl Default for ExecSettings {
    fn default() -> Self {
        Self {
            query: String::new(),
            ratio: 0.7,
            steps: 25,
            mode: "ddim_inversion".into(),
        }
    }
}

/// Runs an external generator as
/// `<bin> --mixture <wav> --query <q> --n <n> --ratio <r> --steps <s> --mode <m> --out <file>`
/// and reads back the DGM1 file it writes. The seed is passed in the
/// `DGMO_SEED` environment variable.
#[derive(Debug)]
pub struct ExecProvider {
    program: PathBuf,
    settings: ExecSettings,
    workdir: tempfile::TempDir,
}

impl ExecProvider {
    pub fn new(program: impl Into<PathBuf>, settings: ExecSettings) -> Result<Self> {
        let program = program.into();
        if !(0.0..=1.0).contains(&settings.ratio) {
            return Err(Error::Config(format!("noising ratio {} outside [0, 1]", settings.ratio)));
        }
        let workdir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(Self {
            program,
            settings,
            workdir,
        })
    }

    pub fn program(&self) -> &Path {
        &self.program
    }
}

impl ReferenceProvider for ExecProvider {
    fn provide(&mut self, request: &ReferenceRequest<'_>) -> Result<ReferenceSet> {
        let input = self.workdir.path().join(format!("iter{}_input.wav", request.iteration));
        let output = self.workdir.path().join(format!("iter{}.dgm1", request.iteration));
        write_wav(request.signal, &input)?;
        let result = Command::new(&self.program)
            .arg("--mixture")
            .arg(&input)
            .arg("--query")
            .arg(&self.settings.query)
            .arg("--n")
            .arg(request.n_refs.to_string())
            .arg("--ratio")
            .arg(self.settings.ratio.to_string())
            .arg("--steps")
            .arg(self.settings.steps.to_string())
            .arg("--mode")
            .arg(&self.settings.mode)
            .arg("--out")
            .arg(&output)
            .env("DGMO_SEED", request.seed.to_string())
            .output()
            .map_err(|e| Error::io(&self.program, e))?;
        if !result.status.success() {
            let stderr = String::from_utf8_lossy(&result.stderr);
            return Err(Error::External(format!(
                "{} exited with {}: {}",
                self.program.display(),
                result.status,
                stderr.trim()
            )));
        }
        let refs = read_refset(&output)?;
        if refs.len() != request.n_refs {
            return Err(Error::Contract(format!(
                "generator returned {} references, {} were requested",
                refs.len(),
                request.n_refs
            )));
        }
        Ok(refs)
    }

    fn name(&self) -> &str {
        "diffusion-exec"
    }
}
