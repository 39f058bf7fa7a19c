use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dgmo_core::MelDomain;

use crate::config::{ProviderKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "dgmo", version, about = "Text-queried audio separation by mask optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build evaluation mixtures from a JSON manifest.
    Mix(MixArgs),
    /// Separate one mixture.
    Separate(SeparateArgs),
    /// Score separated outputs against ground truth.
    Eval(EvalArgs),
    /// Run built-in numerical checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = dgmo_core::audio::DEFAULT_SAMPLE_RATE)]
    pub sample_rate: u32,
}

#[derive(Debug, Args, Default)]
pub struct SeparateArgs {
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<String>,
    /// DGM1 reference file (provider 'file').
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long, env = "DGMO_REFGEN_BIN")]
    pub refgen_bin: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Optimization steps per iteration.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub n_refs: Option<usize>,
    #[arg(long)]
    pub loss_domain: Option<MelDomain>,
    /// Clean target waveform (provider 'oracle').
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Log-normal amplitude jitter for oracle references, in dB.
    #[arg(long)]
    pub jitter_db: Option<f64>,
}

impl SeparateArgs {
    /// Defaults, overlaid by the config file, overlaid by flags.
    pub fn resolve(&self) -> Result<RunConfig, dgmo_core::Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                })*
            };
        }
        overlay!(mixture, refs, refgen_bin, out, target);
        overlay!(query, provider, jobs, seed, lr, epochs, iterations, n_refs, loss_domain, jitter_db);
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of estimates: `<id>.wav` or `<id>/separated.wav`.
    #[arg(long)]
    pub est: PathBuf,
    /// Directory of `<id>/{target,mixture}.wav` as written by `dgmo mix`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report path; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = dgmo_core::audio::DEFAULT_SAMPLE_RATE)]
    pub sample_rate: u32,
}

#[derive(Debug, Args, Default)]
pub struct SelftestArgs {
    /// Tightens one tolerance past what is achievable, to check that
    /// failures are reported.
    #[arg(long, hide = true)]
    pub inject_failure: bool,
}
