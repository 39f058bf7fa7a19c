use std::io::Write;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::mel::{MelDomain, MelFilterbank};
use crate::stft::{istft, magphase, stft, MagnitudeSpectrogram, PhaseSpectrogram, StftConfig};

use super::loss::Objective;
use super::mask::{Mask, MaskInit};
use super::reference::ReferenceSet;

/// Logits are kept inside `[-LOGIT_LIMIT, LOGIT_LIMIT]` so mask values stay
/// strictly inside (0, 1) in f64.
pub const LOGIT_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    GradientDescent { momentum: f64 },
}

/// Adam's default `eps` is 0, which keeps the update independent of the loss
/// scale. Cells whose gradient has always been zero are not moved.
impl Default for StepRule {
    fn default() -> Self {
        StepRule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs_per_iteration: usize,
    pub iterations: usize,
    pub n_refs: usize,
    pub loss_domain: MelDomain,
    pub mask_init: MaskInit,
    pub seed: u64,
    pub step_rule: StepRule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs_per_iteration: 300,
            iterations: 2,
            n_refs: 4,
            loss_domain: MelDomain::Log,
            mask_init: MaskInit::Half,
            seed: 0,
            step_rule: StepRule::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs_per_iteration == 0 {
            return Err(Error::Config("epochs_per_iteration must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.n_refs == 0 {
            return Err(Error::Config("n_refs must be at least 1".into()));
        }
        match self.step_rule {
            StepRule::Adam { beta1, beta2, eps } => {
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps >= 0.0) {
                    return Err(Error::Config(format!("bad Adam parameters {:?}", self.step_rule)));
                }
            }
            StepRule::GradientDescent { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
                }
            }
        }
        Ok(())
    }
}

/// What a provider is asked for at the start of each iteration.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceRequest<'a> {
    /// 1-based iteration number.
    pub iteration: usize,
    /// The mixture on the first iteration, the current estimate afterwards.
    /// Both are at the padded length and normalized scale of the analysis.
    pub signal: &'a Waveform,
    pub n_refs: usize,
    pub seed: u64,
}

pub trait ReferenceProvider {
    fn provide(&mut self, request: &ReferenceRequest<'_>) -> Result<ReferenceSet>;

    fn name(&self) -> &str;
}

impl<P: ReferenceProvider + ?Sized> ReferenceProvider for &mut P {
    fn provide(&mut self, request: &ReferenceRequest<'_>) -> Result<ReferenceSet> {
        (**self).provide(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// A padded, normalized mixture together with its polar STFT.
#[derive(Debug, Clone)]
pub struct AnalyzedMixture {
    pub waveform: Waveform,
    pub magnitude: MagnitudeSpectrogram,
    pub phase: PhaseSpectrogram,
}

impl AnalyzedMixture {
    pub fn new(waveform: Waveform, cfg: &StftConfig) -> Result<Self> {
        cfg.check_invertible()?;
        let (magnitude, phase) = magphase(&stft(&waveform, cfg)?);
        Ok(Self {
            waveform,
            magnitude,
            phase,
        })
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.magnitude.config
    }
}

#[derive(Debug, Clone)]
pub struct SeparationResult {
    /// Estimate at the padded length, with the normalization gain undone.
    pub waveform: Waveform,
    pub final_mask: Mask,
    /// `loss_trace[r][e]` is the loss of iteration `r` after `e` updates;
    /// each iteration holds `epochs_per_iteration + 1` entries.
    pub loss_trace: Vec<Vec<f64>>,
}

impl SeparationResult {
    pub fn final_loss(&self) -> f64 {
        *self
            .loss_trace
            .last()
            .and_then(|t| t.last())
            .expect("at least one iteration")
    }
}

enum StepState {
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: i32,
        m: Array2<f64>,
        v: Array2<f64>,
    },
    Gd {
        momentum: f64,
        velocity: Array2<f64>,
    },
}

impl StepState {
    fn new(rule: StepRule, shape: (usize, usize)) -> Self {
        match rule {
            StepRule::Adam { beta1, beta2, eps } => StepState::Adam {
                beta1,
                beta2,
                eps,
                t: 0,
                m: Array2::zeros(shape),
                v: Array2::zeros(shape),
            },
            StepRule::GradientDescent { momentum } => StepState::Gd {
                momentum,
                velocity: Array2::zeros(shape),
            },
        }
    }

    fn step(&mut self, logits: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
        match self {
            StepState::Adam {
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let (b1, b2, eps) = (*beta1, *beta2, *eps);
                let c1 = 1.0 - b1.powi(*t);
                let c2 = 1.0 - b2.powi(*t);
                Zip::from(logits)
                    .and(m)
                    .and(v)
                    .and(grad)
                    .for_each(|l, m, v, &g| {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let denom = (*v / c2).sqrt() + eps;
                        if denom > 0.0 {
                            *l = (*l - lr * (*m / c1) / denom).clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
                        }
                    });
            }
            StepState::Gd { momentum, velocity } => {
                let mu = *momentum;
                Zip::from(logits)
                    .and(velocity)
                    .and(grad)
                    .for_each(|l, vel, &g| {
                        *vel = mu * *vel + g;
                        *l = (*l - lr * *vel).clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
                    });
            }
        }
    }
}

/// Fits a mask so the masked mixture's mel spectrogram matches the provider's
/// references, then resynthesizes with the mixture phase.
///
/// Each iteration fetches a fresh reference set (from the second iteration on,
/// the provider sees the current estimate) and runs `epochs_per_iteration`
/// updates. Optimizer state carries over between iterations, so a provider
/// that always returns the same set gives the same trajectory as a single
/// longer iteration.
pub fn optimize_mask(
    mix: &AnalyzedMixture,
    provider: &mut dyn ReferenceProvider,
    cfg: &OptimizerConfig,
) -> Result<SeparationResult> {
    cfg.validate()?;
    let shape = mix.magnitude.shape();
    let stft_cfg = *mix.stft_config();
    let out_len = mix.waveform.len();
    let gain = mix.waveform.gain_applied();

    let mut mask = Mask::init(shape, cfg.mask_init)?;
    let mut state = StepState::new(cfg.step_rule, shape);
    let mut grad = Array2::<f64>::zeros(shape);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut signal = mix.waveform.clone();
    let mut filterbank: Option<MelFilterbank> = None;

    for iteration in 1..=cfg.iterations {
        let request = ReferenceRequest {
            iteration,
            signal: &signal,
            n_refs: cfg.n_refs,
            seed: cfg.seed,
        };
        let refs = provider.provide(&request).map_err(|e| Error::Provider {
            context: format!("{} at iteration {iteration}", provider.name()),
            source: Box::new(e),
        })?;
        if refs.domain() != cfg.loss_domain {
            return Err(Error::Contract(format!(
                "references are in {:?} domain but the optimizer is configured for {:?}",
                refs.domain(),
                cfg.loss_domain
            )));
        }
        let reuse = filterbank.as_ref().is_some_and(|fb| {
            fb.mel_config() == refs.mel_config()
                && fb.stft_config() == refs.stft_config()
                && fb.sample_rate() == refs.sample_rate()
        });
        if !reuse {
            filterbank = Some(MelFilterbank::new(
                refs.mel_config(),
                refs.stft_config(),
                refs.sample_rate(),
            )?);
        }
        let fb = filterbank.as_ref().expect("filterbank built above");
        let mut objective = Objective::new(&mix.magnitude, &refs, fb)?;

        let mut losses = Vec::with_capacity(cfg.epochs_per_iteration + 1);
        for epoch in 0..cfg.epochs_per_iteration {
            let loss = objective.loss_and_grad(&mask, &mut grad)?;
            check_finite(loss, &grad, iteration, epoch)?;
            losses.push(loss);
            state.step(mask.logits_mut(), &grad, cfg.learning_rate);
        }
        let last = objective.loss(&mask)?;
        if !last.is_finite() {
            return Err(Error::Optimization {
                iteration,
                epoch: cfg.epochs_per_iteration,
                detail: format!("loss is {last}"),
            });
        }
        losses.push(last);
        trace.push(losses);

        if iteration < cfg.iterations {
            signal = reconstruct_values(&mix.magnitude, &mix.phase, &mask.values(), &stft_cfg, out_len, 1.0)?;
        }
    }

    let waveform = apply_mask_reconstruct(&mix.magnitude, &mix.phase, &mask, &stft_cfg, out_len, gain)?;
    Ok(SeparationResult {
        waveform,
        final_mask: mask,
        loss_trace: trace,
    })
}

fn check_finite(loss: f64, grad: &Array2<f64>, iteration: usize, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Optimization {
            iteration,
            epoch,
            detail: format!("loss is {loss}"),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Optimization {
            iteration,
            epoch,
            detail: "gradient has non-finite entries".into(),
        });
    }
    Ok(())
}

/// `istft(x_phase, x_spec * mask)`, divided by the normalization gain that was
/// applied to the mixture before analysis.
pub fn apply_mask_reconstruct(
    x_spec: &MagnitudeSpectrogram,
    x_phase: &PhaseSpectrogram,
    m: &Mask,
    cfg: &StftConfig,
    out_len: usize,
    gain_applied: f64,
) -> Result<Waveform> {
    reconstruct_values(x_spec, x_phase, &m.values(), cfg, out_len, gain_applied)
}

/// Same as [`apply_mask_reconstruct`] for an explicit matrix of mask values,
/// e.g. an ideal ratio mask.
pub fn reconstruct_values(
    x_spec: &MagnitudeSpectrogram,
    x_phase: &PhaseSpectrogram,
    mask_values: &Array2<f64>,
    cfg: &StftConfig,
    out_len: usize,
    gain_applied: f64,
) -> Result<Waveform> {
    if mask_values.dim() != x_spec.shape() {
        return Err(Error::Contract(format!(
            "mask shape {:?} != spectrogram shape {:?}",
            mask_values.dim(),
            x_spec.shape()
        )));
    }
    if !(gain_applied > 0.0 && gain_applied.is_finite()) {
        return Err(Error::Domain(format!("gain must be positive, got {gain_applied}")));
    }
    let masked = MagnitudeSpectrogram {
        values: &x_spec.values * mask_values,
        ..x_spec.clone()
    };
    let w = istft(&masked, x_phase, cfg, out_len)?;
    if gain_applied == 1.0 {
        return Ok(w);
    }
    let sr = w.sample_rate();
    Waveform::new(w.into_samples().into_iter().map(|s| s / gain_applied).collect(), sr)
}

/// `sqrt(T^2 / (T^2 + B^2))` per cell, 0 where both stems are silent.
pub fn ideal_ratio_mask(target: &MagnitudeSpectrogram, background: &MagnitudeSpectrogram) -> Result<Array2<f64>> {
    if target.shape() != background.shape() {
        return Err(Error::Contract("stem spectrograms differ in shape".into()));
    }
    let mut out = Array2::zeros(target.shape());
    Zip::from(&mut out)
        .and(&target.values)
        .and(&background.values)
        .for_each(|o, &t, &b| {
            let denom = t * t + b * b;
            *o = if denom > 0.0 { (t * t / denom).sqrt() } else { 0.0 };
        });
    Ok(out)
}

/// Writes `epoch,iteration,loss` rows (1-based iteration).
pub fn write_loss_trace_csv<W: Write>(trace: &[Vec<f64>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,iteration,loss")?;
    for (r, losses) in trace.iter().enumerate() {
        for (e, loss) in losses.iter().enumerate() {
            writeln!(out, "{e},{},{loss:e}", r + 1)?;
        }
    }
    Ok(())
}
