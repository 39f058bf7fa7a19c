//! Multi-reference mel-domain objective and its analytic gradient.
//!
//! For mask logits `L`, mixture magnitude `X` and filterbank `W`:
//!
//! ```text
//! Y    = mel(W (X * sigmoid(L)))          (optionally ln(max(., floor)))
//! loss = 1/n sum_i mean((Y - R_i)^2)
//! ```
//!
//! The gradient is back-propagated by hand through the same chain. Cells
//! clamped at the log floor get zero gradient.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::mel::{MelDomain, MelFilterbank};
use crate::stft::MagnitudeSpectrogram;

use super::mask::{sigmoid, Mask};
use super::reference::ReferenceSet;

/// Verifies that the mixture analysis, filterbank and reference header all
/// describe the same mel space. A mismatch is an error; nothing is silently
/// recomputed.
pub fn check_compatible(
    x_spec: &MagnitudeSpectrogram,
    refs: &ReferenceSet,
    fb: &MelFilterbank,
) -> Result<()> {
    if fb.mel_config() != refs.mel_config() {
        return Err(Error::Contract(format!(
            "filterbank mel config {:?} differs from reference header {:?}",
            fb.mel_config(),
            refs.mel_config()
        )));
    }
    if fb.stft_config() != refs.stft_config() || x_spec.config != *refs.stft_config() {
        return Err(Error::Contract(format!(
            "STFT config mismatch: mixture {:?}, filterbank {:?}, references {:?}",
            x_spec.config,
            fb.stft_config(),
            refs.stft_config()
        )));
    }
    if fb.sample_rate() != refs.sample_rate() || x_spec.sample_rate != refs.sample_rate() {
        return Err(Error::Contract(format!(
            "sample rate mismatch: mixture {}, filterbank {}, references {}",
            x_spec.sample_rate,
            fb.sample_rate(),
            refs.sample_rate()
        )));
    }
    let (bins, frames) = x_spec.shape();
    if bins != fb.n_bins() {
        return Err(Error::Contract(format!(
            "mixture has {bins} bins, filterbank expects {}",
            fb.n_bins()
        )));
    }
    if refs.shape() != (fb.n_mels(), frames) {
        return Err(Error::Contract(format!(
            "references are {:?}, mixture analysis needs ({}, {frames})",
            refs.shape(),
            fb.n_mels()
        )));
    }
    Ok(())
}

/// Reusable buffers for repeated loss/gradient evaluation on one problem.
#[derive(Debug)]
pub struct Objective<'a> {
    x_spec: &'a MagnitudeSpectrogram,
    refs: &'a ReferenceSet,
    fb: &'a MelFilterbank,
    sig: Array2<f64>,
    masked: Array2<f64>,
    mel: Array2<f64>,
    mel_grad: Array2<f64>,
    spec_grad: Array2<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(
        x_spec: &'a MagnitudeSpectrogram,
        refs: &'a ReferenceSet,
        fb: &'a MelFilterbank,
    ) -> Result<Self> {
        check_compatible(x_spec, refs, fb)?;
        let spec_shape = x_spec.shape();
        let mel_shape = refs.shape();
        Ok(Self {
            x_spec,
            refs,
            fb,
            sig: Array2::zeros(spec_shape),
            masked: Array2::zeros(spec_shape),
            mel: Array2::zeros(mel_shape),
            mel_grad: Array2::zeros(mel_shape),
            spec_grad: Array2::zeros(spec_shape),
        })
    }

    fn check_mask(&self, m: &Mask) -> Result<()> {
        if m.shape() != self.x_spec.shape() {
            return Err(Error::Contract(format!(
                "mask shape {:?} != spectrogram shape {:?}",
                m.shape(),
                self.x_spec.shape()
            )));
        }
        Ok(())
    }

    fn forward(&mut self, m: &Mask) -> f64 {
        Zip::from(&mut self.sig)
            .and(m.logits())
            .for_each(|s, &l| *s = sigmoid(l));
        Zip::from(&mut self.masked)
            .and(&self.sig)
            .and(&self.x_spec.values)
            .for_each(|o, &s, &x| *o = s * x);
        self.fb.project_into(self.masked.view(), self.mel.view_mut());
        if self.refs.domain() == MelDomain::Log {
            let floor = self.refs.mel_config().log_floor;
            // mel_grad temporarily holds the linear values for backward
            self.mel_grad.assign(&self.mel);
            self.mel.mapv_inplace(|v| v.max(floor).ln());
        }

        let cells = self.mel.len() as f64;
        let n = self.refs.len() as f64;
        let mut total = 0.0;
        for r in self.refs.mels() {
            let mut sq = 0.0;
            Zip::from(&self.mel).and(&r.values).for_each(|&y, &t| {
                let d = y - t;
                sq += d * d;
            });
            total += sq / cells;
        }
        total / n
    }

    pub fn loss(&mut self, m: &Mask) -> Result<f64> {
        self.check_mask(m)?;
        Ok(self.forward(m))
    }

    /// Returns the loss and writes `d loss / d logits` into `grad`.
    pub fn loss_and_grad(&mut self, m: &Mask, grad: &mut Array2<f64>) -> Result<f64> {
        self.check_mask(m)?;
        if grad.dim() != m.shape() {
            return Err(Error::Contract("gradient buffer shape differs from mask".into()));
        }
        let loss = self.forward(m);
        let cells = self.mel.len() as f64;
        let scale = 2.0 / (cells * self.refs.len() as f64);

        // dL/dY = scale * sum_i (Y - R_i), accumulated reference by reference
        // so that Y == R_i gives exactly zero.
        let mut dy = Array2::<f64>::zeros(self.mel.dim());
        for r in self.refs.mels() {
            Zip::from(&mut dy)
                .and(&self.mel)
                .and(&r.values)
                .for_each(|g, &y, &t| *g += y - t);
        }
        dy.mapv_inplace(|g| g * scale);

        if self.refs.domain() == MelDomain::Log {
            let floor = self.refs.mel_config().log_floor;
            Zip::from(&mut dy).and(&self.mel_grad).for_each(|g, &lin| {
                *g = if lin > floor { *g / lin } else { 0.0 };
            });
        }
        self.mel_grad.assign(&dy);

        self.fb
            .project_transpose_into(self.mel_grad.view(), self.spec_grad.view_mut());
        Zip::from(grad)
            .and(&self.spec_grad)
            .and(&self.x_spec.values)
            .and(&self.sig)
            .for_each(|g, &gs, &x, &s| *g = gs * x * s * (1.0 - s));
        Ok(loss)
    }
}

/// Mean over references of the per-cell squared mel error.
pub fn dgmo_loss(
    m: &Mask,
    x_spec: &MagnitudeSpectrogram,
    refs: &ReferenceSet,
    fb: &MelFilterbank,
) -> Result<f64> {
    Objective::new(x_spec, refs, fb)?.loss(m)
}

/// Gradient of [`dgmo_loss`] with respect to the mask logits.
pub fn dgmo_grad(
    m: &Mask,
    x_spec: &MagnitudeSpectrogram,
    refs: &ReferenceSet,
    fb: &MelFilterbank,
) -> Result<Array2<f64>> {
    let mut grad = Array2::zeros(m.shape());
    Objective::new(x_spec, refs, fb)?.loss_and_grad(m, &mut grad)?;
    Ok(grad)
}
