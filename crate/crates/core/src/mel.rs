//! Triangular mel filterbanks and the magnitude -> mel projection.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{MagnitudeSpectrogram, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelScale {
    Htk,
    Slaney,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterNorm {
    None,
    SlaneyArea,
}

/// Domain in which mel spectrograms are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelDomain {
    Linear,
    Log,
}

impl std::str::FromStr for MelDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(MelDomain::Linear),
            "log" => Ok(MelDomain::Log),
            other => Err(Error::Config(format!("unknown loss domain {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
    pub mel_scale: MelScale,
    pub filter_norm: FilterNorm,
    pub loss_domain: MelDomain,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 256,
            f_min: 0.0,
            f_max: None,
            mel_scale: MelScale::Htk,
            filter_norm: FilterNorm::None,
            loss_domain: MelDomain::Log,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    /// Copy with `f_max` filled in for `sample_rate`.
    pub fn resolved(&self, sample_rate: u32) -> Self {
        Self {
            f_max: Some(self.f_max.unwrap_or(sample_rate as f64 / 2.0)),
            ..*self
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let f_max = self.f_max.unwrap_or(nyquist);
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < f_max) {
            return Err(Error::Config(format!(
                "need 0 <= f_min < f_max, got f_min={} f_max={f_max}",
                self.f_min
            )));
        }
        if f_max > nyquist {
            return Err(Error::Config(format!("f_max {f_max} Hz exceeds Nyquist {nyquist} Hz")));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(Error::Config(format!("log_floor must be positive, got {}", self.log_floor)));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 2595.0 * (1.0 + hz / 700.0).log10(),
        MelScale::Slaney => {
            const F_SP: f64 = 200.0 / 3.0;
            const MIN_LOG_HZ: f64 = 1000.0;
            let min_log_mel = MIN_LOG_HZ / F_SP;
            let logstep = 6.4_f64.ln() / 27.0;
            if hz >= MIN_LOG_HZ {
                min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
            } else {
                hz / F_SP
            }
        }
    }
}

pub fn mel_to_hz(mel: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 700.0 * (10f64.powf(mel / 2595.0) - 1.0),
        MelScale::Slaney => {
            const F_SP: f64 = 200.0 / 3.0;
            const MIN_LOG_HZ: f64 = 1000.0;
            let min_log_mel = MIN_LOG_HZ / F_SP;
            let logstep = 6.4_f64.ln() / 27.0;
            if mel >= min_log_mel {
                MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
            } else {
                F_SP * mel
            }
        }
    }
}

/// Dense `(n_mels, n_bins)` weight matrix plus each row's nonzero span, which
/// keeps projection cost proportional to the filter widths.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    support: Vec<(usize, usize)>,
    mel_config: MelConfig,
    stft_config: StftConfig,
    sample_rate: u32,
}

impl MelFilterbank {
    pub fn new(mcfg: &MelConfig, scfg: &StftConfig, sample_rate: u32) -> Result<Self> {
        mcfg.validate(sample_rate)?;
        scfg.validate()?;
        let mcfg = mcfg.resolved(sample_rate);
        let f_max = mcfg.f_max.expect("resolved");
        let n_bins = scfg.n_bins();
        let bin_hz: Vec<f64> = (0..n_bins)
            .map(|k| k as f64 * sample_rate as f64 / scfg.fft_size as f64)
            .collect();

        let points = filter_edges(&mcfg, f_max);
        let mut weights = Array2::<f64>::zeros((mcfg.n_mels, n_bins));
        for m in 0..mcfg.n_mels {
            let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
            let norm = match mcfg.filter_norm {
                FilterNorm::None => 1.0,
                FilterNorm::SlaneyArea => 2.0 / (hi - lo),
            };
            for (k, &f) in bin_hz.iter().enumerate() {
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                let w = rising.min(falling).max(0.0);
                if w > 0.0 {
                    weights[[m, k]] = w * norm;
                }
            }
        }
        Self::from_weights(weights, mcfg, *scfg, sample_rate)
    }

    /// Wraps an arbitrary non-negative matrix, e.g. a filterbank exported by
    /// another toolchain.
    pub fn from_weights(
        weights: Array2<f64>,
        mel_config: MelConfig,
        stft_config: StftConfig,
        sample_rate: u32,
    ) -> Result<Self> {
        if weights.ncols() != stft_config.n_bins() {
            return Err(Error::Config(format!(
                "filterbank has {} columns, STFT has {} bins",
                weights.ncols(),
                stft_config.n_bins()
            )));
        }
        if weights.nrows() != mel_config.n_mels {
            return Err(Error::Config(format!(
                "filterbank has {} rows, config asks for {} mels",
                weights.nrows(),
                mel_config.n_mels
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("filterbank weights must be finite and non-negative".into()));
        }
        let mut support = Vec::with_capacity(weights.nrows());
        for (m, row) in weights.rows().into_iter().enumerate() {
            let first = row.iter().position(|&w| w > 0.0);
            let last = row.iter().rposition(|&w| w > 0.0);
            match (first, last) {
                (Some(a), Some(b)) => support.push((a, b + 1)),
                _ => {
                    return Err(Error::Config(format!(
                        "mel filter {m} covers no FFT bin; reduce n_mels or increase fft_size"
                    )))
                }
            }
        }
        Ok(Self {
            weights,
            support,
            mel_config: mel_config.resolved(sample_rate),
            stft_config,
            sample_rate,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Half-open `[start, end)` bin range holding row `m`'s nonzeros.
    pub fn support(&self, m: usize) -> (usize, usize) {
        self.support[m]
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

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    /// Center frequency (Hz) of each triangle.
    pub fn center_frequencies(&self) -> Vec<f64> {
        let f_max = self.mel_config.f_max.unwrap_or(self.sample_rate as f64 / 2.0);
        let pts = filter_edges(&self.mel_config, f_max);
        pts[1..pts.len() - 1].to_vec()
    }

    /// `out = W * spec`, for `spec` of shape `(bins, frames)`.
    pub fn project_into(&self, spec: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
        out.fill(0.0);
        for (m, &(start, end)) in self.support.iter().enumerate() {
            let mut dst = out.row_mut(m);
            for k in start..end {
                let w = self.weights[[m, k]];
                if w != 0.0 {
                    dst.scaled_add(w, &spec.row(k));
                }
            }
        }
    }

    pub fn project(&self, spec: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_mels(), spec.ncols()));
        self.project_into(spec, out.view_mut());
        out
    }

    /// `out = W^T * g`, for `g` of shape `(mels, frames)`.
    pub fn project_transpose_into(&self, g: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
        out.fill(0.0);
        for (m, &(start, end)) in self.support.iter().enumerate() {
            let src = g.row(m);
            for k in start..end {
                let w = self.weights[[m, k]];
                if w != 0.0 {
                    out.row_mut(k).scaled_add(w, &src);
                }
            }
        }
    }
}

fn filter_edges(mcfg: &MelConfig, f_max: f64) -> Vec<f64> {
    let lo = hz_to_mel(mcfg.f_min, mcfg.mel_scale);
    let hi = hz_to_mel(f_max, mcfg.mel_scale);
    let n = mcfg.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64, mcfg.mel_scale))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub domain: MelDomain,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// `ln(max(v, floor))`.
pub fn log_compress(v: f64, floor: f64) -> f64 {
    v.max(floor).ln()
}

pub fn apply_mel(
    mag: &MagnitudeSpectrogram,
    fb: &MelFilterbank,
    domain: MelDomain,
) -> Result<MelSpectrogram> {
    if mag.values.nrows() != fb.n_bins() {
        return Err(Error::Contract(format!(
            "spectrogram has {} bins, filterbank expects {}",
            mag.values.nrows(),
            fb.n_bins()
        )));
    }
    if mag.config != fb.stft_config || mag.sample_rate != fb.sample_rate {
        return Err(Error::Contract(
            "filterbank was built for a different STFT configuration or sample rate".into(),
        ));
    }
    let mut values = fb.project(mag.values.view());
    if domain == MelDomain::Log {
        let floor = fb.mel_config.log_floor;
        values.mapv_inplace(|v| log_compress(v, floor));
    }
    Ok(MelSpectrogram {
        values,
        domain,
        config: MelConfig {
            loss_domain: domain,
            ..fb.mel_config
        },
    })
}
