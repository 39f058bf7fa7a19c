//! Waveform container, WAV I/O, resampling and the fixed-duration
//! pad/normalize preprocessing applied before analysis.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_DURATION_S: f64 = 10.24;

/// Mono PCM signal. `gain_applied` records any scale factor applied by
/// normalization so it can be undone after separation.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    gain_applied: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::with_gain(samples, sample_rate, 1.0)
    }

    pub fn with_gain(samples: Vec<f64>, sample_rate: u32, gain_applied: f64) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(gain_applied.is_finite() && gain_applied > 0.0) {
            return Err(Error::Domain(format!("gain must be positive, got {gain_applied}")));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            gain_applied,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
            gain_applied: 1.0,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn gain_applied(&self) -> f64 {
        self.gain_applied
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Multiplies every sample by `factor` and folds it into `gain_applied`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_gain(
            self.samples.iter().map(|s| s * factor).collect(),
            self.sample_rate,
            self.gain_applied * factor,
        )
    }

    /// Truncates or zero-pads at the end to exactly `len` samples.
    pub fn fit_to_len(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            ..*self
        }
    }
}

/// Reads a WAV file (16-bit integer or 32-bit float PCM), averages channels
/// to mono and resamples to `target_sr` by linear interpolation.
pub fn load_waveform(path: impl AsRef<Path>, target_sr: u32) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: {bits}-bit {fmt:?} samples (only 16-bit int and 32-bit float are supported)",
                path.display()
            )))
        }
    }
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;

    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let samples = resample_linear(&mono, spec.sample_rate, target_sr);
    Waveform::new(samples, target_sr)
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut writer = WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &w.samples {
        writer.write_sample(s as f32).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Output length of [`resample_linear`]: `round(len * to / from)`, at least 1
/// for non-empty input.
pub fn resampled_len(len: usize, from: u32, to: u32) -> usize {
    if len == 0 {
        return 0;
    }
    let n = (len as u128 * to as u128 + from as u128 / 2) / from as u128;
    (n as usize).max(1)
}

/// Linear-interpolation resampler. Output sample `i` sits at input position
/// `i * from / to`; positions past the last input sample hold its value.
pub fn resample_linear(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let out_len = resampled_len(input.len(), from, to);
    let last = input.len() - 1;
    (0..out_len)
        .map(|i| {
            // Exact integer split of the source position avoids drift.
            let num = i as u64 * from as u64;
            let idx = (num / to as u64) as usize;
            let frac = (num % to as u64) as f64 / to as f64;
            if idx >= last {
                input[last]
            } else {
                input[idx] * (1.0 - frac) + input[idx + 1] * frac
            }
        })
        .collect()
}

/// Where an original signal sits inside a padded, fixed-length buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadLayout {
    pub original_len: usize,
    pub padded_len: usize,
}

impl PadLayout {
    pub fn new(original_len: usize, padded_len: usize) -> Self {
        Self {
            original_len,
            padded_len,
        }
    }

    pub fn for_duration(original_len: usize, sample_rate: u32, duration_s: f64) -> Self {
        Self::new(original_len, target_len(sample_rate, duration_s))
    }

    /// Leading zeros inserted before the original signal (0 when truncating).
    pub fn offset(&self) -> usize {
        self.padded_len.saturating_sub(self.original_len) / 2
    }

    /// Number of original samples that survive into the padded buffer.
    pub fn kept_len(&self) -> usize {
        self.original_len.min(self.padded_len)
    }

    pub fn pad(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.padded_len];
        let kept = self.kept_len().min(samples.len());
        let off = self.offset();
        out[off..off + kept].copy_from_slice(&samples[..kept]);
        out
    }

    /// Inverse of [`pad`](Self::pad) on the kept region.
    pub fn strip(&self, w: &Waveform) -> Waveform {
        let off = self.offset();
        let end = (off + self.kept_len()).min(w.len());
        Waveform {
            samples: w.samples[off.min(end)..end].to_vec(),
            ..*w
        }
    }
}

fn target_len(sample_rate: u32, duration_s: f64) -> usize {
    (duration_s * sample_rate as f64).round() as usize
}

/// Centers `w` in a buffer of `round(duration_s * sample_rate)` samples
/// (truncating from the end if longer), then scales so the peak equals
/// `peak`. Silent input is passed through with no extra gain.
pub fn pad_and_normalize(w: &Waveform, duration_s: f64, peak: f64) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::Domain("cannot pad an empty waveform".into()));
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::Config(format!("normalization peak must be positive, got {peak}")));
    }
    let layout = PadLayout::for_duration(w.len(), w.sample_rate, duration_s);
    let padded = Waveform {
        samples: layout.pad(&w.samples),
        ..*w
    };
    let current = padded.peak();
    if current == 0.0 || current == peak {
        return Ok(padded);
    }
    padded.scaled(peak / current)
}
