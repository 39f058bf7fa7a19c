//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Spectrograms are stored as `(bins, frames)` arrays with
//! `bins = fft_size / 2 + 1`. With `center = true` the signal is reflect-padded
//! by `fft_size / 2` on both sides, giving `1 + len / hop_length` frames with
//! frame `f` centered on sample `f * hop_length`.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub fft_size: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub window: WindowKind,
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 2048,
            win_length: 1024,
            hop_length: 160,
            window: WindowKind::Hann,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 {
            return Err(Error::Config(format!("fft_size {} is too small", self.fft_size)));
        }
        if self.win_length == 0 || self.win_length > self.fft_size {
            return Err(Error::Config(format!(
                "win_length {} must be in 1..={}",
                self.win_length, self.fft_size
            )));
        }
        if self.hop_length == 0 || self.hop_length > self.win_length {
            return Err(Error::Config(format!(
                "hop_length {} must be in 1..={}",
                self.hop_length, self.win_length
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        if self.center {
            1 + signal_len / self.hop_length
        } else if signal_len < self.fft_size {
            0
        } else {
            1 + (signal_len - self.fft_size) / self.hop_length
        }
    }

    /// Analysis window of `win_length` samples, zero-padded (centered) to
    /// `fft_size`.
    pub fn padded_window(&self) -> Vec<f64> {
        let n = self.win_length;
        let core = match self.window {
            // periodic Hann
            WindowKind::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()),
        };
        let mut w = vec![0.0; self.fft_size];
        let off = (self.fft_size - n) / 2;
        for (dst, v) in w[off..off + n].iter_mut().zip(core) {
            *dst = v;
        }
        w
    }

    /// Checks that the squared window overlap-adds to a strictly positive
    /// envelope, which is what window-square normalized synthesis needs.
    pub fn check_invertible(&self) -> Result<()> {
        self.validate()?;
        let w = self.padded_window();
        let hop = self.hop_length;
        let peak = w.iter().fold(0.0_f64, |m, v| m.max(v * v));
        let min_env = (0..hop)
            .map(|r| w.iter().skip(r).step_by(hop).map(|v| v * v).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if min_env <= 1e-10 * peak {
            return Err(Error::Config(format!(
                "window {:?}/{} with hop {} leaves gaps in the overlap-add envelope",
                self.window, self.win_length, hop
            )));
        }
        Ok(())
    }
}

/// Complex STFT, `(bins, frames)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

/// `|STFT|`, `(bins, frames)`, all entries non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub values: Array2<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

/// `arg(STFT)` in `[-pi, pi]`, same grid as the magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrogram {
    pub values: Array2<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl MagnitudeSpectrogram {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let x = w.samples();
    if x.is_empty() {
        return Err(Error::Domain("stft of an empty waveform".into()));
    }
    let n_fft = cfg.fft_size;
    let n_frames = cfg.n_frames(x.len());
    let window = cfg.padded_window();
    let pad = if cfg.center { (n_fft / 2) as isize } else { 0 };

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut frame = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut values = Array2::<Complex64>::zeros((cfg.n_bins(), n_frames));
    for f in 0..n_frames {
        let start = (f * cfg.hop_length) as isize - pad;
        for (k, (dst, wv)) in frame.iter_mut().zip(&window).enumerate() {
            *dst = if *wv == 0.0 {
                0.0
            } else {
                let idx = start + k as isize;
                let sample = if cfg.center {
                    x[reflect_index(idx, x.len())]
                } else {
                    x[idx as usize]
                };
                sample * wv
            };
        }
        fft.process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
            .map_err(|e| Error::Contract(format!("fft: {e}")))?;
        values.column_mut(f).assign(&ndarray::ArrayView1::from(&spectrum[..]));
    }
    Ok(ComplexSpectrogram {
        values,
        config: *cfg,
        sample_rate: w.sample_rate(),
    })
}

/// Polar split. The phase of an exactly-zero bin is defined as 0.
pub fn magphase(c: &ComplexSpectrogram) -> (MagnitudeSpectrogram, PhaseSpectrogram) {
    let mag = c.values.mapv(|z| z.norm());
    let phase = c.values.mapv(|z| if z == Complex64::new(0.0, 0.0) { 0.0 } else { z.arg() });
    (
        MagnitudeSpectrogram {
            values: mag,
            config: c.config,
            sample_rate: c.sample_rate,
        },
        PhaseSpectrogram {
            values: phase,
            config: c.config,
            sample_rate: c.sample_rate,
        },
    )
}

pub fn recombine(mag: &MagnitudeSpectrogram, phase: &PhaseSpectrogram) -> Result<ComplexSpectrogram> {
    check_pair(mag, phase)?;
    let mut values = Array2::<Complex64>::zeros(mag.values.dim());
    Zip::from(&mut values)
        .and(&mag.values)
        .and(&phase.values)
        .for_each(|z, &m, &p| *z = Complex64::from_polar(m, p));
    Ok(ComplexSpectrogram {
        values,
        config: mag.config,
        sample_rate: mag.sample_rate,
    })
}

fn check_pair(mag: &MagnitudeSpectrogram, phase: &PhaseSpectrogram) -> Result<()> {
    if mag.values.dim() != phase.values.dim() {
        return Err(Error::Contract(format!(
            "magnitude shape {:?} != phase shape {:?}",
            mag.values.dim(),
            phase.values.dim()
        )));
    }
    if mag.config != phase.config {
        return Err(Error::Contract("magnitude and phase come from different STFT configs".into()));
    }
    Ok(())
}

/// Overlap-add inverse with window-square normalization. The result is cut
/// or zero-padded to `out_len` samples.
pub fn istft(
    mag: &MagnitudeSpectrogram,
    phase: &PhaseSpectrogram,
    cfg: &StftConfig,
    out_len: usize,
) -> Result<Waveform> {
    check_pair(mag, phase)?;
    if mag.config != *cfg {
        return Err(Error::Contract(format!(
            "spectrogram was computed with {:?}, synthesis asked for {:?}",
            mag.config, cfg
        )));
    }
    if mag.values.nrows() != cfg.n_bins() {
        return Err(Error::Contract(format!(
            "expected {} bins, got {}",
            cfg.n_bins(),
            mag.values.nrows()
        )));
    }
    cfg.check_invertible()?;

    let n_fft = cfg.fft_size;
    let hop = cfg.hop_length;
    let n_frames = mag.values.ncols();
    let window = cfg.padded_window();
    let total = n_fft + hop * n_frames.saturating_sub(1);
    let mut signal = vec![0.0; total];
    let mut envelope = vec![0.0; total];

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n_fft);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / n_fft as f64;

    for f in 0..n_frames {
        for (k, z) in spectrum.iter_mut().enumerate() {
            *z = Complex64::from_polar(mag.values[[k, f]], phase.values[[k, f]]);
        }
        // A real signal has purely real DC and Nyquist bins.
        spectrum[0].im = 0.0;
        if n_fft.is_multiple_of(2) {
            spectrum[n_fft / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .map_err(|e| Error::Contract(format!("inverse fft: {e}")))?;
        let start = f * hop;
        for (k, wv) in window.iter().enumerate() {
            if *wv != 0.0 {
                signal[start + k] += frame[k] * scale * wv;
                envelope[start + k] += wv * wv;
            }
        }
    }

    let peak_env = window.iter().fold(0.0_f64, |m, v| m.max(v * v));
    for (s, e) in signal.iter_mut().zip(&envelope) {
        if *e > 1e-10 * peak_env {
            *s /= e;
        }
    }

    let offset = if cfg.center { n_fft / 2 } else { 0 };
    let mut out: Vec<f64> = signal.into_iter().skip(offset).take(out_len).collect();
    out.resize(out_len, 0.0);
    Waveform::new(out, mag.sample_rate)
}
