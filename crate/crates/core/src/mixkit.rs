//! Evaluation mixtures: SNR-controlled mixing, clip protection, synthetic
//! test sources and manifest-driven batch materialization.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{load_waveform, write_wav, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub target: Waveform,
    pub background: Waveform,
    pub snr_db: f64,
    /// Additive environmental noise, mixed in unscaled.
    pub noise: Option<Waveform>,
    pub clip_peak: f64,
}

impl MixtureSpec {
    pub fn new(target: Waveform, background: Waveform) -> Self {
        Self {
            target,
            background,
            snr_db: 0.0,
            noise: None,
            clip_peak: 0.9,
        }
    }
}

/// A mixture and the stems exactly as they appear in it.
#[derive(Debug, Clone)]
pub struct MixedStems {
    pub mixture: Waveform,
    pub target: Waveform,
    pub background: Waveform,
    pub noise: Option<Waveform>,
    /// Amplitude factor applied to the background before mixing.
    pub background_scale: f64,
    /// Clip-protection factor applied to every stem (1.0 if none).
    pub clip_gain: f64,
}

impl MixedStems {
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (self.target.energy() / self.background.energy()).log10()
    }
}

fn padded(w: &Waveform, len: usize) -> Waveform {
    w.fit_to_len(len)
}

/// Scales the background so `10 log10(E_target / E_background) = snr_db`,
/// sums the stems, and if the sum exceeds full scale rescales every stem so
/// the mixture peaks at `clip_peak`. Shorter stems are zero-padded at the end.
pub fn mix_at_snr(spec: &MixtureSpec) -> Result<MixedStems> {
    if !spec.snr_db.is_finite() {
        return Err(Error::Domain(format!("SNR must be finite, got {}", spec.snr_db)));
    }
    let sr = spec.target.sample_rate();
    if spec.background.sample_rate() != sr || spec.noise.as_ref().is_some_and(|n| n.sample_rate() != sr) {
        return Err(Error::Contract("stems have different sample rates".into()));
    }
    let e_t = spec.target.energy();
    let e_b = spec.background.energy();
    if e_t == 0.0 || e_b == 0.0 {
        return Err(Error::Domain("cannot mix a silent stem at a fixed SNR".into()));
    }
    let len = spec
        .target
        .len()
        .max(spec.background.len())
        .max(spec.noise.as_ref().map_or(0, Waveform::len));
    let scale = (e_t / (e_b * 10f64.powf(spec.snr_db / 10.0))).sqrt();

    let target = padded(&spec.target, len);
    let background = padded(&spec.background, len).scaled(scale)?;
    let noise = spec.noise.as_ref().map(|n| padded(n, len));

    let raw_peak = (0..len)
        .map(|i| {
            let n = noise.as_ref().map_or(0.0, |n| n.samples()[i]);
            (target.samples()[i] + background.samples()[i] + n).abs()
        })
        .fold(0.0_f64, f64::max);
    let clip_gain = if raw_peak > 1.0 { spec.clip_peak / raw_peak } else { 1.0 };
    let (target, background, noise) = if clip_gain != 1.0 {
        (
            target.scaled(clip_gain)?,
            background.scaled(clip_gain)?,
            noise.map(|n| n.scaled(clip_gain)).transpose()?,
        )
    } else {
        (target, background, noise)
    };

    let samples = (0..len)
        .map(|i| {
            let s = target.samples()[i] + background.samples()[i];
            match &noise {
                Some(n) => s + n.samples()[i],
                None => s,
            }
        })
        .collect();
    let mixture = Waveform::new(samples, sr)?;
    Ok(MixedStems {
        mixture,
        target,
        background,
        noise,
        background_scale: scale,
        clip_gain,
    })
}

/// Rescales to `peak` only if the signal exceeds full scale (|x| > 1).
pub fn clip_normalize(w: &Waveform, peak: f64) -> Result<Waveform> {
    let current = w.peak();
    if current > 1.0 {
        w.scaled(peak / current)
    } else {
        Ok(w.clone())
    }
}

pub fn rms_db(w: &Waveform) -> f64 {
    let rms = (w.energy() / w.len().max(1) as f64).sqrt();
    20.0 * rms.log10()
}

/// Scales to the requested RMS level in dBFS. Used in place of LUFS
/// loudness matching.
pub fn scale_to_rms_db(w: &Waveform, db: f64) -> Result<Waveform> {
    if w.energy() == 0.0 {
        return Err(Error::Domain("cannot set the level of a silent signal".into()));
    }
    w.scaled(10f64.powf((db - rms_db(w)) / 20.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    BandNoise,
    ToneStack,
    Chirp,
}

const SYNTH_PEAK: f64 = 0.5;
const TONES: usize = 8;

/// Deterministic synthetic source confined to `band` (Hz), peak-normalized to
/// 0.5.
pub fn synth_source(kind: SourceKind, band: (f64, f64), duration_s: f64, sr: u32, seed: u64) -> Result<Waveform> {
    let (lo, hi) = band;
    let nyquist = sr as f64 / 2.0;
    if !(lo >= 0.0 && lo < hi && hi <= nyquist) {
        return Err(Error::Config(format!("band [{lo}, {hi}] must satisfy 0 <= lo < hi <= {nyquist}")));
    }
    let n = (duration_s * sr as f64).round() as usize;
    if n == 0 {
        return Err(Error::Config("duration rounds to zero samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sr as f64;
    let tau = 2.0 * std::f64::consts::PI;
    let samples: Vec<f64> = match kind {
        SourceKind::BandNoise => {
            let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut planner = RealFftPlanner::<f64>::new();
            let fwd = planner.plan_fft_forward(n);
            let inv = planner.plan_fft_inverse(n);
            let mut spec = fwd.make_output_vec();
            fwd.process(&mut x, &mut spec)
                .map_err(|e| Error::Contract(format!("fft: {e}")))?;
            for (k, z) in spec.iter_mut().enumerate() {
                let f = k as f64 * fs / n as f64;
                if f < lo || f > hi {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            spec[0].im = 0.0;
            if n.is_multiple_of(2) {
                spec[n / 2].im = 0.0;
            }
            let mut out = inv.make_output_vec();
            inv.process(&mut spec, &mut out)
                .map_err(|e| Error::Contract(format!("inverse fft: {e}")))?;
            out
        }
        SourceKind::ToneStack => {
            let tones: Vec<(f64, f64)> = (0..TONES)
                .map(|_| (rng.random_range(lo..hi), rng.random_range(0.0..tau)))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    tones.iter().map(|(f, p)| (tau * f * t + p).sin()).sum()
                })
                .collect()
        }
        SourceKind::Chirp => {
            let phase0 = rng.random_range(0.0..tau);
            let total = n as f64 / fs;
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    (tau * (lo * t + (hi - lo) * t * t / (2.0 * total)) + phase0).sin()
                })
                .collect()
        }
    };
    let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let samples = if peak > 0.0 {
        samples.into_iter().map(|s| s * SYNTH_PEAK / peak).collect()
    } else {
        samples
    };
    Waveform::new(samples, sr)
}

/// Two-source test case with disjoint spectra: band noise in `[0, 2000]` Hz
/// as the target and `[4000, 8000]` Hz as the background, mixed at `snr_db`.
/// The mixture is then peak-normalized to 1.0 and both stems receive the same
/// gain, so `mixture = target + background` still holds up to rounding. All
/// returned signals count as originals (`gain_applied() == 1`).
pub fn band_split_case(duration_s: f64, sr: u32, snr_db: f64, seed: u64) -> Result<MixedStems> {
    let target = synth_source(SourceKind::BandNoise, (0.0, 2000.0), duration_s, sr, seed)?;
    let background = synth_source(
        SourceKind::BandNoise,
        (4000.0, 8000.0_f64.min(sr as f64 / 2.0)),
        duration_s,
        sr,
        seed.wrapping_add(1),
    )?;
    let stems = mix_at_snr(&MixtureSpec {
        snr_db,
        ..MixtureSpec::new(target, background)
    })?;
    let gain = 1.0 / stems.mixture.peak();
    let rescale = |w: &Waveform| Waveform::new(w.samples().iter().map(|s| s * gain).collect(), sr);
    Ok(MixedStems {
        mixture: rescale(&stems.mixture)?,
        target: rescale(&stems.target)?,
        background: rescale(&stems.background)?,
        noise: None,
        ..stems
    })
}

/// One row of a mixing manifest. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub target: PathBuf,
    pub background: PathBuf,
    #[serde(default)]
    pub snr_db: f64,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub seed: u64,
    /// When set, each stem is scaled to an RMS level drawn uniformly from
    /// this dBFS range (seeded) and `snr_db` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loudness_db: Option<[f64; 2]>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let rows: Vec<ManifestRow> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    for row in &rows {
        if row.id.is_empty() || row.id.contains(['/', '\\']) || row.id == "." || row.id == ".." {
            return Err(Error::Config(format!("invalid manifest id {:?}", row.id)));
        }
        if !seen.insert(row.id.as_str()) {
            return Err(Error::Config(format!("duplicate manifest id {:?}", row.id)));
        }
    }
    Ok(rows)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureMeta {
    pub id: String,
    pub query: String,
    pub seed: u64,
    pub sample_rate: u32,
    pub snr_db_requested: Option<f64>,
    pub snr_db_measured: f64,
    pub background_scale: f64,
    pub clip_gain: f64,
    pub num_samples: usize,
    pub target: PathBuf,
    pub background: PathBuf,
}

/// Writes `<out_dir>/<id>/{mixture,target,background}.wav` and `meta.json`.
pub fn materialize_row(row: &ManifestRow, base_dir: &Path, out_dir: &Path, sample_rate: u32) -> Result<PathBuf> {
    let target = load_waveform(base_dir.join(&row.target), sample_rate)?;
    let background = load_waveform(base_dir.join(&row.background), sample_rate)?;
    let mut spec = MixtureSpec::new(target, background);
    spec.snr_db = row.snr_db;
    if let Some([lo, hi]) = row.loudness_db {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("bad loudness range [{lo}, {hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(row.seed);
        let mut draw = || if lo == hi { lo } else { rng.random_range(lo..hi) };
        spec.target = scale_to_rms_db(&spec.target, draw())?;
        spec.background = scale_to_rms_db(&spec.background, draw())?;
        spec.snr_db = 10.0 * (spec.target.energy() / spec.background.energy()).log10();
    }
    let stems = mix_at_snr(&spec)?;

    let dir = out_dir.join(&row.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_wav(&stems.mixture, dir.join("mixture.wav"))?;
    write_wav(&stems.target, dir.join("target.wav"))?;
    write_wav(&stems.background, dir.join("background.wav"))?;
    let meta = MixtureMeta {
        id: row.id.clone(),
        query: row.query.clone(),
        seed: row.seed,
        sample_rate,
        snr_db_requested: row.loudness_db.is_none().then_some(row.snr_db),
        snr_db_measured: stems.measured_snr_db(),
        background_scale: stems.background_scale,
        clip_gain: stems.clip_gain,
        num_samples: stems.mixture.len(),
        target: row.target.clone(),
        background: row.background.clone(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    Ok(dir)
}
