use std::f64::consts::PI;

use dgmo_core::audio::{load_waveform, resample_linear, write_wav, Waveform};
use dgmo_core::mel::{hz_to_mel, mel_to_hz, MelScale};
use dgmo_core::stft::{istft, magphase, recombine, stft, StftConfig};
use dgmo_core::{apply_mel, Error, MagnitudeSpectrogram, MelConfig, MelDomain, MelFilterbank};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Direct-summation DFT magnitude of one analysis frame.
fn direct_frame_magnitude(x: &[f64], center: usize, cfg: &StftConfig) -> Vec<f64> {
    let n = cfg.fft_size;
    let w = cfg.padded_window();
    let frame: Vec<f64> = (0..n).map(|k| x[center - n / 2 + k] * w[k]).collect();
    (0..cfg.n_bins())
        .map(|bin| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in frame.iter().enumerate() {
                let ang = -2.0 * PI * bin as f64 * t as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

#[test]
fn bin_centered_cosine_peaks_at_its_bin() {
    let cfg = StftConfig::default();
    let sr = 16_000;
    let k = 100;
    let f = k as f64 * sr as f64 / cfg.fft_size as f64;
    let x: Vec<f64> = (0..sr).map(|i| (2.0 * PI * f * i as f64 / sr as f64).cos()).collect();
    let w = Waveform::new(x.clone(), sr as u32).unwrap();
    let (mag, _) = magphase(&stft(&w, &cfg).unwrap());
    let frame = 50;
    let oracle = direct_frame_magnitude(&x, frame * cfg.hop_length, &cfg);
    let column = mag.values.column(frame);
    for (a, b) in column.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8 * oracle[k], "{a} vs {b}");
    }
    let argmax = (0..column.len()).max_by(|&a, &b| column[a].total_cmp(&column[b])).unwrap();
    assert_eq!(argmax, k);
}

#[test]
fn full_length_round_trip() {
    let cfg = StftConfig::default();
    for seed in 0..3 {
        let x = noise(163_840, seed);
        let w = Waveform::new(x.clone(), 16_000).unwrap();
        let (m, p) = magphase(&stft(&w, &cfg).unwrap());
        assert_eq!(m.shape(), (1025, 1025));
        let y = istft(&m, &p, &cfg, x.len()).unwrap();
        let interior = cfg.win_length / 2..x.len() - cfg.win_length / 2;
        let err = interior
            .map(|i| (x[i] - y.samples()[i]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn parseval_ratio_matches_window_constant() {
    let cfg = StftConfig::default();
    let w = cfg.padded_window();
    let constant = cfg.fft_size as f64 * w.iter().map(|v| v * v).sum::<f64>() / cfg.hop_length as f64;
    for seed in 10..13 {
        let x = noise(48_000, seed);
        let wave = Waveform::new(x.clone(), 16_000).unwrap();
        let spec = stft(&wave, &cfg).unwrap();
        let nyq = cfg.n_bins() - 1;
        let spec_energy: f64 = spec
            .values
            .indexed_iter()
            .map(|((bin, _), z)| {
                let weight = if bin == 0 || bin == nyq { 1.0 } else { 2.0 };
                weight * z.norm_sqr()
            })
            .sum();
        let ratio = spec_energy / x.iter().map(|v| v * v).sum::<f64>();
        assert!((ratio / constant - 1.0).abs() < 0.01, "ratio {ratio}, constant {constant}");
    }
}

#[test]
fn htk_centers_follow_closed_form() {
    let mcfg = MelConfig {
        n_mels: 4,
        mel_scale: MelScale::Htk,
        ..MelConfig::default()
    };
    let fb = MelFilterbank::new(&mcfg, &StftConfig::default(), 16_000).unwrap();
    // independent closed form: m = 2595 log10(1 + f / 700)
    let top = 2595.0 * (1.0 + 8000.0 / 700.0_f64).log10();
    let expected: Vec<f64> = (1..=4)
        .map(|i| {
            let m = top * i as f64 / 5.0;
            700.0 * (10f64.powf(m / 2595.0) - 1.0)
        })
        .collect();
    for (c, e) in fb.center_frequencies().iter().zip(&expected) {
        assert!((c - e).abs() < 1e-9, "{c} vs {e}");
    }
    assert!((hz_to_mel(1000.0, MelScale::Htk) - 1000.0).abs() < 0.1);
    assert!((mel_to_hz(1000.0, MelScale::Htk) - 1000.0).abs() < 0.1);
}

#[test]
fn resampler_matches_brute_force_interpolation() {
    let x = noise(3201, 4);
    for (from, to) in [(32_000u32, 16_000u32), (44_100, 16_000), (8_000, 16_000)] {
        let y = resample_linear(&x, from, to);
        let expected_len = (x.len() as f64 * to as f64 / from as f64).round() as usize;
        assert_eq!(y.len(), expected_len);
        for (i, v) in y.iter().enumerate() {
            let pos = i as f64 * from as f64 / to as f64;
            let lo = pos.floor() as usize;
            let expected = if lo + 1 >= x.len() {
                x[x.len() - 1]
            } else {
                let frac = pos - lo as f64;
                x[lo] + (x[lo + 1] - x[lo]) * frac
            };
            assert!((v - expected).abs() < 1e-9, "{from}->{to} at {i}");
        }
    }
}

fn write_raw_wav(path: &std::path::Path, channels: u16, sr: u32, bits: u16, frames: &[Vec<i32>]) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: sr,
        bits_per_sample: bits,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for frame in frames {
        for &s in frame {
            w.write_sample(s).unwrap();
        }
    }
    w.finalize().unwrap();
}

#[test]
fn wav_loading_cases() {
    let dir = tempfile::tempdir().unwrap();

    let mono = dir.path().join("mono.wav");
    let frames: Vec<Vec<i32>> = (0..1000).map(|i| vec![(i * 13 % 2000) - 1000]).collect();
    write_raw_wav(&mono, 1, 16_000, 16, &frames);
    let w = load_waveform(&mono, 16_000).unwrap();
    assert_eq!(w.len(), 1000);
    assert_eq!(w.sample_rate(), 16_000);
    assert_eq!(w.gain_applied(), 1.0);
    assert_eq!(w.samples()[1], 13.0 / 32768.0 - 1000.0 / 32768.0);

    let stereo = dir.path().join("stereo.wav");
    let frames: Vec<Vec<i32>> = (0..500).map(|i| vec![i * 7 - 1500, 1500 - i * 7]).collect();
    write_raw_wav(&stereo, 2, 16_000, 16, &frames);
    assert!(load_waveform(&stereo, 16_000).unwrap().samples().iter().all(|&s| s == 0.0));

    let fast = dir.path().join("fast.wav");
    let frames: Vec<Vec<i32>> = (0..2001).map(|i| vec![i % 100]).collect();
    write_raw_wav(&fast, 1, 32_000, 16, &frames);
    let w = load_waveform(&fast, 16_000).unwrap();
    assert!((w.len() as i64 - 1000).abs() <= 1);

    let deep = dir.path().join("deep.wav");
    write_raw_wav(&deep, 1, 16_000, 24, &[vec![5]]);
    assert!(matches!(load_waveform(&deep, 16_000), Err(Error::Format(_))));
    assert!(matches!(load_waveform(dir.path().join("missing.wav"), 16_000), Err(Error::Io { .. })));

    let float = dir.path().join("float.wav");
    let orig = Waveform::new(vec![0.25, -0.5, 0.125], 16_000).unwrap();
    write_wav(&orig, &float).unwrap();
    assert_eq!(load_waveform(&float, 16_000).unwrap(), orig);
}

fn small_cfg() -> StftConfig {
    StftConfig {
        fft_size: 128,
        win_length: 64,
        hop_length: 16,
        ..StftConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_any_signal(x in prop::collection::vec(-1.0f64..1.0, 40..600)) {
        let cfg = small_cfg();
        let w = Waveform::new(x.clone(), 1000).unwrap();
        let (m, p) = magphase(&stft(&w, &cfg).unwrap());
        let y = istft(&m, &p, &cfg, x.len()).unwrap();
        for (a, b) in x.iter().zip(y.samples()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn polar_split_recombines(x in prop::collection::vec(-1.0f64..1.0, 40..300)) {
        let cfg = small_cfg();
        let c = stft(&Waveform::new(x, 1000).unwrap(), &cfg).unwrap();
        let (m, p) = magphase(&c);
        prop_assert!(m.values.iter().all(|&v| v >= 0.0));
        prop_assert!(p.values.iter().all(|&v| (-PI..=PI).contains(&v)));
        let back = recombine(&m, &p).unwrap();
        for (a, b) in c.values.iter().zip(back.values.iter()) {
            prop_assert!((a - b).norm() <= 1e-6 * a.norm().max(1e-12));
        }
    }

    #[test]
    fn linear_mel_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let cfg = small_cfg();
        let mcfg = MelConfig { n_mels: 12, ..MelConfig::default() };
        let fb = MelFilterbank::new(&mcfg, &cfg, 8000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| MagnitudeSpectrogram {
            values: Array2::from_shape_fn((65, 7), |_| rng.random_range(0.0..2.0)),
            config: cfg,
            sample_rate: 8000,
        };
        let x = mk(&mut rng);
        let y = mk(&mut rng);
        let combo = MagnitudeSpectrogram { values: &x.values * a + &y.values * b, ..x.clone() };
        let lhs = apply_mel(&combo, &fb, MelDomain::Linear).unwrap().values;
        let rhs = apply_mel(&x, &fb, MelDomain::Linear).unwrap().values * a
            + apply_mel(&y, &fb, MelDomain::Linear).unwrap().values * b;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
        }
    }
}
