//! Built-in numerical checks: gradient vs finite differences, STFT and DGM1
//! round trips, metric identities and a short oracle separation.

use std::fmt;
use std::time::Instant;

use dgmo_core::mask_optim::Provenance;
use dgmo_core::mixkit::band_split_case;
use dgmo_core::refio::{decode_refset, encode_refset, OracleProvider};
use dgmo_core::{
    dgmo_grad, dgmo_loss, istft, magphase, optimize_mask, sdr, sdri, si_sdr, stft, AnalyzedMixture,
    MagnitudeSpectrogram, Mask, MelConfig, MelDomain, MelFilterbank, MelSpectrogram, OptimizerConfig, ReferenceSet,
    Result, StftConfig, Waveform,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    /// True when `value` must be at least `tolerance` rather than below it.
    pub at_least: bool,
    pub passed: bool,
}

impl CheckRow {
    fn below(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            at_least: false,
            passed: value < tolerance,
        }
    }

    fn above(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            at_least: true,
            passed: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SelftestReport {
    pub rows: Vec<CheckRow>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<30} {:>14} {:>12}  result", "check", "value", "bound")?;
        for r in &self.rows {
            let op = if r.at_least { ">=" } else { "<" };
            writeln!(
                f,
                "{:<30} {:>14.6e} {op:>2} {:>9.3e}  {}",
                r.name,
                r.value,
                r.tolerance,
                if r.passed { "PASS" } else { "FAIL" }
            )?;
        }
        write!(f, "{} checks in {:.1} s", self.rows.len(), self.seconds)
    }
}

fn small_instance(rng: &mut ChaCha8Rng, domain: MelDomain) -> Result<(Mask, MagnitudeSpectrogram, ReferenceSet, MelFilterbank)> {
    let (bins, frames, mels, sr) = (8, 8, 4, 8000);
    let scfg = StftConfig {
        fft_size: 2 * (bins - 1),
        win_length: 2 * (bins - 1),
        hop_length: 1,
        ..StftConfig::default()
    };
    let mcfg = MelConfig {
        n_mels: mels,
        loss_domain: domain,
        ..MelConfig::default()
    };
    let fb = MelFilterbank::from_weights(
        Array2::from_shape_fn((mels, bins), |_| rng.random_range(0.0..1.0)),
        mcfg,
        scfg,
        sr,
    )?;
    let x = MagnitudeSpectrogram {
        values: Array2::from_shape_fn((bins, frames), |_| rng.random_range(0.05..2.0)),
        config: scfg,
        sample_rate: sr,
    };
    let refs = (0..2)
        .map(|_| MelSpectrogram {
            values: Array2::from_shape_fn((mels, frames), |_| rng.random_range(-1.0..1.5)),
            domain,
            config: mcfg,
        })
        .collect();
    let refs = ReferenceSet::new(refs, mcfg, scfg, sr, Provenance::oracle("selftest"))?;
    let mask = Mask::from_logits(Array2::from_shape_fn((bins, frames), |_| rng.random_range(-3.0..3.0)))?;
    Ok((mask, x, refs, fb))
}

fn gradient_error(instances: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = 1e-4;
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let domain = if i % 2 == 0 { MelDomain::Log } else { MelDomain::Linear };
        let (mask, x, refs, fb) = small_instance(&mut rng, domain)?;
        let g = dgmo_grad(&mask, &x, &refs, &fb)?;
        for (idx, &a) in g.indexed_iter() {
            let mut plus = mask.logits().clone();
            plus[idx] += eps;
            let mut minus = mask.logits().clone();
            minus[idx] -= eps;
            let n = (dgmo_loss(&Mask::from_logits(plus)?, &x, &refs, &fb)?
                - dgmo_loss(&Mask::from_logits(minus)?, &x, &refs, &fb)?)
                / (2.0 * eps);
            if a.abs() > 1e-8 {
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()));
            }
        }
    }
    Ok(worst)
}

fn stft_round_trip_error() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = StftConfig::default();
    let x: Vec<f64> = (0..32_000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = Waveform::new(x.clone(), 16_000)?;
    let (m, p) = magphase(&stft(&w, &cfg)?);
    let y = istft(&m, &p, &cfg, x.len())?;
    let edge = cfg.win_length / 2;
    Ok((edge..x.len() - edge)
        .map(|i| (x[i] - y.samples()[i]).abs())
        .fold(0.0, f64::max))
}

/// Number of randomized sets whose bytes change on decode + re-encode.
fn dgm1_mismatches(sets: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..sets {
        let mcfg = MelConfig {
            n_mels: rng.random_range(2..32),
            ..MelConfig::default()
        };
        let frames = rng.random_range(1..20);
        let mels = (0..rng.random_range(1..5))
            .map(|_| MelSpectrogram {
                values: Array2::from_shape_fn((mcfg.n_mels, frames), |_| f64::from(rng.random_range(-9.0f32..9.0))),
                domain: mcfg.loss_domain,
                config: mcfg,
            })
            .collect();
        let set = ReferenceSet::new(mels, mcfg, StftConfig::default(), 16_000, Provenance::oracle("selftest"))?;
        let bytes = encode_refset(&set)?;
        let back = decode_refset(&bytes)?;
        if back != set || encode_refset(&back)? != bytes {
            bad += 1;
        }
    }
    Ok(bad as f64)
}

fn metric_identity_error() -> Result<f64> {
    let r = [1.0, 0.0, 1.0, 0.0];
    let e = [1.0, 1.0, 1.0, -1.0];
    let scaled: Vec<f64> = e.iter().map(|v| v * 7.5).collect();
    let half: Vec<f64> = r.iter().map(|v| v / 2.0).collect();
    let errors = [
        si_sdr(&e, &r)?.abs(),
        (si_sdr(&scaled, &r)? - si_sdr(&e, &r)?).abs(),
        (sdr(&half, &r)? - 20.0 * 2f64.log10()).abs(),
        sdri(&e, &r, &e)?.abs(),
    ];
    Ok(errors.into_iter().fold(0.0, f64::max))
}

fn oracle_separation_score() -> Result<f64> {
    let stems = band_split_case(2.0, 16_000, 0.0, 4)?;
    let mix = AnalyzedMixture::new(stems.mixture.clone(), &StftConfig::default())?;
    let cfg = OptimizerConfig::default();
    let mcfg = MelConfig {
        loss_domain: cfg.loss_domain,
        ..MelConfig::default()
    };
    let mut provider = OracleProvider::new(stems.target.clone(), mcfg, StftConfig::default(), 0.0);
    let out = optimize_mask(&mix, &mut provider, &cfg)?;
    si_sdr(out.waveform.samples(), stems.target.samples())
}

/// Runs all checks. `inject_failure` sets the gradient tolerance to zero,
/// which no implementation can meet.
pub fn run_selftest(inject_failure: bool) -> Result<SelftestReport> {
    let start = Instant::now();
    let grad_tol = if inject_failure { 0.0 } else { 1e-4 };
    let rows = vec![
        CheckRow::below("gradient vs finite difference", gradient_error(10)?, grad_tol),
        CheckRow::below("stft round trip", stft_round_trip_error()?, 1e-6),
        CheckRow::below("dgm1 round trip mismatches", dgm1_mismatches(20)?, 0.5),
        CheckRow::below("metric identities (dB)", metric_identity_error()?, 1e-6),
        CheckRow::above("oracle separation si-sdr (dB)", oracle_separation_score()?, 10.0),
    ];
    Ok(SelftestReport {
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}
