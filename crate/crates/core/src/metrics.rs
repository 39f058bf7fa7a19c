//! Separation-quality metrics: SI-SDR, SDR and SDR improvement.
//!
//! Infinite ratios are reported as +/-[`DB_CAP`] so results serialize as
//! plain numbers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DB_CAP: f64 = 120.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(est: &[f64], reference: &[f64]) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::Contract(format!(
            "estimate has {} samples, reference has {}",
            est.len(),
            reference.len()
        )));
    }
    if reference.iter().all(|&r| r == 0.0) {
        return Err(Error::Domain("reference signal is all zeros".into()));
    }
    Ok(())
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return if num == 0.0 { -DB_CAP } else { DB_CAP };
    }
    if num == 0.0 {
        return -DB_CAP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

/// Scale-invariant SDR: project `est` onto `reference`, compare the
/// projection to the residual.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(est, reference)?;
    let alpha = dot(est, reference) / dot(reference, reference);
    let mut target_energy = 0.0;
    let mut noise_energy = 0.0;
    for (e, r) in est.iter().zip(reference) {
        let t = alpha * r;
        target_energy += t * t;
        noise_energy += (t - e) * (t - e);
    }
    Ok(ratio_db(target_energy, noise_energy))
}

pub fn sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(est, reference)?;
    let noise: f64 = est.iter().zip(reference).map(|(e, r)| (r - e) * (r - e)).sum();
    Ok(ratio_db(dot(reference, reference), noise))
}

/// `sdr(est, reference) - sdr(mix, reference)`.
pub fn sdri(est: &[f64], reference: &[f64], mix: &[f64]) -> Result<f64> {
    Ok(sdr(est, reference)? - sdr(mix, reference)?)
}

/// Truncates or zero-pads `est` to `len` samples.
pub fn align_length(est: &[f64], len: usize) -> Vec<f64> {
    let mut out = est[..est.len().min(len)].to_vec();
    out.resize(len, 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub si_sdr: f64,
    pub sdr: f64,
    pub sdr_mixture: f64,
    pub sdri: f64,
}

impl EvalResult {
    /// Scores `est` against `reference`. `est` and `mix` are aligned to the
    /// reference length first.
    pub fn evaluate(est: &[f64], reference: &[f64], mix: &[f64]) -> Result<Self> {
        let est = align_length(est, reference.len());
        let mix = align_length(mix, reference.len());
        let sdr_est = sdr(&est, reference)?;
        let sdr_mixture = sdr(&mix, reference)?;
        Ok(Self {
            si_sdr: si_sdr(&est, reference)?,
            sdr: sdr_est,
            sdr_mixture,
            sdri: sdr_est - sdr_mixture,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub query: String,
    pub result: EvalResult,
}

/// Per-item scores plus items that could not be scored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    pub errors: Vec<(String, String)>,
}

impl ScoreReport {
    pub fn mean(&self) -> Option<EvalResult> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let sum = |f: fn(&EvalResult) -> f64| self.rows.iter().map(|r| f(&r.result)).sum::<f64>() / n;
        Some(EvalResult {
            si_sdr: sum(|r| r.si_sdr),
            sdr: sum(|r| r.sdr),
            sdr_mixture: sum(|r| r.sdr_mixture),
            sdri: sum(|r| r.sdri),
        })
    }

    /// CSV with columns `id,query,si_sdr,sdr,sdri`, a `mean` row, and one
    /// `#error` row per failed item.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["id", "query", "si_sdr", "sdr", "sdri"])?;
        for row in &self.rows {
            w.write_record([
                row.id.as_str(),
                row.query.as_str(),
                &format!("{:.6}", row.result.si_sdr),
                &format!("{:.6}", row.result.sdr),
                &format!("{:.6}", row.result.sdri),
            ])?;
        }
        if let Some(mean) = self.mean() {
            w.write_record([
                "mean",
                "",
                &format!("{:.6}", mean.si_sdr),
                &format!("{:.6}", mean.sdr),
                &format!("{:.6}", mean.sdri),
            ])?;
        }
        for (id, msg) in &self.errors {
            w.write_record(["#error", id.as_str(), msg.as_str()])?;
        }
        w.flush()
    }
}
