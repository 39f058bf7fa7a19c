//! Batch commands: `mix` and `eval`. Items are independent and run on a
//! worker pool of `--jobs` threads; results keep manifest / directory order.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dgmo_core::metrics::{ScoreReport, ScoreRow};
use dgmo_core::mixkit::{materialize_row, read_manifest};
use dgmo_core::{load_waveform, EvalResult};
use rayon::prelude::*;

use crate::separate::SEPARATED_WAV;

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(dgmo_core::Error::Config("--jobs must be at least 1".into()).into());
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

#[derive(Debug, Default)]
pub struct MixReport {
    pub written: Vec<PathBuf>,
    pub failed: Vec<(String, String)>,
}

/// Materializes every manifest row under `out_dir`. Paths in the manifest
/// are relative to the manifest's directory.
pub fn cmd_mix(manifest: &Path, out_dir: &Path, jobs: usize, sample_rate: u32) -> Result<MixReport> {
    let rows = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let results: Vec<_> = pool(jobs)?.install(|| {
        rows.par_iter()
            .map(|row| (row.id.clone(), materialize_row(row, base, out_dir, sample_rate)))
            .collect()
    });
    let mut report = MixReport::default();
    for (id, res) in results {
        match res {
            Ok(dir) => report.written.push(dir),
            Err(e) => report.failed.push((id, e.to_string())),
        }
    }
    Ok(report)
}

/// `<est_dir>/<id>.wav`, falling back to `<est_dir>/<id>/separated.wav`.
fn estimate_path(est_dir: &Path, id: &str) -> Option<PathBuf> {
    [est_dir.join(format!("{id}.wav")), est_dir.join(id).join(SEPARATED_WAV)]
        .into_iter()
        .find(|p| p.is_file())
}

fn query_of(item_dir: &Path) -> String {
    fs::read(item_dir.join("meta.json"))
        .ok()
        .and_then(|bytes| serde_json::from_slice::<serde_json::Value>(&bytes).ok())
        .and_then(|v| v.get("query").and_then(|q| q.as_str()).map(str::to_string))
        .unwrap_or_default()
}

fn score_item(truth_dir: &Path, est_dir: &Path, id: &str, sample_rate: u32) -> dgmo_core::Result<ScoreRow> {
    let item = truth_dir.join(id);
    let est_path = estimate_path(est_dir, id)
        .ok_or_else(|| dgmo_core::Error::Contract(format!("no estimate for {id} in {}", est_dir.display())))?;
    let target = load_waveform(item.join("target.wav"), sample_rate)?;
    let mixture = load_waveform(item.join("mixture.wav"), sample_rate)?;
    let est = load_waveform(est_path, sample_rate)?;
    Ok(ScoreRow {
        id: id.to_string(),
        query: query_of(&item),
        result: EvalResult::evaluate(est.samples(), target.samples(), mixture.samples())?,
    })
}

/// Scores every `<truth_dir>/<id>/` that has a `target.wav`.
pub fn cmd_eval(est_dir: &Path, truth_dir: &Path, jobs: usize, sample_rate: u32) -> Result<ScoreReport> {
    let mut ids: Vec<String> = fs::read_dir(truth_dir)
        .with_context(|| format!("reading {}", truth_dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("target.wav").is_file())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .collect();
    ids.sort();
    let results: Vec<_> = pool(jobs)?.install(|| {
        ids.par_iter()
            .map(|id| (id.clone(), score_item(truth_dir, est_dir, id, sample_rate)))
            .collect()
    });
    let mut report = ScoreReport::default();
    for (id, res) in results {
        match res {
            Ok(row) => report.rows.push(row),
            Err(e) => report.errors.push((id, e.to_string())),
        }
    }
    Ok(report)
}
