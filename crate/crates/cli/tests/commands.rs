use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dgmo_core::mixkit::{band_split_case, synth_source, SourceKind};
use dgmo_core::refio::{oracle_refs, read_mask, write_refset};
use dgmo_core::{load_waveform, si_sdr, write_wav, MelConfig, StftConfig};

fn dgmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgmo"))
        .args(args)
        .env_remove("DGMO_REFGEN_BIN")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a 2 s disjoint-band mixture and its stems; returns their paths.
fn write_case(dir: &Path) -> (PathBuf, PathBuf) {
    let stems = band_split_case(2.0, 16_000, 0.0, 21).unwrap();
    let mix = dir.join("mixture.wav");
    let target = dir.join("target.wav");
    write_wav(&stems.mixture, &mix).unwrap();
    write_wav(&stems.target, &target).unwrap();
    (mix, target)
}

/// Short analysis buffer so mechanical tests stay fast.
fn short_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, r#"{"duration_s": 2.0, "epochs": 150}"#).unwrap();
    path
}

#[test]
fn separate_with_oracle_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (mix, target) = write_case(dir.path());
    let out = dir.path().join("out");
    let config = short_config(dir.path());
    let run = dgmo(&[
        "separate", "--mixture", s(&mix), "--query", "low rumble", "--provider", "oracle", "--target", s(&target),
        "--out", s(&out), "--config", s(&config),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let est = load_waveform(out.join("separated.wav"), 16_000).unwrap();
    let truth = load_waveform(&target, 16_000).unwrap();
    assert_eq!(est.len(), truth.len());
    let score = si_sdr(est.samples(), truth.samples()).unwrap();
    assert!(score >= 10.0, "si-sdr {score}");

    let (header, mask) = read_mask(out.join("mask.dgm1")).unwrap();
    assert_eq!(header.stft_config, StftConfig::default());
    assert_eq!(mask.dim(), (1025, 201));
    let trace = std::fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2 * 151);
    assert!(trace.starts_with("epoch,iteration,loss\n0,1,"));
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["query"], "low rumble");
    assert_eq!(meta["config"]["epochs"], 150);
    assert_eq!(meta["provider"], "oracle");
}

#[test]
fn meta_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (mix, target) = write_case(dir.path());
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"duration_s": 2.0, "epochs": 20, "iterations": 1, "jitter_db": 1.0}"#).unwrap();
    let first = dir.path().join("first");
    let run = dgmo(&[
        "separate", "--mixture", s(&mix), "--provider", "oracle", "--target", s(&target), "--out", s(&first),
        "--config", s(&config), "--seed", "9",
    ]);
    assert_eq!(code(&run), 0);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(first.join("meta.json")).unwrap()).unwrap();
    let echoed = dir.path().join("echo.json");
    std::fs::write(&echoed, meta["config"].to_string()).unwrap();
    let second = dir.path().join("second");
    let run = dgmo(&["separate", "--config", s(&echoed), "--out", s(&second)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for name in ["separated.wav", "loss_trace.csv", "mask.dgm1"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn mismatched_reference_file_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let (mix, _) = write_case(dir.path());
    let other = synth_source(SourceKind::BandNoise, (0.0, 2000.0), 1.0, 16_000, 1).unwrap();
    let refs = oracle_refs(&other, &MelConfig::default(), &StftConfig::default(), 2, 0.0, 0).unwrap();
    let path = dir.path().join("refs.dgm1");
    write_refset(&refs, &path).unwrap();
    let run = dgmo(&["separate", "--mixture", s(&mix), "--refs", s(&path), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("frames"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (mix, _) = write_case(dir.path());
    let out = dir.path().join("o");
    let run = dgmo(&["separate", "--mixture", s(&mix), "--provider", "diffusion-exec", "--out", s(&out)]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("refgen"));
    assert_eq!(code(&dgmo(&["separate", "--mixture", s(&mix), "--out", s(&out)])), 2);
    assert_eq!(code(&dgmo(&["separate", "--mixture", s(&mix), "--loss-domain", "cubic"])), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"learning_rate": 0.1}"#).unwrap();
    assert_eq!(code(&dgmo(&["separate", "--config", s(&bad)])), 2);
    let missing = dgmo(&[
        "separate", "--mixture", s(&dir.path().join("nope.wav")), "--refs", s(&mix), "--out", s(&out),
    ]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn diffusion_exec_provider_runs_the_generator() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let (mix, _) = write_case(dir.path());
    // references for a 2 s buffer, as a generator would emit them
    let stems = band_split_case(2.0, 16_000, 0.0, 21).unwrap();
    let refs = oracle_refs(&stems.target, &MelConfig::default(), &StftConfig::default(), 4, 1.0, 0).unwrap();
    let fixture = dir.path().join("fixture.dgm1");
    write_refset(&refs, &fixture).unwrap();
    let bin = dir.path().join("refgen");
    std::fs::write(
        &bin,
        format!(
            "#!/bin/sh\nwhile [ $# -gt 0 ]; do\n  if [ \"$1\" = \"--out\" ]; then cp {} \"$2\"; fi\n  shift\ndone\n",
            fixture.display()
        ),
    )
    .unwrap();
    std::fs::set_permissions(&bin, std::fs::Permissions::from_mode(0o755)).unwrap();
    let out = dir.path().join("o");
    let run = Command::new(env!("CARGO_BIN_EXE_dgmo"))
        .args(["separate", "--mixture", s(&mix), "--provider", "diffusion-exec", "--query", "hum", "--out", s(&out)])
        .args(["--config", s(&short_config(dir.path())), "--epochs", "30"])
        .env("DGMO_REFGEN_BIN", &bin)
        .output()
        .unwrap();
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("separated.wav").is_file());
}

fn write_sources(dir: &Path) {
    let t = synth_source(SourceKind::ToneStack, (200.0, 1500.0), 0.5, 16_000, 3).unwrap();
    let b = synth_source(SourceKind::BandNoise, (3000.0, 7000.0), 0.5, 16_000, 4).unwrap();
    write_wav(&t, dir.join("t.wav")).unwrap();
    write_wav(&b, dir.join("b.wav")).unwrap();
}

#[test]
fn mix_handles_empty_normal_and_duplicate_manifests() {
    let dir = tempfile::tempdir().unwrap();
    write_sources(dir.path());
    let manifest = dir.path().join("m.json");
    let out = dir.path().join("mixes");

    std::fs::write(&manifest, "[]").unwrap();
    assert_eq!(code(&dgmo(&["mix", "--manifest", s(&manifest), "--out", s(&out)])), 0);
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());

    std::fs::write(
        &manifest,
        r#"[{"id": "a", "target": "t.wav", "background": "b.wav", "snr_db": 0, "query": "tones", "seed": 1},
            {"id": "b", "target": "t.wav", "background": "b.wav", "snr_db": -5, "query": "tones", "seed": 2}]"#,
    )
    .unwrap();
    assert_eq!(code(&dgmo(&["mix", "--manifest", s(&manifest), "--out", s(&out), "--jobs", "2"])), 0);
    for id in ["a", "b"] {
        for f in ["mixture.wav", "target.wav", "background.wav", "meta.json"] {
            assert!(out.join(id).join(f).is_file(), "{id}/{f}");
        }
    }

    std::fs::write(
        &manifest,
        r#"[{"id": "a", "target": "t.wav", "background": "b.wav"}, {"id": "a", "target": "t.wav", "background": "b.wav"}]"#,
    )
    .unwrap();
    assert_eq!(code(&dgmo(&["mix", "--manifest", s(&manifest), "--out", s(&out)])), 2);

    std::fs::write(&manifest, r#"[{"id": "c", "target": "missing.wav", "background": "b.wav"}]"#).unwrap();
    let run = dgmo(&["mix", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("row c"));
}

fn mixed_truth(dir: &Path) -> PathBuf {
    write_sources(dir);
    let manifest = dir.join("m.json");
    std::fs::write(
        &manifest,
        r#"[{"id": "a", "target": "t.wav", "background": "b.wav", "query": "tones", "seed": 1},
            {"id": "b", "target": "t.wav", "background": "b.wav", "snr_db": 3, "query": "tones", "seed": 2}]"#,
    )
    .unwrap();
    let truth = dir.join("truth");
    assert_eq!(code(&dgmo(&["mix", "--manifest", s(&manifest), "--out", s(&truth)])), 0);
    truth
}

fn report_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn eval_of_mixture_copies_scores_zero_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let truth = mixed_truth(dir.path());
    let est = dir.path().join("est");
    std::fs::create_dir_all(&est).unwrap();
    for id in ["a", "b"] {
        std::fs::copy(truth.join(id).join("mixture.wav"), est.join(format!("{id}.wav"))).unwrap();
    }
    let report = dir.path().join("scores.csv");
    let run = dgmo(&["eval", "--est", s(&est), "--truth", s(&truth), "--out", s(&report), "--jobs", "2"]);
    assert_eq!(code(&run), 0);
    let rows = report_rows(&report);
    assert_eq!(rows[0], ["id", "query", "si_sdr", "sdr", "sdri"]);
    assert_eq!(rows[3][0], "mean");
    for row in &rows[1..] {
        assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn eval_of_truth_is_capped_and_missing_pairs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let truth = mixed_truth(dir.path());
    let est = dir.path().join("est");
    std::fs::create_dir_all(est.join("a")).unwrap();
    std::fs::copy(truth.join("a").join("target.wav"), est.join("a").join("separated.wav")).unwrap();
    let report = dir.path().join("scores.csv");
    let run = dgmo(&["eval", "--est", s(&est), "--truth", s(&truth), "--out", s(&report)]);
    assert_eq!(code(&run), 1);
    let rows = report_rows(&report);
    assert_eq!(rows[1][0], "a");
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 120.0);
    assert_eq!(rows[3][0], "#error");
    assert_eq!(rows[3][1], "b");
}

#[test]
fn selftest_passes_and_reports_injected_failure() {
    let ok = dgmo(&["selftest"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("PASS") && !text.contains("FAIL"));
    let bad = dgmo(&["selftest", "--inject-failure"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
