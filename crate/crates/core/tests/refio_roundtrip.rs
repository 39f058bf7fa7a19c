use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use dgmo_core::mask_optim::{CreatedBy, Provenance, ReferenceRequest};
use dgmo_core::refio::{
    decode_refset, encode_refset, read_header, read_refset, write_refset, ExecProvider, ExecSettings, FileProvider,
};
use dgmo_core::{Error, MelConfig, MelDomain, MelSpectrogram, ReferenceProvider, ReferenceSet, StftConfig, Waveform};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(seed: u64) -> ReferenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = if rng.random_bool(0.5) { MelDomain::Log } else { MelDomain::Linear };
    let mcfg = MelConfig {
        n_mels: rng.random_range(4..40),
        loss_domain: domain,
        ..MelConfig::default()
    };
    let frames = rng.random_range(1..30);
    let n = rng.random_range(1..5);
    let mels = (0..n)
        .map(|_| MelSpectrogram {
            // f32-representable so the f32 payload loses nothing
            values: Array2::from_shape_fn((mcfg.n_mels, frames), |_| f64::from(rng.random_range(-12.0f32..12.0))),
            domain,
            config: mcfg,
        })
        .collect();
    let provenance = Provenance {
        query: format!("query {seed}"),
        backend_id: "synthetic".into(),
        noising_ratio: rng.random_range(0.0..=1.0),
        ddim_steps: rng.random_range(1..50),
        created_by: CreatedBy::Diffusion,
    };
    ReferenceSet::new(mels, mcfg, StftConfig::default(), 16_000, provenance).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn encode_decode_is_bitwise_identity(seed in any::<u64>()) {
        let set = random_set(seed);
        let bytes = encode_refset(&set).unwrap();
        let back = decode_refset(&bytes).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(encode_refset(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_is_always_detected(seed in 0u64..1000, cut in 1usize..64) {
        let bytes = encode_refset(&random_set(seed)).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(decode_refset(&bytes[..bytes.len() - cut]).is_err());
    }
}

#[test]
fn file_round_trip_and_header_only_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/set.dgm1");
    let set = random_set(42);
    write_refset(&set, &path).unwrap();
    assert_eq!(read_refset(&path).unwrap(), set);
    let header = read_header(&path).unwrap();
    assert_eq!(header.count, set.len());
    assert_eq!(header.shape, [set.shape().0, set.shape().1]);
    let leftovers: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn file_provider_serves_the_stored_set() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.dgm1");
    let set = random_set(8);
    write_refset(&set, &path).unwrap();
    let signal = Waveform::zeros(16, 16_000);
    let request = ReferenceRequest {
        iteration: 1,
        signal: &signal,
        n_refs: 4,
        seed: 0,
    };
    assert_eq!(FileProvider::new(&path).provide(&request).unwrap(), set);
    let missing = FileProvider::new(dir.path().join("nope.dgm1")).provide(&request);
    assert!(matches!(missing, Err(Error::Io { .. })));
}

fn script(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

#[test]
fn exec_provider_follows_the_generator_contract() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture.dgm1");
    let mut set = random_set(3);
    while set.len() != 2 {
        set = random_set(rand::random());
    }
    write_refset(&set, &fixture).unwrap();
    let log = dir.path().join("args.txt");
    let fake = script(
        dir.path(),
        "refgen",
        &format!(
            r#"echo "$@" > {log}
echo "seed=$DGMO_SEED" >> {log}
while [ $# -gt 0 ]; do
  if [ "$1" = "--out" ]; then cp {fixture} "$2"; fi
  shift
done"#,
            log = log.display(),
            fixture = fixture.display()
        ),
    );
    let settings = ExecSettings {
        query: "a dog barking".into(),
        ..ExecSettings::default()
    };
    let mut provider = ExecProvider::new(&fake, settings).unwrap();
    let signal = Waveform::new(vec![0.1, -0.2, 0.3], 16_000).unwrap();
    let request = ReferenceRequest {
        iteration: 1,
        signal: &signal,
        n_refs: 2,
        seed: 77,
    };
    assert_eq!(provider.provide(&request).unwrap(), set);
    let logged = std::fs::read_to_string(&log).unwrap();
    assert!(logged.contains("--query a dog barking --n 2 --ratio 0.7 --steps 25 --mode ddim_inversion --out "));
    assert!(logged.contains("--mixture "));
    assert!(logged.contains("seed=77"));

    let wrong_count = ReferenceRequest { n_refs: 4, ..request };
    assert!(matches!(provider.provide(&wrong_count), Err(Error::Contract(_))));
}

#[test]
fn exec_provider_reports_generator_failure() {
    let dir = tempfile::tempdir().unwrap();
    let fake = script(dir.path(), "refgen", "echo 'model weights not found' >&2\nexit 3");
    let mut provider = ExecProvider::new(&fake, ExecSettings::default()).unwrap();
    let signal = Waveform::zeros(8, 16_000);
    let request = ReferenceRequest {
        iteration: 1,
        signal: &signal,
        n_refs: 4,
        seed: 0,
    };
    match provider.provide(&request) {
        Err(Error::External(msg)) => assert!(msg.contains("model weights not found"), "{msg}"),
        other => panic!("expected external failure, got {other:?}"),
    }
    let absent = ExecProvider::new(dir.path().join("missing-bin"), ExecSettings::default())
        .unwrap()
        .provide(&request);
    assert!(matches!(absent, Err(Error::Io { .. })));
}
