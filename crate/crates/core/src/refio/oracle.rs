use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::mask_optim::{Provenance, ReferenceSet};
use crate::mel::{apply_mel, MelConfig, MelDomain, MelFilterbank, MelSpectrogram};
use crate::stft::{magphase, stft, StftConfig};

/// References built from the true target: its mel spectrogram, repeated `n`
/// times, each copy multiplied cell-wise by log-normal noise whose standard
/// deviation is `jitter_db` decibels (amplitude). `jitter_db = 0` gives exact
/// copies.
pub fn oracle_refs(
    target: &Waveform,
    mcfg: &MelConfig,
    scfg: &StftConfig,
    n: usize,
    jitter_db: f64,
    seed: u64,
) -> Result<ReferenceSet> {
    if n == 0 {
        return Err(Error::Config("oracle reference count must be at least 1".into()));
    }
    if !(jitter_db >= 0.0 && jitter_db.is_finite()) {
        return Err(Error::Config(format!("jitter must be a non-negative dB value, got {jitter_db}")));
    }
    let sr = target.sample_rate();
    let fb = MelFilterbank::new(mcfg, scfg, sr)?;
    let (mag, _) = magphase(&stft(target, scfg)?);
    let domain = mcfg.loss_domain;
    let mel_config = *fb.mel_config();

    let mels = if jitter_db == 0.0 {
        let clean = apply_mel(&mag, &fb, domain)?;
        vec![clean; n]
    } else {
        let clean = apply_mel(&mag, &fb, MelDomain::Linear)?.values;
        let sigma = jitter_db * std::f64::consts::LN_10 / 20.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut values = clean.mapv(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v * (sigma * z).exp()
                });
                if domain == MelDomain::Log {
                    let floor = mel_config.log_floor;
                    values.mapv_inplace(|v| v.max(floor).ln());
                }
                MelSpectrogram {
                    values,
                    domain,
                    config: mel_config,
                }
            })
            .collect()
    };
    ReferenceSet::new(mels, mel_config, *scfg, sr, Provenance::oracle("oracle"))
}
