//! The DGM1 container.
//!
//! Layout (little-endian):
//! - magic: `b"DGM1"`
//! - header_len: u32
//! - header: `header_len` bytes of UTF-8 JSON ([`RefFileHeader`])
//! - payload: `count` row-major `f32` matrices of `shape[0] x shape[1]`
//!
//! Reference sets use `kind = "refset"` (`shape = (n_mels, frames)`); saved
//! masks use `kind = "mask"` with `count = 1` and `shape = (bins, frames)`.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask_optim::{Provenance, ReferenceSet};
use crate::mel::{MelConfig, MelDomain, MelSpectrogram};
use crate::stft::StftConfig;

pub const MAGIC: &[u8; 4] = b"DGM1";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    #[default]
    Refset,
    Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefFileHeader {
    pub version: u32,
    #[serde(default)]
    pub kind: PayloadKind,
    pub shape: [usize; 2],
    pub count: usize,
    pub dtype: String,
    #[serde(default)]
    pub mel_config: Option<MelConfig>,
    pub stft_config: StftConfig,
    pub sample_rate: u32,
    #[serde(default)]
    pub domain: Option<MelDomain>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl RefFileHeader {
    fn payload_bytes(&self) -> Option<u64> {
        (self.shape[0] as u64)
            .checked_mul(self.shape[1] as u64)?
            .checked_mul(self.count as u64)?
            .checked_mul(4)
    }
}

fn encode(header: &RefFileHeader, matrices: &[&Array2<f64>]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let header_len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    let cells = header.shape[0] * header.shape[1];
    let mut buf = Vec::with_capacity(8 + json.len() + 4 * cells * matrices.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&header_len.to_le_bytes());
    buf.extend_from_slice(&json);
    for m in matrices {
        // iter() on a standard-layout array is row-major
        for &v in m.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

/// Writes next to `path` and renames into place so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        w.write_all(bytes).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Splits a DGM1 byte buffer into its validated header and payload matrices.
pub fn decode(bytes: &[u8]) -> Result<(RefFileHeader, Vec<Array2<f32>>)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing DGM1 magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let json = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| Error::Corrupt(format!("header of {header_len} bytes is truncated")))?;
    let value: serde_json::Value =
        serde_json::from_slice(json).map_err(|e| Error::Corrupt(format!("header is not valid JSON: {e}")))?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let header: RefFileHeader =
        serde_json::from_value(value).map_err(|e| Error::Corrupt(format!("bad header: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::Format(format!("dtype {:?} (only {DTYPE:?} is supported)", header.dtype)));
    }
    if header.shape[0] == 0 || header.shape[1] == 0 || header.count == 0 {
        return Err(Error::Corrupt(format!(
            "empty payload declared: shape {:?}, count {}",
            header.shape, header.count
        )));
    }
    let payload = &bytes[8 + header_len..];
    let expected = header
        .payload_bytes()
        .ok_or_else(|| Error::Corrupt("declared payload size overflows".into()))?;
    if payload.len() as u64 != expected {
        return Err(Error::Corrupt(format!(
            "payload is {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    let cells = header.shape[0] * header.shape[1];
    let matrices = payload
        .chunks_exact(cells * 4)
        .map(|chunk| {
            let data: Vec<f32> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            Array2::from_shape_vec((header.shape[0], header.shape[1]), data).expect("length checked")
        })
        .collect();
    Ok((header, matrices))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

pub fn refset_header(refs: &ReferenceSet) -> RefFileHeader {
    let (n_mels, frames) = refs.shape();
    RefFileHeader {
        version: VERSION,
        kind: PayloadKind::Refset,
        shape: [n_mels, frames],
        count: refs.len(),
        dtype: DTYPE.into(),
        mel_config: Some(*refs.mel_config()),
        stft_config: *refs.stft_config(),
        sample_rate: refs.sample_rate(),
        domain: Some(refs.domain()),
        provenance: Some(refs.provenance().clone()),
    }
}

/// Serializes a reference set. Values are stored as `f32`; sets whose values
/// are already `f32`-representable round-trip bit for bit.
pub fn encode_refset(refs: &ReferenceSet) -> Result<Vec<u8>> {
    let mats: Vec<&Array2<f64>> = refs.mels().iter().map(|m| &m.values).collect();
    encode(&refset_header(refs), &mats)
}

pub fn write_refset(refs: &ReferenceSet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_refset(refs)?)
}

pub fn decode_refset(bytes: &[u8]) -> Result<ReferenceSet> {
    let (header, mats) = decode(bytes)?;
    if header.kind != PayloadKind::Refset {
        return Err(Error::Format(format!("expected a reference set, found {:?}", header.kind)));
    }
    let mel_config = header
        .mel_config
        .ok_or_else(|| Error::Corrupt("reference header lacks mel_config".into()))?;
    let domain = header.domain.unwrap_or(mel_config.loss_domain);
    if domain != mel_config.loss_domain {
        return Err(Error::Corrupt(format!(
            "header domain {domain:?} contradicts mel_config.loss_domain {:?}",
            mel_config.loss_domain
        )));
    }
    let provenance = header
        .provenance
        .ok_or_else(|| Error::Corrupt("reference header lacks provenance".into()))?;
    mel_config
        .validate(header.sample_rate)
        .map_err(|e| Error::Corrupt(format!("header mel_config: {e}")))?;
    header
        .stft_config
        .validate()
        .map_err(|e| Error::Corrupt(format!("header stft_config: {e}")))?;
    let mels = mats
        .into_iter()
        .map(|m| MelSpectrogram {
            values: m.mapv(f64::from),
            domain,
            config: mel_config,
        })
        .collect();
    ReferenceSet::new(mels, mel_config, header.stft_config, header.sample_rate, provenance)
        .map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn read_refset(path: impl AsRef<Path>) -> Result<ReferenceSet> {
    let path = path.as_ref();
    decode_refset(&read_bytes(path)?).map_err(|e| match e {
        Error::Io { .. } => e,
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads only the header, e.g. to learn the analysis parameters before
/// touching the mixture.
pub fn read_header(path: impl AsRef<Path>) -> Result<RefFileHeader> {
    Ok(decode(&read_bytes(path.as_ref())?)?.0)
}

/// Saves mask values `(bins, frames)` as a single-matrix DGM1 file.
pub fn write_mask(values: &Array2<f64>, stft_config: &StftConfig, sample_rate: u32, path: impl AsRef<Path>) -> Result<()> {
    let header = RefFileHeader {
        version: VERSION,
        kind: PayloadKind::Mask,
        shape: [values.nrows(), values.ncols()],
        count: 1,
        dtype: DTYPE.into(),
        mel_config: None,
        stft_config: *stft_config,
        sample_rate,
        domain: None,
        provenance: None,
    };
    write_atomic(path.as_ref(), &encode(&header, &[values])?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<(RefFileHeader, Array2<f32>)> {
    let (header, mut mats) = decode(&read_bytes(path.as_ref())?)?;
    if header.kind != PayloadKind::Mask || mats.len() != 1 {
        return Err(Error::Format("not a single-matrix mask file".into()));
    }
    Ok((header, mats.pop().expect("one matrix")))
}

/// `<refs_dir>/<mixture_id>/<query_slug>.dgm1`
pub fn refset_path(refs_dir: impl AsRef<Path>, mixture_id: &str, query: &str) -> std::path::PathBuf {
    refs_dir
        .as_ref()
        .join(mixture_id)
        .join(format!("{}.dgm1", query_slug(query)))
}

/// Lowercase ASCII alphanumerics with runs of anything else collapsed to `_`.
pub fn query_slug(query: &str) -> String {
    let mut slug = String::with_capacity(query.len());
    for c in query.trim().chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('_') {
            slug.push('_');
        }
    }
    let slug = slug.trim_matches('_').to_string();
    if slug.is_empty() {
        "query".into()
    } else {
        slug
    }
}
