//! Reference-set interchange (the DGM1 file format) and reference providers.

mod format;
mod oracle;
mod provider;

pub use format::{
    decode, decode_refset, encode_refset, query_slug, read_header, read_mask, read_refset, refset_header,
    refset_path, write_mask, write_refset, PayloadKind, RefFileHeader, DTYPE, MAGIC, VERSION,
};
pub use oracle::oracle_refs;
pub use provider::{ExecProvider, ExecSettings, FileProvider, OracleProvider, StaticProvider};
