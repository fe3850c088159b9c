//! On-disk artifact formats. Every binary file ends in a SHA-256
//! trailer over everything before it; loads verify the trailer before
//! parsing and reject trailing bytes after the declared content.
//!
//! - `CAE1` / `VQV1` — model parameters: magic, u32 canonical-JSON
//!   config length, config JSON, little-endian f32 weights in fill
//!   order (the `VQV1` stream includes the codebook as a row-major
//!   `[n_codes, code_dim]` block between the two 1x1 projections).
//! - `SWMI` — embedding index: magic, u32 version=1, u32 dim, 32-byte
//!   model hash, u64 count, then per entry u16 id length + UTF-8 id,
//!   i64 epoch-hours timestamp, dim little-endian f32 components.
//! - `PPC1` — preprocessed-raster cache entry: magic, u32 version=1,
//!   u32 width/height/channels, i64 epoch-hours timestamp, 32-byte
//!   preprocess config hash, u16 id length + id, then w*h*c f32 planes.
//! - External embeddings — JSON Lines, one object per map:
//!   `{"id", "timestamp", "model", "vector"}`; the index model hash is
//!   the SHA-256 of the declared model label.
//!
//! All integers are little-endian.

use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synmap_core::cae::{cae_param_payload, cae_params_from_flat, CaeConfig, CaeError, CaeParams};
use synmap_core::digest::{f32_le_bytes, Digest};
use synmap_core::imgproc::PreprocessedMap;
use synmap_core::index::{Embedding, EmbeddingIndex, IndexError};
use synmap_core::time::Timestamp;
use synmap_core::vqvae::{vq_param_payload, vq_params_from_flat, VqvaeConfig, VqvaeParams};
use synmap_core::{cae::CAE_MAGIC, vqvae::VQVAE_MAGIC};
use thiserror::Error;

pub const INDEX_MAGIC: &[u8; 4] = b"SWMI";
pub const CACHE_MAGIC: &[u8; 4] = b"PPC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: file is corrupt or truncated")]
    ChecksumMismatch,
    #[error("file too short: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{extra} trailing bytes after the declared content")]
    TrailingBytes { extra: usize },
    #[error("config block: {0}")]
    Config(String),
    #[error("model mismatch: expected {expected}, file holds {found}")]
    WrongModelKind { expected: &'static str, found: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: vector has {got} components, expected {expected}")]
    ExternalDim { line: usize, expected: usize, got: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl From<CaeError> for FormatError {
    fn from(e: CaeError) -> Self {
        FormatError::Config(e.to_string())
    }
}

/// Little-endian cursor with length checks.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated { need: self.pos + n, have: self.buf.len() });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("sized take")))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("sized take")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("sized take")))
    }

    fn i64(&mut self) -> Result<i64, FormatError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("sized take")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let raw = self.take(n * 4)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk"))).collect())
    }

    fn done(&self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(FormatError::TrailingBytes { extra }),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

/// Appends the SHA-256 trailer to a payload.
fn seal(mut payload: Vec<u8>) -> Vec<u8> {
    let digest = Digest::of_bytes(&payload);
    payload.extend_from_slice(digest.as_bytes());
    payload
}

/// Splits payload from trailer and verifies it.
fn unseal(bytes: &[u8]) -> Result<&[u8], FormatError> {
    if bytes.len() < 32 {
        return Err(FormatError::Truncated { need: 32, have: bytes.len() });
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 32);
    if Digest::of_bytes(payload).as_bytes() != trailer {
        return Err(FormatError::ChecksumMismatch);
    }
    Ok(payload)
}

// ---------------------------------------------------------------------------
// Model parameter files (`CAE1` / `VQV1`)
// ---------------------------------------------------------------------------

/// A loaded parameter file, either model family.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Cae { config: CaeConfig, params: CaeParams<f32> },
    Vq { config: VqvaeConfig, params: VqvaeParams<f32> },
}

impl ModelParams {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelParams::Cae { .. } => "cae",
            ModelParams::Vq { .. } => "vqvae",
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            ModelParams::Cae { config, params } => cae_param_payload(config, params),
            ModelParams::Vq { config, params } => vq_param_payload(config, params),
        }
    }

    /// SHA-256 of the payload — the model identity carried by
    /// embeddings and indexes built from these parameters.
    pub fn model_hash(&self) -> Digest {
        Digest::of_bytes(&self.payload())
    }
}

pub fn save_params(mp: &ModelParams, path: &Path) -> Result<(), FormatError> {
    write_file(path, &seal(mp.payload()))
}

fn parse_params(payload: &[u8]) -> Result<ModelParams, FormatError> {
    let mut r = Reader::new(payload);
    let magic: [u8; 4] = r.take(4)?.try_into().expect("sized take");
    let is_cae = &magic == CAE_MAGIC;
    if !is_cae && &magic != VQVAE_MAGIC {
        return Err(FormatError::BadMagic {
            expected: format!(
                "{} or {}",
                String::from_utf8_lossy(CAE_MAGIC),
                String::from_utf8_lossy(VQVAE_MAGIC)
            ),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let json_len = r.u32()? as usize;
    let json = r.take(json_len)?;
    let bad_json = |e: serde_json::Error| FormatError::Config(e.to_string());
    let weight_bytes = payload.len() - r.pos;
    if weight_bytes % 4 != 0 {
        return Err(FormatError::Truncated { need: r.pos + weight_bytes + 4 - weight_bytes % 4, have: payload.len() });
    }
    let weights = r.f32s(weight_bytes / 4)?;
    r.done()?;
    if is_cae {
        let config: CaeConfig = serde_json::from_slice(json).map_err(bad_json)?;
        let params = cae_params_from_flat(&config, &weights)?;
        Ok(ModelParams::Cae { config, params })
    } else {
        let config: VqvaeConfig = serde_json::from_slice(json).map_err(bad_json)?;
        let params = vq_params_from_flat(&config, &weights)?;
        Ok(ModelParams::Vq { config, params })
    }
}

/// Loads either parameter format, returning the params and the payload
/// hash (= the model hash of embeddings built from them).
pub fn load_params(path: &Path) -> Result<(ModelParams, Digest), FormatError> {
    let bytes = read_file(path)?;
    let payload = unseal(&bytes)?;
    let mp = parse_params(payload)?;
    Ok((mp, Digest::of_bytes(payload)))
}

pub fn load_cae_params(path: &Path) -> Result<(CaeConfig, CaeParams<f32>, Digest), FormatError> {
    match load_params(path)? {
        (ModelParams::Cae { config, params }, hash) => Ok((config, params, hash)),
        (other, _) => {
            Err(FormatError::WrongModelKind { expected: "cae", found: other.kind().into() })
        }
    }
}

pub fn load_vq_params(
    path: &Path,
) -> Result<(VqvaeConfig, VqvaeParams<f32>, Digest), FormatError> {
    match load_params(path)? {
        (ModelParams::Vq { config, params }, hash) => Ok((config, params, hash)),
        (other, _) => {
            Err(FormatError::WrongModelKind { expected: "vqvae", found: other.kind().into() })
        }
    }
}

// ---------------------------------------------------------------------------
// Embedding index files (`SWMI`)
// ---------------------------------------------------------------------------

/// The serialized form, exposed for byte-level tests.
pub fn index_bytes(idx: &EmbeddingIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(idx.dim() as u32).to_le_bytes());
    out.extend_from_slice(idx.model_hash().as_bytes());
    out.extend_from_slice(&(idx.len() as u64).to_le_bytes());
    for e in idx.entries() {
        out.extend_from_slice(&(e.source_id.len() as u16).to_le_bytes());
        out.extend_from_slice(e.source_id.as_bytes());
        out.extend_from_slice(&e.timestamp.epoch_hours().to_le_bytes());
        out.extend_from_slice(&f32_le_bytes(&e.vector));
    }
    seal(out)
}

pub fn save_index(idx: &EmbeddingIndex, path: &Path) -> Result<(), FormatError> {
    write_file(path, &index_bytes(idx))
}

pub fn load_index(path: &Path) -> Result<EmbeddingIndex, FormatError> {
    let bytes = read_file(path)?;
    let payload = unseal(&bytes)?;
    let mut r = Reader::new(payload);
    let magic = r.take(4)?;
    if magic != INDEX_MAGIC {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(INDEX_MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let dim = r.u32()? as usize;
    let model_hash = Digest(r.take(32)?.try_into().expect("sized take"));
    let count = r.u64()? as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let id_len = r.u16()? as usize;
        let id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|e| FormatError::Line { line: i + 1, message: e.to_string() })?;
        let timestamp = Timestamp::from_epoch_hours(r.i64()?);
        let vector = r.f32s(dim)?;
        entries.push(Embedding { source_id: id, timestamp, vector, model_hash });
    }
    r.done()?;
    // Re-validated invariants: uniform dim/hash, finite, unique stamps.
    Ok(EmbeddingIndex::build(entries)?)
}

// ---------------------------------------------------------------------------
// Preprocessed-raster cache (`PPC1`)
// ---------------------------------------------------------------------------

/// A cached raster plus the observation time retrieval needs.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub map: PreprocessedMap,
    pub timestamp: Timestamp,
}

pub fn cache_entry_bytes(entry: &CacheEntry) -> Vec<u8> {
    let m = &entry.map;
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&m.width.to_le_bytes());
    out.extend_from_slice(&m.height.to_le_bytes());
    out.extend_from_slice(&u32::from(m.channels).to_le_bytes());
    out.extend_from_slice(&entry.timestamp.epoch_hours().to_le_bytes());
    out.extend_from_slice(m.config_hash.as_bytes());
    out.extend_from_slice(&(m.source_id.len() as u16).to_le_bytes());
    out.extend_from_slice(m.source_id.as_bytes());
    out.extend_from_slice(&f32_le_bytes(&m.data));
    seal(out)
}

pub fn save_cache_entry(entry: &CacheEntry, path: &Path) -> Result<(), FormatError> {
    write_file(path, &cache_entry_bytes(entry))
}

pub fn load_cache_entry(path: &Path) -> Result<CacheEntry, FormatError> {
    let bytes = read_file(path)?;
    let payload = unseal(&bytes)?;
    let mut r = Reader::new(payload);
    let magic = r.take(4)?;
    if magic != CACHE_MAGIC {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(CACHE_MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let width = r.u32()?;
    let height = r.u32()?;
    let channels = r.u32()?;
    let timestamp = Timestamp::from_epoch_hours(r.i64()?);
    let config_hash = Digest(r.take(32)?.try_into().expect("sized take"));
    let id_len = r.u16()? as usize;
    let source_id = String::from_utf8(r.take(id_len)?.to_vec())
        .map_err(|e| FormatError::Config(e.to_string()))?;
    let numel = width as usize * height as usize * channels as usize;
    let data = r.f32s(numel)?;
    r.done()?;
    let channels = u8::try_from(channels)
        .map_err(|_| FormatError::Config(format!("channel count {channels} out of range")))?;
    Ok(CacheEntry {
        map: PreprocessedMap { width, height, channels, data, source_id, config_hash },
        timestamp,
    })
}

/// File name for one cache entry within a cache directory.
pub fn cache_file_name(id: &str) -> String {
    format!("{id}.ppc")
}

/// Loads every `*.ppc` under `dir`, sorted by timestamp.
pub fn load_cache_dir(dir: &Path) -> Result<Vec<CacheEntry>, FormatError> {
    let io = |source| FormatError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppc"))
        .collect();
    paths.sort();
    let mut entries = Vec::with_capacity(paths.len());
    for p in paths {
        entries.push(load_cache_entry(&p)?);
    }
    entries.sort_by_key(|e| e.timestamp);
    Ok(entries)
}

// ---------------------------------------------------------------------------
// External embeddings (JSON Lines exchange format)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalRow {
    id: String,
    timestamp: Timestamp,
    model: String,
    vector: Vec<f32>,
}

/// Hash of the foreign model's declared label — the stand-in for a
/// parameter hash when the producer is an external toolchain.
pub fn external_model_hash(label: &str) -> Digest {
    Digest::of_bytes(label.as_bytes())
}

/// Imports a JSON Lines embedding file. All rows must agree on the
/// model label and (if given) on `expected_dim`; offending rows are
/// named by line number.
pub fn import_external(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<EmbeddingIndex, FormatError> {
    let io = |source| FormatError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io)?;
    let mut entries = Vec::new();
    let mut want_dim = expected_dim;
    let mut label: Option<String> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ExternalRow = serde_json::from_str(&line)
            .map_err(|e| FormatError::Line { line: i + 1, message: e.to_string() })?;
        let dim = *want_dim.get_or_insert(row.vector.len());
        if row.vector.len() != dim {
            return Err(FormatError::ExternalDim { line: i + 1, expected: dim, got: row.vector.len() });
        }
        match &label {
            None => label = Some(row.model.clone()),
            Some(l) if *l != row.model => {
                return Err(FormatError::Line {
                    line: i + 1,
                    message: format!("model label {:?} differs from {l:?}", row.model),
                });
            }
            Some(_) => {}
        }
        entries.push(Embedding {
            source_id: row.id,
            timestamp: row.timestamp,
            vector: row.vector,
            model_hash: external_model_hash(label.as_deref().expect("set above")),
        });
    }
    Ok(EmbeddingIndex::build(entries)?)
}

/// Writes an index in the exchange format under the given model label.
pub fn export_external(
    idx: &EmbeddingIndex,
    label: &str,
    path: &Path,
) -> Result<(), FormatError> {
    let mut out = Vec::new();
    for e in idx.entries() {
        let row = ExternalRow {
            id: e.source_id.clone(),
            timestamp: e.timestamp,
            model: label.to_string(),
            vector: e.vector.clone(),
        };
        serde_json::to_writer(&mut out, &row).expect("row serialization is infallible");
        out.push(b'\n');
    }
    write_file(path, &out)
}
