//! Archive discovery and image IO.
//!
//! Filenames are the source of truth for observation times. A filename
//! pattern is literal text plus the four fixed-width placeholders
//! `{YYYY}{MM}{DD}{HH}`, each required exactly once; anything in the
//! directory that does not fit the pattern shape is ignored, while
//! files that fit the shape but carry an impossible date are collected
//! as rejects rather than silently dropped.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use synmap_core::imgproc::ImageU8;
use synmap_core::time::{TimeError, Timestamp};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: unsupported pixel format {found} (need 8-bit RGB or grayscale)")]
    UnsupportedPixelFormat { path: PathBuf, found: String },
    #[error("bad filename pattern: {0}")]
    BadPattern(String),
    #[error("no files matching the pattern under {dir} ({rejected} rejected)")]
    ZeroMatches { dir: PathBuf, rejected: usize },
    #[error("duplicate timestamp {timestamp}: {first} and {second}")]
    DuplicateTimestamp { timestamp: Timestamp, first: String, second: String },
    #[error("holdout timestamp {0} is not in the manifest")]
    NotInManifest(Timestamp),
    #[error("{path} line {line}: {message}")]
    ManifestParse { path: PathBuf, line: usize, message: String },
}

/// One archive image: identity, observation time, and where it lives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapRecord {
    pub id: String,
    pub timestamp: Timestamp,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

/// Ordered archive listing. Only `records` is persisted; provenance
/// fields are in-memory metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<MapRecord>,
    pub source_dir: PathBuf,
    /// Scan time, hour resolution (UTC).
    pub created_at: Timestamp,
}

/// A file that fit the pattern shape but could not become a record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reject {
    pub file_name: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub manifest: Manifest,
    pub rejects: Vec<Reject>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Seg {
    Lit(String),
    Year,
    Month,
    Day,
    Hour,
}

impl Seg {
    fn width(&self) -> usize {
        match self {
            Seg::Lit(s) => s.len(),
            Seg::Year => 4,
            _ => 2,
        }
    }
}

/// Compiled filename pattern. Matching is anchored at both ends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilePattern {
    segs: Vec<Seg>,
}

impl FilePattern {
    pub fn parse(pattern: &str) -> Result<Self, DataError> {
        let bad = |msg: String| DataError::BadPattern(msg);
        let mut segs = Vec::new();
        let mut lit = String::new();
        let mut rest = pattern;
        let mut seen = [false; 4]; // year, month, day, hour
        while let Some(open) = rest.find(['{', '}']) {
            let (before, at) = rest.split_at(open);
            lit.push_str(before);
            if at.starts_with('}') {
                return Err(bad(format!("unmatched '}}' in {pattern:?}")));
            }
            let close = at.find('}').ok_or_else(|| bad(format!("unclosed '{{' in {pattern:?}")))?;
            let field = &at[1..close];
            let (seg, slot) = match field {
                "YYYY" => (Seg::Year, 0),
                "MM" => (Seg::Month, 1),
                "DD" => (Seg::Day, 2),
                "HH" => (Seg::Hour, 3),
                other => return Err(bad(format!("unknown field {{{other}}} in {pattern:?}"))),
            };
            if seen[slot] {
                return Err(bad(format!("field {{{field}}} appears twice in {pattern:?}")));
            }
            seen[slot] = true;
            if !lit.is_empty() {
                segs.push(Seg::Lit(std::mem::take(&mut lit)));
            }
            segs.push(seg);
            rest = &at[close + 1..];
        }
        lit.push_str(rest);
        if !lit.is_empty() {
            segs.push(Seg::Lit(lit));
        }
        if let Some(missing) = ["{YYYY}", "{MM}", "{DD}", "{HH}"]
            .iter()
            .zip(seen)
            .find_map(|(name, s)| (!s).then_some(name))
        {
            return Err(bad(format!("pattern {pattern:?} is missing {missing}")));
        }
        Ok(FilePattern { segs })
    }

    /// `None`: the name does not fit the pattern shape. `Some(Err)`: it
    /// fits but the digits form an invalid calendar date.
    pub fn match_name(&self, name: &str) -> Option<Result<Timestamp, TimeError>> {
        let mut rest = name;
        let (mut y, mut mo, mut d, mut h) = (0i64, 0i64, 0i64, 0i64);
        for seg in &self.segs {
            let w = seg.width();
            if rest.len() < w || !rest.is_char_boundary(w) {
                return None;
            }
            let (head, tail) = rest.split_at(w);
            match seg {
                Seg::Lit(s) => {
                    if head != s {
                        return None;
                    }
                }
                _ => {
                    let v: i64 = head.parse().ok().filter(|v| *v >= 0)?;
                    match seg {
                        Seg::Year => y = v,
                        Seg::Month => mo = v,
                        Seg::Day => d = v,
                        Seg::Hour => h = v,
                        Seg::Lit(_) => unreachable!(),
                    }
                }
            }
            rest = tail;
        }
        if !rest.is_empty() {
            return None;
        }
        Some(Timestamp::from_ymdh(y as i32, mo as u32, d as u32, h as u32))
    }

    /// Renders the filename for a timestamp (inverse of `match_name`).
    pub fn render(&self, ts: Timestamp) -> String {
        let mut out = String::new();
        for seg in &self.segs {
            match seg {
                Seg::Lit(s) => out.push_str(s),
                Seg::Year => out.push_str(&format!("{:04}", ts.year())),
                Seg::Month => out.push_str(&format!("{:02}", ts.month())),
                Seg::Day => out.push_str(&format!("{:02}", ts.day())),
                Seg::Hour => out.push_str(&format!("{:02}", ts.hour())),
            }
        }
        out
    }
}

fn now_utc() -> Timestamp {
    let hours = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| (d.as_secs() / 3600) as i64)
        .unwrap_or(0);
    Timestamp::from_epoch_hours(hours)
}

/// File stem (name without the final extension) — the record id.
fn stem_of(name: &str) -> String {
    match name.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ => name.to_string(),
    }
}

/// Scans a directory for archive images. Directory entries are visited
/// in lexical order; records come back sorted by timestamp.
pub fn scan_archive(dir: &Path, pattern: &FilePattern) -> Result<ScanOutcome, DataError> {
    let io_err = |source| DataError::Io { path: dir.to_path_buf(), source };
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for name in names {
        let path = dir.join(&name);
        match pattern.match_name(&name) {
            None => {}
            Some(Err(e)) => rejects.push(Reject { file_name: name, reason: e.to_string() }),
            Some(Ok(timestamp)) => match image::image_dimensions(&path) {
                Err(e) => rejects.push(Reject { file_name: name, reason: e.to_string() }),
                Ok((width, height)) => records.push(MapRecord {
                    id: stem_of(&name),
                    timestamp,
                    path,
                    width,
                    height,
                }),
            },
        }
    }
    if records.is_empty() {
        return Err(DataError::ZeroMatches { dir: dir.to_path_buf(), rejected: rejects.len() });
    }
    records.sort_by_key(|r| r.timestamp);
    for pair in records.windows(2) {
        if pair[0].timestamp == pair[1].timestamp {
            return Err(DataError::DuplicateTimestamp {
                timestamp: pair[0].timestamp,
                first: pair[0].id.clone(),
                second: pair[1].id.clone(),
            });
        }
    }
    let manifest =
        Manifest { records, source_dir: dir.to_path_buf(), created_at: now_utc() };
    Ok(ScanOutcome { manifest, rejects })
}

/// Loads a PNG as 8-bit grayscale or RGB; anything else is an error
/// naming the format found. Reading and decoding are separate failure
/// classes: a file that reads fine but holds bad bytes is a decode
/// error even when the decoder surfaces it as unexpected EOF.
pub fn load_image(path: &Path) -> Result<ImageU8, DataError> {
    let bytes =
        fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let img = image::load_from_memory(&bytes)
        .map_err(|source| DataError::Decode { path: path.to_path_buf(), source })?;
    let (width, height) = (img.width(), img.height());
    let build = |channels, data| {
        ImageU8::new(width, height, channels, data)
            .expect("decoder output length always matches its dimensions")
    };
    match img {
        image::DynamicImage::ImageLuma8(g) => Ok(build(1, g.into_raw())),
        image::DynamicImage::ImageRgb8(rgb) => Ok(build(3, rgb.into_raw())),
        other => Err(DataError::UnsupportedPixelFormat {
            path: path.to_path_buf(),
            found: format!("{:?}", other.color()),
        }),
    }
}

/// One record per line: `{id, timestamp, path, width, height}`.
pub fn save_manifest(m: &Manifest, path: &Path) -> Result<(), DataError> {
    let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut out = Vec::new();
    for r in &m.records {
        serde_json::to_writer(&mut out, r).expect("record serialization is infallible");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&out).map_err(io_err)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MapRecord = serde_json::from_str(&line).map_err(|e| {
            DataError::ManifestParse { path: path.to_path_buf(), line: i + 1, message: e.to_string() }
        })?;
        records.push(record);
    }
    let source_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
    Ok(Manifest { records, source_dir, created_at: now_utc() })
}

/// Splits by holdout timestamps: eval gets exactly the holdout records,
/// train gets the rest; both stay sorted.
pub fn split_manifest(
    m: &Manifest,
    holdout: &[Timestamp],
) -> Result<(Manifest, Manifest), DataError> {
    for &t in holdout {
        if !m.records.iter().any(|r| r.timestamp == t) {
            return Err(DataError::NotInManifest(t));
        }
    }
    let (eval, train): (Vec<_>, Vec<_>) =
        m.records.iter().cloned().partition(|r| holdout.contains(&r.timestamp));
    let wrap = |records| Manifest {
        records,
        source_dir: m.source_dir.clone(),
        created_at: m.created_at,
    };
    Ok((wrap(train), wrap(eval)))
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file_name, self.reason)
    }
}
