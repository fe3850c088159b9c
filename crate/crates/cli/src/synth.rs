//! Synthetic-archive writer: renders the generator's maps to PNG files
//! named by the data pattern, alongside a JSON Lines truth manifest
//! recording each map's final line parameters.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synmap_core::digest::canonical_json_digest;
use synmap_core::imgproc::ImageU8;
use synmap_core::synthgen::{synth_map, MapTruth, SynthSpec};
use synmap_core::time::Timestamp;
use thiserror::Error;

use crate::dataio::FilePattern;

/// Default archive filename layout.
pub const DEFAULT_PATTERN: &str = "swm_{YYYY}{MM}{DD}{HH}.png";
/// Truth manifest written next to the PNGs.
pub const TRUTH_FILE: &str = "truth.jsonl";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("{path} line {line}: {message}")]
    TruthParse { path: PathBuf, line: usize, message: String },
}

/// One truth-manifest line. The digest fingerprints the post-noise
/// parameters, so audits can tell two same-month maps apart without
/// comparing floats in text form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub timestamp: Timestamp,
    pub n_troughs: f64,
    pub trough_phase: f64,
    pub amplitude: f64,
    pub noise_draws_digest: String,
}

impl TruthRecord {
    pub fn from_truth(t: &MapTruth) -> Self {
        TruthRecord {
            timestamp: t.timestamp,
            n_troughs: t.n_troughs,
            trough_phase: t.trough_phase,
            amplitude: t.amplitude,
            noise_draws_digest: canonical_json_digest(t).to_hex(),
        }
    }

    pub fn to_truth(&self) -> MapTruth {
        MapTruth {
            timestamp: self.timestamp,
            n_troughs: self.n_troughs,
            trough_phase: self.trough_phase,
            amplitude: self.amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub count: usize,
    pub truth_path: PathBuf,
}

/// Encodes an RGB or grayscale raster as a PNG file.
pub fn write_png(img: &ImageU8, path: &Path) -> Result<(), SynthError> {
    let encode_err = |source| SynthError::Encode { path: path.to_path_buf(), source };
    match img.channels {
        3 => image::RgbImage::from_raw(img.width, img.height, img.data.clone())
            .expect("ImageU8 invariant: data length matches dims")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(encode_err),
        _ => image::GrayImage::from_raw(img.width, img.height, img.data.clone())
            .expect("ImageU8 invariant: data length matches dims")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(encode_err),
    }
}

/// Renders the full calendar to `out_dir`: one PNG per timestamp plus
/// the truth manifest. Deterministic: same spec, same bytes.
pub fn write_archive(
    spec: &SynthSpec,
    out_dir: &Path,
    pattern: &FilePattern,
) -> Result<SynthSummary, SynthError> {
    let calendar = spec.calendar().map_err(|e| SynthError::Spec(e.to_string()))?;
    fs::create_dir_all(out_dir)
        .map_err(|source| SynthError::Io { path: out_dir.to_path_buf(), source })?;
    let truth_path = out_dir.join(TRUTH_FILE);
    let mut truth_lines = Vec::new();
    for &ts in &calendar {
        let map = synth_map(spec, ts);
        write_png(&map.image, &out_dir.join(pattern.render(ts)))?;
        let record = TruthRecord::from_truth(&map.truth);
        serde_json::to_writer(&mut truth_lines, &record)
            .expect("record serialization is infallible");
        truth_lines.push(b'\n');
    }
    let io = |source| SynthError::Io { path: truth_path.clone(), source };
    let mut f = fs::File::create(&truth_path).map_err(io)?;
    f.write_all(&truth_lines).map_err(io)?;
    Ok(SynthSummary { count: calendar.len(), truth_path })
}

/// Reads a truth manifest back into records.
pub fn load_truth(path: &Path) -> Result<Vec<TruthRecord>, SynthError> {
    let text = fs::read_to_string(path)
        .map_err(|source| SynthError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| SynthError::TruthParse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{load_image, scan_archive};
    use synmap_core::synthgen::render_from_truth;

    fn small_spec() -> SynthSpec {
        SynthSpec { n_years: 1, hours: vec![0], ..SynthSpec::default() }
    }

    #[test]
    fn archive_writer_round_trips_through_scan_and_truth() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let pattern = FilePattern::parse(DEFAULT_PATTERN).unwrap();
        // Render just January 1–3 by hand to keep the test fast.
        let stamps: Vec<Timestamp> =
            spec.calendar().unwrap().into_iter().take(3).collect();
        let mut truth_lines = Vec::new();
        for &ts in &stamps {
            let map = synth_map(&spec, ts);
            write_png(&map.image, &dir.path().join(pattern.render(ts))).unwrap();
            let rec = TruthRecord::from_truth(&map.truth);
            truth_lines.push(serde_json::to_string(&rec).unwrap());
        }
        fs::write(dir.path().join(TRUTH_FILE), truth_lines.join("\n")).unwrap();

        let scanned = scan_archive(dir.path(), &pattern).unwrap();
        assert_eq!(scanned.manifest.records.len(), 3);
        assert!(scanned.rejects.is_empty());
        let r0 = &scanned.manifest.records[0];
        assert_eq!(r0.timestamp, stamps[0]);
        assert_eq!((r0.width, r0.height), (512, 512));

        // Truth round-trip: re-render produces the PNG's exact pixels.
        let truth = load_truth(&dir.path().join(TRUTH_FILE)).unwrap();
        assert_eq!(truth.len(), 3);
        let rendered = render_from_truth(&truth[0].to_truth());
        let loaded = load_image(&scanned.manifest.records[0].path).unwrap();
        assert_eq!(loaded.data, rendered.image.data);
        assert!(!truth[0].noise_draws_digest.is_empty());
    }

    #[test]
    fn writing_twice_is_byte_identical() {
        let spec = small_spec();
        let ts = spec.calendar().unwrap()[40];
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        write_png(&synth_map(&spec, ts).image, &a).unwrap();
        write_png(&synth_map(&spec, ts).image, &b).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
}
