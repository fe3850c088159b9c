//! Exact nearest-neighbor retrieval over embeddings and rasters.
//!
//! Every query scores every candidate and sorts — corpora here are tens
//! of thousands of maps at most, and exactness matters more than speed.
//! Ranking is fully deterministic: ties break toward the earlier
//! timestamp, and an optional temporal exclusion window keeps trivial
//! neighbors (the same synoptic situation a few hours away) out of the
//! result list.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::imgproc::PreprocessedMap;
use crate::metrics::{self, MetricError, MetricKind, Orientation, SsimConfig};
use crate::time::Timestamp;

/// A latent vector plus the provenance needed to rank and audit it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub source_id: String,
    pub timestamp: Timestamp,
    pub vector: Vec<f32>,
    /// Hash of the model parameters that produced the vector; mixing
    /// embeddings from different models is an error.
    pub model_hash: Digest,
}

/// Inclusive window around a timestamp: |t - center| <= half_width_hours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub center: Timestamp,
    pub half_width_hours: i64,
}

impl ExclusionWindow {
    pub fn contains(&self, t: Timestamp) -> bool {
        let d = t.hours_since(self.center);
        d.abs() <= self.half_width_hours
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hit {
    pub source_id: String,
    pub timestamp: Timestamp,
    pub score: f64,
    /// 1-based position in the result list.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
    /// True when exclusion or corpus size left fewer than k candidates.
    pub fewer_than_k: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IndexError {
    Empty,
    DimMismatch { expected: usize, got: usize },
    MixedModelHash,
    DuplicateTimestamp { timestamp: Timestamp },
    /// k must be at least 1.
    BadK,
    /// The metric does not apply to this kind of query.
    UnsupportedMetric { metric: MetricKind, context: &'static str },
    Metric(MetricError),
    ShapeMismatch { detail: String },
    /// Candidate rasters were preprocessed with a different config.
    ConfigMismatch { expected: Digest, got: Digest },
    NonFinite { source_id: String },
}

impl fmt::Display for IndexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexError::Empty => write!(f, "index must contain at least one embedding"),
            IndexError::DimMismatch { expected, got } => {
                write!(f, "embedding dimension {got}, expected {expected}")
            }
            IndexError::MixedModelHash => {
                write!(f, "embeddings come from different model parameter hashes")
            }
            IndexError::DuplicateTimestamp { timestamp } => {
                write!(f, "duplicate timestamp {timestamp} in index")
            }
            IndexError::BadK => write!(f, "k must be at least 1"),
            IndexError::UnsupportedMetric { metric, context } => {
                write!(f, "metric {metric} is not valid for {context}")
            }
            IndexError::Metric(e) => write!(f, "metric failure: {e}"),
            IndexError::ShapeMismatch { detail } => write!(f, "shape mismatch: {detail}"),
            IndexError::ConfigMismatch { expected, got } => write!(
                f,
                "preprocess config mismatch: query {expected}, candidate {got}"
            ),
            IndexError::NonFinite { source_id } => {
                write!(f, "non-finite values in embedding {source_id}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for IndexError {}

impl From<MetricError> for IndexError {
    fn from(e: MetricError) -> Self {
        IndexError::Metric(e)
    }
}

/// In-memory index over embeddings from a single model. Entries are
/// held sorted by timestamp so scans and serialization are canonical.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    model_hash: Digest,
    entries: Vec<Embedding>,
}

impl EmbeddingIndex {
    pub fn build(mut embeddings: Vec<Embedding>) -> Result<Self, IndexError> {
        let first = embeddings.first().ok_or(IndexError::Empty)?;
        let dim = first.vector.len();
        if dim == 0 {
            return Err(IndexError::DimMismatch { expected: 1, got: 0 });
        }
        let model_hash = first.model_hash;
        for e in &embeddings {
            if e.vector.len() != dim {
                return Err(IndexError::DimMismatch { expected: dim, got: e.vector.len() });
            }
            if e.model_hash != model_hash {
                return Err(IndexError::MixedModelHash);
            }
            if e.vector.iter().any(|v| !v.is_finite()) {
                return Err(IndexError::NonFinite { source_id: e.source_id.clone() });
            }
        }
        embeddings.sort_by_key(|e| e.timestamp);
        for pair in embeddings.windows(2) {
            if pair[0].timestamp == pair[1].timestamp {
                return Err(IndexError::DuplicateTimestamp { timestamp: pair[0].timestamp });
            }
        }
        Ok(EmbeddingIndex { dim, model_hash, entries: embeddings })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_hash(&self) -> Digest {
        self.model_hash
    }

    /// Entries in timestamp order.
    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    /// Scores every non-excluded entry and returns the top k. Only the
    /// latent-space metrics apply here (cosine, euclidean).
    pub fn query_latent(
        &self,
        query: &[f32],
        metric: MetricKind,
        k: usize,
        exclude: Option<ExclusionWindow>,
    ) -> Result<QueryResult, IndexError> {
        if !matches!(metric, MetricKind::Cosine | MetricKind::Euclidean) {
            return Err(IndexError::UnsupportedMetric { metric, context: "latent-space queries" });
        }
        if query.len() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, got: query.len() });
        }
        let scored = score_candidates(self.entries.iter(), exclude, |e| match metric {
            MetricKind::Cosine => metrics::cosine(query, &e.vector),
            _ => metrics::euclidean(query, &e.vector),
        })?;
        rank(scored, metric, k)
    }
}

/// A raster candidate for pixel-space retrieval.
#[derive(Clone, Debug)]
pub struct PixelEntry<'a> {
    pub map: &'a PreprocessedMap,
    pub timestamp: Timestamp,
}

/// Pixel-space retrieval over preprocessed rasters (rmse, ssim). All
/// candidates must share the query's dimensions and preprocess config.
pub fn query_pixel(
    query: &PreprocessedMap,
    entries: &[PixelEntry<'_>],
    metric: MetricKind,
    k: usize,
    exclude: Option<ExclusionWindow>,
    ssim_cfg: &SsimConfig,
) -> Result<QueryResult, IndexError> {
    if !matches!(metric, MetricKind::Rmse | MetricKind::Ssim) {
        return Err(IndexError::UnsupportedMetric { metric, context: "pixel-space queries" });
    }
    if entries.is_empty() {
        return Err(IndexError::Empty);
    }
    for e in entries {
        if (e.map.width, e.map.height, e.map.channels)
            != (query.width, query.height, query.channels)
        {
            return Err(IndexError::ShapeMismatch {
                detail: alloc::format!(
                    "candidate {} is {}x{}x{}, query is {}x{}x{}",
                    e.map.source_id,
                    e.map.width,
                    e.map.height,
                    e.map.channels,
                    query.width,
                    query.height,
                    query.channels
                ),
            });
        }
        if e.map.config_hash != query.config_hash {
            return Err(IndexError::ConfigMismatch {
                expected: query.config_hash,
                got: e.map.config_hash,
            });
        }
    }
    let mut seen = entries.iter().map(|e| e.timestamp).collect::<Vec<_>>();
    seen.sort();
    for pair in seen.windows(2) {
        if pair[0] == pair[1] {
            return Err(IndexError::DuplicateTimestamp { timestamp: pair[0] });
        }
    }
    let scored = score_candidates(entries.iter(), exclude, |e| match metric {
        MetricKind::Rmse => metrics::rmse(&query.data, &e.map.data),
        _ => metrics::ssim(
            &e.map.data,
            &query.data,
            query.width,
            query.height,
            query.channels,
            ssim_cfg,
        ),
    })
    .map(|v| {
        v.into_iter()
            .map(|(s, t, e)| (s, t, (e.map.source_id.as_str(), e.timestamp)))
            .collect::<Vec<_>>()
    })?;
    rank(scored, metric, k)
}

trait Candidate {
    fn timestamp(&self) -> Timestamp;
    fn ident(&self) -> (&str, Timestamp);
}

impl<C: Candidate> Candidate for &C {
    fn timestamp(&self) -> Timestamp {
        (*self).timestamp()
    }
    fn ident(&self) -> (&str, Timestamp) {
        (*self).ident()
    }
}

impl Candidate for Embedding {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn ident(&self) -> (&str, Timestamp) {
        (&self.source_id, self.timestamp)
    }
}

impl<'a> Candidate for PixelEntry<'a> {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn ident(&self) -> (&str, Timestamp) {
        (&self.map.source_id, self.timestamp)
    }
}

impl Candidate for (&str, Timestamp) {
    fn timestamp(&self) -> Timestamp {
        self.1
    }
    fn ident(&self) -> (&str, Timestamp) {
        (self.0, self.1)
    }
}

fn score_candidates<'c, C: Candidate + 'c>(
    entries: impl Iterator<Item = &'c C>,
    exclude: Option<ExclusionWindow>,
    mut score: impl FnMut(&'c C) -> Result<f64, MetricError>,
) -> Result<Vec<(f64, Timestamp, &'c C)>, IndexError> {
    let mut out = Vec::new();
    for e in entries {
        if exclude.is_some_and(|w| w.contains(e.timestamp())) {
            continue;
        }
        out.push((score(e)?, e.timestamp(), e));
    }
    Ok(out)
}

fn rank<C: Candidate>(
    mut scored: Vec<(f64, Timestamp, C)>,
    metric: MetricKind,
    k: usize,
) -> Result<QueryResult, IndexError> {
    if k == 0 {
        return Err(IndexError::BadK);
    }
    scored.sort_by(|a, b| {
        let ord = match metric.orientation() {
            Orientation::HigherIsBetter => b.0.total_cmp(&a.0),
            Orientation::LowerIsBetter => a.0.total_cmp(&b.0),
        };
        ord.then_with(|| a.1.cmp(&b.1))
    });
    let fewer_than_k = scored.len() < k;
    scored.truncate(k);
    let hits = scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, _, c))| {
            let (id, ts) = c.ident();
            Hit { source_id: String::from(id), timestamp: ts, score, rank: i + 1 }
        })
        .collect();
    Ok(QueryResult { hits, fewer_than_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(h: i64) -> Timestamp {
        Timestamp::from_epoch_hours(h)
    }

    fn emb(id: &str, hour: i64, v: &[f32]) -> Embedding {
        Embedding {
            source_id: id.to_string(),
            timestamp: ts(hour),
            vector: v.to_vec(),
            model_hash: Digest([7; 32]),
        }
    }

    fn random_index(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingIndex {
        let entries: Vec<Embedding> = (0..n)
            .map(|i| {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
                emb(&format!("m{i}"), i as i64 * 6, &v)
            })
            .collect();
        EmbeddingIndex::build(entries).unwrap()
    }

    #[test]
    fn build_rejects_bad_inputs() {
        assert_eq!(EmbeddingIndex::build(vec![]).unwrap_err(), IndexError::Empty);
        let e = vec![emb("a", 0, &[1.0, 2.0]), emb("b", 6, &[1.0])];
        assert_eq!(
            EmbeddingIndex::build(e).unwrap_err(),
            IndexError::DimMismatch { expected: 2, got: 1 }
        );
        let e = vec![emb("a", 0, &[1.0]), emb("b", 0, &[2.0])];
        assert_eq!(
            EmbeddingIndex::build(e).unwrap_err(),
            IndexError::DuplicateTimestamp { timestamp: ts(0) }
        );
        let mut mixed = vec![emb("a", 0, &[1.0]), emb("b", 6, &[2.0])];
        mixed[1].model_hash = Digest([9; 32]);
        assert_eq!(EmbeddingIndex::build(mixed).unwrap_err(), IndexError::MixedModelHash);
        let bad = vec![emb("a", 0, &[f32::NAN])];
        assert!(matches!(
            EmbeddingIndex::build(bad).unwrap_err(),
            IndexError::NonFinite { .. }
        ));
    }

    #[test]
    fn entries_are_sorted_by_timestamp() {
        let idx = EmbeddingIndex::build(vec![
            emb("late", 48, &[1.0]),
            emb("early", 0, &[2.0]),
            emb("mid", 24, &[3.0]),
        ])
        .unwrap();
        let order: Vec<&str> = idx.entries().iter().map(|e| e.source_id.as_str()).collect();
        assert_eq!(order, vec!["early", "mid", "late"]);
    }

    #[test]
    fn query_finds_itself_with_cosine_score_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let idx = random_index(&mut rng, 50, 8);
        let target = idx.entries()[17].clone();
        let res = idx.query_latent(&target.vector, MetricKind::Cosine, 1, None).unwrap();
        assert_eq!(res.hits[0].source_id, target.source_id);
        assert_eq!(res.hits[0].score, 1.0);
        assert_eq!(res.hits[0].rank, 1);
    }

    #[test]
    fn ranking_matches_full_sort_oracle_on_random_indexes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let n = rng.gen_range(2..30);
            let dim = rng.gen_range(1..6);
            let idx = random_index(&mut rng, n, dim);
            let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
            let k = rng.gen_range(1..=n + 2);
            for metric in [MetricKind::Cosine, MetricKind::Euclidean] {
                let q = if metric == MetricKind::Cosine && q.iter().all(|&x| x == 0.0) {
                    vec![1.0; dim]
                } else {
                    q.clone()
                };
                let res = idx.query_latent(&q, metric, k, None).unwrap();
                // Oracle: score everything, full sort, truncate.
                let mut oracle: Vec<(f64, Timestamp, String)> = idx
                    .entries()
                    .iter()
                    .map(|e| {
                        let s = match metric {
                            MetricKind::Cosine => metrics::cosine(&q, &e.vector).unwrap(),
                            _ => metrics::euclidean(&q, &e.vector).unwrap(),
                        };
                        (s, e.timestamp, e.source_id.clone())
                    })
                    .collect();
                oracle.sort_by(|a, b| {
                    match metric.orientation() {
                        Orientation::HigherIsBetter => b.0.total_cmp(&a.0),
                        Orientation::LowerIsBetter => a.0.total_cmp(&b.0),
                    }
                    .then_with(|| a.1.cmp(&b.1))
                });
                oracle.truncate(k);
                assert_eq!(res.hits.len(), oracle.len(), "trial {trial}");
                for (hit, (s, t, id)) in res.hits.iter().zip(&oracle) {
                    assert_eq!(hit.score, *s, "trial {trial}");
                    assert_eq!(hit.timestamp, *t);
                    assert_eq!(&hit.source_id, id);
                }
                assert_eq!(res.fewer_than_k, k > n);
            }
        }
    }

    #[test]
    fn top_k_is_a_prefix_of_top_k_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let idx = random_index(&mut rng, 25, 4);
        let q: Vec<f32> = (0..4).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
        for k in 1..24 {
            let a = idx.query_latent(&q, MetricKind::Euclidean, k, None).unwrap();
            let b = idx.query_latent(&q, MetricKind::Euclidean, k + 1, None).unwrap();
            assert_eq!(a.hits[..], b.hits[..k]);
        }
    }

    #[test]
    fn exclusion_window_is_inclusive_on_both_edges() {
        let idx = EmbeddingIndex::build(
            (0..10).map(|i| emb(&format!("m{i}"), i * 24, &[i as f32 + 1.0])).collect(),
        )
        .unwrap();
        let w = ExclusionWindow { center: ts(4 * 24), half_width_hours: 48 };
        let res = idx.query_latent(&[0.0f32], MetricKind::Euclidean, 10, Some(w)).unwrap();
        // Days 2..=6 (hours 48..=144) fall inside the window.
        let kept: Vec<i64> = res.hits.iter().map(|h| h.timestamp.epoch_hours()).collect();
        for h in [48, 72, 96, 120, 144] {
            assert!(!kept.contains(&h), "hour {h} should be excluded");
        }
        assert_eq!(res.hits.len(), 5);
        assert!(res.fewer_than_k);
        // Zero half-width excludes exactly the center.
        let w0 = ExclusionWindow { center: ts(4 * 24), half_width_hours: 0 };
        let res0 = idx.query_latent(&[0.0f32], MetricKind::Euclidean, 10, Some(w0)).unwrap();
        assert_eq!(res0.hits.len(), 9);
        assert!(res0.hits.iter().all(|h| h.timestamp.epoch_hours() != 96));
    }

    #[test]
    fn ties_break_toward_earlier_timestamp() {
        let idx = EmbeddingIndex::build(vec![
            emb("later", 100, &[1.0, 0.0]),
            emb("earlier", 10, &[1.0, 0.0]),
            emb("far", 50, &[0.0, 1.0]),
        ])
        .unwrap();
        let res = idx.query_latent(&[1.0, 0.0], MetricKind::Euclidean, 3, None).unwrap();
        assert_eq!(res.hits[0].source_id, "earlier");
        assert_eq!(res.hits[1].source_id, "later");
        assert_eq!(res.hits[0].score, res.hits[1].score);
        assert_eq!(res.hits[2].source_id, "far");
    }

    #[test]
    fn query_validation_errors() {
        let idx = EmbeddingIndex::build(vec![emb("a", 0, &[1.0, 0.0])]).unwrap();
        assert_eq!(
            idx.query_latent(&[1.0], MetricKind::Cosine, 1, None).unwrap_err(),
            IndexError::DimMismatch { expected: 2, got: 1 }
        );
        assert_eq!(
            idx.query_latent(&[1.0, 0.0], MetricKind::Cosine, 0, None).unwrap_err(),
            IndexError::BadK
        );
        assert_eq!(
            idx.query_latent(&[1.0, 0.0], MetricKind::Rmse, 1, None).unwrap_err(),
            IndexError::UnsupportedMetric { metric: MetricKind::Rmse, context: "latent-space queries" }
        );
    }

    #[test]
    fn ranks_are_one_based_and_contiguous() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let idx = random_index(&mut rng, 12, 3);
        let q = [0.5f32, -0.5, 0.25];
        let res = idx.query_latent(&q, MetricKind::Cosine, 7, None).unwrap();
        for (i, hit) in res.hits.iter().enumerate() {
            assert_eq!(hit.rank, i + 1);
        }
    }

    fn raster(id: &str, hour: i64, data: Vec<f32>) -> (PreprocessedMap, Timestamp) {
        (
            PreprocessedMap {
                width: 12,
                height: 12,
                channels: 1,
                data,
                source_id: id.to_string(),
                config_hash: Digest([3; 32]),
            },
            ts(hour),
        )
    }

    #[test]
    fn pixel_query_rmse_prefers_identical_raster() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let maps: Vec<(PreprocessedMap, Timestamp)> = (0..6)
            .map(|i| {
                let data: Vec<f32> = (0..144).map(|_| rng.gen_range(0.0..1.0)).collect();
                raster(&format!("r{i}"), i * 24, data)
            })
            .collect();
        let entries: Vec<PixelEntry> =
            maps.iter().map(|(m, t)| PixelEntry { map: m, timestamp: *t }).collect();
        let query = maps[3].0.clone();
        for metric in [MetricKind::Rmse, MetricKind::Ssim] {
            let res =
                query_pixel(&query, &entries, metric, 2, None, &SsimConfig::default()).unwrap();
            assert_eq!(res.hits[0].source_id, "r3", "{metric}");
            assert_eq!(res.hits[0].score, if metric == MetricKind::Rmse { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn pixel_query_rejects_mismatched_candidates() {
        let (a, ta) = raster("a", 0, vec![0.0; 144]);
        let (mut b, tb) = raster("b", 24, vec![0.0; 144]);
        b.config_hash = Digest([4; 32]);
        let entries = [PixelEntry { map: &b, timestamp: tb }];
        assert!(matches!(
            query_pixel(&a, &entries, MetricKind::Rmse, 1, None, &SsimConfig::default())
                .unwrap_err(),
            IndexError::ConfigMismatch { .. }
        ));
        let entries = [PixelEntry { map: &a, timestamp: ta }];
        assert!(matches!(
            query_pixel(&a, &entries, MetricKind::Cosine, 1, None, &SsimConfig::default())
                .unwrap_err(),
            IndexError::UnsupportedMetric { .. }
        ));
    }

    #[test]
    fn pixel_query_applies_exclusion() {
        let maps: Vec<(PreprocessedMap, Timestamp)> =
            (0..5).map(|i| raster(&format!("r{i}"), i * 24, vec![i as f32 / 8.0; 144])).collect();
        let entries: Vec<PixelEntry> =
            maps.iter().map(|(m, t)| PixelEntry { map: m, timestamp: *t }).collect();
        let w = ExclusionWindow { center: ts(2 * 24), half_width_hours: 24 };
        let res =
            query_pixel(&maps[2].0, &entries, MetricKind::Rmse, 5, Some(w), &SsimConfig::default())
                .unwrap();
        let ids: Vec<&str> = res.hits.iter().map(|h| h.source_id.as_str()).collect();
        assert_eq!(ids, vec!["r0", "r4"]);
        assert!(res.fewer_than_k);
    }
}
