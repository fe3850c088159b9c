//! Evaluation harness: metric-vs-metric report tables, month-based
//! seasonal-consistency scoring of retrieved analogs, and contact-sheet
//! montages with the query anchor leftmost.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use synmap_core::imgproc::{ImageU8, PreprocessedMap};
use synmap_core::index::{EmbeddingIndex, ExclusionWindow, Hit, PixelEntry, QueryResult};
use synmap_core::metrics::{MetricKind, SsimConfig};
use synmap_core::time::Timestamp;
use thiserror::Error;

use crate::font;
use crate::formats::CacheEntry;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot score an empty result set")]
    EmptyResults,
    #[error("metric {metric:?} needs {need}")]
    MissingSource { metric: MetricKind, need: &'static str },
    #[error(transparent)]
    Query(#[from] synmap_core::index::IndexError),
    #[error("no cached raster for result id {id}")]
    MissingImage { id: String },
    #[error("montage panels disagree in shape: {detail}")]
    MixedShape { detail: String },
}

// ---------------------------------------------------------------------------
// Seasonal consistency
// ---------------------------------------------------------------------------

/// Distance between calendar months on the 12-month circle, in [0, 6].
pub fn circular_month_distance(a: u32, b: u32) -> u32 {
    let d = a.abs_diff(b);
    d.min(12 - d)
}

/// Month profile of one result set relative to its query month.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeasonalScore {
    pub query_month: u32,
    pub retrieved_months: Vec<u32>,
    pub mean_circular_distance: f64,
}

/// Mean circular month distance between the query and every retrieved
/// entry. Order-invariant; errors on empty results.
pub fn seasonal_consistency(
    query_ts: Timestamp,
    result: &QueryResult,
) -> Result<SeasonalScore, HarnessError> {
    if result.hits.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let qm = query_ts.month();
    let months: Vec<u32> = result.hits.iter().map(|h| h.timestamp.month()).collect();
    let total: u32 = months.iter().map(|&m| circular_month_distance(qm, m)).sum();
    Ok(SeasonalScore {
        query_month: qm,
        retrieved_months: months.clone(),
        mean_circular_distance: f64::from(total) / months.len() as f64,
    })
}

// ---------------------------------------------------------------------------
// Metric comparison reports
// ---------------------------------------------------------------------------

/// Everything one query can draw on. Latent metrics need the embedding
/// pair; pixel metrics need the raster pair. Either side may be absent
/// when only the other family of metrics is requested.
pub struct QuerySources<'a> {
    pub query_id: &'a str,
    pub query_timestamp: Timestamp,
    pub latent: Option<(&'a [f32], &'a EmbeddingIndex)>,
    pub pixel: Option<(&'a PreprocessedMap, &'a [CacheEntry])>,
    pub k: usize,
    pub exclude: Option<ExclusionWindow>,
    pub ssim: SsimConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: MetricKind,
    pub result: QueryResult,
}

/// One query's ranked results under every requested metric. The rows
/// hold the exact `QueryResult`s — a view, not a recomputation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub query_id: String,
    pub query_timestamp: Timestamp,
    pub k: usize,
    pub rows: Vec<MetricRow>,
}

/// Machine-readable report line: one retrieved map under one metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub query_id: String,
    pub metric: MetricKind,
    pub rank: usize,
    pub id: String,
    pub timestamp: Timestamp,
    /// Full precision; tables round to 2 decimals for display only.
    pub score: f64,
}

pub fn compare_metrics(
    src: &QuerySources<'_>,
    metrics: &[MetricKind],
) -> Result<MetricReport, HarnessError> {
    let mut rows = Vec::with_capacity(metrics.len());
    for &metric in metrics {
        let result = match metric {
            MetricKind::Cosine | MetricKind::Euclidean => {
                let (vec, index) = src.latent.ok_or(HarnessError::MissingSource {
                    metric,
                    need: "a query embedding and an index",
                })?;
                index.query_latent(vec, metric, src.k, src.exclude)?
            }
            MetricKind::Rmse | MetricKind::Ssim => {
                let (map, cache) = src.pixel.ok_or(HarnessError::MissingSource {
                    metric,
                    need: "a preprocessed query raster and a raster cache",
                })?;
                let entries: Vec<PixelEntry<'_>> = cache
                    .iter()
                    .map(|e| PixelEntry { map: &e.map, timestamp: e.timestamp })
                    .collect();
                synmap_core::index::query_pixel(
                    map,
                    &entries,
                    metric,
                    src.k,
                    src.exclude,
                    &src.ssim,
                )?
            }
        };
        rows.push(MetricRow { metric, result });
    }
    Ok(MetricReport {
        query_id: src.query_id.to_string(),
        query_timestamp: src.query_timestamp,
        k: src.k,
        rows,
    })
}

impl MetricReport {
    pub fn flat_rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for row in &self.rows {
            for hit in &row.result.hits {
                out.push(ReportRow {
                    query_id: self.query_id.clone(),
                    metric: row.metric,
                    rank: hit.rank,
                    id: hit.source_id.clone(),
                    timestamp: hit.timestamp,
                    score: hit.score,
                });
            }
        }
        out
    }

    /// Aligned text table: metric rows x rank columns, scores at two
    /// decimals, then the retrieved timestamps per metric.
    pub fn render_table(&self) -> String {
        let mut cells: BTreeMap<(usize, usize), String> = BTreeMap::new();
        for (mi, row) in self.rows.iter().enumerate() {
            for hit in &row.result.hits {
                cells.insert((mi, hit.rank), format!("{:.2}", hit.score));
            }
        }
        let score_w = cells
            .values()
            .map(|s| s.len())
            .chain(["#1".len()])
            .max()
            .unwrap_or(2)
            .max(5);
        let name_w = self
            .rows
            .iter()
            .map(|r| r.metric.name().len())
            .chain(["metric".len()])
            .max()
            .unwrap_or(6);
        let mut out = String::new();
        let _ = writeln!(out, "query {} ({})", self.query_id, self.query_timestamp);
        let _ = write!(out, "{:<name_w$}", "metric");
        for rank in 1..=self.k {
            let _ = write!(out, "  {:>score_w$}", format!("#{rank}"));
        }
        out.push('\n');
        for (mi, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{:<name_w$}", row.metric.name());
            for rank in 1..=self.k {
                match cells.get(&(mi, rank)) {
                    Some(s) => {
                        let _ = write!(out, "  {s:>score_w$}");
                    }
                    None => {
                        let _ = write!(out, "  {:>score_w$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "retrieved:");
        for row in &self.rows {
            let stamps: Vec<String> =
                row.result.hits.iter().map(|h| h.timestamp.to_string()).collect();
            let _ = writeln!(out, "{:<name_w$}  {}", row.metric.name(), stamps.join("  "));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Montages
// ---------------------------------------------------------------------------

/// Display colors for mask panels.
const PANEL_RED: [u8; 3] = [200, 30, 30];
const PANEL_BLUE: [u8; 3] = [40, 60, 190];
const CAPTION_SCALE: u32 = 1;
const GUTTER: u32 = 4;
/// Panels are upscaled until their smaller side reaches this size.
const MIN_PANEL_PX: u32 = 128;

/// One montage panel: a raster and the caption under it.
pub struct Panel<'a> {
    pub caption: String,
    pub map: &'a PreprocessedMap,
}

/// Renders a preprocessed raster to RGB at 1:1 scale. Two-channel
/// rasters show red over blue on white; single-channel rasters show ink
/// density as darkness.
pub fn render_map_rgb(map: &PreprocessedMap) -> ImageU8 {
    let mut img = ImageU8::filled(map.width, map.height, 3, 255)
        .expect("raster dims are valid image dims");
    let hw = map.width as usize * map.height as usize;
    for i in 0..hw {
        let (x, y) = ((i % map.width as usize) as u32, (i / map.width as usize) as u32);
        if map.channels == 2 {
            let red = map.data[i] >= 0.5;
            let blue = map.data[hw + i] >= 0.5;
            if red {
                img.set_pixel(x, y, &PANEL_RED);
            } else if blue {
                img.set_pixel(x, y, &PANEL_BLUE);
            }
        } else {
            let v = map.data[i].clamp(0.0, 1.0);
            let g = 255 - (v * 255.0 + 0.5) as u8;
            img.set_pixel(x, y, &[g, g, g]);
        }
    }
    img
}

fn upscale_nearest(img: &ImageU8, s: u32) -> ImageU8 {
    if s <= 1 {
        return img.clone();
    }
    let mut out = ImageU8::filled(img.width * s, img.height * s, img.channels, 0)
        .expect("scaled dims are valid");
    for y in 0..out.height {
        for x in 0..out.width {
            let px = img.pixel(x / s, y / s).to_vec();
            out.set_pixel(x, y, &px);
        }
    }
    out
}

/// Assembles the contact sheet: anchor leftmost, results in rank order,
/// captions under each panel. All rasters must share one shape.
pub fn montage_image(anchor: &Panel<'_>, results: &[Panel<'_>]) -> Result<ImageU8, HarnessError> {
    for p in results {
        if (p.map.width, p.map.height, p.map.channels)
            != (anchor.map.width, anchor.map.height, anchor.map.channels)
        {
            return Err(HarnessError::MixedShape {
                detail: format!(
                    "anchor {}x{}x{} vs {}x{}x{}",
                    anchor.map.width,
                    anchor.map.height,
                    anchor.map.channels,
                    p.map.width,
                    p.map.height,
                    p.map.channels
                ),
            });
        }
    }
    let scale = MIN_PANEL_PX.div_ceil(anchor.map.width.min(anchor.map.height)).max(1);
    let panel_w = anchor.map.width * scale;
    let panel_h = anchor.map.height * scale;
    let caption_h = font::CHAR_HEIGHT * CAPTION_SCALE + 2 * GUTTER;
    let n = 1 + results.len() as u32;
    let total_w = GUTTER + n * (panel_w + GUTTER);
    let total_h = GUTTER + panel_h + caption_h;
    let mut sheet = ImageU8::filled(total_w, total_h, 3, 255).expect("montage dims are valid");
    for (i, panel) in std::iter::once(anchor).chain(results.iter()).enumerate() {
        let x0 = GUTTER + i as u32 * (panel_w + GUTTER);
        let tile = upscale_nearest(&render_map_rgb(panel.map), scale);
        for y in 0..panel_h {
            for x in 0..panel_w {
                let px = tile.pixel(x, y).to_vec();
                sheet.set_pixel(x0 + x, GUTTER + y, &px);
            }
        }
        font::draw_text(
            &mut sheet,
            x0,
            GUTTER + panel_h + GUTTER,
            CAPTION_SCALE,
            &panel.caption,
            (0, 0, 0),
        );
    }
    Ok(sheet)
}

/// Pairs hits with their cached rasters, captioned `timestamp score`
/// at the table precision. A hit with no cached raster is an error.
pub fn panels_for_hits<'a>(
    hits: &[Hit],
    cache: &'a [CacheEntry],
) -> Result<Vec<Panel<'a>>, HarnessError> {
    hits.iter()
        .map(|h| {
            let entry = cache
                .iter()
                .find(|e| e.map.source_id == h.source_id)
                .ok_or_else(|| HarnessError::MissingImage { id: h.source_id.clone() })?;
            Ok(Panel {
                caption: format!("{} {:.2}", h.timestamp, h.score),
                map: &entry.map,
            })
        })
        .collect()
}

/// Caption for the anchor panel; names the no-candidate case explicitly.
pub fn anchor_caption(ts: Timestamp, any_results: bool) -> String {
    if any_results {
        format!("anchor {ts}")
    } else {
        format!("anchor {ts} no candidates")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synmap_core::digest::Digest;
    use synmap_core::index::Embedding;

    fn ts(y: i32, m: u32, d: u32) -> Timestamp {
        Timestamp::from_ymdh(y, m, d, 0).unwrap()
    }

    fn hit(rank: usize, m: u32, score: f64) -> Hit {
        Hit {
            source_id: format!("r{rank}"),
            timestamp: ts(2021, m, 1),
            score,
            rank,
        }
    }

    #[test]
    fn circular_distance_wraps_and_bounds() {
        assert_eq!(circular_month_distance(12, 12), 0);
        assert_eq!(circular_month_distance(12, 9), 3);
        assert_eq!(circular_month_distance(12, 6), 6);
        assert_eq!(circular_month_distance(1, 12), 1);
        assert_eq!(circular_month_distance(2, 11), 3);
        for a in 1..=12 {
            for b in 1..=12 {
                let d = circular_month_distance(a, b);
                assert!(d <= 6);
                assert_eq!(d, circular_month_distance(b, a));
            }
        }
    }

    #[test]
    fn seasonal_score_matches_hand_computation() {
        // December query, retrieved September and June: {3, 6} -> 4.5.
        let result = QueryResult {
            hits: vec![hit(1, 9, 0.9), hit(2, 6, 0.8)],
            fewer_than_k: false,
        };
        let s = seasonal_consistency(ts(2022, 12, 19), &result).unwrap();
        assert_eq!(s.query_month, 12);
        assert_eq!(s.retrieved_months, vec![9, 6]);
        assert_eq!(s.mean_circular_distance, 4.5);
        // All-December retrievals: 0.
        let same = QueryResult { hits: vec![hit(1, 12, 1.0)], fewer_than_k: false };
        assert_eq!(
            seasonal_consistency(ts(2022, 12, 1), &same).unwrap().mean_circular_distance,
            0.0
        );
        // Order invariance.
        let swapped = QueryResult {
            hits: vec![hit(1, 6, 0.8), hit(2, 9, 0.9)],
            fewer_than_k: false,
        };
        assert_eq!(
            seasonal_consistency(ts(2022, 12, 19), &swapped).unwrap().mean_circular_distance,
            4.5
        );
        let empty = QueryResult { hits: vec![], fewer_than_k: true };
        assert!(matches!(
            seasonal_consistency(ts(2022, 12, 19), &empty),
            Err(HarnessError::EmptyResults)
        ));
    }

    fn toy_cache(n: usize) -> Vec<CacheEntry> {
        (0..n)
            .map(|i| {
                let value = i as f32 / n as f32;
                CacheEntry {
                    map: PreprocessedMap {
                        width: 4,
                        height: 4,
                        channels: 2,
                        data: vec![value; 32],
                        source_id: format!("m{i}"),
                        config_hash: Digest::of_bytes(b"cfg"),
                    },
                    timestamp: ts(2021, 1, 1).add_hours(24 * i as i64),
                }
            })
            .collect()
    }

    fn toy_index(cache: &[CacheEntry]) -> EmbeddingIndex {
        let hash = Digest::of_bytes(b"model");
        EmbeddingIndex::build(
            cache
                .iter()
                .enumerate()
                .map(|(i, e)| Embedding {
                    source_id: e.map.source_id.clone(),
                    timestamp: e.timestamp,
                    vector: vec![1.0, i as f32],
                    model_hash: hash,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn report_scores_equal_fresh_queries_bitwise() {
        let cache = toy_cache(6);
        let index = toy_index(&cache);
        let query_vec = vec![1.0f32, 2.0];
        let query_map = &cache[2].map;
        let metrics =
            [MetricKind::Rmse, MetricKind::Ssim, MetricKind::Cosine, MetricKind::Euclidean];
        let src = QuerySources {
            query_id: "m2",
            query_timestamp: cache[2].timestamp,
            latent: Some((&query_vec, &index)),
            pixel: Some((query_map, &cache)),
            k: 3,
            exclude: None,
            ssim: SsimConfig { window: 3, ..SsimConfig::default() },
        };
        let report = compare_metrics(&src, &metrics).unwrap();
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert!(row.result.hits.len() <= 3);
            let fresh = match row.metric {
                MetricKind::Cosine | MetricKind::Euclidean => {
                    index.query_latent(&query_vec, row.metric, 3, None).unwrap()
                }
                _ => {
                    let entries: Vec<PixelEntry<'_>> = cache
                        .iter()
                        .map(|e| PixelEntry { map: &e.map, timestamp: e.timestamp })
                        .collect();
                    synmap_core::index::query_pixel(
                        query_map,
                        &entries,
                        row.metric,
                        3,
                        None,
                        &src.ssim,
                    )
                    .unwrap()
                }
            };
            assert_eq!(row.result, fresh, "{:?} drifted from a fresh query", row.metric);
        }
        // Flat rows cover every hit with full-precision scores.
        let flat = report.flat_rows();
        assert_eq!(flat.len(), report.rows.iter().map(|r| r.result.hits.len()).sum::<usize>());
        assert!(flat.iter().all(|r| r.query_id == "m2"));
    }

    #[test]
    fn missing_sources_are_named_not_guessed() {
        let cache = toy_cache(3);
        let src = QuerySources {
            query_id: "q",
            query_timestamp: ts(2021, 1, 1),
            latent: None,
            pixel: Some((&cache[0].map, &cache)),
            k: 2,
            exclude: None,
            ssim: SsimConfig::default(),
        };
        assert!(matches!(
            compare_metrics(&src, &[MetricKind::Cosine]),
            Err(HarnessError::MissingSource { metric: MetricKind::Cosine, .. })
        ));
    }

    #[test]
    fn table_renders_aligned_two_decimal_cells() {
        let cache = toy_cache(6);
        let index = toy_index(&cache);
        let query_vec = vec![1.0f32, 0.0];
        let src = QuerySources {
            query_id: "m0",
            query_timestamp: cache[0].timestamp,
            latent: Some((&query_vec, &index)),
            pixel: None,
            k: 5,
            exclude: None,
            ssim: SsimConfig::default(),
        };
        let report = compare_metrics(&src, &[MetricKind::Cosine]).unwrap();
        let table = report.render_table();
        assert!(table.contains("#1"), "{table}");
        assert!(table.contains("#5"), "{table}");
        assert!(table.contains("cosine"), "{table}");
        assert!(table.contains("1.00"), "self-hit renders as 1.00:\n{table}");
        // All table lines of the score block share one width.
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[1].len(), lines[2].len(), "{table}");
    }

    #[test]
    fn k_one_rows_have_length_one() {
        let cache = toy_cache(4);
        let index = toy_index(&cache);
        let query_vec = vec![1.0f32, 1.0];
        let src = QuerySources {
            query_id: "q",
            query_timestamp: ts(2021, 6, 1),
            latent: Some((&query_vec, &index)),
            pixel: Some((&cache[1].map, &cache)),
            k: 1,
            exclude: None,
            ssim: SsimConfig { window: 3, ..SsimConfig::default() },
        };
        let report =
            compare_metrics(&src, &[MetricKind::Cosine, MetricKind::Rmse]).unwrap();
        assert!(report.rows.iter().all(|r| r.result.hits.len() == 1));
    }

    #[test]
    fn montage_layout_and_determinism() {
        let cache = toy_cache(3);
        let anchor = Panel {
            caption: anchor_caption(cache[0].timestamp, true),
            map: &cache[0].map,
        };
        let hits = vec![
            Hit {
                source_id: "m1".into(),
                timestamp: cache[1].timestamp,
                score: 0.93,
                rank: 1,
            },
            Hit {
                source_id: "m2".into(),
                timestamp: cache[2].timestamp,
                score: 0.81,
                rank: 2,
            },
        ];
        let panels = panels_for_hits(&hits, &cache).unwrap();
        assert_eq!(panels[0].caption, "2021-01-02T00 0.93");
        let a = montage_image(&anchor, &panels).unwrap();
        let b = montage_image(&anchor, &panels).unwrap();
        assert_eq!(a, b);
        // 3 panels of 4x4 upscaled x32 (min side 128) plus gutters.
        assert_eq!(a.width, 4 + 3 * (128 + 4));
        assert!(a.height >= 128 + font::CHAR_HEIGHT);

        // Anchor-only sheet for the no-candidate case.
        let lonely = Panel {
            caption: anchor_caption(cache[0].timestamp, false),
            map: &cache[0].map,
        };
        assert!(lonely.caption.contains("no candidates"));
        let solo = montage_image(&lonely, &[]).unwrap();
        assert_eq!(solo.width, 4 + 128 + 4);

        // Unknown result ids are an error, not a blank panel.
        let ghost = vec![Hit {
            source_id: "nope".into(),
            timestamp: cache[0].timestamp,
            score: 0.5,
            rank: 1,
        }];
        assert!(matches!(
            panels_for_hits(&ghost, &cache),
            Err(HarnessError::MissingImage { .. })
        ));
    }

    #[test]
    fn panel_rendering_maps_channels_to_colors() {
        let mut map = PreprocessedMap {
            width: 2,
            height: 1,
            channels: 2,
            data: vec![1.0, 0.0, 0.0, 1.0], // px0 red, px1 blue
            source_id: "p".into(),
            config_hash: Digest::of_bytes(b"c"),
        };
        let rgb = render_map_rgb(&map);
        assert_eq!(rgb.pixel(0, 0), &PANEL_RED);
        assert_eq!(rgb.pixel(1, 0), &PANEL_BLUE);
        // Red wins where both masks fire.
        map.data = vec![1.0, 0.0, 1.0, 0.0];
        assert_eq!(render_map_rgb(&map).pixel(0, 0), &PANEL_RED);
        // Grayscale: 1.0 is full ink (black), 0.0 is paper (white).
        let gray = PreprocessedMap { channels: 1, data: vec![1.0, 0.0], ..map };
        let g = render_map_rgb(&gray);
        assert_eq!(g.pixel(0, 0), &[0, 0, 0]);
        assert_eq!(g.pixel(1, 0), &[255, 255, 255]);
    }
}
