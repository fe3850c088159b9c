//! Temporary diagnostics; deleted before release.

use std::io::Write as _;
use std::time::Instant;

use synmap_core::cae::{cae_embed, cae_param_hash, cae_train, maps_to_batch, CaeConfig, TrainConfig};
use synmap_core::imgproc::preprocess;
use synmap_core::index::{query_pixel, EmbeddingIndex, ExclusionWindow, PixelEntry};
use synmap_core::metrics::{cosine, MetricKind, SsimConfig};
use synmap_core::synthgen::{self, SynthSpec};
use synmap_core::time::Timestamp;
use synmap_cli::evalharness::seasonal_consistency;

#[test]
fn probe_seasonal() {
    let mut out = std::io::stdout();
    let spec = SynthSpec {
        start_year: 2021,
        n_years: 2,
        hours: vec![0],
        seed: 61,
        ..SynthSpec::default()
    };
    let stamps = spec.calendar().unwrap();
    let mut cfg_p = spec.recommended_preprocess();
    cfg_p.out_w = 32;
    cfg_p.out_h = 32;
    let t0 = Instant::now();
    let rasters: Vec<_> = stamps
        .iter()
        .map(|&t| {
            let map = synthgen::synth_map(&spec, t);
            preprocess(&map.image, &cfg_p, "x").unwrap()
        })
        .collect();
    let _ = writeln!(out, "\nrendered {} rasters in {:.1}s", rasters.len(), t0.elapsed().as_secs_f64());

    let query_ts = Timestamp::from_ymdh(2022, 12, 10, 0).unwrap();
    let qpos = stamps.iter().position(|&t| t == query_ts).unwrap();
    let corpus: Vec<_> = rasters.iter().enumerate().filter(|(i, _)| *i != qpos).map(|(_, m)| m).collect();
    let corpus_ts: Vec<_> = stamps.iter().enumerate().filter(|(i, _)| *i != qpos).map(|(_, &t)| t).collect();
    let query_map = &rasters[qpos];
    let batch = maps_to_batch(&corpus).unwrap();
    let k = 5;
    let exclude = Some(ExclusionWindow { center: query_ts, half_width_hours: 72 });

    let entries: Vec<PixelEntry> = corpus
        .iter()
        .zip(corpus_ts.iter())
        .map(|(m, &t)| PixelEntry { map: m, timestamp: t })
        .collect();
    let res = query_pixel(query_map, &entries, MetricKind::Rmse, k, exclude, &SsimConfig::default()).unwrap();
    let months: Vec<String> = res.hits.iter().map(|h| format!("{}-{:02}", h.timestamp.year(), h.timestamp.month())).collect();
    let sc = seasonal_consistency(query_ts, &res).unwrap();
    let _ = writeln!(out, "rmse: dist {:.2} months {months:?}", sc.mean_circular_distance);

    for (seed, epochs) in [(22u64, 80usize), (33, 80), (44, 80)] {
        let cfg = CaeConfig {
            in_channels: 2,
            input_hw: 32,
            enc_channels: vec![8, 16],
            latent_dim: 16,
            kernel: 4,
            stride: 2,
            seed,
        };
        let tc = TrainConfig { lr: 1e-3, batch_size: 8, epochs };
        let t1 = Instant::now();
        let (params, logs) = cae_train(&cfg, &batch, &tc, |_| {}).unwrap();
        let hash = cae_param_hash(&cfg, &params);
        let embs: Vec<_> = corpus
            .iter()
            .zip(corpus_ts.iter())
            .map(|(m, &t)| cae_embed(&cfg, &params, hash, m, t).unwrap())
            .collect();

        // Latent geometry: cosine of the query against December vs June.
        let qv = cae_embed(&cfg, &params, hash, query_map, query_ts).unwrap();
        let mut dec = Vec::new();
        let mut jun = Vec::new();
        for e in &embs {
            let c = cosine(&qv.vector, &e.vector).unwrap();
            match e.timestamp.month() {
                12 => dec.push(c),
                6 => jun.push(c),
                _ => {}
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let idx = EmbeddingIndex::build(embs).unwrap();
        let res = idx.query_latent(&qv.vector, MetricKind::Cosine, k, exclude).unwrap();
        let months: Vec<String> = res.hits.iter().map(|h| format!("{}-{:02}", h.timestamp.year(), h.timestamp.month())).collect();
        let sc = seasonal_consistency(query_ts, &res).unwrap();
        let _ = writeln!(
            out,
            "cae seed {seed} {epochs} ep (loss {:.4}, {:.0}s): dist {:.2} months {months:?} | cos(dec) {:.4} cos(jun) {:.4}",
            logs.last().unwrap().loss,
            t1.elapsed().as_secs_f64(),
            sc.mean_circular_distance,
            mean(&dec),
            mean(&jun)
        );
    }
}
