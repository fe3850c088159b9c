//! Binary-level tests: drive the real `synmap` executable end to end
//! and check the exit-code contract (0 ok, 2 usage, 3 partial, 4 numeric).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use synmap_core::synthgen::{self, SynthSpec};
use synmap_core::time::Timestamp;
use synmap_cli::runconfig::RunConfig;
use synmap_cli::synth::write_png;

fn synmap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synmap"))
}

fn run(args: &[&str]) -> Output {
    synmap().args(args).output().expect("synmap binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// An eight-map archive spanning the year, rendered straight from the
/// synthetic generator, plus a matching strict run config.
struct Fixture {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    archive: PathBuf,
    ids: Vec<String>,
}

fn tiny_config(archive: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.dir = archive.to_path_buf();
    cfg.preprocess = SynthSpec::default().recommended_preprocess();
    cfg.preprocess.out_w = 24;
    cfg.preprocess.out_h = 24;
    cfg.cae.input_hw = 24;
    cfg.cae.enc_channels = vec![4, 8];
    cfg.cae.latent_dim = 8;
    cfg.cae.seed = 11;
    cfg.vqvae.input_hw = 24;
    cfg.vqvae.enc_channels = vec![4, 8];
    cfg.vqvae.n_codes = 8;
    cfg.vqvae.code_dim = 4;
    cfg.vqvae.seed = 11;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    cfg.query.k = 3;
    cfg.query.exclude_days = 0.0;
    cfg
}

fn write_config(cfg: &RunConfig, path: &Path) {
    fs::write(path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let archive = root.join("archive");
    fs::create_dir(&archive).unwrap();
    let spec = SynthSpec { seed: 505, ..SynthSpec::default() };
    let stamps = [
        "2021-01-05T00",
        "2021-03-10T12",
        "2021-05-15T00",
        "2021-07-20T12",
        "2021-08-25T00",
        "2021-10-28T12",
        "2021-12-03T00",
        "2021-12-30T12",
    ];
    let mut ids = Vec::new();
    for s in stamps {
        let ts: Timestamp = s.parse().unwrap();
        let map = synthgen::synth_map(&spec, ts);
        let name = format!(
            "swm_{:04}{:02}{:02}{:02}",
            ts.year(),
            ts.month(),
            ts.day(),
            ts.hour()
        );
        write_png(&map.image, &archive.join(format!("{name}.png"))).unwrap();
        ids.push(name);
    }
    let config = root.join("run.json");
    write_config(&tiny_config(&archive), &config);
    Fixture { dir, root, config, archive, ids }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_runs_clean_and_logs_the_config_hash() {
    let fx = fixture();
    let cache = fx.root.join("cache");
    let out = run(&[
        "preprocess",
        "--config",
        path_str(&fx.config),
        "--out-dir",
        path_str(&cache),
    ]);
    assert_eq!(code(&out), 0, "preprocess: {}", stderr_of(&out));
    assert!(stderr_of(&out).lines().any(|l| l.starts_with("config ")));
    assert!(stdout_of(&out).contains("preprocessed 8/8"));
    assert!(cache.join("manifest.jsonl").exists());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 9); // 8 rasters + manifest

    let params = fx.root.join("cae.bin");
    let log = fx.root.join("train.jsonl");
    let out = run(&[
        "train", "--model", "cae",
        "--config", path_str(&fx.config),
        "--cache", path_str(&cache),
        "--out", path_str(&params),
        "--log", path_str(&log),
    ]);
    assert_eq!(code(&out), 0, "train: {}", stderr_of(&out));
    let log_lines: Vec<String> = fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(log_lines.len(), 2, "one JSON line per epoch");
    for line in &log_lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["loss"].as_f64().unwrap().is_finite());
    }

    let index = fx.root.join("index.swmi");
    let out = run(&[
        "index",
        "--params", path_str(&params),
        "--cache", path_str(&cache),
        "--out", path_str(&index),
    ]);
    assert_eq!(code(&out), 0, "index: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("indexed 8 dim 8"));

    // Query with the map still in the index and no exclusion: the top
    // hit is the map itself at a rounded score of 1.00.
    let report = fx.root.join("report.json");
    let montage = fx.root.join("montage.png");
    let out = run(&[
        "query",
        "--config", path_str(&fx.config),
        "--index", path_str(&index),
        "--cache", path_str(&cache),
        "--query-id", &fx.ids[2],
        "--metric", "cosine",
        "--exclude-days", "0",
        "--report", path_str(&report),
        "--montage", path_str(&montage),
    ]);
    assert_eq!(code(&out), 0, "query: {}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("cosine"), "table names the metric:\n{table}");
    assert!(table.contains("1.00"), "self-hit rounds to 1.00:\n{table}");
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["rows"][0]["id"], fx.ids[2], "rank 1 is the query itself");
    assert_eq!(doc["rows"][0]["score"], 1.0);
    assert_eq!(&fs::read(&montage).unwrap()[..8], b"\x89PNG\r\n\x1a\n");

    // Eval over two queries and three metrics.
    let queries = fx.root.join("queries.jsonl");
    let manifest = fs::read_to_string(cache.join("manifest.jsonl")).unwrap();
    let two: Vec<&str> = manifest.lines().take(2).collect();
    fs::write(&queries, two.join("\n") + "\n").unwrap();
    let eval_out = fx.root.join("eval.json");
    let out = run(&[
        "eval",
        "--config", path_str(&fx.config),
        "--index", path_str(&index),
        "--params", path_str(&params),
        "--cache", path_str(&cache),
        "--queries", path_str(&queries),
        "--metrics", "rmse,ssim,cosine",
        "--k", "3",
        "--out", path_str(&eval_out),
    ]);
    assert_eq!(code(&out), 0, "eval: {}", stderr_of(&out));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&eval_out).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2 * 3 * 3, "2 queries x 3 metrics x k=3");
    assert_eq!(doc["seasonal"].as_array().unwrap().len(), 2 * 3);
}

#[test]
fn usage_errors_exit_two_with_explanations() {
    let fx = fixture();
    let cache = fx.root.join("cache");
    let out = run(&["preprocess", "--config", path_str(&fx.config), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 0);

    // Malformed config JSON carries a line/column position.
    let bad_cfg = fx.root.join("bad.json");
    fs::write(&bad_cfg, "{\n  \"data\": {\n").unwrap();
    let out = run(&["preprocess", "--config", path_str(&bad_cfg), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("line"), "syntax error names a line: {}", stderr_of(&out));

    // Unknown config keys are rejected outright.
    let unknown = fx.root.join("unknown.json");
    fs::write(&unknown, r#"{"quey": {"k": 5}}"#).unwrap();
    let out = run(&["preprocess", "--config", path_str(&unknown), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 2);

    // Missing archive directory.
    let mut cfg = tiny_config(&fx.root.join("nowhere"));
    let missing = fx.root.join("missing.json");
    write_config(&cfg, &missing);
    let out = run(&["preprocess", "--config", path_str(&missing), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 2);

    // Pattern that matches nothing in a real directory.
    cfg = tiny_config(&fx.archive);
    cfg.data.pattern = "zzz_{YYYY}{MM}{DD}{HH}.png".into();
    let nomatch = fx.root.join("nomatch.json");
    write_config(&cfg, &nomatch);
    let out = run(&["preprocess", "--config", path_str(&nomatch), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 2);

    // Query-side usage errors.
    let out = run(&[
        "query", "--config", path_str(&fx.config), "--query-id", &fx.ids[0],
    ]);
    assert_eq!(code(&out), 2, "latent metric without --index/--external");
    let out = run(&[
        "query", "--config", path_str(&fx.config), "--cache", path_str(&cache),
        "--query-id", &fx.ids[0], "--metric", "ssim", "--k", "0",
    ]);
    assert_eq!(code(&out), 2, "--k 0");
    let out = run(&[
        "query", "--config", path_str(&fx.config), "--query-id", &fx.ids[0],
        "--metric", "ssim",
    ]);
    assert_eq!(code(&out), 2, "ssim without --cache");
    assert!(stderr_of(&out).contains("--cache"), "explains the fix: {}", stderr_of(&out));

    // Bad flags come back as clap usage errors, also exit 2.
    let out = run(&["query", "--metric", "manhattan"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn partial_failures_exit_three_unless_lenient() {
    let fx = fixture();
    // One file matches the pattern but is not a decodable PNG.
    fs::write(fx.archive.join("swm_2021060100.png"), b"not a png at all").unwrap();
    let cache = fx.root.join("cache");
    let out = run(&["preprocess", "--config", path_str(&fx.config), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 3, "strict mode reports the partial failure");
    assert!(stderr_of(&out).contains("swm_2021060100"), "names the offender");
    assert!(stdout_of(&out).contains("preprocessed 8/9"));

    let out = run(&[
        "preprocess", "--config", path_str(&fx.config), "--out-dir", path_str(&cache),
        "--lenient",
    ]);
    assert_eq!(code(&out), 0, "lenient mode accepts the survivors");
    // The manifest only lists maps that actually made it into the cache.
    let manifest = fs::read_to_string(cache.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 8);
    assert!(!manifest.contains("swm_2021060100"));
}

#[test]
fn training_divergence_exits_four_and_logs_the_last_epoch() {
    let fx = fixture();
    let cache = fx.root.join("cache");
    let out = run(&["preprocess", "--config", path_str(&fx.config), "--out-dir", path_str(&cache)]);
    assert_eq!(code(&out), 0);

    let mut cfg = tiny_config(&fx.archive);
    cfg.train.lr = 1e12; // guaranteed blow-up
    cfg.train.epochs = 50;
    let explode = fx.root.join("explode.json");
    write_config(&cfg, &explode);
    let log = fx.root.join("train.jsonl");
    let out = run(&[
        "train", "--model", "cae",
        "--config", path_str(&explode),
        "--cache", path_str(&cache),
        "--out", path_str(&fx.root.join("never.bin")),
        "--log", path_str(&log),
    ]);
    assert_eq!(code(&out), 4, "divergence is a numerical failure: {}", stderr_of(&out));
    assert!(!fx.root.join("never.bin").exists(), "no params file on divergence");
    let text = fs::read_to_string(&log).unwrap();
    let last = text.lines().last().expect("divergence is logged");
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["diverged"], true);
}
