//! Similarity metrics for rasters and embedding vectors.
//!
//! Pixel-space comparisons use RMSE and SSIM; latent-space comparisons
//! use cosine similarity and Euclidean distance. Each metric declares
//! its orientation so ranking code never hard-codes "higher is better".

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

// Inherent float methods (sqrt, exp) exist only with std; the trait
// provides them for no_std builds.
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    LengthMismatch { left: usize, right: usize },
    EmptyInput,
    /// Cosine similarity is undefined for a zero vector.
    ZeroVector,
    NonFinite { context: String },
    /// SSIM needs the window to fit inside the image.
    ImageSmallerThanWindow { width: u32, height: u32, window: u32 },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::LengthMismatch { left, right } => {
                write!(f, "input lengths differ: {left} vs {right}")
            }
            MetricError::EmptyInput => write!(f, "inputs must be non-empty"),
            MetricError::ZeroVector => {
                write!(f, "cosine similarity is undefined for a zero vector")
            }
            MetricError::NonFinite { context } => write!(f, "non-finite value in {context}"),
            MetricError::ImageSmallerThanWindow { width, height, window } => write!(
                f,
                "image {width}x{height} is smaller than the {window}x{window} SSIM window"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricError {}

/// Which way a metric's scores sort.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rmse,
    Ssim,
    Cosine,
    Euclidean,
}

impl MetricKind {
    pub fn orientation(self) -> Orientation {
        match self {
            MetricKind::Rmse | MetricKind::Euclidean => Orientation::LowerIsBetter,
            MetricKind::Ssim | MetricKind::Cosine => Orientation::HigherIsBetter,
        }
    }

    /// True when `a` ranks strictly ahead of `b` under this metric.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self.orientation() {
            Orientation::HigherIsBetter => a > b,
            Orientation::LowerIsBetter => a < b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::Ssim => "ssim",
            MetricKind::Cosine => "cosine",
            MetricKind::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_pair(a: &[f32], b: &[f32], context: &str) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite { context: String::from(context) });
    }
    Ok(())
}

/// Root-mean-square error. Lower is better; 0 means identical.
pub fn rmse(a: &[f32], b: &[f32]) -> Result<f64, MetricError> {
    check_pair(a, b, "rmse input")?;
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Euclidean (L2) distance. Lower is better; 0 means identical.
pub fn euclidean(a: &[f32], b: &[f32]) -> Result<f64, MetricError> {
    check_pair(a, b, "euclidean input")?;
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Cosine similarity in [-1, 1]. Bitwise-equal inputs return exactly 1.0
/// (the dot/norm round trip cannot guarantee that through float sqrt, and
/// retrieval relies on a query finding itself with score 1).
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, MetricError> {
    check_pair(a, b, "cosine input")?;
    let norm =
        |v: &[f32]| v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    if a == b {
        return Ok(1.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// SSIM parameters. The defaults are the standard choice: 11x11 Gaussian
/// window with sigma 1.5, k1 = 0.01, k2 = 0.03, dynamic range 1.0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimConfig {
    pub window: u32,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the pixel values (1.0 for [0, 1] rasters).
    pub l: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, l: 1.0 }
    }
}

fn gaussian_window(size: u32, sigma: f64) -> Vec<f64> {
    let half = f64::from(size - 1) / 2.0;
    let mut w = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let dx = f64::from(x) - half;
            let dy = f64::from(y) - half;
            w.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Mean SSIM over one plane. The window slides only over positions where
/// it lies fully inside the image (no padding), weighted by a normalized
/// Gaussian.
pub fn ssim_plane(
    a: &[f32],
    b: &[f32],
    width: u32,
    height: u32,
    cfg: &SsimConfig,
) -> Result<f64, MetricError> {
    check_pair(a, b, "ssim input")?;
    let expected = width as usize * height as usize;
    if a.len() != expected {
        return Err(MetricError::LengthMismatch { left: a.len(), right: expected });
    }
    if width < cfg.window || height < cfg.window {
        return Err(MetricError::ImageSmallerThanWindow { width, height, window: cfg.window });
    }
    let win = gaussian_window(cfg.window, cfg.sigma);
    let c1 = (cfg.k1 * cfg.l) * (cfg.k1 * cfg.l);
    let c2 = (cfg.k2 * cfg.l) * (cfg.k2 * cfg.l);
    let k = cfg.window as usize;
    let w = width as usize;
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=(height - cfg.window) as usize {
        for wx in 0..=(width - cfg.window) as usize {
            let (mut mu_a, mut mu_b) = (0.0f64, 0.0f64);
            for ky in 0..k {
                let row = (wy + ky) * w + wx;
                for kx in 0..k {
                    let g = win[ky * k + kx];
                    mu_a += g * f64::from(a[row + kx]);
                    mu_b += g * f64::from(b[row + kx]);
                }
            }
            let (mut var_a, mut var_b, mut cov) = (0.0f64, 0.0f64, 0.0f64);
            for ky in 0..k {
                let row = (wy + ky) * w + wx;
                for kx in 0..k {
                    let g = win[ky * k + kx];
                    let da = f64::from(a[row + kx]) - mu_a;
                    let db = f64::from(b[row + kx]) - mu_b;
                    var_a += g * (da * da);
                    var_b += g * (db * db);
                    cov += g * (da * db);
                }
            }
            // Grouping keeps the expression bitwise symmetric in (a, b).
            total += ((2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM over a multi-channel planar raster: the per-channel means are
/// averaged. Identical inputs score exactly 1.0.
pub fn ssim(
    a: &[f32],
    b: &[f32],
    width: u32,
    height: u32,
    channels: u8,
    cfg: &SsimConfig,
) -> Result<f64, MetricError> {
    check_pair(a, b, "ssim input")?;
    let hw = width as usize * height as usize;
    if a.len() != hw * channels as usize || channels == 0 {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: hw * channels as usize,
        });
    }
    if a == b {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for c in 0..channels as usize {
        total += ssim_plane(&a[c * hw..(c + 1) * hw], &b[c * hw..(c + 1) * hw], width, height, cfg)?;
    }
    Ok(total / f64::from(channels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rmse_known_values() {
        assert_eq!(rmse(&[3.0], &[0.0]).unwrap(), 3.0);
        // mean of squared diffs (1 + 4) / 2 = 2.5, sqrt = 1.5811...
        let v = rmse(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((v - 2.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_known_values() {
        assert_eq!(euclidean(&[0.0, 3.0], &[4.0, 0.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_known_values() {
        let v = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let anti = cosine(&[1.0, 2.0], &[-1.0, -2.0]).unwrap();
        assert!((anti + 1.0).abs() < 1e-12 && anti >= -1.0, "{anti}");
        assert_eq!(cosine(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_self_similarity_is_exactly_one() {
        let v = vec![0.1f32, -0.7, 0.3333, 901.25, 1e-4];
        assert_eq!(cosine(&v, &v).unwrap(), 1.0);
        // Scaled copies are NOT bitwise equal; they should still be ~1.
        let scaled: Vec<f32> = v.iter().map(|&x| x * 3.0).collect();
        let s = cosine(&v, &scaled).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_vectors_and_nan() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err(), MetricError::ZeroVector);
        assert!(matches!(
            cosine(&[f32::NAN, 1.0], &[1.0, 0.0]).unwrap_err(),
            MetricError::NonFinite { .. }
        ));
    }

    #[test]
    fn metrics_agree_with_naive_loops_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(1..64);
            let a: Vec<f32> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f32> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut sq = 0.0f64;
            let mut dot = 0.0f64;
            let mut na = 0.0f64;
            let mut nb = 0.0f64;
            for i in 0..n {
                let (x, y) = (f64::from(a[i]), f64::from(b[i]));
                sq += (x - y) * (x - y);
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            assert!((rmse(&a, &b).unwrap() - (sq / n as f64).sqrt()).abs() < 1e-8);
            assert!((euclidean(&a, &b).unwrap() - sq.sqrt()).abs() < 1e-8);
            if na > 0.0 && nb > 0.0 {
                let expect = dot / (na.sqrt() * nb.sqrt());
                assert!((cosine(&a, &b).unwrap() - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f32> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        assert_eq!(euclidean(&a, &b).unwrap(), euclidean(&b, &a).unwrap());
        assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let a = [0.3f32, -0.5, 0.9];
        let b = [1.0f32, 0.2, -0.1];
        let a2: Vec<f32> = a.iter().map(|&x| x * 7.5).collect();
        let c1 = cosine(&a, &b).unwrap();
        let c2 = cosine(&a2, &b).unwrap();
        assert!((c1 - c2).abs() < 1e-7);
    }

    #[test]
    fn length_mismatch_and_empty_are_rejected() {
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]).unwrap_err(),
            MetricError::LengthMismatch { .. }
        ));
        assert_eq!(rmse(&[], &[]).unwrap_err(), MetricError::EmptyInput);
    }

    #[test]
    fn ssim_identical_images_score_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img: Vec<f32> = (0..16 * 16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cfg = SsimConfig::default();
        assert_eq!(ssim(&img, &img, 16, 16, 1, &cfg).unwrap(), 1.0);
        // Also through the plane path (no fast-path shortcut).
        let v = ssim_plane(&img, &img, 16, 16, &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_planes_match_closed_form() {
        // For two constant images a=0, b=1: means differ maximally, all
        // variances are zero, so SSIM = C1 / (mu_b^2 + C1) = 1e-4 / 1.0001.
        let a = vec![0.0f32; 16 * 16];
        let b = vec![1.0f32; 16 * 16];
        let cfg = SsimConfig::default();
        let expect = 1e-4 / (1.0 + 1e-4);
        let v = ssim_plane(&a, &b, 16, 16, &cfg).unwrap();
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn ssim_is_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..5 {
            let a: Vec<f32> = (0..14 * 14).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f32> = (0..14 * 14).map(|_| rng.gen_range(0.0..1.0)).collect();
            let cfg = SsimConfig::default();
            let ab = ssim_plane(&a, &b, 14, 14, &cfg).unwrap();
            let ba = ssim_plane(&b, &a, 14, 14, &cfg).unwrap();
            assert_eq!(ab, ba);
            assert!((-1.0..=1.0).contains(&ab));
            // Any distinct pair scores strictly below the identity score.
            assert!(ab < 1.0);
        }
    }

    #[test]
    fn ssim_window_must_fit() {
        let a = vec![0.0f32; 8 * 8];
        let cfg = SsimConfig::default();
        assert_eq!(
            ssim_plane(&a, &a, 8, 8, &cfg).unwrap_err(),
            MetricError::ImageSmallerThanWindow { width: 8, height: 8, window: 11 }
        );
    }

    #[test]
    fn ssim_multichannel_averages_planes() {
        let cfg = SsimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a: Vec<f32> = (0..2 * 12 * 12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f32> = (0..2 * 12 * 12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let whole = ssim(&a, &b, 12, 12, 2, &cfg).unwrap();
        let hw = 12 * 12;
        let p0 = ssim_plane(&a[..hw], &b[..hw], 12, 12, &cfg).unwrap();
        let p1 = ssim_plane(&a[hw..], &b[hw..], 12, 12, &cfg).unwrap();
        assert!((whole - (p0 + p1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_window_is_normalized_and_symmetric() {
        let w = gaussian_window(11, 1.5);
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for y in 0..11 {
            for x in 0..11 {
                assert_eq!(w[y * 11 + x], w[x * 11 + y]);
                assert_eq!(w[y * 11 + x], w[(10 - y) * 11 + (10 - x)]);
            }
        }
        // Center carries the largest weight.
        let center = w[5 * 11 + 5];
        assert!(w.iter().all(|&v| v <= center));
    }

    #[test]
    fn orientation_matches_metric_semantics() {
        assert_eq!(MetricKind::Rmse.orientation(), Orientation::LowerIsBetter);
        assert_eq!(MetricKind::Euclidean.orientation(), Orientation::LowerIsBetter);
        assert_eq!(MetricKind::Ssim.orientation(), Orientation::HigherIsBetter);
        assert_eq!(MetricKind::Cosine.orientation(), Orientation::HigherIsBetter);
        assert!(MetricKind::Rmse.better(0.1, 0.5));
        assert!(MetricKind::Cosine.better(0.9, 0.5));
        assert!(!MetricKind::Cosine.better(0.5, 0.5));
    }

    #[test]
    fn metric_kind_serde_uses_lowercase_names() {
        let json = serde_json::to_string(&MetricKind::Ssim).unwrap();
        assert_eq!(json, "\"ssim\"");
        let back: MetricKind = serde_json::from_str("\"euclidean\"").unwrap();
        assert_eq!(back, MetricKind::Euclidean);
    }
}
