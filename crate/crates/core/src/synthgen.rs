//! Synthetic weather-map generator with per-pixel ground truth.
//!
//! Each generated scan imitates an upper-air chart: solid blue
//! geopotential-height contours and dashed red temperature lines, both
//! horizontal sinusoids over a white page, plus a colored legend block
//! that preprocessing is expected to black out. There is no
//! anti-aliasing — every pixel is exactly white, line blue, or line red
//! — so color masks have an unambiguous right answer.
//!
//! Line shape follows an annual cycle: winter months get large
//! amplitudes and high wavenumbers (long, strongly meandering lines,
//! lots of ink), summer months get flat, low-ink charts. On top of the
//! monthly base, each map adds a smooth day-of-month drift and a small
//! timestamp-seeded noise draw. The *final* per-map parameters go into
//! [`MapTruth`]; rendering from a truth record is pure and reproduces
//! the map byte for byte, no RNG involved.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

// sin/cos/round on concrete floats need the trait under no_std.
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use crate::imgproc::{ImageU8, Mask, PreprocessConfig, RectRegion};
use crate::time::{days_in_month, TimeError, Timestamp};

/// Page geometry (pixels).
pub const MAP_SIZE: u32 = 512;
/// Solid contour color (blue family; sits inside the default blue mask range).
pub const LINE_BLUE: (u8, u8, u8) = (40, 70, 200);
/// Dashed line color (red family; sits inside the default wrap-around red range).
pub const LINE_RED: (u8, u8, u8) = (220, 30, 40);
/// Legend color patch: x, y, w, h. Placed inside the default crop window
/// so preprocessing must black it out to keep masks clean.
pub const LEGEND_RECT: RectRegion = RectRegion { x: 140, y: 140, w: 80, h: 30 };

const N_BLUE_LINES: u32 = 9;
const DASH_ON: u32 = 6;
const DASH_PERIOD: u32 = 10;

/// Ink classes in the ground-truth grid.
pub const INK_NONE: u8 = 0;
pub const INK_BLUE: u8 = 1;
pub const INK_RED: u8 = 2;

/// Monthly base parameters for the line field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonthParams {
    /// Sinusoid wavenumber across the page width.
    pub n_troughs: f64,
    /// Base phase (radians).
    pub trough_phase: f64,
    /// Peak-to-center amplitude in pixels.
    pub amplitude: f64,
    /// Scale of the per-map random perturbations.
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub start_year: i32,
    pub n_years: usize,
    /// Synoptic hours rendered per day, strictly increasing, each < 24.
    pub hours: Vec<u32>,
    /// January..December.
    pub months: [MonthParams; 12],
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Annual cycle peaking in January: winter maps carry roughly twice
    /// the amplitude and three times the wavenumber of summer maps, so
    /// ink mass varies strongly and smoothly through the year.
    fn default() -> Self {
        let mut months = [MonthParams {
            n_troughs: 0.0,
            trough_phase: 0.0,
            amplitude: 0.0,
            noise_sigma: 0.0,
        }; 12];
        for (i, m) in months.iter_mut().enumerate() {
            let season = (2.0 * core::f64::consts::PI * i as f64 / 12.0).cos();
            m.n_troughs = 3.0 + 1.5 * season;
            m.trough_phase = 2.0 * core::f64::consts::PI * i as f64 / 12.0;
            m.amplitude = 60.0 + 25.0 * season;
            m.noise_sigma = 4.0 + 2.0 * season;
        }
        SynthSpec { start_year: 2021, n_years: 2, hours: vec![0, 12], months, seed: 1234 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), TimeError> {
        if self.n_years == 0 || self.hours.is_empty() {
            return Err(TimeError::InvalidHour(24));
        }
        let mut prev: Option<u32> = None;
        for &h in &self.hours {
            if h >= 24 || prev.is_some_and(|p| p >= h) {
                return Err(TimeError::InvalidHour(h));
            }
            prev = Some(h);
        }
        // Probe both calendar endpoints.
        Timestamp::from_ymdh(self.start_year, 1, 1, 0)?;
        Timestamp::from_ymdh(self.start_year + self.n_years as i32 - 1, 12, 31, 0)?;
        Ok(())
    }

    /// Every timestamp in the archive, ascending.
    pub fn calendar(&self) -> Result<Vec<Timestamp>, TimeError> {
        self.validate()?;
        let mut out = Vec::new();
        for year in self.start_year..self.start_year + self.n_years as i32 {
            for month in 1..=12u32 {
                for day in 1..=days_in_month(year, month) {
                    for &hour in &self.hours {
                        out.push(Timestamp::from_ymdh(year, month, day, hour)?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Preprocess settings matched to this generator's page layout:
    /// black out the legend, crop the central chart area.
    pub fn recommended_preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            blackout: vec![LEGEND_RECT],
            crop: RectRegion { x: 128, y: 128, w: 256, h: 256 },
            ..PreprocessConfig::default()
        }
    }
}

/// Final (post-drift, post-noise) parameters of one rendered map. A
/// truth record is all that is needed to re-render the map exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapTruth {
    pub timestamp: Timestamp,
    pub n_troughs: f64,
    pub trough_phase: f64,
    pub amplitude: f64,
}

/// A rendered map plus its per-pixel ink ground truth (same 512x512
/// grid, values [`INK_NONE`]/[`INK_BLUE`]/[`INK_RED`]).
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedMap {
    pub image: ImageU8,
    pub ink: Vec<u8>,
    pub truth: MapTruth,
}

impl RenderedMap {
    /// Ground-truth mask for one ink class.
    pub fn ink_mask(&self, ink: u8) -> Mask {
        Mask {
            width: MAP_SIZE,
            height: MAP_SIZE,
            data: self.ink.iter().map(|&v| u8::from(v == ink)).collect(),
        }
    }
}

/// SplitMix64: decorrelates the per-map stream from the archive seed.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the final line parameters for one timestamp: monthly base,
/// smooth within-month drift, then a bounded noise draw from a stream
/// keyed by (seed, timestamp).
pub fn map_params(spec: &SynthSpec, ts: Timestamp) -> MapTruth {
    let base = &spec.months[(ts.month() - 1) as usize];
    let day_frac = (f64::from(ts.day() - 1) + f64::from(ts.hour()) / 24.0)
        / f64::from(days_in_month(ts.year(), ts.month()));
    let tau = 2.0 * core::f64::consts::PI;
    let drift_phase = 0.35 * (tau * day_frac).sin();
    let drift_amp = 1.0 + 0.08 * (tau * day_frac + 1.0).sin();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, ts.epoch_hours() as u64));
    let noise_phase = rng.gen_range(-0.15..0.15);
    let noise_amp = rng.gen_range(-base.noise_sigma..base.noise_sigma);
    MapTruth {
        timestamp: ts,
        n_troughs: base.n_troughs,
        trough_phase: base.trough_phase + drift_phase + noise_phase,
        amplitude: (base.amplitude * drift_amp + noise_amp).max(2.0),
    }
}

/// Paints one sinusoid line into the ink grid, two pixels thick, with
/// vertical fill so steep sections stay connected. `dashed` applies a
/// fixed on/off pattern along x.
fn paint_line(
    ink: &mut [u8],
    center_y: f64,
    truth: &MapTruth,
    phase_offset: f64,
    amplitude_scale: f64,
    color: u8,
    dashed: bool,
) {
    let w = MAP_SIZE as i64;
    let tau = 2.0 * core::f64::consts::PI;
    let y_at = |x: i64| -> f64 {
        center_y
            + truth.amplitude
                * amplitude_scale
                * (tau * truth.n_troughs * x as f64 / MAP_SIZE as f64
                    + truth.trough_phase
                    + phase_offset)
                    .sin()
    };
    let mut set = |x: i64, y: i64| {
        if x >= 0 && x < w && y >= 0 && y < w {
            ink[(y * w + x) as usize] = color;
        }
    };
    let mut prev_y: Option<i64> = None;
    for x in 0..w {
        let on = !dashed || (x as u32 % DASH_PERIOD) < DASH_ON;
        // Truncation is floor for in-page values; +0.5 rounds.
        let y = (y_at(x) + 0.5) as i64;
        if on {
            set(x, y);
            set(x, y + 1);
            // Bridge vertical jumps so solid lines have no gaps.
            if let Some(py) = prev_y {
                let (lo, hi) = if py < y { (py, y) } else { (y, py) };
                for yy in lo + 1..hi {
                    set(x, yy);
                    set(x, yy + 1);
                }
            }
        }
        prev_y = if on { Some(y) } else { None };
    }
}

/// Renders a map from its truth record. Pure: identical truth, identical
/// bytes. Blue solid contours first, red dashed lines over them, legend
/// patch last.
pub fn render_from_truth(truth: &MapTruth) -> RenderedMap {
    let n = (MAP_SIZE * MAP_SIZE) as usize;
    let mut ink = vec![INK_NONE; n];
    let spacing = f64::from(MAP_SIZE) / f64::from(N_BLUE_LINES + 1);
    for i in 0..N_BLUE_LINES {
        let cy = spacing * f64::from(i + 1);
        paint_line(&mut ink, cy, truth, 0.0, 1.0, INK_BLUE, false);
    }
    for i in 0..N_BLUE_LINES {
        // Red lines run midway between blue ones, flatter and phase-shifted.
        let cy = spacing * (f64::from(i + 1) + 0.5);
        paint_line(&mut ink, cy, truth, 0.8, 0.75, INK_RED, true);
    }
    // Legend: left half red, right half blue — line colors on purpose, so
    // skipping the blackout provably contaminates the masks.
    for y in LEGEND_RECT.y..LEGEND_RECT.y + LEGEND_RECT.h {
        for x in LEGEND_RECT.x..LEGEND_RECT.x + LEGEND_RECT.w {
            let half = x < LEGEND_RECT.x + LEGEND_RECT.w / 2;
            ink[(y * MAP_SIZE + x) as usize] = if half { INK_RED } else { INK_BLUE };
        }
    }
    let mut data = Vec::with_capacity(n * 3);
    for &v in &ink {
        let (r, g, b) = match v {
            INK_BLUE => LINE_BLUE,
            INK_RED => LINE_RED,
            _ => (255, 255, 255),
        };
        data.extend_from_slice(&[r, g, b]);
    }
    let image = ImageU8::new(MAP_SIZE, MAP_SIZE, 3, data).expect("fixed geometry");
    RenderedMap { image, ink, truth: truth.clone() }
}

/// Generates the map for one timestamp: derive final parameters, render.
pub fn synth_map(spec: &SynthSpec, ts: Timestamp) -> RenderedMap {
    render_from_truth(&map_params(spec, ts))
}
