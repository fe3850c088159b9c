//! Preprocessing of scanned weather maps into model-ready rasters.
//!
//! The pipeline is fixed: blackout known legend regions, crop to the
//! chart area, convert to HSV, extract binary red/blue line masks by
//! hue range, and assemble the masks into a float raster. Red on these
//! charts marks dashed temperature lines, blue marks solid geopotential
//! height contours; everything else is background.
//!
//! All operations are pure and deterministic. Raster data is stored
//! channel-planar (all of channel 0, then channel 1), row-major within
//! each plane.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::{canonical_json_digest, Digest};

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImgError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImgError::BadDimensions { width, height, channels });
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImgError::DataLength { expected, got: data.len() });
        }
        Ok(ImageU8 { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, ImgError> {
        let n = width as usize * height as usize * channels as usize;
        ImageU8::new(width, height, channels, vec![value; n])
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].copy_from_slice(px);
    }
}

/// Per-pixel HSV floats: h in [0, 360), s and v in [0, 1], interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct HsvImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl HsvImage {
    pub fn pixel(&self, x: u32, y: u32) -> (f32, f32, f32) {
        let o = (y as usize * self.width as usize + x as usize) * 3;
        (self.data[o], self.data[o + 1], self.data[o + 2])
    }
}

/// Binary mask, one byte per pixel, values 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Mask { width, height, data: vec![0; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Axis-aligned pixel rectangle; x/y is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectRegion {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl RectRegion {
    fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height)
    }
}

/// Inclusive HSV box. A hue range with `h_lo > h_hi` wraps through 0,
/// so red can be expressed as one range (e.g. 340..15).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsvRange {
    pub h_lo: f32,
    pub h_hi: f32,
    pub s_lo: f32,
    pub s_hi: f32,
    pub v_lo: f32,
    pub v_hi: f32,
}

impl HsvRange {
    fn validate(&self) -> Result<(), ImgError> {
        let unit = |v: f32| (0.0..=1.0).contains(&v);
        let hue = |h: f32| (0.0..360.0).contains(&h);
        if !hue(self.h_lo) || !hue(self.h_hi) {
            return Err(ImgError::BadRange { detail: String::from("hue must be in [0, 360)") });
        }
        if !unit(self.s_lo) || !unit(self.s_hi) || self.s_lo > self.s_hi {
            return Err(ImgError::BadRange {
                detail: String::from("saturation bounds must satisfy 0 <= s_lo <= s_hi <= 1"),
            });
        }
        if !unit(self.v_lo) || !unit(self.v_hi) || self.v_lo > self.v_hi {
            return Err(ImgError::BadRange {
                detail: String::from("value bounds must satisfy 0 <= v_lo <= v_hi <= 1"),
            });
        }
        Ok(())
    }

    fn contains(&self, h: f32, s: f32, v: f32) -> bool {
        let hue_ok = if self.h_lo <= self.h_hi {
            h >= self.h_lo && h <= self.h_hi
        } else {
            h >= self.h_lo || h <= self.h_hi
        };
        hue_ok && s >= self.s_lo && s <= self.s_hi && v >= self.v_lo && v <= self.v_hi
    }
}

/// How masks become raster channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelLayout {
    /// Channel 0 carries the red mask, channel 1 the blue mask.
    RedBlue2ch,
    /// Single channel, pointwise max of both masks.
    CompositeGray1ch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub blackout: Vec<RectRegion>,
    pub crop: RectRegion,
    pub red_ranges: Vec<HsvRange>,
    pub blue_ranges: Vec<HsvRange>,
    pub out_w: u32,
    pub out_h: u32,
    pub channel_layout: ChannelLayout,
}

impl Default for PreprocessConfig {
    /// Matches the synthetic archive layout: 512x512 scans cropped to the
    /// central 256x256 chart area. Red wraps through 0; blue sits around 225.
    fn default() -> Self {
        PreprocessConfig {
            blackout: Vec::new(),
            crop: RectRegion { x: 128, y: 128, w: 256, h: 256 },
            red_ranges: vec![HsvRange {
                h_lo: 340.0,
                h_hi: 15.0,
                s_lo: 0.25,
                s_hi: 1.0,
                v_lo: 0.35,
                v_hi: 1.0,
            }],
            blue_ranges: vec![HsvRange {
                h_lo: 195.0,
                h_hi: 255.0,
                s_lo: 0.25,
                s_hi: 1.0,
                v_lo: 0.35,
                v_hi: 1.0,
            }],
            out_w: 256,
            out_h: 256,
            channel_layout: ChannelLayout::RedBlue2ch,
        }
    }
}

impl PreprocessConfig {
    /// SHA-256 of the canonical JSON encoding; identifies the exact
    /// preprocessing applied to a cached raster.
    pub fn config_hash(&self) -> Digest {
        canonical_json_digest(self)
    }

    fn validate(&self) -> Result<(), ImgError> {
        if self.red_ranges.is_empty() || self.blue_ranges.is_empty() {
            return Err(ImgError::EmptyRanges);
        }
        for r in self.red_ranges.iter().chain(&self.blue_ranges) {
            r.validate()?;
        }
        if self.out_w == 0 || self.out_h == 0 {
            return Err(ImgError::BadDimensions {
                width: self.out_w,
                height: self.out_h,
                channels: 1,
            });
        }
        Ok(())
    }
}

/// Float raster ready for the models: channel-planar, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessedMap {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<f32>,
    pub source_id: String,
    pub config_hash: Digest,
}

impl PreprocessedMap {
    pub fn plane(&self, c: u8) -> &[f32] {
        let hw = self.width as usize * self.height as usize;
        &self.data[c as usize * hw..(c as usize + 1) * hw]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImgError {
    BadDimensions { width: u32, height: u32, channels: u8 },
    DataLength { expected: usize, got: usize },
    RegionOutOfBounds { region: RectRegion, width: u32, height: u32 },
    /// rgb_to_hsv needs 3 channels.
    NotRgb { channels: u8 },
    BadRange { detail: String },
    EmptyRanges,
    SizeMismatch { expected: (u32, u32), got: (u32, u32) },
    /// Wraps an error with the pipeline stage that produced it.
    Stage { stage: &'static str, source: Box<ImgError> },
}

impl fmt::Display for ImgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImgError::BadDimensions { width, height, channels } => {
                write!(f, "bad image dimensions {width}x{height}x{channels}")
            }
            ImgError::DataLength { expected, got } => {
                write!(f, "pixel buffer length {got}, expected {expected}")
            }
            ImgError::RegionOutOfBounds { region, width, height } => write!(
                f,
                "region {}x{}+{}+{} exceeds image {width}x{height}",
                region.w, region.h, region.x, region.y
            ),
            ImgError::NotRgb { channels } => {
                write!(f, "expected a 3-channel RGB image, got {channels} channel(s)")
            }
            ImgError::BadRange { detail } => write!(f, "invalid HSV range: {detail}"),
            ImgError::EmptyRanges => write!(f, "at least one HSV range is required"),
            ImgError::SizeMismatch { expected, got } => write!(
                f,
                "size mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            ImgError::Stage { stage, source } => write!(f, "preprocess stage {stage}: {source}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ImgError {}

/// Zeroes every pixel inside the given regions. Regions may overlap;
/// the operation is idempotent.
pub fn blackout(img: &ImageU8, regions: &[RectRegion]) -> Result<ImageU8, ImgError> {
    for r in regions {
        if !r.fits(img.width, img.height) {
            return Err(ImgError::RegionOutOfBounds {
                region: *r,
                width: img.width,
                height: img.height,
            });
        }
    }
    let mut out = img.clone();
    let c = out.channels as usize;
    for r in regions {
        for y in r.y..r.y + r.h {
            let start = (y as usize * out.width as usize + r.x as usize) * c;
            out.data[start..start + r.w as usize * c].fill(0);
        }
    }
    Ok(out)
}

/// Extracts a rectangle; must lie fully inside the image.
pub fn crop(img: &ImageU8, rect: RectRegion) -> Result<ImageU8, ImgError> {
    if !rect.fits(img.width, img.height) {
        return Err(ImgError::RegionOutOfBounds {
            region: rect,
            width: img.width,
            height: img.height,
        });
    }
    let c = img.channels as usize;
    let mut data = Vec::with_capacity(rect.w as usize * rect.h as usize * c);
    for y in rect.y..rect.y + rect.h {
        let start = (y as usize * img.width as usize + rect.x as usize) * c;
        data.extend_from_slice(&img.data[start..start + rect.w as usize * c]);
    }
    ImageU8::new(rect.w, rect.h, img.channels, data)
}

/// Hexcone RGB to HSV: v = max/255, s = (max-min)/max (0 when v = 0),
/// h in [0, 360) by sector.
pub fn rgb_to_hsv(img: &ImageU8) -> Result<HsvImage, ImgError> {
    if img.channels != 3 {
        return Err(ImgError::NotRgb { channels: img.channels });
    }
    let mut data = Vec::with_capacity(img.width as usize * img.height as usize * 3);
    for px in img.data.chunks_exact(3) {
        let (h, s, v) = rgb_px_to_hsv(px[0], px[1], px[2]);
        data.push(h);
        data.push(s);
        data.push(v);
    }
    Ok(HsvImage { width: img.width, height: img.height, data })
}

pub fn rgb_px_to_hsv(r: u8, g: u8, b: u8) -> (f32, f32, f32) {
    let (rf, gf, bf) = (f32::from(r), f32::from(g), f32::from(b));
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let v = max / 255.0;
    if max == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = delta / max;
    if delta == 0.0 {
        return (0.0, 0.0, v);
    }
    let h = if max == rf {
        60.0 * ((gf - bf) / delta)
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    // 360.0 can appear from rounding; fold it back to 0.
    let h = if h >= 360.0 { h - 360.0 } else { h };
    (h, s, v)
}

/// Inverse hexcone conversion, used by palettes and test fixtures.
pub fn hsv_to_rgb_px(h: f32, s: f32, v: f32) -> (u8, u8, u8) {
    let c = v * s;
    let mut hw = h % 360.0;
    if hw < 0.0 {
        hw += 360.0;
    }
    let hp = hw / 60.0;
    let mut tri = hp % 2.0 - 1.0;
    if tri < 0.0 {
        tri = -tri;
    }
    let x = c * (1.0 - tri);
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    // +0.5-then-truncate rounds; inputs are non-negative after clamp.
    let to = |f: f32| (((f + m) * 255.0 + 0.5).clamp(0.0, 255.0)) as u8;
    (to(r1), to(g1), to(b1))
}

/// Binary mask of pixels falling inside any of the ranges.
pub fn color_mask(hsv: &HsvImage, ranges: &[HsvRange]) -> Result<Mask, ImgError> {
    if ranges.is_empty() {
        return Err(ImgError::EmptyRanges);
    }
    for r in ranges {
        r.validate()?;
    }
    let mut mask = Mask::zeros(hsv.width, hsv.height);
    for (i, px) in hsv.data.chunks_exact(3).enumerate() {
        let hit = ranges.iter().any(|r| r.contains(px[0], px[1], px[2]));
        mask.data[i] = u8::from(hit);
    }
    Ok(mask)
}

/// Nearest-neighbor resize with pixel-center alignment; exact-size input
/// is returned unchanged. The right choice for binary masks.
pub fn resize_nearest(mask: &Mask, out_w: u32, out_h: u32) -> Mask {
    if mask.width == out_w && mask.height == out_h {
        return mask.clone();
    }
    let mut out = Mask::zeros(out_w, out_h);
    let sx = f64::from(mask.width) / f64::from(out_w);
    let sy = f64::from(mask.height) / f64::from(out_h);
    for y in 0..out_h {
        let src_y = (((f64::from(y) + 0.5) * sy) as u32).min(mask.height - 1);
        for x in 0..out_w {
            let src_x = (((f64::from(x) + 0.5) * sx) as u32).min(mask.width - 1);
            out.data[(y * out_w + x) as usize] = mask.get(src_x, src_y);
        }
    }
    out
}

/// Bilinear resize of one float plane, edge-clamped, pixel-center
/// aligned. Downscaling a 2x2 checkerboard to 1x1 yields 0.5.
pub fn resize_bilinear_plane(
    plane: &[f32],
    w: u32,
    h: u32,
    out_w: u32,
    out_h: u32,
) -> Vec<f32> {
    if w == out_w && h == out_h {
        return plane.to_vec();
    }
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize);
    let sx = f64::from(w) / f64::from(out_w);
    let sy = f64::from(h) / f64::from(out_h);
    for y in 0..out_h {
        let fy = ((f64::from(y) + 0.5) * sy - 0.5).clamp(0.0, f64::from(h - 1));
        // `as` truncation is floor here: fy is clamped non-negative.
        let y0 = fy as u32;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - f64::from(y0);
        for x in 0..out_w {
            let fx = ((f64::from(x) + 0.5) * sx - 0.5).clamp(0.0, f64::from(w - 1));
            let x0 = fx as u32;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - f64::from(x0);
            let at = |xx: u32, yy: u32| f64::from(plane[(yy * w + xx) as usize]);
            let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
            let bot = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
            out.push((top * (1.0 - ty) + bot * ty) as f32);
        }
    }
    out
}

/// Bilinear resize of a continuous raster, all channels.
pub fn resize_bilinear(map: &PreprocessedMap, out_w: u32, out_h: u32) -> PreprocessedMap {
    if map.width == out_w && map.height == out_h {
        return map.clone();
    }
    let mut data = Vec::with_capacity(out_w as usize * out_h as usize * map.channels as usize);
    for c in 0..map.channels {
        data.extend(resize_bilinear_plane(map.plane(c), map.width, map.height, out_w, out_h));
    }
    PreprocessedMap {
        width: out_w,
        height: out_h,
        channels: map.channels,
        data,
        source_id: map.source_id.clone(),
        config_hash: map.config_hash,
    }
}

/// Combines red/blue masks into the final raster, resizing each mask
/// (nearest-neighbor) to the configured output size first. Mask value 1
/// maps to exactly 1.0.
pub fn assemble(
    red: &Mask,
    blue: &Mask,
    cfg: &PreprocessConfig,
    source_id: &str,
) -> Result<PreprocessedMap, ImgError> {
    cfg.validate()?;
    if (red.width, red.height) != (blue.width, blue.height) {
        return Err(ImgError::SizeMismatch {
            expected: (red.width, red.height),
            got: (blue.width, blue.height),
        });
    }
    let red = resize_nearest(red, cfg.out_w, cfg.out_h);
    let blue = resize_nearest(blue, cfg.out_w, cfg.out_h);
    let hw = cfg.out_w as usize * cfg.out_h as usize;
    let (channels, mut data) = match cfg.channel_layout {
        ChannelLayout::RedBlue2ch => (2u8, Vec::with_capacity(2 * hw)),
        ChannelLayout::CompositeGray1ch => (1u8, Vec::with_capacity(hw)),
    };
    match cfg.channel_layout {
        ChannelLayout::RedBlue2ch => {
            data.extend(red.data.iter().map(|&v| f32::from(v)));
            data.extend(blue.data.iter().map(|&v| f32::from(v)));
        }
        ChannelLayout::CompositeGray1ch => {
            data.extend(red.data.iter().zip(&blue.data).map(|(&r, &b)| f32::from(r.max(b))));
        }
    }
    Ok(PreprocessedMap {
        width: cfg.out_w,
        height: cfg.out_h,
        channels,
        data,
        source_id: String::from(source_id),
        config_hash: cfg.config_hash(),
    })
}

/// Full pipeline: blackout, crop, HSV, red/blue masks, assemble.
/// Errors carry the stage that failed.
pub fn preprocess(
    img: &ImageU8,
    cfg: &PreprocessConfig,
    source_id: &str,
) -> Result<PreprocessedMap, ImgError> {
    let stage = |stage: &'static str| {
        move |source: ImgError| ImgError::Stage { stage, source: Box::new(source) }
    };
    cfg.validate().map_err(stage("config"))?;
    let dark = blackout(img, &cfg.blackout).map_err(stage("blackout"))?;
    let cropped = crop(&dark, cfg.crop).map_err(stage("crop"))?;
    let hsv = rgb_to_hsv(&cropped).map_err(stage("rgb_to_hsv"))?;
    let red = color_mask(&hsv, &cfg.red_ranges).map_err(stage("red_mask"))?;
    let blue = color_mask(&hsv, &cfg.blue_ranges).map_err(stage("blue_mask"))?;
    assemble(&red, &blue, cfg, source_id).map_err(stage("assemble"))
}
