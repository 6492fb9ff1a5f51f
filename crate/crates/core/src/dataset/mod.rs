//! Synthetic training-image generator for the ellipse detector.
//!
//! Each sample is a 299x299 crop of a user-supplied background with, for
//! positives, a green elliptical arc drawn on top, followed by brightness
//! scaling and occlusion/noise augmentation. Labels are written as JSON
//! Lines in index order.
//!
//! Real red or blue markers can be handled by swapping colour channels of
//! the input before inference; the generator only produces green arcs.

mod render;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::EllipseParams;

pub use render::{arc_coverage, load_background, render, render_on};

/// Side length of the square training canvas in pixels.
pub const CANVAS_PX: u32 = 299;
pub const GREEN_MIN: u8 = 150;
/// Red and blue stay at least this far below green.
pub const GREEN_MARGIN: u8 = 15;
pub const AXIS_MIN_PX: u32 = 20;
pub const AXIS_MAX_PX: u32 = 140;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no background images supplied")]
    NoBackgrounds,
    #[error("cannot read background {path}: {reason}")]
    BackgroundUnreadable { path: PathBuf, reason: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid augmentation config: {0}")]
    InvalidAugment(String),
    #[error("cannot encode {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything needed to render one sample deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub has_marker: bool,
    pub background_path: PathBuf,
    pub green_rgb: [u8; 3],
    /// Ellipse in canvas pixels; axes are whole pixels.
    pub ellipse: EllipseParams,
    pub arc_start_rad: f64,
    pub arc_end_rad: f64,
    pub brightness_factor: f64,
    pub distractor_seed: u64,
}

impl SampleSpec {
    /// Checks the colour, axis, angle and containment ranges. Negatives only
    /// need a valid colour and brightness.
    pub fn is_valid(&self, cfg: &AugmentConfig) -> bool {
        let [r, g, b] = self.green_rgb;
        let colour = g >= GREEN_MIN && r <= g - GREEN_MARGIN && b <= g - GREEN_MARGIN;
        let bright = (cfg.brightness_min..=cfg.brightness_max).contains(&self.brightness_factor);
        if !self.has_marker {
            return colour && bright;
        }
        let e = &self.ellipse;
        let integral = e.a.fract() == 0.0 && e.b.fract() == 0.0;
        let axes = (AXIS_MIN_PX as f64..=AXIS_MAX_PX as f64).contains(&e.a) && e.b >= 0.0 && e.b <= e.a;
        let phi = (-std::f64::consts::PI..=std::f64::consts::PI).contains(&e.phi);
        let arcs = (-std::f64::consts::FRAC_PI_2..=0.0).contains(&self.arc_start_rad)
            && (std::f64::consts::PI..=1.5 * std::f64::consts::PI).contains(&self.arc_end_rad);
        colour && bright && integral && axes && phi && arcs && ellipse_inside(e, cfg.canvas_px as f64, 0.0)
    }
}

fn ellipse_inside(e: &EllipseParams, size: f64, margin: f64) -> bool {
    let (hx, hy) = e.half_extents();
    e.u - hx >= margin && e.u + hx <= size - margin && e.v - hy >= margin && e.v + hy <= size - margin
}

/// Rendering and augmentation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub canvas_px: u32,
    pub stroke_width_px: f64,
    /// Gaussian bloom on the stroke edges; zero gives a hard edge.
    pub stroke_blur_sigma_px: f64,
    pub brightness_min: f64,
    pub brightness_max: f64,
    pub cutout_max: u32,
    pub cutout_min_px: u32,
    pub cutout_max_px: u32,
    /// Upper bound on isolated green distractor pixels per image.
    pub speckle_max: u32,
    pub blur_probability: f64,
    pub blur_sigma_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            canvas_px: CANVAS_PX,
            stroke_width_px: 3.0,
            stroke_blur_sigma_px: 1.0,
            brightness_min: 0.4,
            brightness_max: 1.3,
            cutout_max: 4,
            cutout_min_px: 10,
            cutout_max_px: 80,
            speckle_max: 200,
            blur_probability: 0.3,
            blur_sigma_range: (0.5, 1.5),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidAugment(m.to_string()));
        if !(self.stroke_width_px > 0.0) || !(self.stroke_blur_sigma_px >= 0.0) {
            return bad("stroke width must be positive and blur non-negative");
        }
        if (self.canvas_px as f64) < 2.0 * (AXIS_MAX_PX as f64 + self.stroke_margin()) {
            return bad("canvas too small for the largest ellipse");
        }
        if !(self.brightness_min > 0.0 && self.brightness_min <= self.brightness_max) {
            return bad("brightness range must be positive and ordered");
        }
        if self.cutout_min_px == 0 || self.cutout_min_px > self.cutout_max_px {
            return bad("cutout size range must be positive and ordered");
        }
        if !(0.0..=1.0).contains(&self.blur_probability) {
            return bad("blur probability must lie in [0, 1]");
        }
        let (lo, hi) = self.blur_sigma_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("blur sigma range must be positive and ordered");
        }
        Ok(())
    }

    /// Clearance kept between the ellipse and the canvas border so the
    /// stroke is not clipped.
    fn stroke_margin(&self) -> f64 {
        0.5 * self.stroke_width_px + 3.0 * self.stroke_blur_sigma_px + 0.5
    }
}

/// Size and layout of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetManifest {
    pub total: usize,
    /// Defaults to half of `total`.
    pub positives: Option<usize>,
    pub image_dir: String,
    pub label_file: String,
    pub seed: u64,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            total: 9000,
            positives: None,
            image_dir: "images".into(),
            label_file: "labels.jsonl".into(),
            seed: 0,
        }
    }
}

impl DatasetManifest {
    pub fn positives(&self) -> usize {
        self.positives.unwrap_or(self.total / 2)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.positives() > self.total {
            return Err(DatasetError::InvalidManifest(format!(
                "positives ({}) exceeds total ({})",
                self.positives(),
                self.total
            )));
        }
        if self.image_dir.is_empty() || self.label_file.is_empty() {
            return Err(DatasetError::InvalidManifest("image_dir and label_file must be set".into()));
        }
        Ok(())
    }
}

/// Draw one sample description. Every field is uniform over its range; the
/// ellipse centre is uniform over the positions that keep the stroked
/// ellipse fully inside the canvas.
pub fn sample_spec<R: Rng + ?Sized>(
    rng: &mut R,
    backgrounds: &[PathBuf],
    has_marker: bool,
    cfg: &AugmentConfig,
) -> Result<SampleSpec, DatasetError> {
    if backgrounds.is_empty() {
        return Err(DatasetError::NoBackgrounds);
    }
    let background_path = backgrounds[rng.random_range(0..backgrounds.len())].clone();
    let g: u8 = rng.random_range(GREEN_MIN..=255);
    let r: u8 = rng.random_range(0..=g - GREEN_MARGIN);
    let b: u8 = rng.random_range(0..=g - GREEN_MARGIN);
    let a = rng.random_range(AXIS_MIN_PX..=AXIS_MAX_PX) as f64;
    let minor = rng.random_range(0..=a as u32) as f64;
    let phi = rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI);
    let size = cfg.canvas_px as f64;
    let m = cfg.stroke_margin();
    let (hx, hy) = EllipseParams { u: 0.0, v: 0.0, a, b: minor, phi }.half_extents();
    let u = rng.random_range(hx + m..=size - hx - m);
    let v = rng.random_range(hy + m..=size - hy - m);
    // built directly: b <= a already holds and phi is in range
    let ellipse = EllipseParams { u, v, a, b: minor, phi };
    let arc_start_rad = rng.random_range(-std::f64::consts::FRAC_PI_2..=0.0);
    let arc_end_rad = rng.random_range(std::f64::consts::PI..=1.5 * std::f64::consts::PI);
    let brightness_factor = rng.random_range(cfg.brightness_min..=cfg.brightness_max);
    let distractor_seed = rng.next_u64();
    Ok(SampleSpec {
        has_marker,
        background_path,
        green_rgb: [r, g, b],
        ellipse,
        arc_start_rad,
        arc_end_rad,
        brightness_factor,
        distractor_seed,
    })
}

/// Draw the full, ordered list of specs for a manifest. Exactly
/// `positives` entries carry a marker, at shuffled positions.
pub fn sample_specs(
    manifest: &DatasetManifest,
    backgrounds: &[PathBuf],
    cfg: &AugmentConfig,
) -> Result<Vec<SampleSpec>, DatasetError> {
    manifest.validate()?;
    cfg.validate()?;
    if backgrounds.is_empty() {
        return Err(DatasetError::NoBackgrounds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut flags: Vec<bool> = (0..manifest.total).map(|i| i < manifest.positives()).collect();
    flags.shuffle(&mut rng);
    flags
        .into_iter()
        .map(|m| sample_spec(&mut rng, backgrounds, m, cfg))
        .collect()
}

/// One line of the label file. Pixel quantities are divided by the canvas
/// size and `phi` by pi; negatives carry zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub file: String,
    pub m: u8,
    pub u: f64,
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub arc_start: f64,
    pub arc_end: f64,
}

impl LabelRecord {
    pub fn from_spec(file: String, spec: &SampleSpec, canvas_px: u32) -> Self {
        if !spec.has_marker {
            return Self { file, m: 0, u: 0.0, v: 0.0, a: 0.0, b: 0.0, phi: 0.0, arc_start: 0.0, arc_end: 0.0 };
        }
        let s = canvas_px as f64;
        let e = &spec.ellipse;
        Self {
            file,
            m: 1,
            u: e.u / s,
            v: e.v / s,
            a: e.a / s,
            b: e.b / s,
            phi: e.phi / std::f64::consts::PI,
            arc_start: spec.arc_start_rad,
            arc_end: spec.arc_end_rad,
        }
    }

    /// Ellipse back in canvas pixels.
    pub fn ellipse(&self, canvas_px: u32) -> EllipseParams {
        let s = canvas_px as f64;
        EllipseParams {
            u: self.u * s,
            v: self.v * s,
            a: self.a * s,
            b: self.b * s,
            phi: self.phi * std::f64::consts::PI,
        }
    }
}

/// Image files (png, jpg, jpeg) directly inside `dir`, sorted by name.
pub fn list_backgrounds(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(DatasetError::NoBackgrounds);
    }
    Ok(out)
}

/// Write `n` procedural backgrounds (smooth colour gradients with blocky
/// texture) into `dir`. Useful when no photo collection is at hand.
pub fn write_procedural_backgrounds(dir: &Path, n: usize, seed: u64) -> Result<Vec<PathBuf>, DatasetError> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let (w, h) = (rng.random_range(320..=640u32), rng.random_range(320..=480u32));
        let c0: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let c1: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let block = rng.random_range(8..=48u32);
        let tex_seed = rng.next_u64();
        let img = image::RgbImage::from_fn(w, h, |x, y| {
            let t = (x as f64 / w as f64 + y as f64 / h as f64) * 0.5;
            let cell = ((x / block) as u64).wrapping_mul(0x9E37_79B9) ^ ((y / block) as u64).wrapping_mul(0x85EB_CA6B);
            let jitter = ((cell ^ tex_seed).wrapping_mul(0x2545_F491_4F6C_DD1D) >> 56) as f64 / 255.0 - 0.5;
            image::Rgb(std::array::from_fn(|k| {
                ((c0[k] * (1.0 - t) + c1[k] * t + 0.25 * jitter) * 255.0).round().clamp(0.0, 255.0) as u8
            }))
        });
        let path = dir.join(format!("bg_{i:03}.png"));
        img.save(&path).map_err(|e| DatasetError::Encode { path: path.clone(), reason: e.to_string() })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Summary of a finished generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub total: usize,
    pub positives: usize,
    pub label_path: PathBuf,
    pub image_dir: PathBuf,
}

/// Render every sample to `<out>/<image_dir>/NNNNNN.png` and write the
/// labels, in index order, to `<out>/<label_file>`.
pub fn generate(
    manifest: &DatasetManifest,
    backgrounds: &[PathBuf],
    cfg: &AugmentConfig,
    out: &Path,
) -> Result<GenerateReport, DatasetError> {
    let specs = sample_specs(manifest, backgrounds, cfg)?;
    let image_dir = out.join(&manifest.image_dir);
    fs::create_dir_all(&image_dir)?;

    // decode each background once
    let mut used: Vec<&PathBuf> = specs.iter().map(|s| &s.background_path).collect();
    used.sort();
    used.dedup();
    let decoded = used
        .par_iter()
        .map(|p| load_background(p).map(|img| ((*p).clone(), img)))
        .collect::<Result<std::collections::HashMap<_, _>, _>>()?;

    let labels = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let name = format!("{i:06}.png");
            let path = image_dir.join(&name);
            let img = render_on(spec, &decoded[&spec.background_path], cfg);
            img.save(&path).map_err(|e| DatasetError::Encode { path: path.clone(), reason: e.to_string() })?;
            Ok(LabelRecord::from_spec(format!("{}/{name}", manifest.image_dir), spec, cfg.canvas_px))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let label_path = out.join(&manifest.label_file);
    write_labels(&label_path, &labels)?;
    Ok(GenerateReport {
        total: labels.len(),
        positives: labels.iter().filter(|l| l.m == 1).count(),
        label_path,
        image_dir,
    })
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, DatasetError> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(DatasetError::from))
        .collect()
}
