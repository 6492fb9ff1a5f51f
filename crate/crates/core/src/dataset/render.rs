//! Rasterisation of a sample: background crop, green speckle, anti-aliased
//! elliptical arc, brightness scaling and cutout occlusions.

use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;

use super::{AugmentConfig, DatasetError, SampleSpec};
use crate::geom::EllipseParams;

/// Per-pixel stroke coverage in `[0, 1]` for an elliptical arc, row-major
/// over a `size x size` canvas.
///
/// Coverage is a box of `width` pixels across the curve convolved with a
/// Gaussian of `blur_sigma`; with no blur a pixel is either inside the
/// stroke or not.
pub fn arc_coverage(
    ellipse: &EllipseParams,
    arc_start: f64,
    arc_end: f64,
    width: f64,
    blur_sigma: f64,
    size: u32,
) -> Vec<f32> {
    let n = size as usize;
    let mut dist = vec![f32::INFINITY; n * n];
    let half = 0.5 * width;
    let reach = half + 3.0 * blur_sigma + 1.0;
    // sample the arc finely enough that consecutive points are < 0.25 px apart
    let span = (arc_end - arc_start).abs();
    let steps = ((span * ellipse.a.max(1.0)) / 0.25).ceil().max(1.0) as usize;
    let r = reach.ceil() as i64;
    for k in 0..=steps {
        let t = arc_start + (arc_end - arc_start) * k as f64 / steps as f64;
        let (px, py) = ellipse.point_at(t);
        let (ix, iy) = (px.floor() as i64, py.floor() as i64);
        for y in (iy - r).max(0)..=(iy + r).min(n as i64 - 1) {
            for x in (ix - r).max(0)..=(ix + r).min(n as i64 - 1) {
                // pixel centres sit at integer + 0.5
                let d = ((x as f64 + 0.5 - px).hypot(y as f64 + 0.5 - py)) as f32;
                let cell = &mut dist[y as usize * n + x as usize];
                if d < *cell {
                    *cell = d;
                }
            }
        }
    }
    dist.into_iter()
        .map(|d| {
            let d = d as f64;
            if !d.is_finite() {
                0.0
            } else if blur_sigma <= 0.0 {
                if d <= half {
                    1.0
                } else {
                    0.0
                }
            } else {
                let s = blur_sigma * std::f64::consts::SQRT_2;
                (0.5 * (erf((half - d) / s) + erf((half + d) / s))) as f32
            }
        })
        .collect()
}

/// Load a background from disk.
pub fn load_background(path: &std::path::Path) -> Result<RgbImage, DatasetError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| DatasetError::BackgroundUnreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Render `spec` on its background, loaded from disk.
pub fn render(spec: &SampleSpec, cfg: &AugmentConfig) -> Result<RgbImage, DatasetError> {
    let bg = load_background(&spec.background_path)?;
    Ok(render_on(spec, &bg, cfg))
}

/// Render `spec` on an already decoded background.
pub fn render_on(spec: &SampleSpec, background: &RgbImage, cfg: &AugmentConfig) -> RgbImage {
    let size = cfg.canvas_px;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.distractor_seed);
    let mut img = fill_crop(background, size, &mut rng);

    // green speckle distractors
    let n_speckle = rng.random_range(0..=cfg.speckle_max);
    for _ in 0..n_speckle {
        let x = rng.random_range(0..size);
        let y = rng.random_range(0..size);
        img.put_pixel(x, y, Rgb(random_green(&mut rng)));
    }

    if spec.has_marker {
        let cov = arc_coverage(
            &spec.ellipse,
            spec.arc_start_rad,
            spec.arc_end_rad,
            cfg.stroke_width_px,
            cfg.stroke_blur_sigma_px,
            size,
        );
        let g = spec.green_rgb.map(f64::from);
        for (i, px) in img.pixels_mut().enumerate() {
            let a = cov[i] as f64;
            if a > 0.0 {
                for c in 0..3 {
                    px.0[c] = (px.0[c] as f64 * (1.0 - a) + g[c] * a).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    for px in img.pixels_mut() {
        for c in px.0.iter_mut() {
            *c = (*c as f64 * spec.brightness_factor).round().clamp(0.0, 255.0) as u8;
        }
    }

    // cutouts: rectangles filled with uniform noise or black
    let n_cut = rng.random_range(0..=cfg.cutout_max);
    for _ in 0..n_cut {
        let w = rng.random_range(cfg.cutout_min_px..=cfg.cutout_max_px).min(size);
        let h = rng.random_range(cfg.cutout_min_px..=cfg.cutout_max_px).min(size);
        let x0 = rng.random_range(0..=size - w);
        let y0 = rng.random_range(0..=size - h);
        let noise = rng.random_bool(0.5);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                let p = if noise { Rgb([rng.random(), rng.random(), rng.random()]) } else { Rgb([0, 0, 0]) };
                img.put_pixel(x, y, p);
            }
        }
    }

    if rng.random_bool(cfg.blur_probability) {
        let sigma = rng.random_range(cfg.blur_sigma_range.0..=cfg.blur_sigma_range.1);
        img = imageops::blur(&img, sigma as f32);
    }
    img
}

fn random_green<R: Rng + ?Sized>(rng: &mut R) -> [u8; 3] {
    let g: u8 = rng.random_range(150..=255);
    [rng.random_range(0..=g - 15), g, rng.random_range(0..=g - 15)]
}

/// Scale the background so it covers the canvas, then take a random crop.
fn fill_crop<R: Rng + ?Sized>(bg: &RgbImage, size: u32, rng: &mut R) -> RgbImage {
    let (w, h) = bg.dimensions();
    let scale = size as f64 / w.min(h) as f64;
    let nw = ((w as f64 * scale).round() as u32).max(size);
    let nh = ((h as f64 * scale).round() as u32).max(size);
    let resized = imageops::resize(bg, nw, nh, imageops::FilterType::Triangle);
    let x0 = rng.random_range(0..=nw - size);
    let y0 = rng.random_range(0..=nh - size);
    imageops::crop_imm(&resized, x0, y0, size, size).to_image()
}
