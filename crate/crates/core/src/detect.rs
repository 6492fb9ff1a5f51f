//! Detection contract, sliding-window ROI layout, the detector training loss
//! and a simulated detector whose size errors grow with the reported `|phi|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::geom::{wrap_pi, EllipseParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("frame {frame_w}x{frame_h} is smaller than the {window}px window")]
    FrameTooSmall { frame_w: u32, frame_h: u32, window: u32 },
    #[error("invalid ROI layout: {0}")]
    InvalidLayout(String),
    #[error("{field} = {value} is outside its normalised range")]
    InvalidNormalisation { field: &'static str, value: f64 },
    #[error("invalid noise model: {0}")]
    InvalidNoiseModel(String),
}

/// Detector output for one ROI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub present: bool,
    /// Full-frame pixel coordinates; meaningful only when `present`.
    pub ellipse: EllipseParams,
    /// Top-left corner of the ROI in the full frame.
    pub roi_origin: (u32, u32),
    pub confidence: f64,
}

impl Detection {
    pub fn absent(roi_origin: (u32, u32)) -> Self {
        Self {
            present: false,
            ellipse: EllipseParams::default(),
            roi_origin,
            confidence: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiWindowLayout {
    pub frame_w: u32,
    pub frame_h: u32,
    pub window: u32,
    pub overlap: u32,
}

impl RoiWindowLayout {
    pub const DEFAULT_WINDOW: u32 = 448;
    pub const DEFAULT_OVERLAP: u32 = 50;

    pub fn new(frame_w: u32, frame_h: u32) -> Self {
        Self {
            frame_w,
            frame_h,
            window: Self::DEFAULT_WINDOW,
            overlap: Self::DEFAULT_OVERLAP,
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        windows(self).map(|_| ())
    }

    pub fn stride(&self) -> u32 {
        self.window - self.overlap
    }

    pub fn contains(&self, origin: (u32, u32), u: f64, v: f64) -> bool {
        let (x0, y0) = (origin.0 as f64, origin.1 as f64);
        let w = self.window as f64;
        u >= x0 && u < x0 + w && v >= y0 && v < y0 + w
    }
}

fn axis_origins(frame: u32, window: u32, stride: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut o = 0;
    while o + window < frame {
        out.push(o);
        o += stride;
    }
    out.push(frame - window);
    out
}

/// ROI origins in row-major order. The last window on each axis is clamped to
/// end exactly at the frame edge.
pub fn windows(layout: &RoiWindowLayout) -> Result<Vec<(u32, u32)>, DetectError> {
    if layout.window == 0 || layout.overlap >= layout.window {
        return Err(DetectError::InvalidLayout(format!(
            "window ({}) must exceed overlap ({})",
            layout.window, layout.overlap
        )));
    }
    if layout.frame_w < layout.window || layout.frame_h < layout.window {
        return Err(DetectError::FrameTooSmall {
            frame_w: layout.frame_w,
            frame_h: layout.frame_h,
            window: layout.window,
        });
    }
    let xs = axis_origins(layout.frame_w, layout.window, layout.stride());
    let ys = axis_origins(layout.frame_h, layout.window, layout.stride());
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Windows sorted by distance from their centre to `near`; ties keep
/// row-major order.
pub fn windows_nearest_first(
    layout: &RoiWindowLayout,
    near: (f64, f64),
) -> Result<Vec<(u32, u32)>, DetectError> {
    let mut w = windows(layout)?;
    let half = 0.5 * layout.window as f64;
    let d2 = |o: &(u32, u32)| {
        let dx = o.0 as f64 + half - near.0;
        let dy = o.1 as f64 + half - near.1;
        dx * dx + dy * dy
    };
    w.sort_by(|a, b| d2(a).total_cmp(&d2(b)));
    Ok(w)
}

/// Wrapped absolute angle difference, in `[0, pi]`.
pub fn angular_loss(phi: f64, phi_hat: f64) -> f64 {
    let d = (phi - phi_hat).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub mu5: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mu1: 0.1,
            mu2: 10.0,
            mu3: 10.0,
            mu4: 5.0,
            mu5: 1.0,
        }
    }
}

/// Detector target or prediction in normalised units: `m`, `u`, `v`, `a`,
/// `b` in `[0, 1]` and `phi` in `[-1, 1]` (radians divided by pi).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalisedTarget {
    pub m: f64,
    pub u: f64,
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
}

impl NormalisedTarget {
    fn validate(&self) -> Result<(), DetectError> {
        for (field, value) in [
            ("m", self.m),
            ("u", self.u),
            ("v", self.v),
            ("a", self.a),
            ("b", self.b),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DetectError::InvalidNormalisation { field, value });
            }
        }
        if !(-1.0..=1.0).contains(&self.phi) {
            return Err(DetectError::InvalidNormalisation {
                field: "phi",
                value: self.phi,
            });
        }
        Ok(())
    }
}

/// Individual terms of the detector loss, already weighted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub classification: f64,
    pub centroid: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.classification + self.centroid + self.semi_major + self.semi_minor + self.angle
    }
}

pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy with the probability of each outcome floored at
/// [`BCE_EPS`].
pub fn binary_cross_entropy(m: f64, m_hat: f64) -> f64 {
    let mut loss = 0.0;
    if m > 0.0 {
        loss -= m * m_hat.max(BCE_EPS).ln();
    }
    if m < 1.0 {
        loss -= (1.0 - m) * (1.0 - m_hat).max(BCE_EPS).ln();
    }
    loss
}

/// Weighted detector loss, term by term.
///
/// The regression terms are gated by the ground-truth presence flag and
/// scaled by the ground-truth principal-circle diameter `d = 2a`: the
/// centroid error by `1/d`, the axis errors by `1/d^2`. The angle is given in
/// normalised units and converted back to radians before wrapping.
pub fn loss_breakdown(
    truth: &NormalisedTarget,
    pred: &NormalisedTarget,
    weights: &LossWeights,
) -> Result<LossBreakdown, DetectError> {
    truth.validate()?;
    pred.validate()?;
    let mut out = LossBreakdown {
        classification: weights.mu1 * binary_cross_entropy(truth.m, pred.m),
        ..Default::default()
    };
    if truth.m >= 0.5 {
        if !(truth.a > 0.0) {
            return Err(DetectError::InvalidNormalisation {
                field: "a",
                value: truth.a,
            });
        }
        let d = 2.0 * truth.a;
        let centroid = (truth.u - pred.u).hypot(truth.v - pred.v);
        out.centroid = weights.mu2 * centroid / d;
        out.semi_major = weights.mu3 * (truth.a - pred.a).abs() / (d * d);
        out.semi_minor = weights.mu4 * (truth.b - pred.b).abs() / (d * d);
        out.angle = weights.mu5
            * angular_loss(
                truth.phi * std::f64::consts::PI,
                pred.phi * std::f64::consts::PI,
            );
    }
    Ok(out)
}

pub fn total_loss(
    truth: &NormalisedTarget,
    pred: &NormalisedTarget,
    weights: &LossWeights,
) -> Result<f64, DetectError> {
    Ok(loss_breakdown(truth, pred, weights)?.total())
}

/// Error model of the simulated detector.
///
/// Every detection draws an angle perturbation `dphi`, from a wide Gaussian
/// with probability `outlier_rate` and a narrow one otherwise. The relative
/// size error is `sign(e) (|e| + phi_coupling |dphi|)` where `e` is a
/// zero-mean Gaussian residual with standard deviation `sigma_axis_frac`,
/// optionally AR(1)-correlated from one detection to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_center_px: f64,
    pub sigma_axis_frac: f64,
    /// AR(1) coefficient of the size residual between consecutive detections.
    pub axis_correlation: f64,
    pub sigma_phi: f64,
    pub outlier_rate: f64,
    pub sigma_phi_outlier: f64,
    pub phi_coupling: f64,
    pub false_negative_rate: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_center_px: 1.5,
            sigma_axis_frac: 0.022,
            axis_correlation: 0.9,
            sigma_phi: 0.03,
            outlier_rate: 0.08,
            sigma_phi_outlier: 0.29,
            phi_coupling: 0.4,
            false_negative_rate: 0.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// A detector that echoes the truth.
    pub fn noiseless() -> Self {
        Self {
            sigma_center_px: 0.0,
            sigma_axis_frac: 0.0,
            axis_correlation: 0.0,
            sigma_phi: 0.0,
            outlier_rate: 0.0,
            sigma_phi_outlier: 0.0,
            phi_coupling: 0.0,
            false_negative_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let sigmas = [
            ("sigma_center_px", self.sigma_center_px),
            ("sigma_axis_frac", self.sigma_axis_frac),
            ("sigma_phi", self.sigma_phi),
            ("sigma_phi_outlier", self.sigma_phi_outlier),
            ("phi_coupling", self.phi_coupling),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(DetectError::InvalidNoiseModel(format!(
                    "{name} must be finite and non-negative, got {s}"
                )));
            }
        }
        for (name, r) in [
            ("outlier_rate", self.outlier_rate),
            ("false_negative_rate", self.false_negative_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(DetectError::InvalidNoiseModel(format!(
                    "{name} must be in [0, 1], got {r}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.axis_correlation) {
            return Err(DetectError::InvalidNoiseModel(format!(
                "axis_correlation must be in [0, 1), got {}",
                self.axis_correlation
            )));
        }
        Ok(())
    }

    /// Closed-form Pearson correlation between `|dphi|` and the absolute
    /// relative size error, over detections with `|dphi| > threshold`.
    ///
    /// `|dphi|` is a two-component mixture of half-normals, independent of
    /// the residual, so the correlation is
    /// `c sd(X) / sqrt(c^2 var(X) + sigma^2 (1 - 2/pi))` with `X` the
    /// truncated mixture. Returns `None` when it is undefined.
    pub fn analytic_phi_size_pearson(&self, threshold: f64) -> Option<f64> {
        let comps = [
            (1.0 - self.outlier_rate, self.sigma_phi),
            (self.outlier_rate, self.sigma_phi_outlier),
        ];
        let (mut p, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (w, s) in comps {
            if w <= 0.0 || s <= 0.0 {
                continue;
            }
            let (tail, e1, e2) = half_normal_tail_moments(s, threshold);
            p += w * tail;
            m1 += w * e1;
            m2 += w * e2;
        }
        if !(p > 0.0) {
            return None;
        }
        let mean = m1 / p;
        let var = (m2 / p - mean * mean).max(0.0);
        let c = self.phi_coupling;
        let resid_var = self.sigma_axis_frac.powi(2) * (1.0 - 2.0 / std::f64::consts::PI);
        let denom = (c * c * var + resid_var).sqrt();
        if !(denom > 0.0) || var <= 0.0 {
            return None;
        }
        Some(c * var.sqrt() / denom)
    }
}

/// `(P(X > t), E[X; X > t], E[X^2; X > t])` for a half-normal with scale `s`.
fn half_normal_tail_moments(s: f64, t: f64) -> (f64, f64, f64) {
    let z = t / s;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = erfc(z / std::f64::consts::SQRT_2);
    let e1 = 2.0 * s * pdf;
    let e2 = s * s * (2.0 * z * pdf + tail);
    (tail, e1, e2)
}

/// Random state of a simulated detector: the RNG stream plus the current
/// value of the correlated size residual.
#[derive(Debug, Clone)]
pub struct DetectorState {
    rng: ChaCha8Rng,
    residual: Option<f64>,
}

impl DetectorState {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            residual: None,
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self { rng, residual: None }
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Simulated detection of `truth` (full-frame pixels) inside the ROI at
/// `roi_origin`.
///
/// The number of random draws per call is fixed, so the stream stays aligned
/// regardless of the outcome.
pub fn simulate_detection(
    truth: &EllipseParams,
    roi_origin: (u32, u32),
    model: &NoiseModel,
    state: &mut DetectorState,
) -> Detection {
    let miss = state.rng.random::<f64>() < model.false_negative_rate;
    let outlier = state.rng.random::<f64>() < model.outlier_rate;
    let (nu, nv, nphi, nres) = (state.normal(), state.normal(), state.normal(), state.normal());

    let sd = model.sigma_axis_frac;
    let rho = model.axis_correlation;
    let residual = match state.residual {
        None => sd * nres,
        Some(prev) => rho * prev + (1.0 - rho * rho).sqrt() * sd * nres,
    };
    state.residual = Some(residual);

    if miss {
        return Detection::absent(roi_origin);
    }

    let dphi = if outlier {
        model.sigma_phi_outlier * nphi
    } else {
        model.sigma_phi * nphi
    };
    let magnitude = residual.abs() + model.phi_coupling * dphi.abs();
    let rel = if residual < 0.0 { -magnitude } else { magnitude }.max(-0.9);

    let a = truth.a * (1.0 + rel);
    let b = (truth.b * (1.0 + rel)).clamp(0.0, a);
    Detection {
        present: true,
        ellipse: EllipseParams {
            u: truth.u + model.sigma_center_px * nu,
            v: truth.v + model.sigma_center_px * nv,
            a,
            b,
            phi: wrap_pi(truth.phi + dphi),
        },
        roi_origin,
        confidence: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn hd_window_origins() {
        let w = windows(&RoiWindowLayout::new(1920, 1080)).unwrap();
        let xs: Vec<u32> = w.iter().filter(|o| o.1 == 0).map(|o| o.0).collect();
        let ys: Vec<u32> = w.iter().filter(|o| o.0 == 0).map(|o| o.1).collect();
        assert_eq!(xs, vec![0, 398, 796, 1194, 1472]);
        assert_eq!(ys, vec![0, 398, 632]);
        assert_eq!(w.len(), 15);
        assert_eq!(w[1], (398, 0));
    }

    #[test]
    fn frame_equal_to_window() {
        let l = RoiWindowLayout { frame_w: 448, frame_h: 448, window: 448, overlap: 50 };
        assert_eq!(windows(&l).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn exact_tiling_without_overlap() {
        let l = RoiWindowLayout { frame_w: 300, frame_h: 200, window: 100, overlap: 0 };
        let w = windows(&l).unwrap();
        assert_eq!(w, vec![(0, 0), (100, 0), (200, 0), (0, 100), (100, 100), (200, 100)]);
    }

    #[test]
    fn layout_errors() {
        let l = RoiWindowLayout { frame_w: 300, frame_h: 200, window: 448, overlap: 50 };
        assert!(matches!(windows(&l), Err(DetectError::FrameTooSmall { .. })));
        let l = RoiWindowLayout { frame_w: 300, frame_h: 200, window: 50, overlap: 50 };
        assert!(matches!(windows(&l), Err(DetectError::InvalidLayout(_))));
    }

    #[test]
    fn nearest_window_first() {
        let l = RoiWindowLayout::new(1920, 1080);
        let w = windows_nearest_first(&l, (1900.0, 1000.0)).unwrap();
        assert_eq!(w[0], (1472, 632));
    }

    #[test]
    fn angular_loss_examples() {
        assert_eq!(angular_loss(-PI, PI), 0.0);
        assert_abs_diff_eq!(angular_loss(0.5, 0.2), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(angular_loss(3.0, -3.0), 2.0 * PI - 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_loss(3.0, -3.0), 0.2832, epsilon = 1e-4);
    }

    fn present(u: f64, v: f64, a: f64, b: f64, phi: f64) -> NormalisedTarget {
        NormalisedTarget { m: 1.0, u, v, a, b, phi }
    }

    #[test]
    fn perfect_prediction_has_no_regression_loss() {
        let t = present(0.4, 0.6, 0.2, 0.1, 0.3);
        let l = loss_breakdown(&t, &t, &LossWeights::default()).unwrap();
        assert_eq!(l.centroid + l.semi_major + l.semi_minor + l.angle, 0.0);
        assert_eq!(l.total(), l.classification);
    }

    #[test]
    fn absent_marker_only_pays_classification() {
        let truth = NormalisedTarget { m: 0.0, ..Default::default() };
        let pred = NormalisedTarget { m: 0.3, u: 0.9, v: 0.1, a: 0.5, b: 0.2, phi: -0.4 };
        let w = LossWeights::default();
        let l = total_loss(&truth, &pred, &w).unwrap();
        assert_abs_diff_eq!(l, 0.1 * -(0.7f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn hand_computed_loss() {
        let truth = present(0.5, 0.5, 0.2, 0.1, 0.0);
        let pred = present(0.6, 0.5, 0.25, 0.1, 0.0);
        let l = total_loss(&truth, &pred, &LossWeights::default()).unwrap();
        assert_abs_diff_eq!(l, 5.625, epsilon = 1e-9);
    }

    #[test]
    fn rejects_unnormalised_inputs() {
        let truth = present(1.5, 0.5, 0.2, 0.1, 0.0);
        assert!(matches!(
            total_loss(&truth, &truth, &LossWeights::default()),
            Err(DetectError::InvalidNormalisation { field: "u", .. })
        ));
        let bad_phi = present(0.5, 0.5, 0.2, 0.1, 1.5);
        assert!(total_loss(&bad_phi, &bad_phi, &LossWeights::default()).is_err());
    }

    #[test]
    fn bce_guards_log_zero() {
        assert_eq!(binary_cross_entropy(1.0, 1.0), 0.0);
        assert_abs_diff_eq!(binary_cross_entropy(1.0, 0.0), -(BCE_EPS.ln()), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_detector_echoes_truth() {
        let truth = EllipseParams::new(500.0, 300.0, 60.0, 20.0, 0.1);
        let mut st = DetectorState::new(3);
        let d = simulate_detection(&truth, (398, 0), &NoiseModel::noiseless(), &mut st);
        assert!(d.present);
        assert_eq!(d.ellipse, truth);
        assert_eq!(d.roi_origin, (398, 0));
    }

    #[test]
    fn certain_miss() {
        let truth = EllipseParams::new(500.0, 300.0, 60.0, 20.0, 0.1);
        let model = NoiseModel { false_negative_rate: 1.0, ..NoiseModel::default() };
        let mut st = DetectorState::new(3);
        assert!((0..100).all(|_| !simulate_detection(&truth, (0, 0), &model, &mut st).present));
    }

    #[test]
    fn seeded_detector_is_reproducible() {
        let truth = EllipseParams::new(500.0, 300.0, 60.0, 20.0, 0.1);
        let run = || {
            let mut st = DetectorState::new(11);
            (0..50)
                .map(|_| simulate_detection(&truth, (0, 0), &NoiseModel::default(), &mut st))
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ellipse.a.to_bits(), y.ellipse.a.to_bits());
            assert_eq!(x.ellipse.phi.to_bits(), y.ellipse.phi.to_bits());
        }
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn phi_size_correlation_matches_closed_form() {
        let truth = EllipseParams::new(500.0, 300.0, 60.0, 20.0, 0.0);
        for coupling in [0.1, 0.4, 1.0] {
            let model = NoiseModel { phi_coupling: coupling, ..NoiseModel::default() };
            let target = model.analytic_phi_size_pearson(0.175).unwrap();
            let mut st = DetectorState::new(99);
            let (mut phis, mut errs) = (Vec::new(), Vec::new());
            while phis.len() < 10_000 {
                let d = simulate_detection(&truth, (0, 0), &model, &mut st);
                if d.ellipse.phi.abs() > 0.175 {
                    phis.push(d.ellipse.phi.abs());
                    errs.push((d.ellipse.a / truth.a - 1.0).abs());
                }
            }
            let r = pearson(&phis, &errs);
            assert!((r - target).abs() <= 0.1, "coupling {coupling}: mc {r} vs analytic {target}");
        }
    }

    #[test]
    fn tail_moments_match_quadrature() {
        // trapezoid quadrature of the half-normal density on [t, 12 s]
        let (s, t) = (0.3, 0.175);
        let n = 200_000;
        let hi = 12.0 * s;
        let h = (hi - t) / n as f64;
        let dens = |x: f64| 2.0 / (s * (2.0 * PI).sqrt()) * (-0.5 * (x / s).powi(2)).exp();
        let (mut p, mut e1, mut e2) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let x = t + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } * h;
            p += w * dens(x);
            e1 += w * x * dens(x);
            e2 += w * x * x * dens(x);
        }
        let (tp, t1, t2) = half_normal_tail_moments(s, t);
        assert_abs_diff_eq!(tp, p, epsilon = 1e-9);
        assert_abs_diff_eq!(t1, e1, epsilon = 1e-9);
        assert_abs_diff_eq!(t2, e2, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn angular_loss_properties(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let l = angular_loss(a, b);
            prop_assert!((0.0..=PI).contains(&l));
            prop_assert!((l - angular_loss(b, a)).abs() < 1e-12);
            prop_assert!((l - angular_loss(a + 2.0 * PI, b)).abs() < 1e-9);
            prop_assert!((l - angular_loss(a, b - 2.0 * PI)).abs() < 1e-9);
            prop_assert!(angular_loss(a, a) == 0.0);
        }

        #[test]
        fn loss_grows_with_each_error(base in 0.0f64..0.2, extra in 0.001f64..0.1) {
            let w = LossWeights::default();
            let truth = present(0.5, 0.5, 0.3, 0.2, 0.0);
            let p0 = present(0.5 + base, 0.5, 0.3 + base, 0.2, 0.0);
            let l0 = total_loss(&truth, &p0, &w).unwrap();
            prop_assert!(l0 >= 0.0);
            let variants = [
                present(0.5 + base + extra, 0.5, 0.3 + base, 0.2, 0.0),
                present(0.5 + base, 0.5, 0.3 + base + extra, 0.2, 0.0),
                present(0.5 + base, 0.5, 0.3 + base, 0.2 + extra, 0.0),
                present(0.5 + base, 0.5, 0.3 + base, 0.2, extra),
            ];
            for p in variants {
                prop_assert!(total_loss(&truth, &p, &w).unwrap() > l0);
            }
        }

        #[test]
        fn centroid_term_is_scale_free(k in 0.2f64..3.0, du in -0.05f64..0.05, dv in -0.05f64..0.05) {
            let w = LossWeights::default();
            let t1 = present(0.3, 0.3, 0.1, 0.05, 0.0);
            let p1 = present(0.3 + du, 0.3 + dv, 0.1, 0.05, 0.0);
            let t2 = present(0.3 * k / 3.0, 0.3 * k / 3.0, 0.1 * k / 3.0, 0.05 * k / 3.0, 0.0);
            let p2 = present(t2.u + du * k / 3.0, t2.v + dv * k / 3.0, t2.a, t2.b, 0.0);
            let c1 = loss_breakdown(&t1, &p1, &w).unwrap().centroid;
            let c2 = loss_breakdown(&t2, &p2, &w).unwrap().centroid;
            prop_assert!((c1 - c2).abs() <= 1e-9 * c1.max(1.0));
        }

        #[test]
        fn windows_cover_every_pixel(fw in 448u32..2500, fh in 448u32..1500, win in 100u32..448, ov in 0u32..99) {
            let l = RoiWindowLayout { frame_w: fw, frame_h: fh, window: win, overlap: ov };
            let w = windows(&l).unwrap();
            let mut xs: Vec<u32> = w.iter().map(|o| o.0).collect();
            xs.sort(); xs.dedup();
            let mut ys: Vec<u32> = w.iter().map(|o| o.1).collect();
            ys.sort(); ys.dedup();
            for axis in [(&xs, fw), (&ys, fh)] {
                let (o, frame) = axis;
                prop_assert_eq!(o[0], 0);
                prop_assert_eq!(*o.last().unwrap() + win, frame);
                for pair in o.windows(2) {
                    // consecutive windows overlap by at least `ov`
                    prop_assert!(pair[0] + win >= pair[1] + ov);
                }
            }
        }
    }
}
