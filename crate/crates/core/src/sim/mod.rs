//! Closed-loop simulation: the marker flies a trajectory, the simulated
//! detector observes it through the PTZ camera, the controller steers the
//! camera, and the estimators turn observations into 3D positions.

mod log;
mod metrics;
mod scenarios;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{
    make_pan_tilt_command, pixel_offset_to_angles, CameraError, CameraIntrinsics, CameraState, ZoomPolicy, ZoomTable,
};
use crate::coords::{spherical_to_cartesian, CartesianCoord, SphericalCoord};
use crate::detect::{simulate_detection, windows_nearest_first, DetectError, DetectorState, NoiseModel, RoiWindowLayout};
use crate::estim::{Butterworth, ButterworthSpec, EstimError, FilterParams, RangeFilter};
use crate::geom::{estimate_range, project_circle_orthogonal, CirclePose3D, GeomError, MarkerSpec};

pub use log::{read_log_csv, write_log_csv, StepRecord, LOG_COLUMNS};
pub use metrics::{evaluate_vs_truth, evaluate_vs_truth_from, median, pearson, rmse, spearman, RunMetrics, CORRELATION_PHI_MIN};
pub use scenarios::{scenario, scenario_library, SCENARIO_NAMES};
pub use trajectory::{AttitudePhase, AttitudeProfile, Trajectory, Waypoint};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("unknown scenario `{name}`; available: {available}")]
    UnknownScenario { name: String, available: String },
    #[error("log is empty")]
    EmptyLog,
    #[error("log does not match the expected schema: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Estim(#[from] EstimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How range observations become range estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FilterMode {
    /// Use each observation as is.
    None,
    /// Particle filter with the angle-adaptive kernel.
    #[default]
    Adaptive,
    /// Particle filter with a constant kernel width in metres.
    Fixed(f64),
    /// Third-order Butterworth low-pass with this cutoff in Hz.
    Butterworth(f64),
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterMode::None => write!(f, "none"),
            FilterMode::Adaptive => write!(f, "apf"),
            FilterMode::Fixed(s) => write!(f, "fixed:{s}"),
            FilterMode::Butterworth(fc) => write!(f, "bw:{fc}"),
        }
    }
}

impl FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| *x > 0.0 && x.is_finite())
                .ok_or_else(|| format!("`{v}` is not a positive number"))
        };
        match s.split_once(':') {
            None if s == "none" => Ok(FilterMode::None),
            None if s == "apf" => Ok(FilterMode::Adaptive),
            Some(("fixed", v)) => Ok(FilterMode::Fixed(num(v)?)),
            Some(("bw", v)) => Ok(FilterMode::Butterworth(num(v)?)),
            _ => Err(format!("unknown filter `{s}`; expected apf, none, fixed:<sigma> or bw:<hz>")),
        }
    }
}

impl Serialize for FilterMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FilterMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub frame_w: u32,
    pub frame_h: u32,
    pub zoom_table: ZoomTable,
    pub latency_s: f64,
    pub pan_tilt_step_deg: f64,
    /// Camera position in the world frame.
    pub position: CartesianCoord,
    pub initial_zoom: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            frame_w: 1920,
            frame_h: 1080,
            zoom_table: ZoomTable::default(),
            latency_s: CameraState::DEFAULT_LATENCY_S,
            pan_tilt_step_deg: CameraState::DEFAULT_STEP_DEG,
            position: CartesianCoord::default(),
            initial_zoom: 0,
        }
    }
}

/// Proportional pan/tilt controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Commanded angle is the measured offset divided by this.
    pub scale: f64,
    pub threshold_deg: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            scale: 4.0,
            threshold_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub window: u32,
    pub overlap: u32,
    pub noise: NoiseModel,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: RoiWindowLayout::DEFAULT_WINDOW,
            overlap: RoiWindowLayout::DEFAULT_OVERLAP,
            noise: NoiseModel::default(),
        }
    }
}

/// Low-pass settings; the sample rate is `1 / dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub hfov_order: usize,
    pub hfov_cutoff_hz: f64,
    pub angle_order: usize,
    pub angle_cutoff_hz: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            hfov_order: 3,
            hfov_cutoff_hz: 0.6,
            angle_order: 1,
            angle_cutoff_hz: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trajectory: Trajectory,
    pub marker: MarkerSpec,
    pub camera: CameraConfig,
    pub control: ControlConfig,
    pub zoom: ZoomPolicy,
    pub detector: DetectorConfig,
    pub filter: FilterParams,
    pub filter_mode: FilterMode,
    pub smoothing: SmoothingConfig,
    pub dt_s: f64,
    /// Defaults to the trajectory's duration.
    pub duration_s: Option<f64>,
    pub tracking_grace_s: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trajectory: Trajectory {
                waypoints: vec![Waypoint {
                    t: 0.0,
                    position: CartesianCoord::new(0.0, 0.0, 5.0),
                }],
                attitude: None,
            },
            marker: MarkerSpec::default(),
            camera: CameraConfig::default(),
            control: ControlConfig::default(),
            zoom: ZoomPolicy::default(),
            detector: DetectorConfig::default(),
            filter: FilterParams::default(),
            filter_mode: FilterMode::default(),
            smoothing: SmoothingConfig::default(),
            dt_s: 0.125,
            duration_s: None,
            tracking_grace_s: 2.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return bad(format!("dt_s must be positive, got {}", self.dt_s));
        }
        if let Some(d) = self.duration_s {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("duration_s must be non-negative, got {d}"));
            }
        }
        if !(self.tracking_grace_s >= 0.0) {
            return bad(format!("tracking_grace_s must be non-negative, got {}", self.tracking_grace_s));
        }
        if !(self.control.scale > 0.0) || !(self.control.threshold_deg >= 0.0) {
            return bad("control.scale must be positive and control.threshold_deg non-negative".into());
        }
        if self.camera.initial_zoom > self.camera.zoom_table.max_state() {
            return bad(format!(
                "camera.initial_zoom {} exceeds the last zoom state {}",
                self.camera.initial_zoom,
                self.camera.zoom_table.max_state()
            ));
        }
        if !(self.marker.diameter_m > 0.0) {
            return bad(format!("marker.diameter_m must be positive, got {}", self.marker.diameter_m));
        }
        let z = &self.zoom;
        if !(z.check_interval_s >= 0.0 && z.zoom_in_below > 0.0 && z.zoom_out_above > z.zoom_in_below) {
            return bad("zoom thresholds must satisfy 0 < zoom_in_below < zoom_out_above".into());
        }
        self.trajectory.validate()?;
        self.detector.noise.validate()?;
        self.filter.validate()?;
        RoiWindowLayout {
            frame_w: self.camera.frame_w,
            frame_h: self.camera.frame_h,
            window: self.detector.window,
            overlap: self.detector.overlap,
        }
        .validate()?;
        let fs = 1.0 / self.dt_s;
        ButterworthSpec::new(self.smoothing.hfov_order, self.smoothing.hfov_cutoff_hz, fs).validate()?;
        ButterworthSpec::new(self.smoothing.angle_order, self.smoothing.angle_cutoff_hz, fs).validate()?;
        match self.filter_mode {
            FilterMode::Butterworth(fc) => ButterworthSpec::new(3, fc, fs).validate()?,
            FilterMode::Fixed(s) if !(s > 0.0) => return bad(format!("fixed kernel width must be positive, got {s}")),
            _ => {}
        }
        CameraState::new(0.0, 0.0, 0, self.camera.latency_s, self.camera.pan_tilt_step_deg.to_radians())?;
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.duration_s.unwrap_or_else(|| self.trajectory.duration())
    }

    pub fn sample_hz(&self) -> f64 {
        1.0 / self.dt_s
    }
}

/// Independent RNG streams of one run.
const STREAM_DETECTOR: u64 = 1;
const STREAM_FILTER: u64 = 2;
const STREAM_ATTITUDE: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Seed of run `index` in a sweep started from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Range estimation stage, shared by live runs and replays.
#[derive(Debug, Clone)]
pub struct RangeEstimator {
    mode: FilterMode,
    particle: Option<RangeFilter>,
    lowpass: Option<Butterworth>,
}

impl RangeEstimator {
    pub fn new(mode: FilterMode, params: &FilterParams, sample_hz: f64, seed: u64) -> Result<Self, SimError> {
        let rng = stream_rng(seed, STREAM_FILTER);
        let (particle, lowpass) = match mode {
            FilterMode::None => (None, None),
            FilterMode::Adaptive => (Some(RangeFilter::new(*params, rng)?), None),
            FilterMode::Fixed(s) => (Some(RangeFilter::new(params.fixed_kernel(s), rng)?), None),
            FilterMode::Butterworth(fc) => (None, Some(Butterworth::new(ButterworthSpec::new(3, fc, sample_hz))?)),
        };
        Ok(Self { mode, particle, lowpass })
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    pub fn estimate(&mut self, t: f64, rho_obs: f64, phi_abs: f64) -> Result<f64, SimError> {
        if let Some(pf) = self.particle.as_mut() {
            return Ok(pf.step(t, rho_obs, phi_abs)?);
        }
        if let Some(bw) = self.lowpass.as_mut() {
            return Ok(bw.step(rho_obs));
        }
        Ok(rho_obs)
    }
}

/// Observations that do not appear in the log but that the tracking and
/// zoom checks need.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Time of the first detection whose diameter lies inside the zoom band.
    pub acquisition_time_s: Option<f64>,
    pub steps_after_acquisition: usize,
    pub detected_after_acquisition: usize,
    pub in_zoom_band_after_acquisition: usize,
    /// Largest centroid offset from the image centre after acquisition,
    /// per axis, in pixels.
    pub max_offset_px: f64,
    /// Times at which the marker had been out of every window for longer
    /// than the grace period.
    pub tracking_lost_at: Vec<f64>,
    pub zoom_changes: usize,
}

impl RunDiagnostics {
    pub fn detection_rate_after_acquisition(&self) -> f64 {
        if self.steps_after_acquisition == 0 {
            return 0.0;
        }
        self.detected_after_acquisition as f64 / self.steps_after_acquisition as f64
    }

    pub fn zoom_band_fraction(&self) -> f64 {
        if self.steps_after_acquisition == 0 {
            return 0.0;
        }
        self.in_zoom_band_after_acquisition as f64 / self.steps_after_acquisition as f64
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: Vec<StepRecord>,
    pub metrics: RunMetrics,
    pub diagnostics: RunDiagnostics,
}

/// Run one closed-loop simulation.
///
/// Each step advances the camera clock (applying commands whose latency has
/// elapsed), projects the marker, runs the simulated detector on the first
/// window containing the centroid, converts the detection to range and
/// bearing, updates the estimators and issues new pan/tilt/zoom commands.
/// The lens field of view follows zoom changes with the same response as the
/// field-of-view smoother, so the smoothed value is the one used to project.
pub fn run(config: &RunConfig) -> Result<RunOutcome, SimError> {
    config.validate()?;
    let dt = config.dt_s;
    let fs = config.sample_hz();
    let cam_cfg = &config.camera;
    let table = &cam_cfg.zoom_table;
    let (w_px, h_px) = (cam_cfg.frame_w, cam_cfg.frame_h);
    let layout = RoiWindowLayout {
        frame_w: w_px,
        frame_h: h_px,
        window: config.detector.window,
        overlap: config.detector.overlap,
    };
    let roi = config.detector.window as f64;
    let band = (config.zoom.zoom_in_below * roi, config.zoom.zoom_out_above * roi);

    let mut detector = DetectorState::from_rng(stream_rng(config.seed ^ config.detector.noise.seed, STREAM_DETECTOR));
    let phase = AttitudePhase::draw(&mut stream_rng(config.seed, STREAM_ATTITUDE));
    let mut ranger = RangeEstimator::new(config.filter_mode, &config.filter, fs, config.seed)?;
    let sm = &config.smoothing;
    let mut hfov_lp = Butterworth::new(ButterworthSpec::new(sm.hfov_order, sm.hfov_cutoff_hz, fs))?;
    let mut pan_lp = Butterworth::new(ButterworthSpec::new(sm.angle_order, sm.angle_cutoff_hz, fs))?;
    let mut tilt_lp = Butterworth::new(ButterworthSpec::new(sm.angle_order, sm.angle_cutoff_hz, fs))?;

    let t0 = config.trajectory.start_time();
    let cam_pos = cam_cfg.position.to_vector();
    let aim = (config.trajectory.position_at(t0).to_vector() - cam_pos).normalize();
    let aim = CartesianCoord::from_vector(&aim).to_spherical();
    let mut camera = CameraState::new(
        aim.pan_total_rad,
        aim.tilt_total_rad,
        cam_cfg.initial_zoom,
        cam_cfg.latency_s,
        cam_cfg.pan_tilt_step_deg.to_radians(),
    )?;
    let mut last_zoom_check = f64::NEG_INFINITY;

    let n_steps = (config.duration() / dt + 1e-9).floor() as usize + 1;
    let mut log = Vec::with_capacity(n_steps);
    let mut diag = RunDiagnostics::default();
    let mut last_centroid: Option<(f64, f64)> = None;
    let mut last_seen = t0;
    let mut lost_reported = false;

    for k in 0..n_steps {
        let elapsed = k as f64 * dt;
        let t = t0 + elapsed;
        camera.advance_to(elapsed);
        let hfov = hfov_lp.step(table.hfov_rad(camera.zoom_state));
        let intr = CameraIntrinsics::from_hfov(w_px, h_px, hfov)?;
        let (cx, cy) = intr.principal_point();

        let truth_w = config.trajectory.position_at(t);
        let rel = truth_w.to_vector() - cam_pos;
        let pose = CirclePose3D::new(
            CartesianCoord::from_vector(&camera.world_to_camera(&rel)),
            camera.world_to_camera(&config.trajectory.normal_at(t, &phase)),
            config.marker.radius_m(),
        )?;

        let mut rec = StepRecord {
            t,
            truth_x: truth_w.x_m,
            truth_y: truth_w.y_m,
            truth_z: truth_w.z_m,
            est_x: f64::NAN,
            est_y: f64::NAN,
            est_z: f64::NAN,
            rho_obs: f64::NAN,
            rho_est: f64::NAN,
            phi: f64::NAN,
            zoom_state: camera.zoom_state,
            pan: camera.pan_rad,
            tilt: camera.tilt_rad,
            detected: 0,
        };

        let truth_ellipse = project_circle_orthogonal(&pose, &intr)
            .ok()
            .filter(|e| intr.contains(e.u, e.v));
        let window = match &truth_ellipse {
            Some(e) => windows_nearest_first(&layout, last_centroid.unwrap_or((cx, cy)))?
                .into_iter()
                .find(|&o| layout.contains(o, e.u, e.v)),
            None => None,
        };
        let detection = match (truth_ellipse, window) {
            (Some(e), Some(o)) => Some(simulate_detection(&e, o, &config.detector.noise, &mut detector)),
            _ => None,
        }
        .filter(|d| d.present && d.ellipse.a > 0.0);

        let acquired = diag.acquisition_time_s.is_some();
        match detection {
            Some(det) => {
                let e = det.ellipse;
                let d_obs = e.diameter();
                last_centroid = Some((e.u, e.v));
                last_seen = t;
                lost_reported = false;
                let in_band = d_obs >= band.0 && d_obs <= band.1;
                if !acquired && in_band {
                    diag.acquisition_time_s = Some(t);
                }
                if diag.acquisition_time_s.is_some() {
                    diag.steps_after_acquisition += 1;
                    diag.detected_after_acquisition += 1;
                    diag.in_zoom_band_after_acquisition += usize::from(in_band);
                    diag.max_offset_px = diag.max_offset_px.max((e.u - cx).abs()).max((e.v - cy).abs());
                }

                let rho_obs = estimate_range(&config.marker, d_obs, w_px, hfov)?;
                let du = ((e.u - cx) / w_px as f64).clamp(-0.5, 0.5);
                let dv = ((e.v - cy) / h_px as f64).clamp(-0.5, 0.5);
                let (theta_p, theta_t) = pixel_offset_to_angles(du, dv, &intr)?;
                let pan_total = pan_lp.step(camera.pan_rad + theta_p);
                let tilt_total = tilt_lp.step(camera.tilt_rad + theta_t);
                let rho_est = ranger.estimate(t, rho_obs, e.phi.abs())?;
                let est = spherical_to_cartesian(SphericalCoord {
                    rho_m: rho_est,
                    pan_total_rad: pan_total,
                    tilt_total_rad: tilt_total,
                });
                rec.set_estimate(CartesianCoord::from_vector(&(est.to_vector() + cam_pos)));
                rec.rho_obs = rho_obs;
                rec.rho_est = rho_est;
                rec.phi = e.phi;
                rec.detected = 1;

                if let Some(cmd) =
                    make_pan_tilt_command(theta_p, theta_t, config.control.scale, config.control.threshold_deg)
                {
                    camera.issue(cmd);
                }
                let z = config.zoom.step(
                    d_obs,
                    config.detector.window,
                    camera.zoom_state,
                    table.max_state(),
                    elapsed,
                    last_zoom_check,
                );
                if z.state != camera.zoom_state {
                    diag.zoom_changes += 1;
                }
                camera.zoom_state = z.state;
                last_zoom_check = z.last_check_s;
            }
            None => {
                if acquired {
                    diag.steps_after_acquisition += 1;
                }
                if !lost_reported && t - last_seen > config.tracking_grace_s {
                    diag.tracking_lost_at.push(t);
                    lost_reported = true;
                }
            }
        }
        log.push(rec);
    }

    let metrics = evaluate_vs_truth_from(&log, cam_cfg.position)?;
    Ok(RunOutcome {
        log,
        metrics,
        diagnostics: diag,
    })
}

/// Run `n` copies of `config` in parallel, run `i` seeded with
/// `derive_seed(config.seed, i)`.
pub fn run_sweep(config: &RunConfig, n: usize) -> Vec<Result<RunOutcome, SimError>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = RunConfig {
                seed: derive_seed(config.seed, i),
                ..config.clone()
            };
            run(&cfg)
        })
        .collect()
}

/// Settings for re-estimating range over a recorded log.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub mode: FilterMode,
    pub filter: FilterParams,
    pub dt_s: f64,
    pub seed: u64,
    pub camera_position: CartesianCoord,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            mode: FilterMode::Adaptive,
            filter: FilterParams::default(),
            dt_s: 0.125,
            seed: 0,
            camera_position: CartesianCoord::default(),
        }
    }
}

/// Re-run only the range estimator over the logged observations, keeping
/// each logged bearing. Rows without an observation pass through unchanged.
pub fn replay(log: &[StepRecord], config: &ReplayConfig) -> Result<Vec<StepRecord>, SimError> {
    if log.is_empty() {
        return Err(SimError::EmptyLog);
    }
    if !(config.dt_s > 0.0) {
        return Err(SimError::InvalidConfig(format!("dt_s must be positive, got {}", config.dt_s)));
    }
    let mut ranger = RangeEstimator::new(config.mode, &config.filter, 1.0 / config.dt_s, config.seed)?;
    let cam = config.camera_position.to_vector();
    let mut out = Vec::with_capacity(log.len());
    for r in log {
        let mut rec = *r;
        if r.is_detected() && r.rho_obs.is_finite() && r.has_estimate() {
            let dir = r.estimate().to_vector() - cam;
            let n = dir.norm();
            if n > 0.0 {
                let rho = ranger.estimate(r.t, r.rho_obs, r.phi.abs())?;
                rec.rho_est = rho;
                rec.set_estimate(CartesianCoord::from_vector(&(cam + dir * (rho / n))));
            }
        }
        out.push(rec);
    }
    Ok(out)
}
