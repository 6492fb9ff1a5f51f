//! Simulated PTZ camera: discrete zoom states, pan/tilt actuation with
//! transport latency, and the tracking control laws.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("normalised pixel offset {0} outside [-0.5, 0.5]")]
    OffsetOutOfRange(f64),
    #[error("invalid camera parameter: {0}")]
    InvalidParameter(String),
}

/// Pinhole intrinsics at the current zoom. No lens distortion is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub h_px: u32,
    pub v_px: u32,
    pub hfov_rad: f64,
    pub vfov_rad: f64,
}

impl CameraIntrinsics {
    pub fn new(h_px: u32, v_px: u32, hfov_rad: f64, vfov_rad: f64) -> Result<Self, CameraError> {
        if h_px == 0 || v_px == 0 {
            return Err(CameraError::InvalidParameter(format!(
                "resolution must be positive, got {h_px}x{v_px}"
            )));
        }
        for (name, fov) in [("hfov", hfov_rad), ("vfov", vfov_rad)] {
            if !(fov > 0.0 && fov < std::f64::consts::PI) {
                return Err(CameraError::InvalidParameter(format!(
                    "{name} must be in (0, pi), got {fov}"
                )));
            }
        }
        Ok(Self {
            h_px,
            v_px,
            hfov_rad,
            vfov_rad,
        })
    }

    /// Intrinsics for square pixels: VFOV follows from HFOV and the aspect ratio.
    pub fn from_hfov(h_px: u32, v_px: u32, hfov_rad: f64) -> Result<Self, CameraError> {
        let vfov = vfov_for(h_px, v_px, hfov_rad);
        Self::new(h_px, v_px, hfov_rad, vfov)
    }

    pub fn focal_x(&self) -> f64 {
        0.5 * self.h_px as f64 / (0.5 * self.hfov_rad).tan()
    }

    pub fn focal_y(&self) -> f64 {
        0.5 * self.v_px as f64 / (0.5 * self.vfov_rad).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.h_px as f64, 0.5 * self.v_px as f64)
    }

    /// Pixel position of a camera-frame point, `None` when it is not in front.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((cx + self.focal_x() * p.y / p.z, cy + self.focal_y() * p.x / p.z))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.h_px as f64 && v < self.v_px as f64
    }
}

pub fn vfov_for(h_px: u32, v_px: u32, hfov_rad: f64) -> f64 {
    2.0 * ((0.5 * hfov_rad).tan() * v_px as f64 / h_px as f64).atan()
}

/// Calibrated horizontal field of view for each discrete zoom state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ZoomTable {
    hfov_deg: Vec<f64>,
}

impl ZoomTable {
    pub const DEFAULT_HFOV_DEG: [f64; 8] = [54.0, 45.01, 37.87, 30.67, 24.21, 18.11, 12.99, 8.59];

    pub fn new(hfov_deg: Vec<f64>) -> Result<Self, CameraError> {
        if hfov_deg.is_empty() {
            return Err(CameraError::InvalidParameter("zoom table is empty".into()));
        }
        if hfov_deg.iter().any(|&h| !(h > 0.0 && h < 180.0)) {
            return Err(CameraError::InvalidParameter(
                "zoom table HFOV values must lie in (0, 180) degrees".into(),
            ));
        }
        if hfov_deg.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CameraError::InvalidParameter(
                "zoom table must be strictly decreasing".into(),
            ));
        }
        Ok(Self { hfov_deg })
    }

    pub fn len(&self) -> usize {
        self.hfov_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hfov_deg.is_empty()
    }

    pub fn max_state(&self) -> usize {
        self.hfov_deg.len() - 1
    }

    pub fn hfov_deg(&self, state: usize) -> f64 {
        self.hfov_deg[state.min(self.max_state())]
    }

    pub fn hfov_rad(&self, state: usize) -> f64 {
        self.hfov_deg(state).to_radians()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.hfov_deg
    }
}

impl Default for ZoomTable {
    fn default() -> Self {
        Self {
            hfov_deg: Self::DEFAULT_HFOV_DEG.to_vec(),
        }
    }
}

impl TryFrom<Vec<f64>> for ZoomTable {
    type Error = CameraError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ZoomTable> for Vec<f64> {
    fn from(t: ZoomTable) -> Self {
        t.hfov_deg
    }
}

/// Pan/tilt deltas, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PanTiltCommand {
    pub mu_pan: f64,
    pub mu_tilt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PendingCommand {
    due_s: f64,
    cmd: PanTiltCommand,
}

/// Pose and actuation state of the simulated camera.
///
/// Commands enter a transport-delay queue and are applied, quantised to the
/// actuator step, once `command_latency_s` has elapsed since they were issued.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraState {
    pub pan_rad: f64,
    pub tilt_rad: f64,
    pub zoom_state: usize,
    pub command_latency_s: f64,
    pub pan_tilt_step_rad: f64,
    clock_s: f64,
    pending: VecDeque<PendingCommand>,
}

impl CameraState {
    pub const DEFAULT_LATENCY_S: f64 = 0.13;
    pub const DEFAULT_STEP_DEG: f64 = 0.02;

    pub fn new(
        pan_rad: f64,
        tilt_rad: f64,
        zoom_state: usize,
        command_latency_s: f64,
        pan_tilt_step_rad: f64,
    ) -> Result<Self, CameraError> {
        if !(pan_tilt_step_rad > 0.0) {
            return Err(CameraError::InvalidParameter(format!(
                "pan/tilt step must be positive, got {pan_tilt_step_rad}"
            )));
        }
        if !(command_latency_s >= 0.0) {
            return Err(CameraError::InvalidParameter(format!(
                "command latency must be non-negative, got {command_latency_s}"
            )));
        }
        Ok(Self {
            pan_rad,
            tilt_rad,
            zoom_state,
            command_latency_s,
            pan_tilt_step_rad,
            clock_s: 0.0,
            pending: VecDeque::new(),
        })
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    pub fn pending_commands(&self) -> usize {
        self.pending.len()
    }

    /// Queue a command at the current clock.
    pub fn issue(&mut self, cmd: PanTiltCommand) {
        self.pending.push_back(PendingCommand {
            due_s: self.clock_s + self.command_latency_s,
            cmd,
        });
    }

    /// Advance the clock to `t_s`, applying every command that has come due.
    pub fn advance_to(&mut self, t_s: f64) {
        if t_s > self.clock_s {
            self.clock_s = t_s;
        }
        // small slack so that a latency equal to an integer number of ticks is not
        // pushed to the next tick by rounding in the accumulated clock
        while let Some(p) = self.pending.front() {
            if p.due_s > self.clock_s + 1e-9 {
                break;
            }
            let p = self.pending.pop_front().expect("front exists");
            self.pan_rad += self.quantise(p.cmd.mu_pan.to_radians());
            self.tilt_rad += self.quantise(p.cmd.mu_tilt.to_radians());
            self.tilt_rad = self
                .tilt_rad
                .clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
        }
    }

    pub fn advance(&mut self, dt_s: f64) {
        self.advance_to(self.clock_s + dt_s);
    }

    /// Round-to-nearest onto the actuator step.
    pub fn quantise(&self, delta_rad: f64) -> f64 {
        (delta_rad / self.pan_tilt_step_rad).round() * self.pan_tilt_step_rad
    }

    /// Unit vectors of the camera frame expressed in the world frame:
    /// `(tilt axis, pan axis, optical axis)`.
    pub fn axes(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        camera_axes(self.pan_rad, self.tilt_rad)
    }

    /// World-frame point expressed in the camera frame.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (ex, ey, ez) = self.axes();
        Vector3::new(ex.dot(p), ey.dot(p), ez.dot(p))
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (ex, ey, ez) = self.axes();
        ex * p.x + ey * p.y + ez * p.z
    }
}

impl Default for CameraState {
    fn default() -> Self {
        Self::new(
            0.0,
            0.0,
            0,
            Self::DEFAULT_LATENCY_S,
            Self::DEFAULT_STEP_DEG.to_radians(),
        )
        .expect("defaults are valid")
    }
}

pub fn camera_axes(pan: f64, tilt: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let (sp, cp) = pan.sin_cos();
    let (st, ct) = tilt.sin_cos();
    let optical = Vector3::new(st, ct * sp, ct * cp);
    let pan_axis = Vector3::new(0.0, cp, -sp);
    let tilt_axis = Vector3::new(ct, -st * sp, -st * cp);
    (tilt_axis, pan_axis, optical)
}

/// Queue `cmd` on a copy of `state` and advance it by `dt_s`.
pub fn apply_command(state: &CameraState, cmd: PanTiltCommand, dt_s: f64) -> CameraState {
    let mut next = state.clone();
    next.issue(cmd);
    next.advance(dt_s);
    next
}

/// Angles subtended by a normalised offset from the image centre.
///
/// Offsets are fractions of the frame dimension; the horizontal offset is
/// measured against HFOV and drives pan, the vertical one against VFOV and
/// drives tilt.
pub fn pixel_offset_to_angles(
    delta_u_norm: f64,
    delta_v_norm: f64,
    intrinsics: &CameraIntrinsics,
) -> Result<(f64, f64), CameraError> {
    for d in [delta_u_norm, delta_v_norm] {
        if !(d.abs() <= 0.5) {
            return Err(CameraError::OffsetOutOfRange(d));
        }
    }
    let theta_p = (delta_u_norm * 2.0 * (0.5 * intrinsics.hfov_rad).tan()).atan();
    let theta_t = (delta_v_norm * 2.0 * (0.5 * intrinsics.vfov_rad).tan()).atan();
    Ok((theta_p, theta_t))
}

/// Proportional pan/tilt command with a per-axis deadband.
///
/// Each axis commands `theta / scale` once `|theta|` exceeds `threshold_deg`
/// and zero otherwise. Returns `None` when neither axis is above threshold.
pub fn make_pan_tilt_command(
    theta_p_rad: f64,
    theta_t_rad: f64,
    scale: f64,
    threshold_deg: f64,
) -> Option<PanTiltCommand> {
    let axis = |theta_rad: f64| {
        let deg = theta_rad.to_degrees();
        (deg.abs() > threshold_deg).then(|| deg / scale)
    };
    match (axis(theta_p_rad), axis(theta_t_rad)) {
        (None, None) => None,
        (p, t) => Some(PanTiltCommand {
            mu_pan: p.unwrap_or(0.0),
            mu_tilt: t.unwrap_or(0.0),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoomPolicy {
    pub check_interval_s: f64,
    /// Zoom in when the marker is smaller than this fraction of the ROI width.
    pub zoom_in_below: f64,
    /// Zoom out when the marker is larger than this fraction of the ROI width.
    pub zoom_out_above: f64,
}

impl Default for ZoomPolicy {
    fn default() -> Self {
        Self {
            check_interval_s: 1.0,
            zoom_in_below: 0.25,
            zoom_out_above: 7.0 / 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomDecision {
    pub state: usize,
    pub last_check_s: f64,
}

impl ZoomPolicy {
    pub fn step(
        &self,
        d_obs_px: f64,
        roi_width_px: u32,
        state: usize,
        max_state: usize,
        now_s: f64,
        last_check_s: f64,
    ) -> ZoomDecision {
        if now_s - last_check_s < self.check_interval_s {
            return ZoomDecision {
                state,
                last_check_s,
            };
        }
        let roi = roi_width_px as f64;
        let state = if d_obs_px < self.zoom_in_below * roi {
            (state + 1).min(max_state)
        } else if d_obs_px > self.zoom_out_above * roi {
            state.saturating_sub(1)
        } else {
            state
        };
        ZoomDecision {
            state,
            last_check_s: now_s,
        }
    }
}

/// Zoom controller with the default thresholds over `max_state + 1` states.
pub fn zoom_step(
    d_obs_px: f64,
    roi_width_px: u32,
    state: usize,
    max_state: usize,
    now_s: f64,
    last_check_s: f64,
) -> ZoomDecision {
    ZoomPolicy::default().step(d_obs_px, roi_width_px, state, max_state, now_s, last_check_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hd(hfov_deg: f64) -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(1920, 1080, hfov_deg.to_radians()).unwrap()
    }

    #[test]
    fn zoom_table_defaults() {
        let t = ZoomTable::default();
        assert_eq!(t.len(), 8);
        assert_eq!(t.hfov_deg(0), 54.0);
        assert_eq!(t.hfov_deg(7), 8.59);
        assert!(ZoomTable::new(vec![30.0, 40.0]).is_err());
        assert!(ZoomTable::new(vec![]).is_err());
    }

    #[test]
    fn centred_target_needs_no_rotation() {
        let (p, t) = pixel_offset_to_angles(0.0, 0.0, &hd(54.0)).unwrap();
        assert_eq!((p, t), (0.0, 0.0));
    }

    #[test]
    fn frame_edge_maps_to_half_fov() {
        let (p, _) = pixel_offset_to_angles(0.5, 0.0, &hd(54.0)).unwrap();
        assert_abs_diff_eq!(p.to_degrees(), 27.0, epsilon = 1e-10);
        let (_, t) = pixel_offset_to_angles(0.0, -0.5, &hd(54.0)).unwrap();
        assert_abs_diff_eq!(t, -0.5 * hd(54.0).vfov_rad, epsilon = 1e-12);
    }

    #[test]
    fn quarter_offset_at_ninety_degrees() {
        let (p, _) = pixel_offset_to_angles(0.25, 0.0, &hd(90.0)).unwrap();
        assert_abs_diff_eq!(p.to_degrees(), 0.5f64.atan().to_degrees(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.to_degrees(), 26.565, epsilon = 1e-3);
    }

    #[test]
    fn offset_out_of_range() {
        assert_eq!(
            pixel_offset_to_angles(0.6, 0.0, &hd(54.0)),
            Err(CameraError::OffsetOutOfRange(0.6))
        );
    }

    #[test]
    fn deadband_suppresses_small_errors() {
        let half = 0.5f64.to_radians();
        assert_eq!(make_pan_tilt_command(half, half, 4.0, 1.0), None);
        assert_eq!(make_pan_tilt_command(0.0, 0.0, 4.0, 1.0), None);
        let cmd = make_pan_tilt_command(4f64.to_radians(), 0.0, 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(cmd.mu_pan, 1.0, epsilon = 1e-12);
        assert_eq!(cmd.mu_tilt, 0.0);
        let cmd = make_pan_tilt_command(-2f64.to_radians(), 0.2f64.to_radians(), 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(cmd.mu_pan, -0.5, epsilon = 1e-12);
        assert_eq!(cmd.mu_tilt, 0.0);
    }

    #[test]
    fn zoom_in_below_quarter() {
        let d = zoom_step(100.0, 448, 3, 7, 5.0, 3.9);
        assert_eq!(d.state, 4);
        assert_eq!(d.last_check_s, 5.0);
    }

    #[test]
    fn zoom_out_clamps_at_zero() {
        let d = zoom_step(270.0, 448, 0, 7, 5.0, 0.0);
        assert_eq!(d.state, 0);
        let d = zoom_step(270.0, 448, 2, 7, 5.0, 0.0);
        assert_eq!(d.state, 1);
    }

    #[test]
    fn zoom_in_clamps_at_max() {
        assert_eq!(zoom_step(10.0, 448, 7, 7, 5.0, 0.0).state, 7);
    }

    #[test]
    fn zoom_holds_between_thresholds() {
        for s in 0..8 {
            assert_eq!(zoom_step(150.0, 448, s, 7, 5.0, 0.0).state, s);
        }
    }

    #[test]
    fn zoom_interval_not_elapsed() {
        let d = zoom_step(10.0, 448, 3, 7, 5.5, 5.0);
        assert_eq!(d, ZoomDecision { state: 3, last_check_s: 5.0 });
    }

    #[test]
    fn latency_delays_command() {
        let s = CameraState::default();
        let cmd = PanTiltCommand { mu_pan: 1.0, mu_tilt: 0.0 };
        let early = apply_command(&s, cmd, 0.1);
        assert_eq!(early.pan_rad, 0.0);
        assert_eq!(early.pending_commands(), 1);
        let mut late = early.clone();
        late.advance(0.05);
        assert_abs_diff_eq!(late.pan_rad, 1f64.to_radians(), epsilon = 1e-15);
        assert_eq!(late.pending_commands(), 0);
    }

    #[test]
    fn whole_steps_apply_exactly() {
        let s = CameraState::default();
        let delta = s.quantise(1f64.to_radians());
        assert_eq!((delta / s.pan_tilt_step_rad).round() as i64, 50);
        assert_abs_diff_eq!(delta.to_degrees(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fractional_steps_round_to_nearest() {
        let s = CameraState::default();
        // 0.03 deg is 1.5 steps; 0.025 deg rounds down to one step, 0.035 up to two.
        let d = s.quantise(0.03f64.to_radians()).to_degrees();
        assert!((d - 0.02).abs() < 1e-12 || (d - 0.04).abs() < 1e-12, "{d}");
        assert_abs_diff_eq!(s.quantise(0.025f64.to_radians()).to_degrees(), 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(s.quantise(0.035f64.to_radians()).to_degrees(), 0.04, epsilon = 1e-12);
        assert_eq!(s.quantise(0.009f64.to_radians()), 0.0);
    }

    #[test]
    fn axes_are_orthonormal_and_match_spherical() {
        let s = CameraState::new(0.4, 0.7, 0, 0.0, 1e-4).unwrap();
        let (ex, ey, ez) = s.axes();
        assert_abs_diff_eq!(ex.dot(&ey), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ex.dot(&ez), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ey.dot(&ez), 0.0, epsilon = 1e-12);
        let p = Vector3::new(1.0, -2.0, 5.0);
        let back = s.camera_to_world(&s.world_to_camera(&p));
        assert_abs_diff_eq!((back - p).norm(), 0.0, epsilon = 1e-12);
    }

    /// Stationary marker anywhere in the field of view: repeated
    /// sense-command-apply cycles settle inside the deadband.
    #[test]
    fn closed_loop_converges_on_stationary_marker() {
        let intr = hd(54.0);
        let dt = 0.125;
        let mut worst_cycles = 0;
        for &(du, dv) in &[(0.45, 0.0), (-0.45, 0.4), (0.3, -0.45), (-0.2, -0.2), (0.05, 0.49)] {
            let mut cam = CameraState::default();
            let (tp, tt) = pixel_offset_to_angles(du, dv, &intr).unwrap();
            // place a marker on the ray through (du, dv)
            let target = cam.camera_to_world(&(Vector3::new(tt.tan(), tp.tan(), 1.0) * 10.0));
            let mut settled_at = None;
            for cycle in 0..40 {
                cam.advance_to(cycle as f64 * dt);
                let pc = cam.world_to_camera(&target);
                let (u, v) = intr.project(&pc).unwrap();
                let (cx, cy) = intr.principal_point();
                let (tp, tt) = pixel_offset_to_angles(
                    (u - cx) / intr.h_px as f64,
                    (v - cy) / intr.v_px as f64,
                    &intr,
                )
                .unwrap();
                match make_pan_tilt_command(tp, tt, 4.0, 1.0) {
                    Some(cmd) => {
                        settled_at = None;
                        cam.issue(cmd);
                    }
                    None => {
                        settled_at.get_or_insert(cycle);
                    }
                }
            }
            let at = settled_at.expect("loop settles");
            worst_cycles = worst_cycles.max(at);
        }
        assert!(worst_cycles <= 20, "took {worst_cycles} cycles");
    }

    proptest! {
        #[test]
        fn offset_mapping_is_odd(du in -0.5f64..0.5, dv in -0.5f64..0.5, hfov in 1.0f64..120.0) {
            let intr = hd(hfov);
            let (p, t) = pixel_offset_to_angles(du, dv, &intr).unwrap();
            let (pn, tn) = pixel_offset_to_angles(-du, -dv, &intr).unwrap();
            prop_assert_eq!(p, -pn);
            prop_assert_eq!(t, -tn);
        }

        #[test]
        fn zoom_state_stays_in_range(d in 0.0f64..600.0, s in 0usize..8, now in 0.0f64..10.0, last in 0.0f64..10.0) {
            let out = zoom_step(d, 448, s, 7, now, last);
            prop_assert!(out.state <= 7);
            prop_assert!((out.state as i64 - s as i64).abs() <= 1);
        }

        #[test]
        fn at_most_one_change_per_interval(ds in proptest::collection::vec(0.0f64..600.0, 1..30), start in 0usize..8) {
            let mut state = start;
            let mut last = -10.0;
            let mut changes = Vec::new();
            for (i, d) in ds.iter().enumerate() {
                let now = i as f64 * 0.1;
                let out = zoom_step(*d, 448, state, 7, now, last);
                if out.state != state { changes.push(now); }
                state = out.state;
                last = out.last_check_s;
            }
            for w in changes.windows(2) {
                prop_assert!(w[1] - w[0] >= 1.0 - 1e-9);
            }
        }

        #[test]
        fn no_chatter_below_threshold(tp in -0.99f64..0.99, tt in -0.99f64..0.99) {
            prop_assert!(make_pan_tilt_command(tp.to_radians(), tt.to_radians(), 4.0, 1.0).is_none());
        }
    }
}
