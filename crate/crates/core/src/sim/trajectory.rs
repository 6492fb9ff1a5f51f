//! Timestamped marker paths with linear interpolation and an optional
//! platform attitude wobble that tilts the marker's normal.

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::coords::CartesianCoord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    #[serde(flatten)]
    pub position: CartesianCoord,
}

/// Sinusoidal roll and pitch of the platform carrying the marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeProfile {
    pub amplitude_rad: f64,
    pub roll_period_s: f64,
    pub pitch_period_s: f64,
}

impl Default for AttitudeProfile {
    fn default() -> Self {
        Self {
            amplitude_rad: 1.5f64.to_radians(),
            roll_period_s: 3.1,
            pitch_period_s: 4.3,
        }
    }
}

/// Phases drawn once per run so that the wobble differs between seeds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudePhase {
    pub roll: f64,
    pub pitch: f64,
}

impl AttitudePhase {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            roll: rng.random::<f64>() * std::f64::consts::TAU,
            pitch: rng.random::<f64>() * std::f64::consts::TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub attitude: Option<AttitudeProfile>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>, attitude: Option<AttitudeProfile>) -> Result<Self, SimError> {
        let t = Self { waypoints, attitude };
        t.validate()?;
        Ok(t)
    }

    /// Visit `points` in order, moving at `speeds[i]` m/s along segment `i`.
    pub fn from_path(
        points: &[CartesianCoord],
        speeds: &[f64],
        attitude: Option<AttitudeProfile>,
    ) -> Result<Self, SimError> {
        if points.is_empty() || speeds.len() + 1 != points.len() {
            return Err(SimError::InvalidTrajectory(format!(
                "{} points need {} segment speeds, got {}",
                points.len(),
                points.len().saturating_sub(1),
                speeds.len()
            )));
        }
        let mut t = 0.0;
        let mut waypoints = vec![Waypoint { t, position: points[0] }];
        for (pair, &speed) in points.windows(2).zip(speeds) {
            if !(speed > 0.0) {
                return Err(SimError::InvalidTrajectory(format!("segment speed {speed} must be positive")));
            }
            t += pair[0].distance(pair[1]) / speed;
            waypoints.push(Waypoint { t, position: pair[1] });
        }
        Self::new(waypoints, attitude)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.is_empty() {
            return Err(SimError::InvalidTrajectory("no waypoints".into()));
        }
        for w in &self.waypoints {
            let p = w.position;
            if !(w.t.is_finite() && p.x_m.is_finite() && p.y_m.is_finite() && p.z_m.is_finite()) {
                return Err(SimError::InvalidTrajectory(format!("non-finite waypoint at t = {}", w.t)));
            }
        }
        for pair in self.waypoints.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return Err(SimError::InvalidTrajectory(format!(
                    "timestamps must increase strictly ({} then {})",
                    pair[0].t, pair[1].t
                )));
            }
        }
        Ok(())
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Position at `t`, held constant outside the waypoint span.
    pub fn position_at(&self, t: f64) -> CartesianCoord {
        let w = &self.waypoints;
        if t <= w[0].t {
            return w[0].position;
        }
        let i = w.partition_point(|p| p.t <= t);
        if i >= w.len() {
            return w[w.len() - 1].position;
        }
        let (p0, p1) = (&w[i - 1], &w[i]);
        let s = (t - p0.t) / (p1.t - p0.t);
        let a = p0.position.to_vector();
        let b = p1.position.to_vector();
        CartesianCoord::from_vector(&(a + (b - a) * s))
    }

    /// Segment speeds in m/s.
    pub fn speeds(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|p| p[0].position.distance(p[1].position) / (p[1].t - p[0].t))
            .collect()
    }

    /// Axis-aligned bounds of the waypoints: `(min, max)`.
    pub fn bounds(&self) -> (CartesianCoord, CartesianCoord) {
        let mut lo = self.waypoints[0].position.to_vector();
        let mut hi = lo;
        for w in &self.waypoints {
            let p = w.position.to_vector();
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        (CartesianCoord::from_vector(&lo), CartesianCoord::from_vector(&hi))
    }

    /// Marker normal at `t`: world up (`+x`) rotated by the platform's roll
    /// about the `z` axis and pitch about the `y` axis.
    pub fn normal_at(&self, t: f64, phase: &AttitudePhase) -> Vector3<f64> {
        let up = Vector3::x();
        let Some(att) = &self.attitude else {
            return up;
        };
        let tau = std::f64::consts::TAU;
        let roll = att.amplitude_rad * (tau * t / att.roll_period_s + phase.roll).sin();
        let pitch = att.amplitude_rad * (tau * t / att.pitch_period_s + phase.pitch).sin();
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), roll)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch);
        r * up
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line() -> Trajectory {
        Trajectory::from_path(
            &[CartesianCoord::new(0.0, 0.0, 5.0), CartesianCoord::new(0.0, 2.0, 5.0)],
            &[1.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn linear_interpolation() {
        let t = line();
        assert_eq!(t.end_time(), 2.0);
        assert_abs_diff_eq!(t.position_at(0.5).y_m, 0.5, epsilon = 1e-12);
        assert_eq!(t.position_at(-1.0), CartesianCoord::new(0.0, 0.0, 5.0));
        assert_eq!(t.position_at(9.0), CartesianCoord::new(0.0, 2.0, 5.0));
        assert_eq!(t.speeds(), vec![1.0]);
    }

    #[test]
    fn timestamps_must_increase() {
        let p = CartesianCoord::new(0.0, 0.0, 1.0);
        let w = vec![Waypoint { t: 0.0, position: p }, Waypoint { t: 0.0, position: p }];
        assert!(matches!(Trajectory::new(w, None), Err(SimError::InvalidTrajectory(_))));
    }

    #[test]
    fn level_platform_points_up() {
        let t = line();
        assert_eq!(t.normal_at(1.0, &AttitudePhase::default()), Vector3::x());
    }

    #[test]
    fn wobble_stays_small() {
        let mut t = line();
        t.attitude = Some(AttitudeProfile::default());
        let ph = AttitudePhase { roll: 0.3, pitch: 1.1 };
        for k in 0..100 {
            let n = t.normal_at(k as f64 * 0.1, &ph);
            assert_abs_diff_eq!(n.norm(), 1.0, epsilon = 1e-12);
            assert!(n.x.acos() <= 2.0 * 1.5f64.to_radians() + 1e-9);
        }
    }
}
