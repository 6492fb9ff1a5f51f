//! Spherical and Cartesian coordinates relative to the PTZ camera.
//!
//! The camera frame is `x` along positive tilt, `y` along positive pan and
//! `z` along the optical axis at zero pan and tilt. Image rows grow with `x`
//! and image columns grow with `y`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Range and total pointing angles of a target as seen from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub rho_m: f64,
    /// Camera pan plus the in-image pan offset of the target.
    pub pan_total_rad: f64,
    /// Camera tilt plus the in-image tilt offset of the target.
    pub tilt_total_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartesianCoord {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

impl CartesianCoord {
    pub const fn new(x_m: f64, y_m: f64, z_m: f64) -> Self {
        Self { x_m, y_m, z_m }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x_m, self.y_m, self.z_m)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance(self, other: CartesianCoord) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    /// Inverse of [`spherical_to_cartesian`]: range plus pan/tilt of the
    /// direction to this point.
    pub fn to_spherical(self) -> SphericalCoord {
        let rho = self.norm();
        if rho == 0.0 {
            return SphericalCoord {
                rho_m: 0.0,
                pan_total_rad: 0.0,
                tilt_total_rad: 0.0,
            };
        }
        SphericalCoord {
            rho_m: rho,
            pan_total_rad: self.y_m.atan2(self.z_m),
            tilt_total_rad: (self.x_m / rho).clamp(-1.0, 1.0).asin(),
        }
    }
}

/// Convert range plus total pan/tilt to Cartesian metres.
pub fn spherical_to_cartesian(coord: SphericalCoord) -> CartesianCoord {
    let SphericalCoord {
        rho_m: rho,
        pan_total_rad: pan,
        tilt_total_rad: tilt,
    } = coord;
    CartesianCoord {
        x_m: rho * tilt.sin(),
        y_m: rho * tilt.cos() * pan.sin(),
        z_m: rho * tilt.cos() * pan.cos(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sph(rho_m: f64, pan_deg: f64, tilt_deg: f64) -> SphericalCoord {
        SphericalCoord {
            rho_m,
            pan_total_rad: pan_deg.to_radians(),
            tilt_total_rad: tilt_deg.to_radians(),
        }
    }

    #[test]
    fn boresight() {
        let c = spherical_to_cartesian(sph(3.5, 0.0, 0.0));
        assert_eq!(c, CartesianCoord::new(0.0, 0.0, 3.5));
    }

    #[test]
    fn straight_up() {
        let c = spherical_to_cartesian(sph(2.0, 0.0, 90.0));
        assert_abs_diff_eq!(c.x_m, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.y_m, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.z_m, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn worked_example() {
        let c = spherical_to_cartesian(sph(5.047, 10.0, 5.0));
        // reference values are quoted to four decimals with about 1e-4 of
        // accumulated rounding
        assert_abs_diff_eq!(c.x_m, 0.4399, epsilon = 2e-4);
        assert_abs_diff_eq!(c.y_m, 0.8730, epsilon = 2e-4);
        assert_abs_diff_eq!(c.z_m, 4.9513, epsilon = 2e-4);
        assert_abs_diff_eq!(c.norm(), 5.047, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn preserves_norm(rho in 0.0f64..100.0, pan in -3.2f64..3.2, tilt in -1.6f64..1.6) {
            let c = spherical_to_cartesian(SphericalCoord { rho_m: rho, pan_total_rad: pan, tilt_total_rad: tilt });
            prop_assert!((c.norm() - rho).abs() <= 1e-12 * rho.max(1.0));
        }

        #[test]
        fn spherical_round_trip(rho in 0.1f64..100.0, pan in -3.0f64..3.0, tilt in -1.5f64..1.5) {
            let s = SphericalCoord { rho_m: rho, pan_total_rad: pan, tilt_total_rad: tilt };
            let back = spherical_to_cartesian(s).to_spherical();
            prop_assert!((back.rho_m - rho).abs() < 1e-9);
            prop_assert!((back.pan_total_rad - pan).abs() < 1e-9);
            prop_assert!((back.tilt_total_rad - tilt).abs() < 1e-9);
        }
    }
}
