//! Named preset scenarios.

use super::{RunConfig, SimError, Trajectory};
use crate::coords::CartesianCoord;
use crate::sim::AttitudeProfile;

pub const SCENARIO_NAMES: [&str; 3] = ["s-path", "square-indoor", "square-outdoor"];

fn pt(x: f64, y: f64, z: f64) -> CartesianCoord {
    CartesianCoord::new(x, y, z)
}

/// Three horizontal passes flown at 0.75 m/s at 2, 4 and 6 m height across a 10 m wide face
/// that recedes from 7.5 m to 14 m, joined by vertical risers.
fn s_path() -> Trajectory {
    let (ay, az) = (-4.0, 6.0);
    let (by, bz) = (4.0, 12.0);
    let points = [
        pt(2.0, ay, az),
        pt(2.0, by, bz),
        pt(4.0, by, bz),
        pt(4.0, ay, az),
        pt(6.0, ay, az),
        pt(6.0, by, bz),
    ];
    let speeds = [0.75, 0.5, 0.75, 0.5, 0.75];
    Trajectory::from_path(&points, &speeds, Some(AttitudeProfile::default())).expect("preset is valid")
}

/// A 3 m by 2.6 m rectangle at 1.75 m height, flown at 0.5 m/s.
fn square_indoor() -> Trajectory {
    let h = 1.75;
    let points = [
        pt(h, -1.5, 1.6),
        pt(h, 1.5, 1.6),
        pt(h, 1.5, 4.2),
        pt(h, -1.5, 4.2),
        pt(h, -1.5, 1.6),
    ];
    Trajectory::from_path(&points, &[0.5; 4], Some(AttitudeProfile::default())).expect("preset is valid")
}

/// A 20 m square at 10 m height, flown at 1.2 m/s.
fn square_outdoor() -> Trajectory {
    let h = 10.0;
    let points = [
        pt(h, -10.0, 5.0),
        pt(h, 10.0, 5.0),
        pt(h, 10.0, 25.0),
        pt(h, -10.0, 25.0),
        pt(h, -10.0, 5.0),
    ];
    Trajectory::from_path(&points, &[1.2; 4], Some(AttitudeProfile::default())).expect("preset is valid")
}

/// Every preset with default settings.
pub fn scenario_library() -> Vec<(&'static str, RunConfig)> {
    SCENARIO_NAMES
        .iter()
        .map(|&n| (n, scenario(n).expect("listed name")))
        .collect()
}

pub fn scenario(name: &str) -> Result<RunConfig, SimError> {
    let trajectory = match name {
        "s-path" => s_path(),
        "square-indoor" => square_indoor(),
        "square-outdoor" => square_outdoor(),
        _ => {
            return Err(SimError::UnknownScenario {
                name: name.to_string(),
                available: SCENARIO_NAMES.join(", "),
            })
        }
    };
    Ok(RunConfig {
        trajectory,
        ..RunConfig::default()
    })
}
