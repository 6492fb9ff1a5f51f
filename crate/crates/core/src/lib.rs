//! Range and bearing localisation of a circular marker from a pan-tilt-zoom
//! camera: projection geometry, camera control, detection, synthetic data,
//! estimation filters and a closed-loop simulator.

pub mod camera;
pub mod coords;
pub mod dataset;
pub mod detect;
pub mod estim;
pub mod geom;
pub mod sim;

pub use camera::{CameraIntrinsics, CameraState, PanTiltCommand, ZoomPolicy, ZoomTable};
pub use coords::{spherical_to_cartesian, CartesianCoord, SphericalCoord};
pub use detect::{Detection, NoiseModel, RoiWindowLayout};
pub use geom::{CirclePose3D, EllipseParams, MarkerSpec};
