//! Per-step simulation log and its CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::coords::CartesianCoord;

pub const LOG_COLUMNS: [&str; 14] = [
    "t", "truth_x", "truth_y", "truth_z", "est_x", "est_y", "est_z", "rho_obs", "rho_est", "phi",
    "zoom_state", "pan", "tilt", "detected",
];

/// One simulation step. Estimate and observation fields are NaN when the
/// marker was not detected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_z: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub rho_obs: f64,
    pub rho_est: f64,
    pub phi: f64,
    pub zoom_state: usize,
    pub pan: f64,
    pub tilt: f64,
    pub detected: u8,
}

impl StepRecord {
    pub fn truth(&self) -> CartesianCoord {
        CartesianCoord::new(self.truth_x, self.truth_y, self.truth_z)
    }

    pub fn estimate(&self) -> CartesianCoord {
        CartesianCoord::new(self.est_x, self.est_y, self.est_z)
    }

    pub fn is_detected(&self) -> bool {
        self.detected != 0
    }

    pub fn has_estimate(&self) -> bool {
        self.est_x.is_finite() && self.est_y.is_finite() && self.est_z.is_finite()
    }

    pub fn set_estimate(&mut self, est: CartesianCoord) {
        self.est_x = est.x_m;
        self.est_y = est.y_m;
        self.est_z = est.z_m;
    }
}

pub fn write_log_csv<W: Write>(log: &[StepRecord], writer: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a log, requiring every column of [`LOG_COLUMNS`].
pub fn read_log_csv<R: Read>(reader: R) -> Result<Vec<StepRecord>, SimError> {
    let mut rd = csv::Reader::from_reader(reader);
    let headers = rd.headers()?.clone();
    let missing: Vec<&str> = LOG_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(SimError::SchemaMismatch(format!("missing column(s): {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for (i, row) in rd.deserialize().enumerate() {
        let rec: StepRecord = row.map_err(|e| SimError::SchemaMismatch(format!("row {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
