//! Error statistics of a logged run against its ground truth.

use serde::{Deserialize, Serialize};

use super::log::StepRecord;
use super::SimError;
use crate::coords::CartesianCoord;

/// Only detections whose reported angle exceeds this magnitude enter the
/// angle/range-error correlation.
pub const CORRELATION_PHI_MIN: f64 = 0.175;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Steps with an estimate.
    pub n_samples: usize,
    /// Signed per-axis errors, estimate minus truth.
    pub err_x: Vec<f64>,
    pub err_y: Vec<f64>,
    pub err_z: Vec<f64>,
    pub err_3d: Vec<f64>,
    /// Signed range error, estimated minus true range.
    pub err_rho: Vec<f64>,
    pub median_3d_m: f64,
    pub rmse_3d_m: f64,
    pub rho_median_m: f64,
    pub rho_rmse_m: f64,
    pub detection_rate: f64,
    pub n_correlation_samples: usize,
    pub pearson_phi_vs_rho_error: Option<f64>,
    pub spearman_phi_vs_rho_error: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn rmse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|e| e * e).sum::<f64>() / values.len() as f64).sqrt()
}

/// Sample Pearson correlation; `None` for fewer than two points or zero
/// variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let den = (sxx * syy).sqrt();
    (den > 0.0).then(|| sxy / den)
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Compute metrics from a log whose truth and estimate share timestamps,
/// with the camera at the world origin.
pub fn evaluate_vs_truth(log: &[StepRecord]) -> Result<RunMetrics, SimError> {
    evaluate_vs_truth_from(log, CartesianCoord::default())
}

/// As [`evaluate_vs_truth`], measuring true range from `camera`.
pub fn evaluate_vs_truth_from(log: &[StepRecord], camera: CartesianCoord) -> Result<RunMetrics, SimError> {
    if log.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let mut m = RunMetrics {
        n_samples: 0,
        err_x: Vec::new(),
        err_y: Vec::new(),
        err_z: Vec::new(),
        err_3d: Vec::new(),
        err_rho: Vec::new(),
        median_3d_m: f64::NAN,
        rmse_3d_m: f64::NAN,
        rho_median_m: f64::NAN,
        rho_rmse_m: f64::NAN,
        detection_rate: 0.0,
        n_correlation_samples: 0,
        pearson_phi_vs_rho_error: None,
        spearman_phi_vs_rho_error: None,
    };
    let (mut phis, mut rho_errs) = (Vec::new(), Vec::new());
    let mut detected = 0usize;
    for r in log {
        let truth = r.truth();
        let true_rho = truth.distance(camera);
        if r.is_detected() {
            detected += 1;
            if r.phi.abs() > CORRELATION_PHI_MIN && r.rho_obs.is_finite() {
                phis.push(r.phi.abs());
                rho_errs.push((r.rho_obs - true_rho).abs());
            }
        }
        if !r.has_estimate() {
            continue;
        }
        let est = r.estimate();
        m.err_x.push(est.x_m - truth.x_m);
        m.err_y.push(est.y_m - truth.y_m);
        m.err_z.push(est.z_m - truth.z_m);
        m.err_3d.push(est.distance(truth));
        m.err_rho.push(r.rho_est - true_rho);
    }
    m.n_samples = m.err_3d.len();
    m.detection_rate = detected as f64 / log.len() as f64;
    if m.n_samples > 0 {
        let abs_rho: Vec<f64> = m.err_rho.iter().map(|e| e.abs()).collect();
        m.median_3d_m = median(&m.err_3d);
        m.rmse_3d_m = rmse(&m.err_3d);
        m.rho_median_m = median(&abs_rho);
        m.rho_rmse_m = rmse(&m.err_rho);
    }
    m.n_correlation_samples = phis.len();
    m.pearson_phi_vs_rho_error = pearson(&phis, &rho_errs);
    m.spearman_phi_vs_rho_error = spearman(&phis, &rho_errs);
    Ok(m)
}
