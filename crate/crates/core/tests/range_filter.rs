//! Range filter behaviour on synthetic range tracks.

use ptzloc_core::estim::{FilterParams, RangeFilter};
use ptzloc_core::sim::{median, rmse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DT: f64 = 0.125;
const STEPS: usize = 200;

fn true_range(k: usize) -> f64 {
    let t = k as f64 * DT;
    8.0 + 2.0 * (0.2 * t).sin()
}

struct Track {
    truth: Vec<f64>,
    obs: Vec<f64>,
    phi: Vec<f64>,
}

/// Gaussian observation noise; with `spikes`, every 15th observation is
/// pushed 2 to 3 m away and reported with a large angle.
fn track(seed: u64, sigma: f64, spikes: bool) -> Track {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut t = Track { truth: Vec::new(), obs: Vec::new(), phi: Vec::new() };
    for k in 0..STEPS {
        let rho = true_range(k);
        let mut o = rho + noise.sample(&mut rng);
        let mut phi = if spikes { rng.random_range(0.0..0.03) } else { 0.0 };
        if spikes && k % 15 == 7 {
            o += rng.random_range(2.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            phi = 0.3;
        }
        t.truth.push(rho);
        t.obs.push(o);
        t.phi.push(phi);
    }
    t
}

fn filtered_errors(t: &Track, params: FilterParams, seed: u64) -> Vec<f64> {
    let mut f = RangeFilter::seeded(params, seed).unwrap();
    (0..STEPS)
        .map(|k| f.step(k as f64 * DT, t.obs[k], t.phi[k]).unwrap() - t.truth[k])
        .collect()
}

fn raw_errors(t: &Track) -> Vec<f64> {
    t.obs.iter().zip(&t.truth).map(|(o, r)| o - r).collect()
}

fn abs(v: &[f64]) -> Vec<f64> {
    v.iter().map(|e| e.abs()).collect()
}

#[test]
fn adaptive_filter_does_not_add_error_on_gaussian_noise() {
    let mut wins = 0;
    for seed in 0..20 {
        let t = track(seed, 0.3, false);
        let apf = rmse(&filtered_errors(&t, FilterParams::default(), seed));
        let raw = rmse(&raw_errors(&t));
        wins += (apf <= raw) as usize;
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn large_angle_spikes_are_rejected() {
    let mut ok = 0;
    for seed in 0..20 {
        let t = track(100 + seed, 0.1, true);
        let raw = raw_errors(&t);
        let apf = filtered_errors(&t, FilterParams::default(), seed);
        let fixed = filtered_errors(&t, FilterParams::default().fixed_kernel(0.5), seed);
        let (r_raw, r_apf, r_fixed) = (rmse(&raw), rmse(&apf), rmse(&fixed));
        let median_ok = median(&abs(&apf)) < 1.05 * median(&abs(&raw));
        ok += (r_apf < r_raw && r_apf < r_fixed && median_ok) as usize;
    }
    assert!(ok >= 18, "{ok}/20");
}
