//! Sequential importance resampling filter over range and range rate, with
//! an observation kernel that widens as the reported ellipse angle grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EstimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub n_particles: usize,
    pub sigma_rho: f64,
    pub sigma_rho_dot: f64,
    /// Kernel width per radian of `|phi|`.
    pub lambda: f64,
    pub sigma_rbf_min: f64,
    pub init_mean: f64,
    pub init_std: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            n_particles: 2000,
            sigma_rho: 0.3,
            sigma_rho_dot: 0.1,
            lambda: 15.0,
            sigma_rbf_min: 0.5,
            init_mean: 5.0,
            init_std: 0.3,
        }
    }
}

impl FilterParams {
    /// Same filter with a kernel of constant width `sigma`.
    pub fn fixed_kernel(self, sigma: f64) -> Self {
        Self {
            lambda: 0.0,
            sigma_rbf_min: sigma,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), EstimError> {
        let bad = |msg: String| Err(EstimError::InvalidParams(msg));
        if self.n_particles == 0 {
            return bad("n_particles must be at least 1".into());
        }
        for (name, v) in [
            ("sigma_rho", self.sigma_rho),
            ("sigma_rho_dot", self.sigma_rho_dot),
            ("sigma_rbf_min", self.sigma_rbf_min),
            ("init_std", self.init_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !self.init_mean.is_finite() {
            return bad(format!("init_mean must be finite, got {}", self.init_mean));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub rho_m: f64,
    pub rho_dot_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    pub last_update_time: f64,
}

impl FilterState {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted mean range.
    pub fn estimate(&self) -> f64 {
        self.particles
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p.rho_m * w)
            .sum()
    }
}

/// Outcome of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub estimate: f64,
    /// Every likelihood underflowed and weights fell back to uniform.
    pub degenerate: bool,
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("standard deviation validated as finite and non-negative")
}

/// Draw the initial particle set.
pub fn pf_init<R: Rng + ?Sized>(params: &FilterParams, rng: &mut R) -> Result<FilterState, EstimError> {
    params.validate()?;
    let n = params.n_particles;
    let rho = normal(params.init_mean, params.init_std);
    let rho_dot = normal(0.0, params.sigma_rho_dot);
    let particles = (0..n)
        .map(|_| Particle {
            rho_m: rho.sample(rng),
            rho_dot_mps: rho_dot.sample(rng),
        })
        .collect();
    Ok(FilterState {
        particles,
        weights: vec![1.0 / n as f64; n],
        last_update_time: 0.0,
    })
}

/// Propagate every particle with constant-velocity dynamics plus noise.
pub fn pf_predict<R: Rng + ?Sized>(
    state: &mut FilterState,
    dt: f64,
    params: &FilterParams,
    rng: &mut R,
) -> Result<(), EstimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EstimError::InvalidTimeStep(dt));
    }
    let n_rho = normal(0.0, params.sigma_rho);
    let n_rho_dot = normal(0.0, params.sigma_rho_dot);
    for p in &mut state.particles {
        p.rho_m += p.rho_dot_mps * dt + n_rho.sample(rng);
        p.rho_dot_mps += n_rho_dot.sample(rng);
    }
    state.last_update_time += dt;
    Ok(())
}

/// Observation kernel width for a reported `|phi|`.
pub fn sigma_rbf(phi_abs: f64, params: &FilterParams) -> f64 {
    (params.lambda * phi_abs.abs()).max(params.sigma_rbf_min)
}

/// Reweight particles against a range observation and return the weighted
/// mean.
pub fn pf_update(
    state: &mut FilterState,
    rho_obs: f64,
    phi_abs: f64,
    params: &FilterParams,
) -> Result<UpdateOutcome, EstimError> {
    if !rho_obs.is_finite() {
        return Err(EstimError::NonFiniteObservation(rho_obs));
    }
    let s = sigma_rbf(phi_abs, params);
    let inv = 1.0 / (2.0 * s * s);
    let mut total = 0.0;
    for (p, w) in state.particles.iter().zip(state.weights.iter_mut()) {
        let d = rho_obs - p.rho_m;
        *w *= (-d * d * inv).exp();
        total += *w;
    }
    let degenerate = !(total > 0.0 && total.is_finite());
    if degenerate {
        let u = 1.0 / state.weights.len() as f64;
        state.weights.iter_mut().for_each(|w| *w = u);
    } else {
        state.weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(UpdateOutcome {
        estimate: state.estimate(),
        degenerate,
    })
}

/// Indices chosen by systematic resampling: `n_out` evenly spaced pointers
/// `(offset_fraction + j) / n_out` walked over the cumulative weights.
///
/// `weights` must sum to one; `offset_fraction` lies in `[0, 1)`.
pub fn systematic_resample_indices(weights: &[f64], n_out: usize, offset_fraction: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_out);
    if weights.is_empty() {
        return out;
    }
    let last = weights.len() - 1;
    let n = n_out as f64;
    let mut i = 0;
    let mut cum = weights[0];
    for j in 0..n_out {
        let pointer = offset_fraction + j as f64;
        // compare on the n_out scale, snapping round-off so that cumulative
        // sums landing on a pointer boundary are treated exactly
        loop {
            let mut scaled = cum * n;
            if (scaled - scaled.round()).abs() < 1e-9 {
                scaled = scaled.round();
            }
            if scaled > pointer || i == last {
                break;
            }
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

/// Systematic resampling with a random offset; weights become uniform.
pub fn pf_resample<R: Rng + ?Sized>(state: &mut FilterState, rng: &mut R) {
    let n = state.particles.len();
    let offset = rng.random::<f64>();
    let idx = systematic_resample_indices(&state.weights, n, offset);
    state.particles = idx.iter().map(|&i| state.particles[i]).collect();
    state.weights = vec![1.0 / n as f64; n];
}

/// Particle filter with its own RNG, initialised on the first observation.
#[derive(Debug, Clone)]
pub struct RangeFilter {
    params: FilterParams,
    rng: ChaCha8Rng,
    state: Option<FilterState>,
    last_time: f64,
}

impl RangeFilter {
    pub fn new(params: FilterParams, rng: ChaCha8Rng) -> Result<Self, EstimError> {
        params.validate()?;
        Ok(Self {
            params,
            rng,
            state: None,
            last_time: 0.0,
        })
    }

    pub fn seeded(params: FilterParams, seed: u64) -> Result<Self, EstimError> {
        Self::new(params, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn state(&self) -> Option<&FilterState> {
        self.state.as_ref()
    }

    /// Predict to time `t`, update with the observation, resample, and
    /// return the estimate. The first call seeds the particle cloud around
    /// `rho_obs`.
    pub fn step(&mut self, t: f64, rho_obs: f64, phi_abs: f64) -> Result<f64, EstimError> {
        if !rho_obs.is_finite() {
            return Err(EstimError::NonFiniteObservation(rho_obs));
        }
        let state = match self.state.as_mut() {
            None => {
                let p = FilterParams {
                    init_mean: rho_obs,
                    ..self.params
                };
                let mut s = pf_init(&p, &mut self.rng)?;
                s.last_update_time = t;
                self.last_time = t;
                self.state.insert(s)
            }
            Some(s) => {
                let dt = t - self.last_time;
                if dt > 0.0 {
                    pf_predict(s, dt, &self.params, &mut self.rng)?;
                    s.last_update_time = t;
                    self.last_time = t;
                }
                s
            }
        };
        let out = pf_update(state, rho_obs, phi_abs, &self.params)?;
        pf_resample(state, &mut self.rng);
        Ok(out.estimate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn counts(idx: &[usize], n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &i in idx {
            c[i] += 1;
        }
        c
    }

    #[test]
    fn init_uniform_weights() {
        let s = pf_init(&FilterParams::default(), &mut rng(1)).unwrap();
        assert_eq!(s.len(), 2000);
        assert!(s.weights.iter().all(|&w| w == 5e-4));
        assert_abs_diff_eq!(s.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn init_is_reproducible() {
        let p = FilterParams::default();
        assert_eq!(pf_init(&p, &mut rng(7)).unwrap(), pf_init(&p, &mut rng(7)).unwrap());
    }

    #[test]
    fn init_with_tiny_spread() {
        let p = FilterParams { init_std: 1e-300, init_mean: 4.2, ..FilterParams::default() };
        let s = pf_init(&p, &mut rng(1)).unwrap();
        assert!(s.particles.iter().all(|q| q.rho_m == 4.2));
    }

    #[test]
    fn noiseless_prediction() {
        let p = FilterParams {
            sigma_rho: 1e-300,
            sigma_rho_dot: 1e-300,
            ..FilterParams::default()
        };
        let mut s = pf_init(&p, &mut rng(1)).unwrap();
        for q in &mut s.particles {
            q.rho_dot_mps = 1.0;
        }
        let before: Vec<f64> = s.particles.iter().map(|q| q.rho_m).collect();
        pf_predict(&mut s, 0.08, &p, &mut rng(2)).unwrap();
        for (q, b) in s.particles.iter().zip(before) {
            assert_abs_diff_eq!(q.rho_m - b, 0.08, epsilon = 1e-12);
        }
    }

    #[test]
    fn prediction_noise_level() {
        let p = FilterParams::default();
        let mut s = pf_init(&p, &mut rng(3)).unwrap();
        for q in &mut s.particles {
            q.rho_dot_mps = 0.0;
        }
        let before: Vec<f64> = s.particles.iter().map(|q| q.rho_m).collect();
        pf_predict(&mut s, 0.125, &p, &mut rng(4)).unwrap();
        let inc: Vec<f64> = s.particles.iter().zip(&before).map(|(q, b)| q.rho_m - b).collect();
        let m = inc.iter().sum::<f64>() / inc.len() as f64;
        let sd = (inc.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (inc.len() - 1) as f64).sqrt();
        assert!((sd - 0.3).abs() <= 0.02, "{sd}");
    }

    #[test]
    fn zero_time_step_rejected() {
        let p = FilterParams::default();
        let mut s = pf_init(&p, &mut rng(1)).unwrap();
        assert!(matches!(pf_predict(&mut s, 0.0, &p, &mut rng(1)), Err(EstimError::InvalidTimeStep(_))));
    }

    #[test]
    fn kernel_width() {
        let p = FilterParams::default();
        assert_eq!(sigma_rbf(0.0, &p), 0.5);
        assert_abs_diff_eq!(sigma_rbf(0.1, &p), 1.5, epsilon = 1e-12);
        assert_eq!(sigma_rbf(0.02, &p), 0.5);
    }

    fn state_from(rhos: &[f64]) -> FilterState {
        let n = rhos.len();
        FilterState {
            particles: rhos.iter().map(|&r| Particle { rho_m: r, rho_dot_mps: 0.0 }).collect(),
            weights: vec![1.0 / n as f64; n],
            last_update_time: 0.0,
        }
    }

    #[test]
    fn single_particle_update() {
        let mut s = state_from(&[3.0]);
        let out = pf_update(&mut s, 3.0, 0.0, &FilterParams::default()).unwrap();
        assert_eq!(s.weights, vec![1.0]);
        assert_eq!(out.estimate, 3.0);
    }

    #[test]
    fn symmetric_update() {
        let mut s = state_from(&[2.0, 4.0]);
        let out = pf_update(&mut s, 3.0, 0.0, &FilterParams::default()).unwrap();
        assert_eq!(s.weights[0], s.weights[1]);
        assert_abs_diff_eq!(out.estimate, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn large_angle_reduces_pull() {
        let p = FilterParams::default();
        let base = pf_init(&FilterParams { init_mean: 5.0, init_std: 0.3, ..p }, &mut rng(5)).unwrap();
        let prior = base.estimate();
        let mut a = base.clone();
        let mut b = base;
        let shift_small = pf_update(&mut a, 7.0, 0.0, &p).unwrap().estimate - prior;
        let shift_large = pf_update(&mut b, 7.0, 0.3, &p).unwrap().estimate - prior;
        assert!(shift_small > 0.0 && shift_large > 0.0);
        assert!(shift_large.abs() < shift_small.abs());
    }

    #[test]
    fn underflow_falls_back_to_uniform() {
        let mut s = state_from(&[1.0, 2.0]);
        let out = pf_update(&mut s, 1e6, 0.0, &FilterParams::default()).unwrap();
        assert!(out.degenerate);
        assert_eq!(s.weights, vec![0.5, 0.5]);
        assert_abs_diff_eq!(out.estimate, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_observation_rejected() {
        let mut s = state_from(&[1.0]);
        assert!(pf_update(&mut s, f64::NAN, 0.0, &FilterParams::default()).is_err());
    }

    #[test]
    fn systematic_resampling_examples() {
        for k in 0..100 {
            let r = k as f64 / 100.0;
            let uniform = vec![0.25; 4];
            assert_eq!(counts(&systematic_resample_indices(&uniform, 4, r), 4), vec![1, 1, 1, 1]);
            let single = [0.0, 1.0, 0.0];
            assert_eq!(counts(&systematic_resample_indices(&single, 5, r), 3), vec![0, 5, 0]);
            let w = [0.5, 0.3, 0.2];
            assert_eq!(counts(&systematic_resample_indices(&w, 10, r), 3), vec![5, 3, 2], "offset {r}");
        }
    }

    #[test]
    fn resample_uniformises_weights() {
        let mut s = state_from(&[1.0, 2.0, 3.0]);
        s.weights = vec![0.2, 0.5, 0.3];
        pf_resample(&mut s, &mut rng(1));
        assert_eq!(s.weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn resampling_preserves_mean_in_expectation() {
        let mut r = rng(9);
        let n = 50;
        let rhos: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let raw: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) + 1) as f64).collect();
        let tot: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / tot).collect();
        let target: f64 = rhos.iter().zip(&w).map(|(a, b)| a * b).sum();
        let trials = 2000;
        let means: Vec<f64> = (0..trials)
            .map(|_| {
                let idx = systematic_resample_indices(&w, n, rand::Rng::random::<f64>(&mut r));
                idx.iter().map(|&i| rhos[i]).sum::<f64>() / n as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / trials as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let se = sd / (trials as f64).sqrt();
        assert!((m - target).abs() <= 3.0 * se.max(1e-12), "{m} vs {target} (se {se})");
    }

    #[test]
    fn range_filter_tracks_constant_range() {
        let mut f = RangeFilter::seeded(FilterParams::default(), 4).unwrap();
        let mut est = 0.0;
        for k in 0..80 {
            est = f.step(k as f64 * 0.125, 6.0, 0.0).unwrap();
        }
        assert!((est - 6.0).abs() < 0.2, "{est}");
    }

    proptest! {
        #[test]
        fn weights_stay_normalised(
            rhos in proptest::collection::vec(0.5f64..20.0, 1..60),
            obs in 0.5f64..20.0,
            phi in 0.0f64..1.5,
        ) {
            let mut s = state_from(&rhos);
            pf_update(&mut s, obs, phi, &FilterParams::default()).unwrap();
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
        }

        #[test]
        fn kernel_monotone(a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let p = FilterParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(sigma_rbf(lo, &p) <= sigma_rbf(hi, &p));
            if hi <= p.sigma_rbf_min / p.lambda {
                prop_assert_eq!(sigma_rbf(hi, &p), p.sigma_rbf_min);
            }
        }

        #[test]
        fn copy_counts_within_one(raw in proptest::collection::vec(0.0f64..1.0, 1..40), r in 0.0f64..1.0) {
            let tot: f64 = raw.iter().sum();
            prop_assume!(tot > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / tot).collect();
            let n = w.len();
            let c = counts(&systematic_resample_indices(&w, n, r), n);
            prop_assert_eq!(c.iter().sum::<usize>(), n);
            for (ci, wi) in c.iter().zip(&w) {
                prop_assert!((*ci as f64 - n as f64 * wi).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
