//! Low-pass Butterworth filters discretised with the bilinear transform.

use serde::{Deserialize, Serialize};

use super::EstimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButterworthSpec {
    pub order: usize,
    pub f_crit_hz: f64,
    pub f_sample_hz: f64,
}

impl ButterworthSpec {
    pub const DEFAULT_SAMPLE_HZ: f64 = 8.0;

    pub fn new(order: usize, f_crit_hz: f64, f_sample_hz: f64) -> Self {
        Self { order, f_crit_hz, f_sample_hz }
    }

    /// Third-order, 0.6 Hz smoother for the lens field of view.
    pub fn hfov_default(f_sample_hz: f64) -> Self {
        Self::new(3, 0.6, f_sample_hz)
    }

    /// First-order, 2 Hz smoother for pan and tilt totals.
    pub fn angle_default(f_sample_hz: f64) -> Self {
        Self::new(1, 2.0, f_sample_hz)
    }

    pub fn validate(&self) -> Result<(), EstimError> {
        if self.order == 0 {
            return Err(EstimError::InvalidOrder(self.order));
        }
        if !(self.f_sample_hz > 0.0 && self.f_sample_hz.is_finite())
            || !(self.f_crit_hz > 0.0 && self.f_crit_hz < 0.5 * self.f_sample_hz)
        {
            return Err(EstimError::InvalidCutoff {
                f_crit_hz: self.f_crit_hz,
                f_sample_hz: self.f_sample_hz,
            });
        }
        Ok(())
    }
}

/// One second-order (or first-order, when `b2 = a2 = 0`) section in
/// transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Section {
    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    /// Put the section in the steady state for a constant input `c`.
    fn prime(&mut self, c: f64) {
        self.s2 = (self.b[2] - self.a[1]) * c;
        self.s1 = (self.b[1] - self.a[0]) * c + self.s2;
    }

    fn normalise_dc(&mut self) {
        let num: f64 = self.b.iter().sum();
        let den = 1.0 + self.a[0] + self.a[1];
        let g = den / num;
        for b in &mut self.b {
            *b *= g;
        }
    }
}

/// Causal Butterworth low-pass of arbitrary order.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    spec: ButterworthSpec,
    sections: Vec<Section>,
    primed: bool,
}

impl Butterworth {
    pub fn new(spec: ButterworthSpec) -> Result<Self, EstimError> {
        spec.validate()?;
        // pre-warped analogue cutoff, expressed through k = tan(pi fc / fs)
        let k = (std::f64::consts::PI * spec.f_crit_hz / spec.f_sample_hz).tan();
        let n = spec.order;
        let mut sections = Vec::with_capacity(n.div_ceil(2));
        for i in 0..n / 2 {
            // conjugate pole pair of the unit-cutoff prototype:
            // s^2 + 2 zeta s + 1 with 2 zeta = 2 sin((2i + 1) pi / 2n)
            let theta = (2 * i + 1) as f64 * std::f64::consts::PI / (2 * n) as f64;
            let c1 = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + c1 * k + k * k);
            let b0 = k * k * norm;
            sections.push(Section {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k * k - 1.0) * norm, (1.0 - c1 * k + k * k) * norm],
                s1: 0.0,
                s2: 0.0,
            });
        }
        if n % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Section {
                b: [k * norm, k * norm, 0.0],
                a: [(k - 1.0) * norm, 0.0],
                s1: 0.0,
                s2: 0.0,
            });
        }
        for s in &mut sections {
            s.normalise_dc();
        }
        Ok(Self { spec, sections, primed: false })
    }

    pub fn spec(&self) -> &ButterworthSpec {
        &self.spec
    }

    /// Filter one sample. The first sample after construction or
    /// [`Butterworth::clear`] primes the state so a constant input passes
    /// through without a start-up transient.
    pub fn step(&mut self, x: f64) -> f64 {
        if !self.primed {
            self.reset(x);
        }
        self.sections.iter_mut().fold(x, |acc, s| s.step(acc))
    }

    /// Set the internal state to the steady state for constant input `value`.
    pub fn reset(&mut self, value: f64) {
        for s in &mut self.sections {
            s.prime(value);
        }
        self.primed = true;
    }

    /// Forget the state; the next sample primes it again.
    pub fn clear(&mut self) {
        self.primed = false;
    }

    /// Magnitude of the frequency response at `f_hz`.
    pub fn gain_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.spec.f_sample_hz;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        self.sections
            .iter()
            .map(|s| {
                let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
                let ni = s.b[1] * s1 + s.b[2] * s2;
                let dr = 1.0 + s.a[0] * c1 + s.a[1] * c2;
                let di = s.a[0] * s1 + s.a[1] * s2;
                (nr.hypot(ni)) / (dr.hypot(di))
            })
            .product()
    }
}
