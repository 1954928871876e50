//! Two-pole resonator sections shared by the tymbal plate and the abdomen.

use std::f64::consts::PI;

/// Values below this are flushed to zero in filter state.
const DENORMAL_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Coefficients {
    pub const IDENTITY: Coefficients = Coefficients { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    /// Complex response at `omega` radians per sample, as (re, im).
    pub fn response(&self, omega: f64) -> (f64, f64) {
        let (c1, s1) = (omega.cos(), -omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        let num = (self.b0 + self.b1 * c1 + self.b2 * c2, self.b1 * s1 + self.b2 * s2);
        let den = (1.0 + self.a1 * c1 + self.a2 * c2, self.a1 * s1 + self.a2 * s2);
        let den_sq = den.0 * den.0 + den.1 * den.1;
        ((num.0 * den.0 + num.1 * den.1) / den_sq, (num.1 * den.0 - num.0 * den.1) / den_sq)
    }

    pub fn magnitude(&self, omega: f64) -> f64 {
        let (re, im) = self.response(omega);
        re.hypot(im)
    }

    /// Pole radius.
    pub fn pole_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            self.a2.sqrt()
        } else {
            let s = disc.sqrt();
            ((-self.a1 + s) / 2.0).abs().max(((-self.a1 - s) / 2.0).abs())
        }
    }

    /// Resonant band-pass with zeros at DC and Nyquist.
    ///
    /// Poles sit at angle `center` with radius `exp(-pi * bandwidth / sr)`, so
    /// the impulse response rings at `center_hz` and its envelope decays as
    /// `exp(-pi * bandwidth_hz * t)`. Gain at the center is exactly one.
    pub fn bandpass(center_hz: f64, bandwidth_hz: f64, sample_rate: f64) -> Coefficients {
        let radius = (-PI * bandwidth_hz / sample_rate).exp();
        let theta = 2.0 * PI * center_hz / sample_rate;
        let mut c = Coefficients { b0: 1.0, b1: 0.0, b2: -1.0, a1: -2.0 * radius * theta.cos(), a2: radius * radius };
        let g = 1.0 / c.magnitude(theta);
        c.b0 *= g;
        c.b2 *= g;
        c
    }

    /// All-pole resonator with its magnitude peak exactly at `peak_hz` and
    /// unity gain there. Rolls off at 12 dB per octave above the peak.
    pub fn resonator(peak_hz: f64, bandwidth_hz: f64, sample_rate: f64) -> Coefficients {
        let radius = (-PI * bandwidth_hz / sample_rate).exp();
        let omega = 2.0 * PI * peak_hz / sample_rate;
        // Peak of 1/|A| lies where cos(w) = (1 + R^2) cos(theta) / (2R).
        let cos_theta = (2.0 * radius * omega.cos() / (1.0 + radius * radius)).clamp(-1.0, 1.0);
        let mut c = Coefficients { b0: 1.0, b1: 0.0, b2: 0.0, a1: -2.0 * radius * cos_theta, a2: radius * radius };
        c.b0 = 1.0 / c.magnitude(omega);
        c
    }

    /// Resonator with a double zero at Nyquist, the digital image of an
    /// analog all-pole section. Keeps its 12 dB per octave slope up to
    /// Nyquist instead of flattening out. Peak at `peak_hz` with unity gain.
    pub fn lowpass_resonator(peak_hz: f64, bandwidth_hz: f64, sample_rate: f64) -> Coefficients {
        let a2 = (-2.0 * PI * bandwidth_hz / sample_rate).exp();
        let c = (2.0 * PI * peak_hz / sample_rate).cos();
        // Stationary point of |1 + z^-1|^4 / |A|^2 at cos(w) = c, solved for a1.
        let p = (1.0 + a2) * (c - 1.0);
        let q = (1.0 - a2).powi(2) - 4.0 * a2 * c;
        let disc = p * p - 4.0 * q;
        let a1 = if disc >= 0.0 { (-p - disc.sqrt()) / 2.0 } else { -p / 2.0 };
        let a1 = a1.clamp(-(1.0 + a2) + 1e-12, 1.0 + a2 - 1e-12);
        let mut coeffs = Coefficients { b0: 1.0, b1: 2.0, b2: 1.0, a1, a2 };
        let g = 1.0 / coeffs.magnitude(2.0 * PI * peak_hz / sample_rate);
        coeffs.b0 = g;
        coeffs.b1 = 2.0 * g;
        coeffs.b2 = g;
        coeffs
    }
}

/// Direct-form-I biquad section. Coefficients may change between samples.
#[derive(Debug, Clone, Copy)]
pub struct TwoPole {
    coefficients: Coefficients,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Default for TwoPole {
    fn default() -> Self {
        Self::new(Coefficients::IDENTITY)
    }
}

impl TwoPole {
    pub fn new(coefficients: Coefficients) -> Self {
        Self { coefficients, x1: 0.0, x2: 0.0, y1: 0.0, y2: 0.0 }
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    pub fn set_coefficients(&mut self, coefficients: Coefficients) {
        self.coefficients = coefficients;
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let c = &self.coefficients;
        let mut y = c.b0 * x + c.b1 * self.x1 + c.b2 * self.x2 - c.a1 * self.y1 - c.a2 * self.y2;
        if y.abs() < DENORMAL_FLOOR {
            y = 0.0;
        }
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// One-pole, one-zero DC blocker.
#[derive(Debug, Clone, Copy)]
pub struct DcBlocker {
    pole: f64,
    x1: f64,
    y1: f64,
}

impl DcBlocker {
    pub fn new(cutoff_hz: f64, sample_rate: f64) -> Self {
        Self { pole: (-2.0 * PI * cutoff_hz / sample_rate).exp(), x1: 0.0, y1: 0.0 }
    }

    pub fn magnitude(&self, omega: f64) -> f64 {
        let num = (1.0 - omega.cos()).hypot(omega.sin());
        let den = (1.0 - self.pole * omega.cos()).hypot(self.pole * omega.sin());
        num / den
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.y1 = 0.0;
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut y = x - self.x1 + self.pole * self.y1;
        if y.abs() < DENORMAL_FLOOR {
            y = 0.0;
        }
        self.x1 = x;
        self.y1 = y;
        y
    }
}
