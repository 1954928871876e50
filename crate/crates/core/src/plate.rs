//! Tymbal plate: four resonant band-passes, one per buckling kind, mixed
//! with the dry pulse train, followed by the loudness-driven flattening.

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::excitation::{render_buckling_pulse, BucklingEvent, BucklingKind, PulseTable};
use crate::filter::{Coefficients, TwoPole};

/// Accepted range for the per-kind frequency ratios.
pub const RATIO_RANGE: (f64, f64) = (0.8, 1.25);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub center_hz: f64,
    pub q: f64,
    pub gain: f64,
}

impl FilterSpec {
    pub fn bandwidth_hz(&self) -> f64 {
        self.center_hz / self.q
    }

    pub fn coefficients(&self, sample_rate: f64) -> Coefficients {
        Coefficients::bandpass(self.center_hz, self.bandwidth_hz(), sample_rate)
    }
}

/// Static plate configuration independent of pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateParams {
    pub ratios: [f64; 4],
    pub q_unloaded: [f64; 4],
    pub dry_weight: f64,
    pub wet_weights: [f64; 4],
    pub clip_enabled: bool,
    pub clip_drive: f64,
}

impl Default for PlateParams {
    fn default() -> Self {
        Self::from_constants(&Constants::default())
    }
}

impl PlateParams {
    pub fn from_constants(c: &Constants) -> Self {
        Self {
            ratios: c.plate_ratios(),
            q_unloaded: c.plate_q_unloaded(),
            dry_weight: c.plate_dry_weight,
            wet_weights: c.plate_wet_weights(),
            clip_enabled: c.plate_clip_enabled != 0.0,
            clip_drive: c.plate_clip_drive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (kind, &ratio) in BucklingKind::ALL.iter().zip(&self.ratios) {
            if !(RATIO_RANGE.0..=RATIO_RANGE.1).contains(&ratio) {
                return Err(Error::Config(format!(
                    "plate ratio {ratio} for {kind:?} outside [{}, {}]",
                    RATIO_RANGE.0, RATIO_RANGE.1
                )));
            }
        }
        for (kind, &q) in BucklingKind::ALL.iter().zip(&self.q_unloaded) {
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::Config(format!("plate Q {q} for {kind:?} must be positive")));
            }
        }
        if !(self.clip_drive >= 0.0) {
            return Err(Error::Config("clip drive must be non-negative".into()));
        }
        Ok(())
    }
}

/// Filter specs and mix weights for one pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateBank {
    pub specs: [FilterSpec; 4],
    pub dry_weight: f64,
    pub wet_weights: [f64; 4],
}

impl PlateBank {
    /// Centers at three times the pitch scaled by each ratio; Q halved to
    /// account for the loaded plate.
    pub fn configure(pitch_hz: f64, params: &PlateParams) -> Result<PlateBank> {
        params.validate()?;
        Ok(Self::configure_unchecked(pitch_hz, params))
    }

    fn configure_unchecked(pitch_hz: f64, params: &PlateParams) -> PlateBank {
        let mut specs = [FilterSpec { center_hz: 0.0, q: 1.0, gain: 1.0 }; 4];
        for (k, spec) in specs.iter_mut().enumerate() {
            spec.center_hz = 3.0 * pitch_hz * params.ratios[k];
            spec.q = params.q_unloaded[k] / 2.0;
            spec.gain = params.wet_weights[k];
        }
        PlateBank { specs, dry_weight: params.dry_weight, wet_weights: params.wet_weights }
    }

    pub fn spec(&self, kind: BucklingKind) -> &FilterSpec {
        &self.specs[kind.index()]
    }
}

/// Bank with default mix weights.
pub fn plate_bank_config(pitch_hz: f64, ratios: [f64; 4], q_unloaded: [f64; 4]) -> Result<PlateBank> {
    let params = PlateParams { ratios, q_unloaded, ..PlateParams::default() };
    PlateBank::configure(pitch_hz, &params)
}

/// Flattens resonance peaks for loudness above one half.
///
/// Identity up to 0.5. Above it the signal is driven by
/// `1 + drive * (2L - 1)`, hard-clamped to unit range and scaled back, so
/// the peak level stays put while the waveform squares off.
pub fn clip_resonation_driven(x: f64, loudness_nrm: f64, drive: f64) -> f64 {
    if loudness_nrm <= 0.5 {
        return x;
    }
    let g = 1.0 + drive * (2.0 * loudness_nrm.min(1.0) - 1.0);
    (x * g).clamp(-1.0, 1.0) / g
}

pub fn clip_resonation(x: f64, loudness_nrm: f64) -> f64 {
    clip_resonation_driven(x, loudness_nrm, 3.0)
}

/// Running plate filters.
#[derive(Debug, Clone)]
pub struct Plate {
    sample_rate: f64,
    params: PlateParams,
    bank: PlateBank,
    filters: [TwoPole; 4],
    pitch_hz: f64,
}

impl Plate {
    pub fn new(params: PlateParams, pitch_hz: f64, sample_rate: f64) -> Result<Self> {
        let bank = PlateBank::configure(pitch_hz, &params)?;
        let mut filters = [TwoPole::default(); 4];
        for (f, spec) in filters.iter_mut().zip(&bank.specs) {
            f.set_coefficients(spec.coefficients(sample_rate));
        }
        Ok(Self { sample_rate, params, bank, filters, pitch_hz })
    }

    pub fn bank(&self) -> &PlateBank {
        &self.bank
    }

    pub fn params(&self) -> &PlateParams {
        &self.params
    }

    /// Moves the filters to a new pitch, keeping their state.
    pub fn retune(&mut self, pitch_hz: f64) {
        if pitch_hz == self.pitch_hz {
            return;
        }
        self.pitch_hz = pitch_hz;
        self.bank = PlateBank::configure_unchecked(pitch_hz, &self.params);
        for (f, spec) in self.filters.iter_mut().zip(&self.bank.specs) {
            f.set_coefficients(spec.coefficients(self.sample_rate));
        }
    }

    pub fn reset(&mut self) {
        for f in &mut self.filters {
            f.reset();
        }
    }

    /// One sample: `pulses[k]` is the pulse stream of buckling kind `k`.
    #[inline]
    pub fn process(&mut self, pulses: &[f64; 4]) -> f64 {
        let mut y = self.bank.dry_weight * pulses.iter().sum::<f64>();
        for ((f, w), x) in self.filters.iter_mut().zip(self.bank.wet_weights).zip(pulses) {
            y += w * f.process(*x);
        }
        y
    }

    /// Applies the flattening stage if enabled.
    #[inline]
    pub fn clip(&self, x: f64, loudness_nrm: f64) -> f64 {
        if self.params.clip_enabled {
            clip_resonation_driven(x, loudness_nrm, self.params.clip_drive)
        } else {
            x
        }
    }
}

/// Decay check for one buckling kind at one pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCheck {
    pub kind: BucklingKind,
    /// Largest magnitude of the response within one pitch period.
    pub max_peak: f64,
    /// Largest magnitude in the last resonant cycle before the next pulse.
    pub last_cycle_peak: f64,
}

impl DecayCheck {
    pub fn ratio(&self) -> f64 {
        self.last_cycle_peak / self.max_peak
    }

    pub fn passes(&self) -> bool {
        self.ratio() > 0.25
    }
}

/// Measures how far each kind's plate response decays before the next
/// in-buckling pulse under coherent excitation.
pub fn decay_checks(
    params: &PlateParams,
    pulses: &PulseTable,
    pitch_hz: f64,
    sample_rate: f64,
) -> Result<[DecayCheck; 4]> {
    let period = 1.0 / pitch_hz;
    let n = (period * sample_rate).ceil() as usize;
    let mut checks = [DecayCheck { kind: BucklingKind::InRib1, max_peak: 0.0, last_cycle_peak: 0.0 }; 4];
    for (k, check) in checks.iter_mut().enumerate() {
        let kind = BucklingKind::ALL[k];
        let bank = PlateBank::configure(pitch_hz, params)?;
        let spec = bank.specs[k];
        let mut filter = TwoPole::new(spec.coefficients(sample_rate));
        let last_cycle_start = period - 1.0 / spec.center_hz;
        let event = BucklingEvent { onset_s: 0.0, kind, amplitude: 1.0, pulse_duration_s: period / 3.0 };
        check.kind = kind;
        for i in 0..n {
            let t = i as f64 / sample_rate;
            if t >= period {
                break;
            }
            let y = filter.process(render_buckling_pulse(&event, t, pulses)).abs();
            check.max_peak = check.max_peak.max(y);
            if t >= last_cycle_start {
                check.last_cycle_peak = check.last_cycle_peak.max(y);
            }
        }
    }
    Ok(checks)
}

/// True when every kind's response stays above a quarter of its maximum
/// until the next pulse arrives.
pub fn verify_25pct(params: &PlateParams, pulses: &PulseTable, pitch_hz: f64, sample_rate: f64) -> Result<bool> {
    Ok(decay_checks(params, pulses, pitch_hz, sample_rate)?.iter().all(DecayCheck::passes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const E4: f64 = 329.63;
    const E5: f64 = 659.26;
    const SR: f64 = 48_000.0;

    #[test]
    fn configuration_examples() {
        let bank = plate_bank_config(E5, [1.0; 4], [12.0; 4]).unwrap();
        assert!((bank.specs[0].center_hz - 1977.78).abs() < 1e-9);
        assert_eq!(bank.specs[0].q, 6.0);
        assert!((bank.specs[0].bandwidth_hz() - 329.63).abs() < 1e-9);
        let bank = plate_bank_config(E4, [1.0; 4], [12.0; 4]).unwrap();
        assert!((bank.specs[0].center_hz - 988.89).abs() < 1e-9);
    }

    #[test]
    fn bad_configuration_is_rejected() {
        assert!(plate_bank_config(E5, [1.0, 1.0, 1.3, 1.0], [12.0; 4]).is_err());
        assert!(plate_bank_config(E5, [0.7, 1.0, 1.0, 1.0], [12.0; 4]).is_err());
        assert!(plate_bank_config(E5, [1.0; 4], [12.0, 0.0, 12.0, 12.0]).is_err());
    }

    /// Direct convolution of an input with the filter's impulse response,
    /// the response being generated from the pole-pair closed form.
    fn convolve_oracle(c: &Coefficients, x: &[f64]) -> Vec<f64> {
        let r = c.a2.sqrt();
        let theta = (-c.a1 / (2.0 * r)).acos();
        let ar: Vec<f64> =
            (0..x.len()).map(|k| r.powi(k as i32) * ((k + 1) as f64 * theta).sin() / theta.sin()).collect();
        let h: Vec<f64> = (0..x.len()).map(|k| c.b0 * ar[k] + if k >= 2 { c.b2 * ar[k - 2] } else { 0.0 }).collect();
        (0..x.len()).map(|n| (0..=n).map(|m| x[m] * h[n - m]).sum()).collect()
    }

    #[test]
    fn impulse_rings_at_center() {
        let spec = FilterSpec { center_hz: 1977.78, q: 6.0, gain: 1.0 };
        let c = spec.coefficients(SR);
        let mut f = TwoPole::new(c);
        let n = 600;
        let mut impulse = vec![0.0; n];
        impulse[0] = 1.0;
        let y: Vec<f64> = impulse.iter().map(|&x| f.process(x)).collect();
        let oracle = convolve_oracle(&c, &impulse);
        for (a, b) in y.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        // Interpolated zero crossings spanning ten cycles.
        let mut crossings = Vec::new();
        for i in 1..n {
            if y[i - 1] != 0.0 && y[i - 1].signum() != y[i].signum() {
                crossings.push(i as f64 - 1.0 + y[i - 1] / (y[i - 1] - y[i]));
            }
        }
        let span = crossings[21] - crossings[1];
        let freq = 10.0 * SR / span;
        assert!((freq / 1977.78 - 1.0).abs() < 0.01, "{freq}");
    }

    #[test]
    fn envelope_decays_at_bandwidth_rate() {
        let spec = FilterSpec { center_hz: 1977.78, q: 6.0, gain: 1.0 };
        let c = spec.coefficients(SR);
        let samples = (0.01 * SR) as i32;
        let expected = (-PI * spec.bandwidth_hz() * 0.01).exp();
        assert!((c.pole_radius().powi(samples) - expected).abs() < 1e-12);
    }

    #[test]
    fn silence_in_silence_out() {
        let mut plate = Plate::new(PlateParams::default(), E5, SR).unwrap();
        for _ in 0..1000 {
            assert_eq!(plate.process(&[0.0; 4]), 0.0);
        }
    }

    #[test]
    fn in_phase_echo_reinforces() {
        let spec = FilterSpec { center_hz: 1977.78, q: 6.0, gain: 1.0 };
        let sr = 1977.78 * 24.0;
        let c = spec.coefficients(sr);
        let gap = 72;
        let mut x = vec![0.0; 400];
        x[0] = 1.0;
        x[gap] = 1.0;
        let y = convolve_oracle(&c, &x);
        let first = y[..gap].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let second = y[gap..gap + 24].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(second >= first, "{second} < {first}");
    }

    #[test]
    fn clip_examples() {
        for x in [-3.0, -0.2, 0.0, 0.7, 5.0] {
            assert_eq!(clip_resonation(x, 0.4), x);
        }
        let d = clip_resonation(0.1, 0.5) - clip_resonation(0.1, 0.5 + 1e-9);
        assert!(d.abs() < 1e-6);
    }

    /// Level of the third harmonic of a sine by brute-force DFT.
    fn third_harmonic_db(loudness: f64) -> f64 {
        let n = 4800;
        let cycles = 10.0;
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let phase = 2.0 * PI * cycles * i as f64 / n as f64;
            let y = clip_resonation(phase.sin(), loudness);
            re += y * (3.0 * phase).cos();
            im += y * (3.0 * phase).sin();
        }
        20.0 * (re.hypot(im) * 2.0 / n as f64 + 1e-300).log10()
    }

    #[test]
    fn full_loudness_raises_third_harmonic() {
        assert!(third_harmonic_db(1.0) - third_harmonic_db(0.5) >= 20.0);
    }

    #[test]
    fn default_plate_holds_a_quarter_across_the_octave() {
        let params = PlateParams::default();
        for semitone in 0..=12 {
            let pitch = E4 * (semitone as f64 / 12.0).exp2();
            let checks = decay_checks(&params, &PulseTable::default(), pitch, SR).unwrap();
            for c in checks {
                assert!(c.passes(), "{pitch} Hz {:?}: {}", c.kind, c.ratio());
            }
        }
    }

    #[test]
    fn heavy_damping_fails_and_no_damping_passes() {
        let heavy = PlateParams { q_unloaded: [1.0; 4], ..PlateParams::default() };
        assert!(!verify_25pct(&heavy, &PulseTable::default(), E5, SR).unwrap());
        let undamped = PlateParams { q_unloaded: [1e9; 4], ..PlateParams::default() };
        assert!(verify_25pct(&undamped, &PulseTable::default(), E5, SR).unwrap());
    }

    #[test]
    fn quarter_threshold_matches_envelope_oracle() {
        // A lone resonator decays by exp(-pi bw t); at Q 0.5 one period
        // leaves far less than a quarter.
        let bw = 3.0 * E5 / 0.5;
        assert!((-PI * bw / E5).exp() < 0.25);
    }

    fn goertzel_power(x: &[f64], freq: f64, sr: f64) -> f64 {
        let w = 2.0 * PI * freq / sr;
        let coeff = 2.0 * w.cos();
        let (mut s1, mut s2) = (0.0, 0.0);
        for &v in x {
            let s = v + coeff * s1 - s2;
            s2 = s1;
            s1 = s;
        }
        s1 * s1 + s2 * s2 - coeff * s1 * s2
    }

    fn coherent_plate_output(pitch: f64, seconds: f64) -> Vec<f64> {
        let mut plate = Plate::new(PlateParams::default(), pitch, SR).unwrap();
        let table = PulseTable::default();
        let n = (seconds * SR) as usize;
        let period = 1.0 / pitch;
        (0..n)
            .map(|i| {
                let t = i as f64 / SR;
                let idx = (t / period).floor();
                let event = BucklingEvent {
                    onset_s: idx * period,
                    kind: BucklingKind::ALL[idx as usize % 4],
                    amplitude: 1.0,
                    pulse_duration_s: period / 3.0,
                };
                let mut input = [0.0; 4];
                input[event.kind.index()] = render_buckling_pulse(&event, t, &table);
                plate.process(&input)
            })
            .collect()
    }

    #[test]
    fn dominant_component_tracks_three_times_pitch() {
        for pitch in [E4, 440.0, 523.25, E5] {
            let y = coherent_plate_output(pitch, 0.25);
            let mut best = (0.0, 0.0);
            let mut f = 100.0;
            while f < 8000.0 {
                let p = goertzel_power(&y, f, SR);
                if p > best.1 {
                    best = (f, p);
                }
                f += 2.0;
            }
            assert!((best.0 / (3.0 * pitch) - 1.0).abs() < 0.02, "{pitch}: {}", best.0);
        }
    }

    proptest! {
        #[test]
        fn linear_below_clip(a in -4.0..4.0f64, seed in 0u64..1000) {
            let mut p1 = Plate::new(PlateParams::default(), E5, SR).unwrap();
            let mut p2 = p1.clone();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for _ in 0..500 {
                let mut x = [0.0; 4];
                for v in &mut x {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    *v = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                }
                let scaled = x.map(|v| v * a);
                let y1 = p1.process(&x);
                let y1 = p1.clip(y1, 0.5);
                let y2 = p2.process(&scaled);
                let y2 = p2.clip(y2, 0.5);
                prop_assert!((a * y1 - y2).abs() <= 1e-9 * (1.0 + y2.abs()));
            }
        }

        #[test]
        fn poles_inside_unit_circle(pitch in E4..E5, q in 0.5..1e4f64, ratio in 0.8..1.25f64,
                                    sr_index in 0usize..3) {
            let sr = [44_100.0, 48_000.0, 96_000.0][sr_index];
            let params = PlateParams { ratios: [ratio; 4], q_unloaded: [q; 4], ..PlateParams::default() };
            let bank = PlateBank::configure(pitch, &params).unwrap();
            for spec in &bank.specs {
                prop_assert!(spec.coefficients(sr).pole_radius() < 1.0);
            }
        }

        #[test]
        fn clip_is_bounded(x in -10.0..10.0f64, l in 0.0..1.0f64) {
            let y = clip_resonation(x, l);
            prop_assert!(y.abs() <= x.abs() + 1e-15);
            if l > 0.5 {
                let g = 1.0 + 3.0 * (2.0 * l - 1.0);
                prop_assert!(y.abs() <= 1.0 / g + 1e-15);
            }
        }
    }
}
