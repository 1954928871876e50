//! Tymbal excitation: muscle contractions, apodeme pulling speed, and the
//! four rib-buckling pulses each contraction produces.
//!
//! A contraction runs at a quarter of the intended pitch and buckles the
//! ribs four times, one pitch period apart, so the pulse train repeats at
//! the pitch itself while the muscle stays near its natural rate. When the
//! apodeme slows down, the gaps between buckling events grow by a random
//! amount and the train loses phase coherence.

use std::f64::consts::TAU;

use arrayvec::ArrayVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BucklingKind {
    InRib1,
    InRib2,
    InRib3,
    OutAll,
}

impl BucklingKind {
    /// Order of events within one contraction.
    pub const ALL: [BucklingKind; 4] =
        [BucklingKind::InRib1, BucklingKind::InRib2, BucklingKind::InRib3, BucklingKind::OutAll];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_in_buckling(self) -> bool {
        !matches!(self, BucklingKind::OutAll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucklingEvent {
    pub onset_s: f64,
    pub kind: BucklingKind,
    pub amplitude: f64,
    pub pulse_duration_s: f64,
}

/// Contraction rate for a pitch: a quarter of the pitch, scaled by the
/// muscle-frequency envelope (1.0 coherent, 0.5 one octave down).
pub fn muscle_base_freq(pitch_hz: f64, octave_factor: f64) -> f64 {
    pitch_hz / 4.0 * octave_factor
}

pub fn cents_to_ratio(cents: f64) -> f64 {
    (cents / 1200.0).exp2()
}

/// Normalized apodeme pulling speed.
///
/// Proportional to the muscle frequency and clipped at the coherent
/// contraction rate, which therefore reads as full speed.
pub fn apodeme_speed(muscle_freq_hz: f64, pitch_hz: f64) -> f64 {
    if !(pitch_hz > 0.0) || !(muscle_freq_hz > 0.0) {
        return 0.0;
    }
    (muscle_freq_hz / (pitch_hz / 4.0)).min(1.0)
}

/// Buckling amplitude from loudness: linear over the lower half of the
/// loudness range, saturating at 1.0 from 0.5 upward.
pub fn loudness_amplitude(loudness_nrm: f64) -> f64 {
    loudness_nrm.clamp(0.0, 0.5) / 0.5
}

/// Truncated zero-mean normal detune in cents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuneSampler {
    pub sigma_cents: f64,
    pub max_cents: f64,
}

impl Default for DetuneSampler {
    fn default() -> Self {
        Self { sigma_cents: 10.0 / 3.0, max_cents: 10.0 }
    }
}

impl DetuneSampler {
    pub fn disabled() -> Self {
        Self { sigma_cents: 0.0, max_cents: 0.0 }
    }

    /// Draws until a value lands inside `[-max, max]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if !(self.sigma_cents > 0.0) || !(self.max_cents > 0.0) {
            return 0.0;
        }
        let normal = Normal::new(0.0, self.sigma_cents).expect("positive finite sigma");
        loop {
            let cents: f64 = normal.sample(rng);
            if cents.abs() <= self.max_cents {
                return cents;
            }
        }
    }
}

/// The four buckling events of one contraction starting at `t0_s`.
///
/// Gaps are one pitch period plus a uniform random extra of up to
/// `period * (1 / speed - 1)`, so full speed is exactly coherent and half
/// speed can add up to one more period. Returns `None` at zero speed.
pub fn schedule_contraction<R: Rng + ?Sized>(
    t0_s: f64,
    pitch_hz: f64,
    speed_nrm: f64,
    loudness_nrm: f64,
    rng: &mut R,
) -> Option<[BucklingEvent; 4]> {
    if !(speed_nrm > 0.0) {
        return None;
    }
    let period = 1.0 / pitch_hz;
    let headroom = period * (1.0 / speed_nrm.min(1.0) - 1.0);
    let amplitude = loudness_amplitude(loudness_nrm);
    let pulse_duration_s = period / 3.0;
    let mut onset = t0_s;
    let mut events = [BucklingEvent { onset_s: t0_s, kind: BucklingKind::InRib1, amplitude, pulse_duration_s }; 4];
    for (i, event) in events.iter_mut().enumerate() {
        if i > 0 {
            let extra: f64 = rng.random();
            onset += period + headroom * extra;
        }
        event.onset_s = onset;
        event.kind = BucklingKind::ALL[i];
    }
    Some(events)
}

/// Gain and polarity of one kind of buckling pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    pub gain: f64,
    /// Sign of the first lobe: -1 for a negative-leading pulse.
    pub lead_sign: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTable(pub [PulseShape; 4]);

impl Default for PulseTable {
    fn default() -> Self {
        let shape = |gain| PulseShape { gain, lead_sign: -1.0 };
        PulseTable([shape(1.0), shape(1.0), shape(1.0), shape(1.3)])
    }
}

impl PulseTable {
    pub fn from_parts(gains: [f64; 4], lead_signs: [f64; 4]) -> Self {
        let mut table = [PulseShape { gain: 1.0, lead_sign: -1.0 }; 4];
        for (i, shape) in table.iter_mut().enumerate() {
            shape.gain = gains[i];
            shape.lead_sign = if lead_signs[i] < 0.0 { -1.0 } else { 1.0 };
        }
        PulseTable(table)
    }

    pub fn shape(&self, kind: BucklingKind) -> PulseShape {
        self.0[kind.index()]
    }
}

/// Value of a buckling pulse at time `t_s`: one bipolar sine cycle spanning
/// the pulse duration, zero outside it.
pub fn render_buckling_pulse(event: &BucklingEvent, t_s: f64, table: &PulseTable) -> f64 {
    let tau = t_s - event.onset_s;
    if tau < 0.0 || tau >= event.pulse_duration_s {
        return 0.0;
    }
    let shape = table.shape(event.kind);
    event.amplitude * shape.gain * shape.lead_sign * (TAU * tau / event.pulse_duration_s).sin()
}

/// Tymbal muscle oscillator with per-contraction detune.
#[derive(Debug, Clone)]
pub struct MuscleState {
    phase: f64,
    detune_cents: f64,
    rng: ChaCha8Rng,
}

impl MuscleState {
    pub fn new(seed: u64) -> Self {
        Self { phase: 0.0, detune_cents: 0.0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn detune_cents(&self) -> f64 {
        self.detune_cents
    }
}

/// Per-sample output of [`Excitation::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationStep {
    /// Detuned contraction rate.
    pub muscle_freq_hz: f64,
    pub apodeme_speed_nrm: f64,
    /// Events of a contraction that started inside this sample.
    pub contraction: Option<[BucklingEvent; 4]>,
}

/// Drives contractions sample by sample.
#[derive(Debug, Clone)]
pub struct Excitation {
    sample_rate: f64,
    detune: DetuneSampler,
    muscle: MuscleState,
}

impl Excitation {
    pub fn new(sample_rate: f64, seed: u64, detune: DetuneSampler) -> Self {
        Self { sample_rate, detune, muscle: MuscleState::new(seed) }
    }

    pub fn muscle(&self) -> &MuscleState {
        &self.muscle
    }

    /// Arms a contraction at the very next step.
    pub fn restart(&mut self) {
        self.muscle.phase = 1.0;
    }

    /// Advances one sample starting at `t_s`.
    pub fn step(&mut self, t_s: f64, pitch_hz: f64, octave_factor: f64, loudness_nrm: f64) -> ExcitationStep {
        let base = muscle_base_freq(pitch_hz, octave_factor);
        let speed = apodeme_speed(base, pitch_hz);
        let muscle_freq_hz = base * cents_to_ratio(self.muscle.detune_cents);
        let increment = muscle_freq_hz / self.sample_rate;
        let mut contraction = None;
        if increment > 0.0 {
            let before = self.muscle.phase;
            let after = before + increment;
            if after >= 1.0 {
                let offset = ((1.0 - before) / increment).clamp(0.0, 1.0);
                let onset = t_s + offset / self.sample_rate;
                contraction = schedule_contraction(onset, pitch_hz, speed, loudness_nrm, &mut self.muscle.rng);
                self.muscle.detune_cents = self.detune.sample(&mut self.muscle.rng);
                self.muscle.phase = (after - 1.0).min(0.999_999);
            } else {
                self.muscle.phase = after;
            }
        }
        ExcitationStep { muscle_freq_hz, apodeme_speed_nrm: speed, contraction }
    }
}

/// Buckling events waiting to sound or still sounding.
#[derive(Debug, Clone, Default)]
pub struct PulseTrain {
    events: ArrayVec<BucklingEvent, 32>,
    dropped: u64,
}

impl PulseTrain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, events: &[BucklingEvent]) {
        for event in events {
            if self.events.try_push(*event).is_err() {
                self.dropped += 1;
            }
        }
    }

    pub fn clear(&mut self) {
        self.events.clear();
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events lost to a full queue.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Writes each kind's pulse value at `t_s` into `out` and retires
    /// finished events.
    pub fn render(&mut self, t_s: f64, table: &PulseTable, out: &mut [f64; 4]) {
        *out = [0.0; 4];
        for event in &self.events {
            out[event.kind.index()] += render_buckling_pulse(event, t_s, table);
        }
        self.events.retain(|e| t_s < e.onset_s + e.pulse_duration_s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E5: f64 = 659.26;

    #[test]
    fn muscle_rate_is_a_quarter_of_pitch() {
        assert!((muscle_base_freq(659.26, 1.0) - 164.815).abs() < 1e-9);
        assert!((muscle_base_freq(440.0, 1.0) - 110.0).abs() < 1e-12);
        assert!((muscle_base_freq(659.26, 0.5) - 82.4075).abs() < 1e-9);
    }

    #[test]
    fn apodeme_speed_saturates_at_coherent_rate() {
        assert_eq!(apodeme_speed(164.815, E5), 1.0);
        assert!((apodeme_speed(82.4075, E5) - 0.5).abs() < 1e-12);
        assert_eq!(apodeme_speed(200.0, E5), 1.0);
        assert_eq!(apodeme_speed(0.0, E5), 0.0);
    }

    #[test]
    fn detune_distribution() {
        let sampler = DetuneSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..100_000).map(|_| sampler.sample(&mut rng)).collect();
        assert!(draws.iter().all(|c| c.abs() <= 10.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.1, "mean {mean}");
        let var = draws.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        // Truncating a normal at 3 sigma trims the variance by about 2.7 %.
        assert!((var.sqrt() - 10.0 / 3.0 * 0.9864).abs() < 0.03, "sd {}", var.sqrt());

        let zero = DetuneSampler { sigma_cents: 0.0, max_cents: 10.0 };
        assert_eq!(zero.sample(&mut rng), 0.0);
    }

    #[test]
    fn full_speed_is_exactly_coherent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let events = schedule_contraction(0.25, E5, 1.0, 0.5, &mut rng).unwrap();
        for pair in events.windows(2) {
            let gap = pair[1].onset_s - pair[0].onset_s;
            assert!((gap - 1.0 / E5).abs() < 1e-15);
            assert!((gap * 1e3 - 1.51686).abs() < 1e-5);
        }
        let kinds: Vec<_> = events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, BucklingKind::ALL);
        assert!((events[0].pulse_duration_s * 1e6 - 505.62).abs() < 0.01);
    }

    #[test]
    fn half_speed_gaps_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let events = schedule_contraction(0.0, E5, 0.5, 0.5, &mut rng).unwrap();
            for pair in events.windows(2) {
                let gap_ms = (pair[1].onset_s - pair[0].onset_s) * 1e3;
                assert!((1.51686 - 1e-5..=3.03372 + 1e-5).contains(&gap_ms), "{gap_ms}");
            }
        }
    }

    #[test]
    fn loudness_maps_lower_half_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let quiet = schedule_contraction(0.0, E5, 1.0, 0.25, &mut rng).unwrap();
        assert_eq!(quiet[0].amplitude, 0.5);
        for loudness in [0.5, 0.75, 1.0] {
            assert_eq!(loudness_amplitude(loudness), 1.0);
        }
    }

    #[test]
    fn zero_speed_emits_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(schedule_contraction(0.0, E5, 0.0, 0.5, &mut rng).is_none());
    }

    #[test]
    fn pulse_is_bipolar_and_bounded_in_time() {
        let table = PulseTable::default();
        let event = BucklingEvent {
            onset_s: 0.01,
            kind: BucklingKind::InRib2,
            amplitude: 0.8,
            pulse_duration_s: 1.0 / (3.0 * E5),
        };
        assert_eq!(render_buckling_pulse(&event, 0.009, &table), 0.0);
        assert_eq!(render_buckling_pulse(&event, 0.02, &table), 0.0);
        // In-buckling leads with the negative lobe.
        assert!(render_buckling_pulse(&event, 0.01 + event.pulse_duration_s * 0.25, &table) < 0.0);

        // Midpoint-rule integral over the pulse.
        let n = 100_000;
        let dt = event.pulse_duration_s / n as f64;
        let (mut integral, mut area) = (0.0, 0.0);
        for i in 0..n {
            let v = render_buckling_pulse(&event, event.onset_s + (i as f64 + 0.5) * dt, &table);
            integral += v * dt;
            area += v.abs() * dt;
        }
        assert!(integral.abs() < 1e-6 * area);
    }

    #[test]
    fn coherent_onsets_form_a_pitch_grid() {
        let sr = 48_000.0;
        let mut exc = Excitation::new(sr, 9, DetuneSampler::disabled());
        exc.restart();
        let mut onsets = Vec::new();
        for n in 0..48_000 {
            if let Some(events) = exc.step(n as f64 / sr, E5, 1.0, 0.5).contraction {
                onsets.extend(events.iter().map(|e| e.onset_s));
            }
        }
        assert!(onsets.len() > 600);
        let t0 = onsets[0];
        for (i, onset) in onsets.iter().enumerate() {
            let grid = t0 + i as f64 / E5;
            assert!((onset - grid).abs() * sr < 1.0, "event {i} off grid");
        }
    }

    #[test]
    fn pulse_train_retires_finished_events() {
        let mut train = PulseTrain::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        train.push(&schedule_contraction(0.0, E5, 1.0, 0.5, &mut rng).unwrap());
        let mut out = [0.0; 4];
        train.render(0.0001, &PulseTable::default(), &mut out);
        assert!(out[0] != 0.0 && out[1] == 0.0);
        train.render(1.0, &PulseTable::default(), &mut out);
        assert!(train.is_empty());
    }

    fn mean_span(speed: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        (0..n)
            .map(|_| {
                let e = schedule_contraction(0.0, E5, speed, 0.5, &mut rng).unwrap();
                e[3].onset_s - e[0].onset_s
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn span_shrinks_as_speed_rises() {
        let spans: Vec<f64> = [0.3, 0.5, 0.7, 0.9, 1.0].iter().map(|&s| mean_span(s)).collect();
        for pair in spans.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    proptest! {
        #[test]
        fn contractions_are_ordered_and_deterministic(seed in any::<u64>(), speed in 0.01..1.0f64,
                                                      pitch in 329.63..659.26f64) {
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                schedule_contraction(1.0, pitch, speed, 0.4, &mut rng).unwrap()
            };
            let events = run();
            prop_assert_eq!(events, run());
            for pair in events.windows(2) {
                prop_assert!(pair[1].onset_s > pair[0].onset_s);
            }
        }
    }
}
