//! Retriggerable multi-segment envelopes, one per call phase, merged into a
//! single continuous control signal.

use crate::control::CallPhase;

/// Curvatures closer to zero than this are treated as linear.
const LINEAR_EPSILON: f64 = 1e-6;

/// Interpolated level at normalized time `u` in `[0, 1]` of a segment from
/// `start` to `target`.
///
/// Curvature 0 is linear. Negative curvature moves quickly at first and
/// settles into the target; positive curvature starts slowly.
pub fn segment_level(start: f64, target: f64, curvature: f64, u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    if curvature.abs() < LINEAR_EPSILON {
        start + (target - start) * u
    } else {
        start + (target - start) * (1.0 - (curvature * u).exp()) / (1.0 - curvature.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub target: f64,
    pub duration_s: f64,
    pub curvature: f64,
}

impl Segment {
    pub fn new(target: f64, duration_s: f64, curvature: f64) -> Self {
        Self { target, duration_s: duration_s.max(0.0), curvature }
    }

    pub fn linear(target: f64, duration_s: f64) -> Self {
        Self::new(target, duration_s, 0.0)
    }

    /// Zero-duration segment: jumps to `target`.
    pub fn jump(target: f64) -> Self {
        Self::new(target, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnvelope {
    segments: Vec<Segment>,
    sustain_index: Option<usize>,
}

impl PhaseEnvelope {
    /// Returns `None` when `sustain_index` does not name a segment.
    pub fn new(segments: Vec<Segment>, sustain_index: Option<usize>) -> Option<Self> {
        match sustain_index {
            Some(i) if i >= segments.len() => None,
            _ => Some(Self { segments, sustain_index }),
        }
    }

    /// Envelope that holds after its last segment until the next trigger.
    pub fn sustained(segments: Vec<Segment>) -> Self {
        let sustain_index = segments.len().checked_sub(1);
        Self { segments, sustain_index }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn sustain_index(&self) -> Option<usize> {
        self.sustain_index
    }
}

/// Per-phase envelopes sharing one output level.
///
/// Triggering a phase starts its envelope from the current level, so the
/// output never jumps unless a segment has zero duration.
#[derive(Debug, Clone)]
pub struct EnvelopeSystem {
    phases: [Option<PhaseEnvelope>; 5],
    active: Option<CallPhase>,
    segment_index: usize,
    time_in_segment_s: f64,
    level: f64,
    segment_start_level: f64,
    holding: bool,
    unknown_triggers: u32,
    initial_level: f64,
}

impl EnvelopeSystem {
    pub fn new(initial_level: f64) -> Self {
        Self {
            phases: Default::default(),
            active: None,
            segment_index: 0,
            time_in_segment_s: 0.0,
            level: initial_level,
            segment_start_level: initial_level,
            holding: true,
            unknown_triggers: 0,
            initial_level,
        }
    }

    /// Back to the initial level with no phase active. Keeps the envelopes.
    pub fn reset(&mut self) {
        self.active = None;
        self.segment_index = 0;
        self.time_in_segment_s = 0.0;
        self.level = self.initial_level;
        self.segment_start_level = self.initial_level;
        self.holding = true;
    }

    pub fn with_phase(mut self, phase: CallPhase, envelope: PhaseEnvelope) -> Self {
        self.set_phase(phase, envelope);
        self
    }

    pub fn set_phase(&mut self, phase: CallPhase, envelope: PhaseEnvelope) {
        self.phases[phase.index()] = Some(envelope);
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn active_phase(&self) -> Option<CallPhase> {
        self.active
    }

    pub fn is_holding(&self) -> bool {
        self.holding
    }

    /// Count of triggers for phases without an envelope.
    pub fn unknown_triggers(&self) -> u32 {
        self.unknown_triggers
    }

    /// Switches to the envelope of `phase`. Unregistered phases are ignored
    /// and counted in [`unknown_triggers`](Self::unknown_triggers).
    pub fn trigger(&mut self, phase: CallPhase) {
        if self.phases[phase.index()].is_none() {
            self.unknown_triggers = self.unknown_triggers.saturating_add(1);
            return;
        }
        self.active = Some(phase);
        self.segment_index = 0;
        self.time_in_segment_s = 0.0;
        self.segment_start_level = self.level;
        self.holding = false;
        self.settle_zero_length();
    }

    /// Advances by `dt_s` seconds and returns the new level.
    pub fn sample(&mut self, dt_s: f64) -> f64 {
        self.advance(dt_s);
        self.level
    }

    pub fn advance(&mut self, dt_s: f64) {
        let mut remaining = dt_s.max(0.0);
        while !self.holding {
            let Some(segment) = self.current_segment() else {
                self.holding = true;
                break;
            };
            let left = segment.duration_s - self.time_in_segment_s;
            if remaining < left {
                self.time_in_segment_s += remaining;
                self.level = segment_level(
                    self.segment_start_level,
                    segment.target,
                    segment.curvature,
                    self.time_in_segment_s / segment.duration_s,
                );
                break;
            }
            remaining -= left.max(0.0);
            self.finish_segment(segment.target);
        }
    }

    fn current_segment(&self) -> Option<Segment> {
        let envelope = self.phases[self.active?.index()].as_ref()?;
        envelope.segments.get(self.segment_index).copied()
    }

    fn finish_segment(&mut self, target: f64) {
        self.level = target;
        self.segment_start_level = target;
        self.time_in_segment_s = 0.0;
        let sustain = self.active.and_then(|p| self.phases[p.index()].as_ref()).and_then(|e| e.sustain_index);
        if sustain == Some(self.segment_index) {
            self.holding = true;
        } else {
            self.segment_index += 1;
        }
    }

    /// Zero-length segments at the current position are applied immediately.
    fn settle_zero_length(&mut self) {
        while !self.holding {
            match self.current_segment() {
                Some(segment) if segment.duration_s <= 0.0 => self.finish_segment(segment.target),
                Some(_) => break,
                None => self.holding = true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_midpoint_and_endpoints() {
        assert_eq!(segment_level(0.0, 1.0, 0.0, 0.5), 0.5);
        assert_eq!(segment_level(0.2, 0.9, 0.0, 0.0), 0.2);
        for c in [-8.0, -1.0, 0.0, 0.5, 2.0, 8.0] {
            assert!((segment_level(0.3, -0.7, c, 1.0) + 0.7).abs() < 1e-12);
            assert!((segment_level(0.3, -0.7, c, 0.0) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn curved_midpoint_matches_closed_form() {
        // (1 - e^1) / (1 - e^2), evaluated independently.
        let expected = 0.268_941_421_369_995_1;
        assert!((segment_level(0.0, 1.0, 2.0, 0.5) - expected).abs() < 1e-12);
        assert!((expected - 0.26894).abs() < 1e-5);
    }

    fn rising(seconds: f64) -> EnvelopeSystem {
        EnvelopeSystem::new(0.4)
            .with_phase(CallPhase::Initial, PhaseEnvelope::sustained(vec![Segment::linear(1.0, seconds)]))
    }

    #[test]
    fn trigger_continues_from_current_level() {
        let mut env = rising(1.0);
        env.trigger(CallPhase::Initial);
        assert_eq!(env.level(), 0.4);
        let level = env.sample(0.5);
        assert!((level - 0.7).abs() < 1e-12);
        env.sample(2.0);
        assert_eq!(env.level(), 1.0);
        assert!(env.is_holding());
    }

    #[test]
    fn zero_duration_segment_jumps() {
        let mut env = EnvelopeSystem::new(0.1).with_phase(
            CallPhase::Final,
            PhaseEnvelope::sustained(vec![Segment::jump(0.8), Segment::linear(0.0, 1.0)]),
        );
        env.trigger(CallPhase::Final);
        let next = env.sample(1.0 / 48_000.0);
        assert!((next - 0.8).abs() < 1e-3);
    }

    #[test]
    fn unknown_phase_is_a_counted_no_op() {
        let mut env = rising(1.0);
        env.trigger(CallPhase::Middle);
        assert_eq!(env.unknown_triggers(), 1);
        assert_eq!(env.active_phase(), None);
        assert_eq!(env.sample(0.1), 0.4);
    }

    #[test]
    fn sustain_index_holds_before_later_segments() {
        let envelope = PhaseEnvelope::new(vec![Segment::linear(1.0, 0.1), Segment::linear(0.0, 0.1)], Some(0)).unwrap();
        let mut env = EnvelopeSystem::new(0.0).with_phase(CallPhase::Middle, envelope);
        env.trigger(CallPhase::Middle);
        env.sample(1.0);
        assert_eq!(env.level(), 1.0);
        assert!(PhaseEnvelope::new(vec![Segment::jump(1.0)], Some(1)).is_none());
    }

    #[test]
    fn sample_rate_invariance() {
        let build = || {
            let mut env = EnvelopeSystem::new(0.0)
                .with_phase(
                    CallPhase::Initial,
                    PhaseEnvelope::sustained(vec![Segment::new(1.0, 0.137, -3.0), Segment::new(0.6, 0.41, 2.0)]),
                )
                .with_phase(CallPhase::Final, PhaseEnvelope::sustained(vec![Segment::new(0.2, 0.3, 1.5)]));
            env.trigger(CallPhase::Initial);
            env
        };
        let (mut a, mut b) = (build(), build());
        for ms in 1..=900 {
            if ms == 400 {
                a.trigger(CallPhase::Final);
                b.trigger(CallPhase::Final);
            }
            for _ in 0..48 {
                a.advance(1.0 / 48_000.0);
            }
            for _ in 0..96 {
                b.advance(1.0 / 96_000.0);
            }
            assert!((a.level() - b.level()).abs() < 1e-6, "diverged at {ms} ms");
        }
    }

    proptest! {
        #[test]
        fn segments_are_monotone(v0 in -2.0..2.0f64, rise in 0.001..3.0f64, c in -12.0..12.0f64,
                                 u1 in 0.0..1.0f64, u2 in 0.0..1.0f64) {
            let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
            let v1 = v0 + rise;
            prop_assert!(segment_level(v0, v1, c, lo) <= segment_level(v0, v1, c, hi) + 1e-12);
        }

        #[test]
        fn endpoints_are_exact(v0 in -5.0..5.0f64, v1 in -5.0..5.0f64, c in -20.0..20.0f64) {
            prop_assert!((segment_level(v0, v1, c, 0.0) - v0).abs() < 1e-9);
            prop_assert!((segment_level(v0, v1, c, 1.0) - v1).abs() < 1e-9);
        }

        #[test]
        fn output_is_continuous_across_triggers(
            triggers in proptest::collection::vec((0usize..3, 1usize..4000), 1..12),
        ) {
            let phases = [CallPhase::Initial, CallPhase::Middle, CallPhase::Final];
            let mut env = EnvelopeSystem::new(0.5)
                .with_phase(phases[0], PhaseEnvelope::sustained(vec![Segment::new(1.0, 0.05, -4.0)]))
                .with_phase(phases[1], PhaseEnvelope::sustained(vec![
                    Segment::new(0.2, 0.02, 1.0), Segment::new(0.9, 0.03, -2.0)]))
                .with_phase(phases[2], PhaseEnvelope::sustained(vec![Segment::new(0.0, 0.08, 3.0)]));
            let dt = 1.0 / 96_000.0;
            let mut last = env.level();
            for (which, samples) in triggers {
                env.trigger(phases[which]);
                prop_assert_eq!(env.level(), last);
                for _ in 0..samples {
                    let level = env.sample(dt);
                    // Steepest segment here moves 0.8 in 20 ms with curvature 1.
                    prop_assert!((level - last).abs() < 2e-3);
                    last = level;
                }
            }
        }
    }
}
