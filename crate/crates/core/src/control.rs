//! Live control inputs and the call-phase state machine.
//!
//! Six scalar inputs drive a voice: a gate, a normalized loudness, a pitch in
//! hertz and three call-phase triggers ("mae", "mae (re)", "mi"). Raw values
//! are clamped rather than rejected so a performance never fails on a bad
//! controller value.

use serde::Serialize;

/// Lowest playable pitch (E4).
pub const E4_HZ: f64 = 329.63;
/// Concert A.
pub const A4_HZ: f64 = 440.0;
/// Highest playable pitch (E5), also the anchor of the fixed abdominal mode.
pub const E5_HZ: f64 = 659.26;

/// A call-phase trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Start of a call (`t_mae_trig`).
    Mae,
    /// Repeated middle phase (`t_mae_retrig`).
    MaeRe,
    /// Final phase (`t_mi_trig`).
    Mi,
}

impl Trigger {
    pub fn phase(self) -> CallPhase {
        match self {
            Trigger::Mae => CallPhase::Initial,
            Trigger::MaeRe => CallPhase::Middle,
            Trigger::Mi => CallPhase::Final,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trigger::Mae => "mae",
            Trigger::MaeRe => "mae_re",
            Trigger::Mi => "mi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum CallPhase {
    #[default]
    Idle,
    Initial,
    Middle,
    Final,
    Releasing,
}

impl CallPhase {
    pub const ALL: [CallPhase; 5] =
        [CallPhase::Idle, CallPhase::Initial, CallPhase::Middle, CallPhase::Final, CallPhase::Releasing];

    pub fn index(self) -> usize {
        self as usize
    }

    /// True while the tymbal is being driven (a call is in progress).
    pub fn is_sounding(self) -> bool {
        matches!(self, CallPhase::Initial | CallPhase::Middle | CallPhase::Final)
    }

    pub fn name(self) -> &'static str {
        match self {
            CallPhase::Idle => "Idle",
            CallPhase::Initial => "Initial",
            CallPhase::Middle => "Middle",
            CallPhase::Final => "Final",
            CallPhase::Releasing => "Releasing",
        }
    }

    pub fn from_index(index: u8) -> Option<CallPhase> {
        CallPhase::ALL.get(index as usize).copied()
    }
}

/// Unvalidated controller values, one per input argument.
///
/// Trigger inputs are levels; a trigger fires on a transition from zero (or
/// below) to a positive value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawControls {
    pub gate: f64,
    pub loudness_nrm: f64,
    pub pitch_hz: f64,
    pub mae: f64,
    pub mae_re: f64,
    pub mi: f64,
}

impl Default for RawControls {
    fn default() -> Self {
        Self { gate: 0.0, loudness_nrm: 0.5, pitch_hz: E5_HZ, mae: 0.0, mae_re: 0.0, mi: 0.0 }
    }
}

/// Validated controls for one processing block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlFrame {
    pub gate: bool,
    pub loudness_nrm: f64,
    pub pitch_hz: f64,
    /// The single trigger honored for this block, if any.
    pub trigger: Option<Trigger>,
}

impl Default for ControlFrame {
    fn default() -> Self {
        Self { gate: false, loudness_nrm: 0.5, pitch_hz: E5_HZ, trigger: None }
    }
}

impl ControlFrame {
    /// Builds a frame from already meaningful values, clamping them.
    pub fn new(gate: bool, loudness_nrm: f64, pitch_hz: f64, trigger: Option<Trigger>) -> Self {
        Self { gate, loudness_nrm: clamp_loudness(loudness_nrm), pitch_hz: clamp_pitch(pitch_hz), trigger }
    }

    /// The raw levels that reproduce this frame from a quiet trigger state.
    pub fn to_raw(&self) -> RawControls {
        let level = |t: Trigger| if self.trigger == Some(t) { 1.0 } else { 0.0 };
        RawControls {
            gate: if self.gate { 1.0 } else { 0.0 },
            loudness_nrm: self.loudness_nrm,
            pitch_hz: self.pitch_hz,
            mae: level(Trigger::Mae),
            mae_re: level(Trigger::MaeRe),
            mi: level(Trigger::Mi),
        }
    }
}

pub fn clamp_loudness(value: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(0.0, 1.0)
    }
}

pub fn clamp_pitch(value: f64) -> f64 {
    if value.is_nan() {
        E4_HZ
    } else {
        value.clamp(E4_HZ, E5_HZ)
    }
}

/// Turns raw controller values into frames, detecting trigger edges.
#[derive(Debug, Clone, Default)]
pub struct ControlIngest {
    held: [bool; 3],
}

impl ControlIngest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest(&mut self, raw: &RawControls) -> ControlFrame {
        let now = [raw.mae > 0.0, raw.mae_re > 0.0, raw.mi > 0.0];
        let rose = |i: usize| now[i] && !self.held[i];
        // Later call stages win a tie.
        let trigger = if rose(2) {
            Some(Trigger::Mi)
        } else if rose(1) {
            Some(Trigger::MaeRe)
        } else if rose(0) {
            Some(Trigger::Mae)
        } else {
            None
        };
        self.held = now;
        ControlFrame {
            gate: raw.gate > 0.5,
            loudness_nrm: clamp_loudness(raw.loudness_nrm),
            pitch_hz: clamp_pitch(raw.pitch_hz),
            trigger,
        }
    }
}

/// Next call phase for a block.
///
/// With the gate open, any trigger moves to its phase from any phase except
/// `Releasing`, which is terminal. With the gate closed, a sounding voice
/// starts releasing and triggers are ignored.
pub fn advance_phase(phase: CallPhase, frame: &ControlFrame) -> CallPhase {
    if phase == CallPhase::Releasing {
        return CallPhase::Releasing;
    }
    if !frame.gate {
        return match phase {
            CallPhase::Idle => CallPhase::Idle,
            _ => CallPhase::Releasing,
        };
    }
    match frame.trigger {
        Some(trigger) => trigger.phase(),
        None => phase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(mae: f64, mae_re: f64, mi: f64) -> RawControls {
        RawControls { gate: 1.0, mae, mae_re, mi, ..RawControls::default() }
    }

    #[test]
    fn clamps_out_of_range_values() {
        let mut ingest = ControlIngest::new();
        let frame = ingest.ingest(&RawControls { loudness_nrm: -0.3, pitch_hz: 1000.0, ..RawControls::default() });
        assert_eq!(frame.loudness_nrm, 0.0);
        assert_eq!(frame.pitch_hz, 659.26);

        let frame = ingest.ingest(&RawControls { loudness_nrm: f64::NAN, pitch_hz: 12.0, ..RawControls::default() });
        assert_eq!(frame.loudness_nrm, 0.0);
        assert_eq!(frame.pitch_hz, E4_HZ);
    }

    #[test]
    fn tie_break_prefers_later_stage() {
        let mut ingest = ControlIngest::new();
        assert_eq!(ingest.ingest(&raw(1.0, 0.0, 1.0)).trigger, Some(Trigger::Mi));
        let mut ingest = ControlIngest::new();
        assert_eq!(ingest.ingest(&raw(1.0, 1.0, 0.0)).trigger, Some(Trigger::MaeRe));
    }

    #[test]
    fn triggers_fire_on_rising_edges_only() {
        let mut ingest = ControlIngest::new();
        assert_eq!(ingest.ingest(&raw(1.0, 0.0, 0.0)).trigger, Some(Trigger::Mae));
        assert_eq!(ingest.ingest(&raw(1.0, 0.0, 0.0)).trigger, None);
        assert_eq!(ingest.ingest(&raw(0.0, 0.0, 0.0)).trigger, None);
        assert_eq!(ingest.ingest(&raw(0.7, 0.0, 0.0)).trigger, Some(Trigger::Mae));
    }

    #[test]
    fn phase_transitions() {
        let on = |trigger| ControlFrame::new(true, 0.5, E5_HZ, trigger);
        assert_eq!(advance_phase(CallPhase::Idle, &on(Some(Trigger::Mae))), CallPhase::Initial);
        assert_eq!(advance_phase(CallPhase::Middle, &on(Some(Trigger::MaeRe))), CallPhase::Middle);
        assert_eq!(advance_phase(CallPhase::Idle, &on(Some(Trigger::Mi))), CallPhase::Final);
        assert_eq!(advance_phase(CallPhase::Final, &on(Some(Trigger::Mae))), CallPhase::Initial);
        assert_eq!(advance_phase(CallPhase::Middle, &on(None)), CallPhase::Middle);

        let off = ControlFrame::new(false, 0.5, E5_HZ, None);
        assert_eq!(advance_phase(CallPhase::Final, &off), CallPhase::Releasing);
        assert_eq!(advance_phase(CallPhase::Idle, &off), CallPhase::Idle);
        assert_eq!(advance_phase(CallPhase::Releasing, &on(Some(Trigger::Mae))), CallPhase::Releasing);
    }

    fn arb_raw() -> impl Strategy<Value = RawControls> {
        (-1.0..2.0f64, -2.0..3.0f64, 0.0..2000.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(
            |(gate, loudness_nrm, pitch_hz, mae, mae_re, mi)| RawControls {
                gate,
                loudness_nrm,
                pitch_hz,
                mae: (mae - 0.5).max(0.0),
                mae_re: (mae_re - 0.5).max(0.0),
                mi: (mi - 0.5).max(0.0),
            },
        )
    }

    fn arb_phase() -> impl Strategy<Value = CallPhase> {
        (0u8..5).prop_map(|i| CallPhase::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn ingest_is_idempotent(raw in arb_raw()) {
            let once = ControlIngest::new().ingest(&raw);
            let twice = ControlIngest::new().ingest(&once.to_raw());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn advance_phase_is_a_pure_replay(start in arb_phase(), raws in proptest::collection::vec(arb_raw(), 1..40)) {
            let run = || {
                let mut ingest = ControlIngest::new();
                let mut phase = start;
                raws.iter()
                    .map(|raw| {
                        phase = advance_phase(phase, &ingest.ingest(raw));
                        phase
                    })
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
