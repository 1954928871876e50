//! Plain-text control scores: one `<t_s> <kind> [value]` event per line.

use std::fmt;

use crate::control::{clamp_loudness, Trigger, E4_HZ, E5_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    GateOn,
    GateOff,
    Trigger(Trigger),
    Pitch(f64),
    Loudness(f64),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::GateOn => "gate_on",
            EventKind::GateOff => "gate_off",
            EventKind::Trigger(t) => t.name(),
            EventKind::Pitch(_) => "pitch",
            EventKind::Loudness(_) => "loudness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEvent {
    pub t_s: f64,
    pub kind: EventKind,
}

impl fmt::Display for ScoreEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EventKind::Pitch(v) | EventKind::Loudness(v) => {
                write!(f, "{} {} {}", self.t_s, self.kind.name(), v)
            }
            _ => write!(f, "{} {}", self.t_s, self.kind.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Score {
    events: Vec<ScoreEvent>,
}

/// Equal-tempered frequency of a note name between E4 and E5 (A4 = 440 Hz),
/// rounded to 0.01 Hz.
pub fn note_hz(name: &str) -> Option<f64> {
    let mut chars = name.chars();
    let letter = chars.next()?.to_ascii_uppercase();
    let base = match letter {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let rest: String = chars.collect();
    let (accidental, octave) = match rest.chars().next()? {
        '#' => (1, &rest[1..]),
        'b' => (-1, &rest[1..]),
        _ => (0, rest.as_str()),
    };
    let octave: i32 = octave.parse().ok()?;
    let midi = 12 * (octave + 1) + base + accidental;
    if !(64..=76).contains(&midi) {
        return None;
    }
    let hz = 440.0 * ((midi - 69) as f64 / 12.0).exp2();
    Some((hz * 100.0).round() / 100.0)
}

/// The thirteen playable notes, E4 to E5.
pub const NOTE_NAMES: [&str; 13] = ["E4", "F4", "F#4", "G4", "G#4", "A4", "A#4", "B4", "C5", "C#5", "D5", "D#5", "E5"];

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_pitch(value: &str, line: usize) -> Result<f64> {
    if let Some(hz) = note_hz(value) {
        return Ok(hz);
    }
    match value.parse::<f64>() {
        Ok(hz) if (E4_HZ..=E5_HZ).contains(&hz) => Ok(hz),
        Ok(hz) => Err(parse_error(line, format!("pitch {hz} Hz outside E4..E5"))),
        Err(_) => Err(parse_error(line, format!("invalid note `{value}`"))),
    }
}

impl Score {
    pub fn new(events: Vec<ScoreEvent>) -> Result<Self> {
        for (i, pair) in events.windows(2).enumerate() {
            if pair[1].t_s < pair[0].t_s {
                return Err(parse_error(i + 2, "events out of time order"));
            }
        }
        Ok(Self { events })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        let mut last_t = 0.0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let t_s: f64 = fields
                .next()
                .and_then(|t| t.parse().ok())
                .filter(|t: &f64| t.is_finite() && *t >= 0.0)
                .ok_or_else(|| parse_error(line, "expected a non-negative time"))?;
            if t_s < last_t {
                return Err(parse_error(line, format!("time {t_s} is earlier than {last_t}")));
            }
            last_t = t_s;
            let kind_name = fields.next().ok_or_else(|| parse_error(line, "missing event kind"))?;
            let value = fields.next();
            let kind = match (kind_name, value) {
                ("gate_on", None) => EventKind::GateOn,
                ("gate_off", None) => EventKind::GateOff,
                ("mae", None) => EventKind::Trigger(Trigger::Mae),
                ("mae_re", None) => EventKind::Trigger(Trigger::MaeRe),
                ("mi", None) => EventKind::Trigger(Trigger::Mi),
                ("pitch", Some(v)) => EventKind::Pitch(parse_pitch(v, line)?),
                ("loudness", Some(v)) => {
                    let l: f64 = v.parse().map_err(|_| parse_error(line, format!("invalid loudness `{v}`")))?;
                    if !(0.0..=1.0).contains(&l) {
                        return Err(parse_error(line, format!("loudness {l} outside [0, 1]")));
                    }
                    EventKind::Loudness(clamp_loudness(l))
                }
                ("pitch" | "loudness", None) => return Err(parse_error(line, format!("`{kind_name}` needs a value"))),
                ("gate_on" | "gate_off" | "mae" | "mae_re" | "mi", Some(_)) => {
                    return Err(parse_error(line, format!("`{kind_name}` takes no value")))
                }
                (other, _) => return Err(parse_error(line, format!("unknown event kind `{other}`"))),
            };
            if fields.next().is_some() {
                return Err(parse_error(line, "trailing fields"));
            }
            events.push(ScoreEvent { t_s, kind });
        }
        Ok(Self { events })
    }

    /// The built-in call: one initial phase, two middle phases and a final
    /// phase, gate closing so the release ends at 6.6 s.
    pub fn demo(pitch_hz: f64) -> Self {
        let e = |t_s, kind| ScoreEvent { t_s, kind };
        Self {
            events: vec![
                e(0.0, EventKind::GateOn),
                e(0.0, EventKind::Pitch(pitch_hz)),
                e(0.0, EventKind::Loudness(0.5)),
                e(0.1, EventKind::Trigger(Trigger::Mae)),
                e(2.2, EventKind::Trigger(Trigger::MaeRe)),
                e(4.0, EventKind::Trigger(Trigger::MaeRe)),
                e(5.2, EventKind::Trigger(Trigger::Mi)),
                e(6.55, EventKind::GateOff),
            ],
        }
    }

    pub fn demo_for_note(name: &str) -> Result<Self> {
        note_hz(name).map(Self::demo).ok_or_else(|| Error::Config(format!("note `{name}` is not between E4 and E5")))
    }

    pub fn events(&self) -> &[ScoreEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Time of the last event.
    pub fn end_s(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t_s)
    }

    /// Replaces every loudness event with `loudness`.
    pub fn with_loudness(mut self, loudness: f64) -> Self {
        for e in &mut self.events {
            if let EventKind::Loudness(l) = &mut e.kind {
                *l = loudness;
            }
        }
        self
    }

    pub fn to_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Demo section boundaries used for analysis, in seconds.
pub mod demo_windows {
    /// Settled middle phase, between the two middle triggers.
    pub const MIDDLE: (f64, f64) = (2.5, 3.95);
    /// Final phase after the muscle rate has dropped an octave.
    pub const FINAL: (f64, f64) = (5.7, 6.5);
    pub const DURATION_S: f64 = 6.6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_event_score() {
        let s = Score::parse("0.0 gate_on\n0.1 mae\n6.0 mi\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.events()[2].kind, EventKind::Trigger(Trigger::Mi));
    }

    #[test]
    fn note_names() {
        assert_eq!(Score::parse("0.0 pitch E5").unwrap().events()[0].kind, EventKind::Pitch(659.26));
        assert_eq!(note_hz("E4"), Some(329.63));
        assert_eq!(note_hz("A4"), Some(440.0));
        assert_eq!(note_hz("C5"), Some(523.25));
        assert_eq!(note_hz("Db5"), note_hz("C#5"));
        assert_eq!(note_hz("C3"), None);
        assert_eq!(note_hz("D#4"), None);
        let all: Vec<f64> = NOTE_NAMES.iter().map(|n| note_hz(n).unwrap()).collect();
        for pair in all.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!((ratio / (1.0f64 / 12.0).exp2() - 1.0).abs() < 5e-5);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        match Score::parse("0.5 pitch H9") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match Score::parse("0.0 gate_on\n1.0 mae\n0.5 mi") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match Score::parse("# header\n0.0 honk") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(Score::parse("0.0 pitch 1000").is_err());
        assert!(Score::parse("0.0 loudness 1.5").is_err());
        assert!(Score::parse("0.0 mae 1").is_err());
    }

    #[test]
    fn demo_round_trips_through_text() {
        let demo = Score::demo(659.26);
        assert_eq!(Score::parse(&demo.to_text()).unwrap(), demo);
        assert_eq!(demo.end_s(), 6.55);
        assert!(Score::demo_for_note("C3").is_err());
    }
}
