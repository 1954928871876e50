//! Wire format: one JSON object per WebSocket text frame.

use maemi_core::{PitchMode, Trigger};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A control message as sent by a client. Unknown fields are ignored.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    Hello {
        #[serde(default)]
        client: Option<String>,
    },
    Trigger {
        phase: String,
        #[serde(default)]
        voice: Option<usize>,
    },
    Set {
        param: String,
        value: Value,
        #[serde(default)]
        voice: Option<usize>,
    },
    Gate {
        on: bool,
        #[serde(default)]
        voice: Option<usize>,
    },
}

/// A validated instruction for one voice's render context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Trigger(Trigger),
    Gate(bool),
    Pitch(f64),
    Loudness(f64),
    Mode(PitchMode),
}

/// What a client message asks for once validated.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Hello,
    Voice { voice: usize, command: Command },
}

pub fn parse_trigger(name: &str) -> Option<Trigger> {
    match name {
        "mae" => Some(Trigger::Mae),
        "mae_re" => Some(Trigger::MaeRe),
        "mi" => Some(Trigger::Mi),
        _ => None,
    }
}

/// Parses and validates a text frame. The error is the message for the
/// client's error frame.
pub fn parse_request(text: &str, voices: usize) -> Result<Request, String> {
    let msg: ControlMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    let (voice, command) = match msg {
        ControlMessage::Hello { .. } => return Ok(Request::Hello),
        ControlMessage::Trigger { phase, voice } => {
            let t = parse_trigger(&phase).ok_or_else(|| format!("unknown phase `{phase}`"))?;
            (voice, Command::Trigger(t))
        }
        ControlMessage::Gate { on, voice } => (voice, Command::Gate(on)),
        ControlMessage::Set { param, value, voice } => (voice, parse_set(&param, &value)?),
    };
    let voice = voice.unwrap_or(0);
    if voice >= voices {
        return Err(format!("voice {voice} out of range (0..{voices})"));
    }
    Ok(Request::Voice { voice, command })
}

fn parse_set(param: &str, value: &Value) -> Result<Command, String> {
    let number = || value.as_f64().filter(|v| v.is_finite()).ok_or_else(|| format!("`{param}` needs a finite number"));
    match param {
        "pitch_hz" => number().map(Command::Pitch),
        "loudness" => number().map(Command::Loudness),
        "mode" => {
            let name = value.as_str().ok_or("`mode` needs \"fixed\" or \"following\"")?;
            name.parse::<PitchMode>().map(Command::Mode).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown param `{other}`")),
    }
}

/// Frames sent to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Meter {
        rms_db: f64,
        peak_db: f64,
    },
    Spectrum {
        lo_hz: f64,
        hi_hz: f64,
        /// Peak level per log-spaced band, in dB.
        bins: Vec<f64>,
    },
    State {
        voice: usize,
        phase: String,
        gate: bool,
        pitch_hz: f64,
        loudness: f64,
        mode: String,
        finished: bool,
    },
    Error {
        message: String,
    },
}

impl ServerFrame {
    pub fn error(message: impl Into<String>) -> Self {
        ServerFrame::Error { message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }
}
