//! Offline rendering of scores through a voice.

use crate::control::{ControlFrame, Trigger, E5_HZ};
use crate::error::Result;
use crate::score::{EventKind, Score};
use crate::voice::{Voice, VoiceConfig, VoiceTaps};

/// Stereo audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stereo {
    pub sample_rate: u32,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Stereo {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.left.len() as f64 / self.sample_rate as f64
    }

    /// Mono mix of the two channels.
    pub fn mono(&self) -> Vec<f64> {
        self.left.iter().zip(&self.right).map(|(l, r)| 0.5 * (l + r)).collect()
    }

    /// Samples between two times, clamped to the signal.
    pub fn window(&self, start_s: f64, end_s: f64) -> &[f64] {
        let sr = self.sample_rate as f64;
        let a = ((start_s * sr) as usize).min(self.len());
        let b = ((end_s * sr) as usize).clamp(a, self.len());
        &self.left[a..b]
    }
}

/// Steps a voice through a score block by block. Events take effect at the
/// first block boundary at or after their time.
pub struct ScorePlayer<'a> {
    voice: Voice,
    score: &'a Score,
    cursor: usize,
    gate: bool,
    loudness: f64,
    pitch: f64,
}

impl<'a> ScorePlayer<'a> {
    pub fn new(score: &'a Score, config: VoiceConfig) -> Result<Self> {
        Ok(Self { voice: Voice::new(config)?, score, cursor: 0, gate: false, loudness: 0.5, pitch: E5_HZ })
    }

    pub fn voice(&self) -> &Voice {
        &self.voice
    }

    /// Start time of the next block.
    pub fn time_s(&self) -> f64 {
        self.voice.sample_index() as f64 / self.voice.config().sample_rate as f64
    }

    /// Control frame for the next block, consuming due events.
    pub fn next_frame(&mut self) -> ControlFrame {
        let start = self.voice.sample_index();
        let sr = self.voice.config().sample_rate as f64;
        let mut trigger: Option<Trigger> = None;
        while let Some(event) = self.score.events().get(self.cursor) {
            let due = (event.t_s * sr - 1e-9).ceil().max(0.0) as u64;
            if due > start {
                break;
            }
            match event.kind {
                EventKind::GateOn => self.gate = true,
                EventKind::GateOff => self.gate = false,
                EventKind::Pitch(hz) => self.pitch = hz,
                EventKind::Loudness(l) => self.loudness = l,
                EventKind::Trigger(t) => {
                    trigger = Some(match trigger {
                        Some(prev) => later_stage(prev, t),
                        None => t,
                    })
                }
            }
            self.cursor += 1;
        }
        ControlFrame::new(self.gate, self.loudness, self.pitch, trigger)
    }

    pub fn next_block(&mut self) -> &VoiceTaps {
        let frame = self.next_frame();
        self.voice.process_block(&frame)
    }

    pub fn into_voice(self) -> Voice {
        self.voice
    }
}

fn later_stage(a: Trigger, b: Trigger) -> Trigger {
    let rank = |t: Trigger| match t {
        Trigger::Mae => 0,
        Trigger::MaeRe => 1,
        Trigger::Mi => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Length of a full render: the last event plus the release.
pub fn render_duration_s(score: &Score, config: &VoiceConfig) -> f64 {
    score.end_s() + config.release_duration_s
}

/// Renders a score for its full duration.
pub fn render_score(score: &Score, config: &VoiceConfig) -> Result<Stereo> {
    render_score_for(score, config, render_duration_s(score, config))
}

pub fn render_score_for(score: &Score, config: &VoiceConfig, duration_s: f64) -> Result<Stereo> {
    let frames = (duration_s * config.sample_rate as f64).round() as usize;
    let mut player = ScorePlayer::new(score, config.clone())?;
    let mut out = Stereo {
        sample_rate: config.sample_rate,
        left: Vec::with_capacity(frames + config.block_frames),
        right: Vec::with_capacity(frames + config.block_frames),
    };
    while out.left.len() < frames {
        let taps = player.next_block();
        out.left.extend_from_slice(&taps.output_l);
        out.right.extend_from_slice(&taps.output_r);
    }
    out.left.truncate(frames);
    out.right.truncate(frames);
    Ok(out)
}
