//! The render context: voices, their mailboxes and the shared status.
//!
//! [`Engine::render_block`] is the audio callback. It only pops from
//! wait-free queues, stores atomics and pushes into ring buffers.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;

use maemi_core::{CallPhase, ControlFrame, PitchMode, Trigger, Voice, VoiceConfig, E5_HZ};
use rtrb::{Consumer, Producer, RingBuffer};

use crate::protocol::Command;

pub const MAILBOX_CAPACITY: usize = 256;

/// Last values a voice rendered with, readable from any thread.
#[derive(Debug)]
pub struct VoiceStatus {
    phase: AtomicU8,
    gate: AtomicBool,
    finished: AtomicBool,
    following: AtomicBool,
    pitch_bits: AtomicU64,
    loudness_bits: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceSnapshot {
    pub phase: CallPhase,
    pub gate: bool,
    pub finished: bool,
    pub mode: PitchMode,
    pub pitch_hz: f64,
    pub loudness: f64,
}

impl VoiceStatus {
    fn new(mode: PitchMode) -> Self {
        Self {
            phase: AtomicU8::new(CallPhase::Idle as u8),
            gate: AtomicBool::new(false),
            finished: AtomicBool::new(false),
            following: AtomicBool::new(mode == PitchMode::PitchFollowing),
            pitch_bits: AtomicU64::new(E5_HZ.to_bits()),
            loudness_bits: AtomicU64::new(0.5f64.to_bits()),
        }
    }

    pub fn snapshot(&self) -> VoiceSnapshot {
        VoiceSnapshot {
            phase: CallPhase::from_index(self.phase.load(Ordering::Acquire)).unwrap_or_default(),
            gate: self.gate.load(Ordering::Relaxed),
            finished: self.finished.load(Ordering::Relaxed),
            mode: if self.following.load(Ordering::Relaxed) { PitchMode::PitchFollowing } else { PitchMode::FixedE5 },
            pitch_hz: f64::from_bits(self.pitch_bits.load(Ordering::Relaxed)),
            loudness: f64::from_bits(self.loudness_bits.load(Ordering::Relaxed)),
        }
    }
}

#[derive(Debug)]
pub struct SharedStatus {
    pub voices: Vec<VoiceStatus>,
    blocks: AtomicU64,
    tap_overruns: AtomicU64,
}

impl SharedStatus {
    pub fn blocks_rendered(&self) -> u64 {
        self.blocks.load(Ordering::Acquire)
    }

    /// Samples the telemetry reader was too slow to take.
    pub fn tap_overruns(&self) -> u64 {
        self.tap_overruns.load(Ordering::Relaxed)
    }
}

struct Slot {
    voice: Voice,
    mailbox: Consumer<Command>,
    gate: bool,
    pitch_hz: f64,
    loudness: f64,
}

impl Slot {
    /// Applies queued commands for one block, in arrival order. A block
    /// carries at most one trigger and one gate change, and a trigger never
    /// shares a block with a later gate-off that would swallow it. Anything
    /// else waits for the next block so order is never lost.
    fn next_frame(&mut self) -> ControlFrame {
        let mut trigger: Option<Trigger> = None;
        let mut gate_changed = false;
        while let Ok(&command) = self.mailbox.peek() {
            let defer = match command {
                Command::Trigger(_) => trigger.is_some() || (gate_changed && !self.gate),
                Command::Gate(on) => gate_changed || (trigger.is_some() && !on),
                _ => false,
            };
            if defer {
                break;
            }
            let _ = self.mailbox.pop();
            match command {
                Command::Trigger(t) => trigger = Some(t),
                Command::Gate(on) => {
                    gate_changed = on != self.gate;
                    if on && !self.gate && self.voice.phase() == CallPhase::Releasing {
                        self.voice.restart();
                    }
                    self.gate = on;
                }
                Command::Pitch(hz) => self.pitch_hz = hz,
                Command::Loudness(l) => self.loudness = l,
                Command::Mode(m) => self.voice.set_mode(m),
            }
        }
        ControlFrame::new(self.gate, self.loudness, self.pitch_hz, trigger)
    }
}

pub struct Engine {
    slots: Vec<Slot>,
    status: Arc<SharedStatus>,
    tap: Producer<f32>,
    block_frames: usize,
}

/// An engine plus the ends of its queues that live in other contexts.
pub struct EngineParts {
    pub engine: Engine,
    /// One producer per voice, for the network context.
    pub mailboxes: Vec<Producer<Command>>,
    /// Mixed output copy for the telemetry context.
    pub taps: Consumer<f32>,
    pub status: Arc<SharedStatus>,
}

impl Engine {
    pub fn build(config: &VoiceConfig, voices: usize, tap_capacity: usize) -> maemi_core::Result<EngineParts> {
        let mut slots = Vec::with_capacity(voices);
        let mut mailboxes = Vec::with_capacity(voices);
        for i in 0..voices {
            let (tx, rx) = RingBuffer::new(MAILBOX_CAPACITY);
            let voice = Voice::new(VoiceConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() })?;
            slots.push(Slot { voice, mailbox: rx, gate: false, pitch_hz: E5_HZ, loudness: 0.5 });
            mailboxes.push(tx);
        }
        let status = Arc::new(SharedStatus {
            voices: (0..voices).map(|_| VoiceStatus::new(config.mode)).collect(),
            blocks: AtomicU64::new(0),
            tap_overruns: AtomicU64::new(0),
        });
        let (tap, taps) = RingBuffer::new(tap_capacity.max(config.block_frames));
        Ok(EngineParts {
            engine: Engine { slots, status: status.clone(), tap, block_frames: config.block_frames },
            mailboxes,
            taps,
            status,
        })
    }

    pub fn block_frames(&self) -> usize {
        self.block_frames
    }

    pub fn status(&self) -> &Arc<SharedStatus> {
        &self.status
    }

    /// Renders one block of mono output into `out`, which must hold
    /// exactly one block.
    pub fn render_block(&mut self, out: &mut [f32]) {
        assert_eq!(out.len(), self.block_frames, "render_block needs one block");
        out.fill(0.0);
        for (slot, status) in self.slots.iter_mut().zip(&self.status.voices) {
            let frame = slot.next_frame();
            let taps = slot.voice.process_block(&frame);
            for (o, x) in out.iter_mut().zip(&taps.output_l) {
                *o += *x as f32;
            }
            status.phase.store(slot.voice.phase() as u8, Ordering::Release);
            status.gate.store(frame.gate, Ordering::Relaxed);
            status.finished.store(slot.voice.is_finished(), Ordering::Relaxed);
            status.following.store(slot.voice.mode() == PitchMode::PitchFollowing, Ordering::Relaxed);
            status.pitch_bits.store(frame.pitch_hz.to_bits(), Ordering::Relaxed);
            status.loudness_bits.store(frame.loudness_nrm.to_bits(), Ordering::Relaxed);
        }
        let mut dropped = 0;
        for o in out.iter_mut() {
            *o = o.clamp(-1.0, 1.0);
            if self.tap.push(*o).is_err() {
                dropped += 1;
            }
        }
        if dropped > 0 {
            self.status.tap_overruns.fetch_add(dropped, Ordering::Relaxed);
        }
        self.status.blocks.fetch_add(1, Ordering::Release);
    }
}
