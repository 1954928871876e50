//! Real-time physical model of the *Hyalessa maculaticollis* ("maemi")
//! cicada call, with the spectral tools used to check its output.
//!
//! Signal flow per voice: call-phase machine and envelopes, tymbal muscle
//! contractions, rib-buckling pulses, tymbal plate resonators, abdominal
//! Helmholtz resonator and opercular attenuation.

// `!(x > 0.0)` guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abdomen;
pub mod analysis;
pub mod constants;
pub mod control;
pub mod envelope;
pub mod error;
pub mod excitation;
pub mod filter;
pub mod plate;
pub mod render;
pub mod score;
pub mod selftest;
pub mod voice;
pub mod wav;

pub use abdomen::{helmholtz_f0, opercular_gain, Bandpass6, HelmholtzGeometry, PitchMode};
pub use constants::Constants;
pub use control::{advance_phase, CallPhase, ControlFrame, ControlIngest, RawControls, Trigger, A4_HZ, E4_HZ, E5_HZ};
pub use envelope::{EnvelopeSystem, PhaseEnvelope, Segment};
pub use error::{Error, Result};
pub use excitation::{BucklingEvent, BucklingKind};
pub use plate::{clip_resonation, verify_25pct, PlateBank, PlateParams};
pub use render::{render_score, ScorePlayer, Stereo};
pub use score::{note_hz, Score, ScoreEvent};
pub use selftest::{Check, SelfTest, CHECK_COUNT};
pub use voice::{Voice, VoiceConfig, VoiceTaps, DEFAULT_SEED};
pub use wav::{read_wav, wav_bytes, write_wav, WavFormat};
