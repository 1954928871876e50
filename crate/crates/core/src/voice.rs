//! One complete cicada voice: phase machine, envelopes, excitation, plate,
//! abdomen and gate release, rendered block by block.

use crate::abdomen::{Abdomen, PitchMode};
use crate::constants::Constants;
use crate::control::{advance_phase, CallPhase, ControlFrame};
use crate::envelope::{EnvelopeSystem, PhaseEnvelope, Segment};
use crate::error::{Error, Result};
use crate::excitation::{DetuneSampler, Excitation, PulseTable, PulseTrain};
use crate::plate::{decay_checks, Plate, PlateParams};

pub const SUPPORTED_SAMPLE_RATES: [u32; 3] = [44_100, 48_000, 96_000];
pub const MIN_BLOCK_FRAMES: usize = 16;
pub const DEFAULT_SEED: u64 = 0xC1CADA;

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceConfig {
    pub sample_rate: u32,
    pub block_frames: usize,
    pub seed: u64,
    pub mode: PitchMode,
    pub constants: Constants,
    pub release_duration_s: f64,
}

impl Default for VoiceConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            block_frames: 256,
            seed: DEFAULT_SEED,
            mode: PitchMode::FixedE5,
            constants: Constants::default(),
            release_duration_s: 0.05,
        }
    }
}

impl VoiceConfig {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_SAMPLE_RATES.contains(&self.sample_rate) {
            return Err(Error::Config(format!(
                "sample rate {} not one of {:?}",
                self.sample_rate, SUPPORTED_SAMPLE_RATES
            )));
        }
        if self.block_frames < MIN_BLOCK_FRAMES {
            return Err(Error::Config(format!(
                "block of {} frames is below the minimum of {MIN_BLOCK_FRAMES}",
                self.block_frames
            )));
        }
        if !(self.release_duration_s > 0.0) || !self.release_duration_s.is_finite() {
            return Err(Error::Config("release duration must be positive".into()));
        }
        Ok(())
    }
}

/// Octave factor envelope of the muscle frequency: 1 at the coherent rate,
/// 0.5 one octave down.
pub fn muscle_freq_envelope(c: &Constants) -> EnvelopeSystem {
    EnvelopeSystem::new(c.muscle_idle_nrm)
        .with_phase(
            CallPhase::Initial,
            PhaseEnvelope::sustained(vec![
                Segment::jump(c.maetrig_muscle_start_nrm),
                Segment::new(c.maetrig_muscle_peak_nrm, c.maetrig_muscle_rise_dur_s, c.maetrig_muscle_rise_curve),
            ]),
        )
        .with_phase(
            CallPhase::Middle,
            PhaseEnvelope::sustained(vec![
                Segment::linear(c.maeretrig_muscle_dip_nrm, c.maeretrig_muscle_dip_dur_s),
                Segment::new(
                    c.maetrig_muscle_peak_nrm,
                    c.maeretrig_muscle_recover_dur_s,
                    c.maeretrig_muscle_recover_curve,
                ),
            ]),
        )
        .with_phase(
            CallPhase::Final,
            PhaseEnvelope::sustained(vec![
                Segment::linear(c.maetrig_muscle_peak_nrm, c.mitrig_muscle_hold_dur_s),
                Segment::new(c.mitrig_muscle_end_nrm, c.mitrig_muscle_drop_dur_s, c.mitrig_muscle_drop_curve),
            ]),
        )
}

/// Names of the per-block signal taps, in signal-flow order.
pub const TAP_NAMES: [&str; 13] = [
    "muscle_trig",
    "muscle_freq_hz",
    "apodeme_speed_nrm",
    "ribs_buckling",
    "plate_resonation",
    "plate_clipping_resonation",
    "abdominal_volume_m3",
    "tympanal_area_m2",
    "unattenuated_abdominal_resonation",
    "opercular_attenuation",
    "abdominal_resonation",
    "output_l",
    "output_r",
];

/// Internal signals of the last processed block. Every buffer holds one
/// value per frame.
#[derive(Debug, Clone, Default)]
pub struct VoiceTaps {
    pub muscle_trig: Vec<f64>,
    pub muscle_freq_hz: Vec<f64>,
    pub apodeme_speed_nrm: Vec<f64>,
    pub ribs_buckling: Vec<f64>,
    pub plate_resonation: Vec<f64>,
    pub plate_clipping_resonation: Vec<f64>,
    pub abdominal_volume_m3: Vec<f64>,
    pub tympanal_area_m2: Vec<f64>,
    pub unattenuated_abdominal_resonation: Vec<f64>,
    pub opercular_attenuation: Vec<f64>,
    pub abdominal_resonation: Vec<f64>,
    pub output_l: Vec<f64>,
    pub output_r: Vec<f64>,
}

impl VoiceTaps {
    pub fn new(frames: usize) -> Self {
        let buf = || vec![0.0; frames];
        Self {
            muscle_trig: buf(),
            muscle_freq_hz: buf(),
            apodeme_speed_nrm: buf(),
            ribs_buckling: buf(),
            plate_resonation: buf(),
            plate_clipping_resonation: buf(),
            abdominal_volume_m3: buf(),
            tympanal_area_m2: buf(),
            unattenuated_abdominal_resonation: buf(),
            opercular_attenuation: buf(),
            abdominal_resonation: buf(),
            output_l: buf(),
            output_r: buf(),
        }
    }

    pub fn frames(&self) -> usize {
        self.output_l.len()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        let buf = match name {
            "muscle_trig" => &self.muscle_trig,
            "muscle_freq_hz" => &self.muscle_freq_hz,
            "apodeme_speed_nrm" => &self.apodeme_speed_nrm,
            "ribs_buckling" => &self.ribs_buckling,
            "plate_resonation" => &self.plate_resonation,
            "plate_clipping_resonation" => &self.plate_clipping_resonation,
            "abdominal_volume_m3" => &self.abdominal_volume_m3,
            "tympanal_area_m2" => &self.tympanal_area_m2,
            "unattenuated_abdominal_resonation" => &self.unattenuated_abdominal_resonation,
            "opercular_attenuation" => &self.opercular_attenuation,
            "abdominal_resonation" => &self.abdominal_resonation,
            "output_l" => &self.output_l,
            "output_r" => &self.output_r,
            _ => return None,
        };
        Some(buf)
    }

    fn silence(&mut self) {
        for name in TAP_NAMES {
            if let Some(buf) = self.get_mut(name) {
                buf.fill(0.0);
            }
        }
    }

    fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let buf = match name {
            "muscle_trig" => &mut self.muscle_trig,
            "muscle_freq_hz" => &mut self.muscle_freq_hz,
            "apodeme_speed_nrm" => &mut self.apodeme_speed_nrm,
            "ribs_buckling" => &mut self.ribs_buckling,
            "plate_resonation" => &mut self.plate_resonation,
            "plate_clipping_resonation" => &mut self.plate_clipping_resonation,
            "abdominal_volume_m3" => &mut self.abdominal_volume_m3,
            "tympanal_area_m2" => &mut self.tympanal_area_m2,
            "unattenuated_abdominal_resonation" => &mut self.unattenuated_abdominal_resonation,
            "opercular_attenuation" => &mut self.opercular_attenuation,
            "abdominal_resonation" => &mut self.abdominal_resonation,
            "output_l" => &mut self.output_l,
            "output_r" => &mut self.output_r,
            _ => return None,
        };
        Some(buf)
    }
}

#[derive(Debug, Clone)]
pub struct Voice {
    config: VoiceConfig,
    sample_rate: f64,
    phase: CallPhase,
    muscle_env: EnvelopeSystem,
    excitation: Excitation,
    pulses: PulseTrain,
    pulse_table: PulseTable,
    plate: Plate,
    abdomen: Abdomen,
    output_gain: f64,
    release_gain: f64,
    release_step: f64,
    finished: bool,
    sample_index: u64,
    taps: VoiceTaps,
}

impl Voice {
    pub fn new(config: VoiceConfig) -> Result<Self> {
        config.validate()?;
        let c = &config.constants;
        let sample_rate = config.sample_rate as f64;
        let plate_params = PlateParams::from_constants(c);
        let pulse_table = PulseTable::from_parts(c.pulse_gains(), c.pulse_lead_signs());
        let plate = Plate::new(plate_params, crate::control::E5_HZ, sample_rate)?;
        let checks = decay_checks(&plate_params, &pulse_table, crate::control::E5_HZ, sample_rate)?;
        for check in checks.iter().filter(|c| !c.passes()) {
            log::warn!(
                "plate response for {:?} decays to {:.3} of its peak before the next pulse",
                check.kind,
                check.ratio()
            );
        }
        let detune = DetuneSampler { sigma_cents: c.detune_sigma_cents, max_cents: c.detune_max_cents };
        Ok(Self {
            sample_rate,
            phase: CallPhase::Idle,
            muscle_env: muscle_freq_envelope(c),
            excitation: Excitation::new(sample_rate, config.seed, detune),
            pulses: PulseTrain::new(),
            pulse_table,
            plate,
            abdomen: Abdomen::new(c, config.mode, sample_rate)?,
            output_gain: c.output_gain,
            release_gain: 1.0,
            release_step: 1.0 / (config.release_duration_s * sample_rate),
            finished: false,
            sample_index: 0,
            taps: VoiceTaps::new(config.block_frames),
            config,
        })
    }

    pub fn config(&self) -> &VoiceConfig {
        &self.config
    }

    pub fn phase(&self) -> CallPhase {
        self.phase
    }

    /// True once the release ramp has completed.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Frames rendered so far.
    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn block_frames(&self) -> usize {
        self.config.block_frames
    }

    pub fn taps(&self) -> &VoiceTaps {
        &self.taps
    }

    pub fn abdomen(&self) -> &Abdomen {
        &self.abdomen
    }

    pub fn plate(&self) -> &Plate {
        &self.plate
    }

    pub fn mode(&self) -> PitchMode {
        self.abdomen.mode()
    }

    /// Takes effect from the next block.
    pub fn set_mode(&mut self, mode: PitchMode) {
        self.abdomen.set_mode(mode);
    }

    /// Returns a voice to `Idle` so it can play another call. The random
    /// state carries on, so the next call is not a copy of the last.
    /// Never allocates.
    pub fn restart(&mut self) {
        self.phase = CallPhase::Idle;
        self.muscle_env.reset();
        self.pulses.clear();
        self.plate.reset();
        self.abdomen.reset();
        self.release_gain = 1.0;
        self.finished = false;
        self.taps.silence();
    }

    /// Renders one block. Never allocates.
    pub fn process_block(&mut self, frame: &ControlFrame) -> &VoiceTaps {
        let next = advance_phase(self.phase, frame);
        if next == CallPhase::Releasing {
            // Releasing keeps sounding under the ramp.
        } else if let Some(trigger) = frame.trigger.filter(|_| frame.gate) {
            let phase = trigger.phase();
            if !self.phase.is_sounding() {
                self.excitation.restart();
            }
            self.muscle_env.trigger(phase);
            self.abdomen.trigger(phase);
        }
        self.phase = next;

        if self.finished {
            self.taps.silence();
            self.sample_index += self.config.block_frames as u64;
            return &self.taps;
        }

        let pitch = frame.pitch_hz;
        let loudness = frame.loudness_nrm;
        self.plate.retune(pitch);
        let contracting =
            matches!(self.phase, CallPhase::Initial | CallPhase::Middle | CallPhase::Final | CallPhase::Releasing);
        let releasing = self.phase == CallPhase::Releasing;
        let dt = 1.0 / self.sample_rate;

        for i in 0..self.config.block_frames {
            let n = self.sample_index + i as u64;
            let t = n as f64 * dt;
            let octave = self.muscle_env.level();
            self.muscle_env.advance(dt);

            let mut trig = 0.0;
            let (muscle_freq, speed) = if contracting {
                let step = self.excitation.step(t, pitch, octave, loudness);
                if let Some(events) = step.contraction {
                    self.pulses.push(&events);
                    trig = 1.0;
                }
                (step.muscle_freq_hz, step.apodeme_speed_nrm)
            } else {
                (0.0, 0.0)
            };

            let mut pulses = [0.0; 4];
            self.pulses.render(t, &self.pulse_table, &mut pulses);
            let resonation = self.plate.process(&pulses);
            let clipped = self.plate.clip(resonation, loudness);
            let abd = self.abdomen.process(clipped, pitch, n);

            let ramp = if releasing {
                let g = self.release_gain;
                self.release_gain = (self.release_gain - self.release_step).max(0.0);
                g
            } else {
                1.0
            };
            let out = if self.finished { 0.0 } else { (abd.output * self.output_gain * ramp).clamp(-1.0, 1.0) };
            if releasing && self.release_gain <= 0.0 {
                self.finished = true;
            }

            let taps = &mut self.taps;
            taps.muscle_trig[i] = trig;
            taps.muscle_freq_hz[i] = muscle_freq;
            taps.apodeme_speed_nrm[i] = speed;
            taps.ribs_buckling[i] = pulses.iter().sum();
            taps.plate_resonation[i] = resonation;
            taps.plate_clipping_resonation[i] = clipped;
            taps.abdominal_volume_m3[i] = abd.volume_m3;
            taps.tympanal_area_m2[i] = abd.area_m2;
            taps.unattenuated_abdominal_resonation[i] = abd.unattenuated;
            taps.opercular_attenuation[i] = abd.opercular_gain;
            taps.abdominal_resonation[i] = abd.output;
            taps.output_l[i] = out;
            taps.output_r[i] = out;
        }
        if self.finished {
            self.pulses.clear();
        }
        self.sample_index += self.config.block_frames as u64;
        &self.taps
    }
}
