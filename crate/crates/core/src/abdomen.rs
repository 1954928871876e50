//! Abdominal air sac as a Helmholtz resonator, realized as a 6-pole band-pass
//! whose center follows the tympanal area and cavity volume, followed by the
//! opercular attenuation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::constants::Constants;
use crate::control::{CallPhase, E5_HZ};
use crate::envelope::{EnvelopeSystem, PhaseEnvelope, Segment};
use crate::error::{Error, Result};
use crate::filter::{Coefficients, DcBlocker, TwoPole};

/// Abdominal filter coefficients are refreshed every this many samples.
pub const COEFF_UPDATE_INTERVAL: u64 = 16;

/// Per-stage widening that keeps a 3-stage synchronous cascade at the
/// requested -3 dB width.
pub fn cascade_widening() -> f64 {
    1.0 / ((1.0f64 / 3.0).exp2() - 1.0).sqrt()
}

pub const BANDWIDTH_FACTOR_RANGE: (f64, f64) = (0.2, 0.8);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelmholtzGeometry {
    pub tympanum_area_m2: f64,
    pub cavity_volume_m3: f64,
    pub speed_of_sound_mps: f64,
}

impl HelmholtzGeometry {
    pub fn new(tympanum_area_m2: f64, cavity_volume_m3: f64, speed_of_sound_mps: f64) -> Result<Self> {
        for (name, v) in [
            ("tympanum area", tympanum_area_m2),
            ("cavity volume", cavity_volume_m3),
            ("speed of sound", speed_of_sound_mps),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { tympanum_area_m2, cavity_volume_m3, speed_of_sound_mps })
    }

    /// Neck radius of a circular tympanum.
    pub fn radius_m(&self) -> f64 {
        (self.tympanum_area_m2 / PI).sqrt()
    }

    /// Effective neck length with end corrections on both sides.
    pub fn neck_length_m(&self) -> f64 {
        16.0 * self.radius_m() / (3.0 * PI)
    }

    /// Neck area: both tympana radiate.
    pub fn neck_area_m2(&self) -> f64 {
        2.0 * self.tympanum_area_m2
    }
}

pub fn helmholtz_f0(geom: &HelmholtzGeometry) -> f64 {
    geom.speed_of_sound_mps / (2.0 * PI) * (geom.neck_area_m2() / (geom.neck_length_m() * geom.cavity_volume_m3)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum PitchMode {
    /// Abdomen tuned to E5 regardless of the played pitch.
    #[default]
    FixedE5,
    /// Abdomen follows the played pitch.
    PitchFollowing,
}

impl PitchMode {
    pub fn name(self) -> &'static str {
        match self {
            PitchMode::FixedE5 => "fixed",
            PitchMode::PitchFollowing => "following",
        }
    }

    pub fn anchor_pitch(self, pitch_hz: f64) -> f64 {
        match self {
            PitchMode::FixedE5 => E5_HZ,
            PitchMode::PitchFollowing => pitch_hz,
        }
    }
}

impl fmt::Display for PitchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PitchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "fixed_e5" | "FixedE5" => Ok(PitchMode::FixedE5),
            "following" | "pitch_following" | "PitchFollowing" => Ok(PitchMode::PitchFollowing),
            other => Err(Error::Config(format!("unknown pitch mode `{other}`"))),
        }
    }
}

/// Resonance center for the current geometry: three times the anchor pitch,
/// detuned by how far the geometry sits from its fully extended reference.
pub fn abdominal_f0(mode: PitchMode, pitch_hz: f64, current: &HelmholtzGeometry, extended: &HelmholtzGeometry) -> f64 {
    3.0 * mode.anchor_pitch(pitch_hz) * helmholtz_f0(current) / helmholtz_f0(extended)
}

pub fn abdominal_bandwidth(pitch_hz: f64, factor: f64) -> f64 {
    factor * pitch_hz
}

/// Linear gain for a normalized effective tympanal area, interpolated in dB
/// between `floor_db` (closed) and 0 dB (open).
pub fn opercular_gain(area_nrm: f64, floor_db: f64) -> f64 {
    let db = floor_db * (1.0 - area_nrm.clamp(0.0, 1.0));
    10f64.powf(db / 20.0)
}

/// Three resonators sharing one peak, plus a DC blocker, scaled to
/// unity gain at the peak.
#[derive(Debug, Clone)]
pub struct Bandpass6 {
    sample_rate: f64,
    stages: [TwoPole; 3],
    dc: DcBlocker,
    f0_hz: f64,
    bandwidth_hz: f64,
    gain: f64,
    clamped: u64,
}

impl Bandpass6 {
    pub fn new(f0_hz: f64, bandwidth_hz: f64, dc_block_hz: f64, sample_rate: f64) -> Self {
        let mut bp = Self {
            sample_rate,
            stages: [TwoPole::default(); 3],
            dc: DcBlocker::new(dc_block_hz, sample_rate),
            f0_hz: 0.0,
            bandwidth_hz: 0.0,
            gain: 1.0,
            clamped: 0,
        };
        bp.set(f0_hz, bandwidth_hz);
        bp
    }

    pub fn f0_hz(&self) -> f64 {
        self.f0_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Number of times a center above a quarter of the sample rate was
    /// pulled down.
    pub fn clamp_count(&self) -> u64 {
        self.clamped
    }

    /// Retunes without clearing state.
    pub fn set(&mut self, f0_hz: f64, bandwidth_hz: f64) {
        let limit = self.sample_rate / 4.0;
        let f0 = if f0_hz > limit {
            self.clamped += 1;
            limit
        } else {
            f0_hz.max(1.0)
        };
        self.f0_hz = f0;
        self.bandwidth_hz = bandwidth_hz;
        let stage = Coefficients::lowpass_resonator(f0, bandwidth_hz * cascade_widening(), self.sample_rate);
        for s in &mut self.stages {
            s.set_coefficients(stage);
        }
        let omega = 2.0 * PI * f0 / self.sample_rate;
        self.gain = 1.0 / self.dc.magnitude(omega);
    }

    pub fn reset(&mut self) {
        for s in &mut self.stages {
            s.reset();
        }
        self.dc.reset();
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut y = self.dc.process(x);
        for s in &mut self.stages {
            y = s.process(y);
        }
        y * self.gain
    }

    /// Magnitude of the transfer function at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate;
        self.gain * self.dc.magnitude(omega) * self.stages[0].coefficients().magnitude(omega).powi(3)
    }
}

/// Physical and tuning parameters of the abdomen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbdomenParams {
    pub area_max_m2: f64,
    pub area_min_nrm: f64,
    pub volume_unextended_m3: f64,
    pub volume_extended_m3: f64,
    pub speed_of_sound_mps: f64,
    pub bandwidth_factor: f64,
    pub dc_block_hz: f64,
    pub opercular_floor_db: f64,
}

impl AbdomenParams {
    pub fn from_constants(c: &Constants) -> Result<Self> {
        let p = Self {
            area_max_m2: c.tymparea_max_m2,
            area_min_nrm: c.tymparea_min_nrm,
            volume_unextended_m3: c.abdvolume_unextended_m3,
            volume_extended_m3: c.abdvolume_extended_m3,
            speed_of_sound_mps: c.speed_of_sound_mps,
            bandwidth_factor: c.abd_bandwidth_factor,
            dc_block_hz: c.abd_dc_block_hz,
            opercular_floor_db: c.opercular_floor_db,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        HelmholtzGeometry::new(self.area_max_m2, self.volume_extended_m3, self.speed_of_sound_mps)?;
        HelmholtzGeometry::new(self.area_max_m2, self.volume_unextended_m3, self.speed_of_sound_mps)?;
        let (lo, hi) = BANDWIDTH_FACTOR_RANGE;
        if !(lo..=hi).contains(&self.bandwidth_factor) {
            return Err(Error::Config(format!(
                "abdominal bandwidth factor {} outside [{lo}, {hi}]",
                self.bandwidth_factor
            )));
        }
        if !(self.area_min_nrm > 0.0 && self.area_min_nrm <= 1.0) {
            return Err(Error::Config("minimum tympanal area must be in (0, 1]".into()));
        }
        if !(self.dc_block_hz > 0.0) {
            return Err(Error::Config("DC block cutoff must be positive".into()));
        }
        if !(self.opercular_floor_db <= 0.0) {
            return Err(Error::Config("opercular floor must be at most 0 dB".into()));
        }
        Ok(())
    }

    pub fn area_m2(&self, area_nrm: f64) -> f64 {
        self.area_max_m2 * area_nrm.clamp(self.area_min_nrm, 1.0)
    }

    pub fn volume_m3(&self, volume_nrm: f64) -> f64 {
        let v = volume_nrm.clamp(0.0, 1.0);
        self.volume_unextended_m3 + v * (self.volume_extended_m3 - self.volume_unextended_m3)
    }

    fn geometry(&self, area_m2: f64, volume_m3: f64) -> HelmholtzGeometry {
        HelmholtzGeometry {
            tympanum_area_m2: area_m2,
            cavity_volume_m3: volume_m3,
            speed_of_sound_mps: self.speed_of_sound_mps,
        }
    }

    pub fn extended_geometry(&self) -> HelmholtzGeometry {
        self.geometry(self.area_max_m2, self.volume_extended_m3)
    }
}

/// Normalized tympanal area envelopes per call phase.
pub fn tympanal_area_envelope(c: &Constants) -> EnvelopeSystem {
    EnvelopeSystem::new(c.tymparea_idle_nrm)
        .with_phase(
            CallPhase::Initial,
            PhaseEnvelope::sustained(vec![
                Segment::linear(c.maetrig_tymparea_start_nrm, c.maetrig_tymparea_start_dur_s),
                Segment::new(c.maetrig_tymparea_peak_nrm, c.maetrig_tymparea_rise_dur_s, c.maetrig_tymparea_rise_curve),
                Segment::new(
                    c.maetrig_tymparea_sustain_nrm,
                    c.maetrig_tymparea_decay_dur_s,
                    c.maetrig_tymparea_decay_curve,
                ),
            ]),
        )
        .with_phase(
            CallPhase::Middle,
            PhaseEnvelope::sustained(vec![
                Segment::linear(c.maeretrig_tymparea_start_nrm, c.maeretrig_tymparea_start_dur_s),
                Segment::new(
                    c.maeretrig_tymparea_peak_nrm,
                    c.maeretrig_tymparea_rise_dur_s,
                    c.maeretrig_tymparea_rise_curve,
                ),
                Segment::new(
                    c.maeretrig_tymparea_sustain_nrm,
                    c.maeretrig_tymparea_decay_dur_s,
                    c.maeretrig_tymparea_decay_curve,
                ),
            ]),
        )
        .with_phase(
            CallPhase::Final,
            PhaseEnvelope::sustained(vec![
                Segment::new(c.mitrig_tymparea_max_nrm, c.mitrig_tymparea_rise_dur_s, c.mitrig_tymparea_rise_curve),
                Segment::new(c.mitrig_tymparea_end_nrm, c.mitrig_tymparea_fall_dur_s, c.mitrig_tymparea_fall_curve),
            ]),
        )
}

/// Normalized abdominal volume envelopes: 0 unextended, 1 extended.
pub fn abdominal_volume_envelope(c: &Constants) -> EnvelopeSystem {
    EnvelopeSystem::new(c.abdvolume_idle_nrm)
        .with_phase(
            CallPhase::Initial,
            PhaseEnvelope::sustained(vec![Segment::new(
                1.0,
                c.maetrig_abdvolume_extend_dur_s,
                c.maetrig_abdvolume_extend_curve,
            )]),
        )
        .with_phase(
            CallPhase::Middle,
            PhaseEnvelope::sustained(vec![Segment::linear(c.maeretrig_abdvolume_nrm, c.maeretrig_abdvolume_dur_s)]),
        )
        .with_phase(
            CallPhase::Final,
            PhaseEnvelope::sustained(vec![Segment::new(
                c.mitrig_abdvolume_end_nrm,
                c.mitrig_abdvolume_contract_dur_s,
                c.mitrig_abdvolume_contract_curve,
            )]),
        )
}

/// One abdomen output sample with its intermediate signals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbdomenSample {
    pub volume_m3: f64,
    pub area_m2: f64,
    pub f0_hz: f64,
    pub unattenuated: f64,
    pub opercular_gain: f64,
    pub output: f64,
}

#[derive(Debug, Clone)]
pub struct Abdomen {
    params: AbdomenParams,
    mode: PitchMode,
    area_env: EnvelopeSystem,
    volume_env: EnvelopeSystem,
    filter: Bandpass6,
    dt: f64,
    f0_extended: f64,
}

impl Abdomen {
    pub fn new(constants: &Constants, mode: PitchMode, sample_rate: f64) -> Result<Self> {
        let params = AbdomenParams::from_constants(constants)?;
        let anchor = mode.anchor_pitch(E5_HZ);
        Ok(Self {
            params,
            mode,
            area_env: tympanal_area_envelope(constants),
            volume_env: abdominal_volume_envelope(constants),
            filter: Bandpass6::new(
                3.0 * anchor,
                abdominal_bandwidth(anchor, params.bandwidth_factor),
                params.dc_block_hz,
                sample_rate,
            ),
            dt: 1.0 / sample_rate,
            f0_extended: helmholtz_f0(&params.extended_geometry()),
        })
    }

    pub fn params(&self) -> &AbdomenParams {
        &self.params
    }

    pub fn mode(&self) -> PitchMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: PitchMode) {
        self.mode = mode;
    }

    pub fn filter(&self) -> &Bandpass6 {
        &self.filter
    }

    pub fn reset(&mut self) {
        self.area_env.reset();
        self.volume_env.reset();
        self.filter.reset();
    }

    pub fn trigger(&mut self, phase: CallPhase) {
        self.area_env.trigger(phase);
        self.volume_env.trigger(phase);
    }

    pub fn area_nrm(&self) -> f64 {
        self.area_env.level().clamp(self.params.area_min_nrm, 1.0)
    }

    pub fn volume_nrm(&self) -> f64 {
        self.volume_env.level().clamp(0.0, 1.0)
    }

    /// Resonance center for the current envelope state.
    pub fn current_f0(&self, pitch_hz: f64) -> f64 {
        let geom = self.params.geometry(self.params.area_m2(self.area_nrm()), self.params.volume_m3(self.volume_nrm()));
        3.0 * self.mode.anchor_pitch(pitch_hz) * helmholtz_f0(&geom) / self.f0_extended
    }

    /// Advances envelopes one sample and filters `x`. Coefficients follow
    /// the envelopes on a fixed grid of the global sample index.
    #[inline]
    pub fn process(&mut self, x: f64, pitch_hz: f64, sample_index: u64) -> AbdomenSample {
        self.area_env.advance(self.dt);
        self.volume_env.advance(self.dt);
        let area_nrm = self.area_nrm();
        let area_m2 = self.params.area_m2(area_nrm);
        let volume_m3 = self.params.volume_m3(self.volume_nrm());
        if sample_index.is_multiple_of(COEFF_UPDATE_INTERVAL) {
            let f0 = self.current_f0(pitch_hz);
            let bw = abdominal_bandwidth(self.mode.anchor_pitch(pitch_hz), self.params.bandwidth_factor);
            self.filter.set(f0, bw);
        }
        let unattenuated = self.filter.process(x);
        let gain = opercular_gain(area_nrm, self.params.opercular_floor_db);
        AbdomenSample {
            volume_m3,
            area_m2,
            f0_hz: self.filter.f0_hz(),
            unattenuated,
            opercular_gain: gain,
            output: unattenuated * gain,
        }
    }
}
