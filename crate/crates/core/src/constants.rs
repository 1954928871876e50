//! Named scalar constants for every stage of the voice.
//!
//! Each constant has a file key in the `c_UPPER_SNAKE` style. A constants
//! file is plain text with one `name = value` per line and `#` comments;
//! unknown keys are errors so typos surface immediately.
//!
//! The envelope constants are calibrated stand-ins that give the call phases
//! their intended shapes; they are not measurements.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Error;

macro_rules! constants_table {
    ($( $(#[$doc:meta])* $field:ident : $key:literal = $default:expr; )*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Constants {
            $( $(#[$doc])* pub $field: f64, )*
        }

        impl Default for Constants {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl Constants {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn get(&self, key: &str) -> Option<f64> {
                match key {
                    $( $key => Some(self.$field), )*
                    _ => None,
                }
            }

            fn slot(&mut self, key: &str) -> Option<&mut f64> {
                match key {
                    $( $key => Some(&mut self.$field), )*
                    _ => None,
                }
            }
        }
    };
}

constants_table! {
    // Tymbal muscle frequency, as a fraction of the coherent rate pitch / 4.
    muscle_idle_nrm: "c_IDLE_MUSCLEFREQ_NRM" = 0.5;
    maetrig_muscle_start_nrm: "c_MAETRIG_MUSCLEFREQ_START_NRM" = 0.75;
    maetrig_muscle_rise_dur_s: "c_MAETRIG_MUSCLEFREQ_RISE_DUR_S" = 0.2;
    maetrig_muscle_rise_curve: "c_MAETRIG_MUSCLEFREQ_RISE_CURVE" = -3.0;
    maetrig_muscle_peak_nrm: "c_MAETRIG_MUSCLEFREQ_PEAK_NRM" = 1.0;
    maeretrig_muscle_dip_nrm: "c_MAERETRIG_MUSCLEFREQ_DIP_NRM" = 0.98;
    maeretrig_muscle_dip_dur_s: "c_MAERETRIG_MUSCLEFREQ_DIP_DUR_S" = 0.02;
    maeretrig_muscle_recover_dur_s: "c_MAERETRIG_MUSCLEFREQ_RECOVER_DUR_S" = 0.1;
    maeretrig_muscle_recover_curve: "c_MAERETRIG_MUSCLEFREQ_RECOVER_CURVE" = -2.0;
    mitrig_muscle_hold_dur_s: "c_MITRIG_MUSCLEFREQ_HOLD_DUR_S" = 0.12;
    mitrig_muscle_drop_dur_s: "c_MITRIG_MUSCLEFREQ_DROP_DUR_S" = 0.3;
    mitrig_muscle_drop_curve: "c_MITRIG_MUSCLEFREQ_DROP_CURVE" = 2.0;
    /// One octave below the coherent rate, and no further.
    mitrig_muscle_end_nrm: "c_MITRIG_MUSCLEFREQ_END_NRM" = 0.5;
    detune_max_cents: "c_MUSCLEFREQ_DETUNE_MAX_CENTS" = 10.0;
    /// Set to 0 to remove the random detune entirely.
    detune_sigma_cents: "c_MUSCLEFREQ_DETUNE_SIGMA_CENTS" = 10.0 / 3.0;

    // Effective tympanal area, as a fraction of the fully uncovered area.
    tymparea_max_m2: "c_AUSTRAL_TYMPAREA_MAX_M2" = 3.0e-5;
    tymparea_min_nrm: "c_TYMPAREA_MIN_NRM" = 0.05;
    tymparea_idle_nrm: "c_IDLE_TYMPAREA_NRM" = 0.3;
    maetrig_tymparea_start_nrm: "c_MAETRIG_TYMPAREA_START_NRM" = 0.35;
    maetrig_tymparea_start_dur_s: "c_MAETRIG_TYMPAREA_START_DUR_S" = 0.01;
    maetrig_tymparea_rise_dur_s: "c_MAETRIG_TYMPAREA_RISE_DUR_S" = 0.06;
    maetrig_tymparea_rise_curve: "c_MAETRIG_TYMPAREA_RISE_CURVE" = -2.0;
    maetrig_tymparea_peak_nrm: "c_MAETRIG_TYMPAREA_PEAK_NRM" = 1.0;
    maetrig_tymparea_decay_dur_s: "c_MAETRIG_TYMPAREA_DECAY_DUR_S" = 0.8;
    maetrig_tymparea_decay_curve: "c_MAETRIG_TYMPAREA_DECAY_CURVE" = -1.0;
    maetrig_tymparea_sustain_nrm: "c_MAETRIG_TYMPAREA_SUSTAIN_NRM" = 0.9;
    maeretrig_tymparea_start_nrm: "c_MAERETRIG_TYMPAREA_START_NRM" = 0.6;
    maeretrig_tymparea_start_dur_s: "c_MAERETRIG_TYMPAREA_START_DUR_S" = 0.015;
    maeretrig_tymparea_rise_dur_s: "c_MAERETRIG_TYMPAREA_RISE_DUR_S" = 0.05;
    maeretrig_tymparea_rise_curve: "c_MAERETRIG_TYMPAREA_RISE_CURVE" = -2.0;
    maeretrig_tymparea_peak_nrm: "c_MAERETRIG_TYMPAREA_PEAK_NRM" = 1.0;
    maeretrig_tymparea_decay_dur_s: "c_MAERETRIG_TYMPAREA_DECAY_DUR_S" = 0.6;
    maeretrig_tymparea_decay_curve: "c_MAERETRIG_TYMPAREA_DECAY_CURVE" = -1.0;
    maeretrig_tymparea_sustain_nrm: "c_MAERETRIG_TYMPAREA_SUSTAIN_NRM" = 0.9;
    mitrig_tymparea_rise_dur_s: "c_MITRIG_TYMPAREA_RISE_DUR_S" = 0.08;
    mitrig_tymparea_rise_curve: "c_MITRIG_TYMPAREA_RISE_CURVE" = -2.0;
    mitrig_tymparea_max_nrm: "c_MITRIG_TYMPAREA_MAX_NRM" = 1.0;
    mitrig_tymparea_fall_dur_s: "c_MITRIG_TYMPAREA_FALL_DUR_S" = 1.2;
    mitrig_tymparea_fall_curve: "c_MITRIG_TYMPAREA_FALL_CURVE" = 1.0;
    mitrig_tymparea_end_nrm: "c_MITRIG_TYMPAREA_END_NRM" = 0.45;
    opercular_floor_db: "c_OPERCULAR_FLOOR_DB" = -20.0;

    // Abdominal cavity volume, interpolated between unextended and extended.
    abdvolume_unextended_m3: "c_AUSTRAL_ABDOMINAL_VOLUME_UNEXTENDED_M3" = 1.0e-6;
    abdvolume_extended_m3: "c_AUSTRAL_ABDOMINAL_VOLUME_EXTENDED_M3" = 1.35e-6;
    abdvolume_idle_nrm: "c_IDLE_ABDVOLUME_NRM" = 0.0;
    maetrig_abdvolume_extend_dur_s: "c_MAETRIG_ABDVOLUME_EXTEND_DUR_S" = 0.3;
    maetrig_abdvolume_extend_curve: "c_MAETRIG_ABDVOLUME_EXTEND_CURVE" = -2.0;
    maeretrig_abdvolume_nrm: "c_MAERETRIG_ABDVOLUME_NRM" = 1.0;
    maeretrig_abdvolume_dur_s: "c_MAERETRIG_ABDVOLUME_DUR_S" = 0.1;
    mitrig_abdvolume_end_nrm: "c_MITRIG_ABDVOLUME_END_NRM" = 0.7;
    mitrig_abdvolume_contract_dur_s: "c_MITRIG_ABDVOLUME_CONTRACT_DUR_S" = 1.0;
    mitrig_abdvolume_contract_curve: "c_MITRIG_ABDVOLUME_CONTRACT_CURVE" = 0.0;
    speed_of_sound_mps: "c_SPEED_OF_SOUND_MPS" = 343.0;
    abd_bandwidth_factor: "c_ABDRESONANCE_BANDWIDTH_FACTOR" = 0.45;
    abd_dc_block_hz: "c_ABDRESONANCE_DC_BLOCK_HZ" = 20.0;

    // Buckling pulses.
    pulse_gain_in1: "c_PULSE_GAIN_INRIB1" = 1.0;
    pulse_gain_in2: "c_PULSE_GAIN_INRIB2" = 1.0;
    pulse_gain_in3: "c_PULSE_GAIN_INRIB3" = 1.0;
    pulse_gain_out: "c_PULSE_GAIN_OUTALL" = 1.3;
    /// +1 starts with the positive lobe, -1 with the negative lobe.
    pulse_lead_in1: "c_PULSE_LEAD_SIGN_INRIB1" = -1.0;
    pulse_lead_in2: "c_PULSE_LEAD_SIGN_INRIB2" = -1.0;
    pulse_lead_in3: "c_PULSE_LEAD_SIGN_INRIB3" = -1.0;
    pulse_lead_out: "c_PULSE_LEAD_SIGN_OUTALL" = -1.0;

    // Tymbal plate resonances, relative to 3 x pitch.
    plate_ratio_in1: "c_PLATE_FREQ_RATIO_INRIB1" = 1.00;
    plate_ratio_in2: "c_PLATE_FREQ_RATIO_INRIB2" = 0.93;
    plate_ratio_in3: "c_PLATE_FREQ_RATIO_INRIB3" = 1.07;
    plate_ratio_out: "c_PLATE_FREQ_RATIO_OUTALL" = 0.86;
    plate_q_in1: "c_PLATE_Q_UNLOADED_INRIB1" = 32.0;
    plate_q_in2: "c_PLATE_Q_UNLOADED_INRIB2" = 28.0;
    plate_q_in3: "c_PLATE_Q_UNLOADED_INRIB3" = 24.0;
    plate_q_out: "c_PLATE_Q_UNLOADED_OUTALL" = 20.0;
    plate_dry_weight: "c_PLATE_DRY_WEIGHT" = 0.35;
    plate_wet_weight_in1: "c_PLATE_WET_WEIGHT_INRIB1" = 10.0;
    plate_wet_weight_in2: "c_PLATE_WET_WEIGHT_INRIB2" = 10.0;
    plate_wet_weight_in3: "c_PLATE_WET_WEIGHT_INRIB3" = 10.0;
    plate_wet_weight_out: "c_PLATE_WET_WEIGHT_OUTALL" = 10.0;
    /// 1 enables the loudness-driven peak flattening, 0 bypasses it.
    plate_clip_enabled: "c_PLATE_CLIP_ENABLED" = 1.0;
    plate_clip_drive: "c_PLATE_CLIP_DRIVE" = 3.0;

    output_gain: "c_OUTPUT_GAIN" = 0.2;
}

impl Constants {
    /// Parses a constants file on top of the defaults.
    pub fn parse(text: &str) -> Result<Constants, Error> {
        let mut constants = Constants::default();
        constants.apply(text)?;
        Ok(constants)
    }

    pub fn load(path: &Path) -> Result<Constants, Error> {
        Constants::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `name = value` lines as overrides.
    pub fn apply(&mut self, text: &str) -> Result<(), Error> {
        for (index, raw_line) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `name = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line: line_no, message: format!("`{}` is not a number", value.trim()) })?;
            if !value.is_finite() {
                return Err(Error::Parse { line: line_no, message: format!("`{key}` must be finite") });
            }
            let slot = self.slot(key).ok_or_else(|| Error::UnknownConstant { key: key.to_string(), line: line_no })?;
            *slot = value;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), Error> {
        let slot = self.slot(key).ok_or_else(|| Error::UnknownConstant { key: key.to_string(), line: 0 })?;
        *slot = value;
        Ok(())
    }

    /// Serializes every constant in file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = self.get(key).unwrap_or_default();
            let _ = writeln!(out, "{key} = {value:?}");
        }
        out
    }

    pub fn plate_ratios(&self) -> [f64; 4] {
        [self.plate_ratio_in1, self.plate_ratio_in2, self.plate_ratio_in3, self.plate_ratio_out]
    }

    pub fn plate_q_unloaded(&self) -> [f64; 4] {
        [self.plate_q_in1, self.plate_q_in2, self.plate_q_in3, self.plate_q_out]
    }

    pub fn plate_wet_weights(&self) -> [f64; 4] {
        [self.plate_wet_weight_in1, self.plate_wet_weight_in2, self.plate_wet_weight_in3, self.plate_wet_weight_out]
    }

    pub fn pulse_gains(&self) -> [f64; 4] {
        [self.pulse_gain_in1, self.pulse_gain_in2, self.pulse_gain_in3, self.pulse_gain_out]
    }

    pub fn pulse_lead_signs(&self) -> [f64; 4] {
        [self.pulse_lead_in1, self.pulse_lead_in2, self.pulse_lead_in3, self.pulse_lead_out]
    }
}
