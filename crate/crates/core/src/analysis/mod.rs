//! Spectral measurements used to verify renders: spectrograms, harmonic
//! combs, pitch, comb spacing and filter rolloff.

mod harmonic;
mod pitch;
mod report;
mod rolloff;
mod spectrum;

pub use harmonic::{
    band_hnr, comb_spacing, harmonic_peaks, harmonic_report, harmonics_in_band, HarmonicReport, HARMONIC_HOP,
    HARMONIC_WINDOW,
};
pub use pitch::{estimate_pitch, MIN_DURATION_S, PITCH_MAX_HZ, PITCH_MIN_HZ};
pub use report::{analyze, AnalysisReport, AnalysisWindows, COMB_HARMONICS, COMB_LO_HZ};
pub use rolloff::{rolloff_slope, AllPass, FnProbe, ResponseProbe, SineProbe};
pub use spectrum::{
    amplitude_db, band_energy_fraction, db, spectrogram, spectrogram_frames, Spectrogram, Spectrum, Window,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("signal is silent")]
    Silent,
    #[error("no periodicity found")]
    NoPeriodicity,
    #[error("invalid analysis parameter: {0}")]
    InvalidParameter(String),
}

/// Cents between two frequencies.
pub fn cents(measured_hz: f64, reference_hz: f64) -> f64 {
    1200.0 * (measured_hz / reference_hz).log2()
}

/// Root mean square of a signal.
pub fn rms(sig: &[f64]) -> f64 {
    if sig.is_empty() {
        return 0.0;
    }
    (sig.iter().map(|x| x * x).sum::<f64>() / sig.len() as f64).sqrt()
}
