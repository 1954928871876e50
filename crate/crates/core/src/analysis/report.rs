use std::fmt::Write as _;

use serde::Serialize;

use super::harmonic::{band_hnr, comb_spacing, harmonic_peaks, HarmonicReport};
use super::pitch::estimate_pitch;
use super::spectrum::{db, Spectrum, Window};
use super::{cents, AnalysisError};
use crate::score::demo_windows;

pub const COMB_HARMONICS: u32 = 12;
pub const COMB_LO_HZ: f64 = 900.0;

/// Where the middle and final phases sit in the analyzed signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisWindows {
    pub middle_s: (f64, f64),
    pub final_s: (f64, f64),
}

impl Default for AnalysisWindows {
    fn default() -> Self {
        Self { middle_s: demo_windows::MIDDLE, final_s: demo_windows::FINAL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub sample_rate: f64,
    pub duration_s: f64,
    pub windows: AnalysisWindows,
    pub pitch_hz: f64,
    /// Twelve harmonics of a quarter of the pitch from 0.9 kHz up.
    pub middle_comb: HarmonicReport,
    pub hnr_middle_db: f64,
    pub hnr_final_db: f64,
    pub hnr_drop_db: f64,
    pub final_comb_spacing_hz: f64,
    /// Spectral slope between one and three octaves above the strongest
    /// component of the middle phase.
    pub spectral_rolloff_db_per_oct: f64,
}

fn slice(sig: &[f64], sample_rate: f64, window: (f64, f64)) -> &[f64] {
    let a = ((window.0 * sample_rate) as usize).min(sig.len());
    let b = ((window.1 * sample_rate) as usize).clamp(a, sig.len());
    &sig[a..b]
}

/// Slope of the per-eighth-octave peak levels against octaves.
fn spectral_rolloff(sig: &[f64], sample_rate: f64) -> Result<f64, AnalysisError> {
    let spec = Spectrum::welch(sig, sample_rate, 8192, 2048, 1, Window::Hann)?;
    let (peak_bin, _) = spec.peak_in(50.0, sample_rate / 2.0);
    let f_peak = spec.freq_of(peak_bin);
    let points: Vec<(f64, f64)> = (0..=16)
        .map(|i| 1.0 + i as f64 / 8.0)
        .filter(|o| f_peak * (o + 1.0 / 16.0).exp2() < sample_rate / 2.0)
        .map(|o| {
            let lo = f_peak * (o - 1.0 / 16.0).exp2();
            let hi = f_peak * (o + 1.0 / 16.0).exp2();
            (o, db(spec.peak_in(lo, hi).1))
        })
        .collect();
    if points.len() < 3 {
        return Err(AnalysisError::InvalidParameter("spectral peak too close to Nyquist".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Measures a rendered call.
pub fn analyze(sig: &[f64], sample_rate: f64, windows: AnalysisWindows) -> Result<AnalysisReport, AnalysisError> {
    let middle = slice(sig, sample_rate, windows.middle_s);
    let fin = slice(sig, sample_rate, windows.final_s);
    let pitch_hz = estimate_pitch(middle, sample_rate)?;
    let base = pitch_hz / 4.0;
    let k_lo = (COMB_LO_HZ / base).ceil().max(1.0) as u32;
    let middle_comb = harmonic_peaks(middle, sample_rate, base, k_lo, k_lo + COMB_HARMONICS - 1)?;
    let hnr_middle_db = band_hnr(middle, sample_rate, base, 1500.0, 3000.0)?.hnr_db;
    let hnr_final_db = band_hnr(fin, sample_rate, base / 2.0, 1500.0, 3000.0)?.hnr_db;
    let final_comb_spacing_hz = comb_spacing(fin, sample_rate, 500.0, 3000.0, 50.0, 250.0)?;
    Ok(AnalysisReport {
        sample_rate,
        duration_s: sig.len() as f64 / sample_rate,
        windows,
        pitch_hz,
        middle_comb,
        hnr_middle_db,
        hnr_final_db,
        hnr_drop_db: hnr_middle_db - hnr_final_db,
        final_comb_spacing_hz,
        spectral_rolloff_db_per_oct: spectral_rolloff(middle, sample_rate)?,
    })
}

impl AnalysisReport {
    /// Flat `key = value` text; arrays are comma separated in brackets.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("sample_rate", format!("{}", self.sample_rate));
        kv("duration_s", format!("{:.4}", self.duration_s));
        kv("middle_window_s", format!("[{}, {}]", self.windows.middle_s.0, self.windows.middle_s.1));
        kv("final_window_s", format!("[{}, {}]", self.windows.final_s.0, self.windows.final_s.1));
        kv("pitch_hz", format!("{:.3}", self.pitch_hz));
        kv("comb_base_hz", format!("{:.3}", self.middle_comb.base_hz));
        kv("comb_harmonics", format!("[{}, {}]", self.middle_comb.k_lo, self.middle_comb.k_hi));
        let peaks: Vec<String> = self.middle_comb.peaks_db.iter().map(|p| format!("{p:.2}")).collect();
        kv("comb_peaks_db", format!("[{}]", peaks.join(", ")));
        kv("comb_floor_db", format!("{:.2}", self.middle_comb.floor_db));
        kv("comb_hnr_db", format!("{:.2}", self.middle_comb.hnr_db));
        kv("comb_min_margin_db", format!("{:.2}", self.middle_comb.min_margin_db()));
        kv("hnr_middle_db", format!("{:.2}", self.hnr_middle_db));
        kv("hnr_final_db", format!("{:.2}", self.hnr_final_db));
        kv("hnr_drop_db", format!("{:.2}", self.hnr_drop_db));
        kv("final_comb_spacing_hz", format!("{:.3}", self.final_comb_spacing_hz));
        kv("spectral_rolloff_db_per_oct", format!("{:.2}", self.spectral_rolloff_db_per_oct));
        out
    }

    /// Pitch error against a reference, in cents.
    pub fn pitch_error_cents(&self, reference_hz: f64) -> f64 {
        cents(self.pitch_hz, reference_hz)
    }
}
