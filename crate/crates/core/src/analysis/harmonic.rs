use serde::Serialize;

use super::spectrum::{db, Spectrum, Window};
use super::AnalysisError;

/// Frame length for harmonic measurements. Resolves an 82 Hz comb with
/// about fourteen bins between neighbours at 48 kHz.
pub const HARMONIC_WINDOW: usize = 8192;
pub const HARMONIC_HOP: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicReport {
    pub base_hz: f64,
    pub k_lo: u32,
    pub k_hi: u32,
    /// Peak level per harmonic, `k_lo..=k_hi`.
    pub peaks_db: Vec<f64>,
    /// Median inter-harmonic level over the gaps on either side of each
    /// harmonic.
    pub local_floors_db: Vec<f64>,
    pub floor_db: f64,
    pub hnr_db: f64,
}

impl HarmonicReport {
    /// Each harmonic's height above the floor around it.
    pub fn margins_db(&self) -> Vec<f64> {
        self.peaks_db.iter().zip(&self.local_floors_db).map(|(p, f)| p - f).collect()
    }

    /// Longest run of adjacent harmonics at least `threshold_db` above the
    /// floor.
    pub fn longest_run_above(&self, threshold_db: f64) -> usize {
        let mut best = 0;
        let mut run = 0;
        for m in self.margins_db() {
            if m >= threshold_db {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best
    }

    pub fn min_margin_db(&self) -> f64 {
        self.margins_db().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Harmonic peak levels and the inter-harmonic floor from a spectrum.
///
/// Each peak is the maximum within a quarter of the base frequency around
/// `k * base_hz`. The floor is the median level of the bins further than
/// that from any harmonic, over the span the harmonics cover; local floors
/// take the same median over the two gaps next to each harmonic.
pub fn harmonic_report(spec: &Spectrum, base_hz: f64, k_lo: u32, k_hi: u32) -> Result<HarmonicReport, AnalysisError> {
    if !(base_hz > 0.0) || k_lo == 0 || k_hi < k_lo {
        return Err(AnalysisError::InvalidParameter(format!("harmonics {k_lo}..={k_hi} of {base_hz} Hz")));
    }
    let nyquist = spec.sample_rate / 2.0;
    if (k_hi as f64 + 0.5) * base_hz >= nyquist {
        return Err(AnalysisError::InvalidParameter(format!("harmonic {k_hi} of {base_hz} Hz is above Nyquist")));
    }
    let half_zone = base_hz / 4.0;
    let peaks_db: Vec<f64> = (k_lo..=k_hi)
        .map(|k| {
            let center = k as f64 * base_hz;
            db(spec.peak_in(center - half_zone, center + half_zone).1)
        })
        .collect();
    let between = |lo_hz: f64, hi_hz: f64| -> Result<f64, AnalysisError> {
        let mut levels: Vec<f64> = (spec.bin_of(lo_hz)..=spec.bin_of(hi_hz))
            .filter(|&b| {
                let f = spec.freq_of(b);
                let nearest = (f / base_hz).round() * base_hz;
                (f - nearest).abs() > half_zone
            })
            .map(|b| spec.db_at_bin(b))
            .collect();
        if levels.is_empty() {
            return Err(AnalysisError::InvalidParameter("no bins between harmonics; use a longer window".into()));
        }
        levels.sort_by(f64::total_cmp);
        Ok(median_sorted(&levels))
    };
    let floor_db = between((k_lo as f64 - 0.5) * base_hz, (k_hi as f64 + 0.5) * base_hz)?;
    let local_floors_db = (k_lo..=k_hi)
        .map(|k| between((k as f64 - 1.0) * base_hz, (k as f64 + 1.0) * base_hz))
        .collect::<Result<Vec<_>, _>>()?;
    let hnr_db = peaks_db.iter().sum::<f64>() / peaks_db.len() as f64 - floor_db;
    Ok(HarmonicReport { base_hz, k_lo, k_hi, peaks_db, local_floors_db, floor_db, hnr_db })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn harmonic_spectrum(sig: &[f64], sample_rate: f64) -> Result<Spectrum, AnalysisError> {
    let window = HARMONIC_WINDOW.min(sig.len().next_power_of_two() / 2).max(256);
    Spectrum::welch(sig, sample_rate, window, window / 4, 1, Window::Hann)
}

pub fn harmonic_peaks(
    sig: &[f64],
    sample_rate: f64,
    base_hz: f64,
    k_lo: u32,
    k_hi: u32,
) -> Result<HarmonicReport, AnalysisError> {
    harmonic_report(&harmonic_spectrum(sig, sample_rate)?, base_hz, k_lo, k_hi)
}

/// Harmonics of `base_hz` whose frequencies fall inside `[lo_hz, hi_hz]`.
pub fn harmonics_in_band(base_hz: f64, lo_hz: f64, hi_hz: f64) -> (u32, u32) {
    ((lo_hz / base_hz).ceil() as u32, (hi_hz / base_hz).floor() as u32)
}

/// Harmonic-to-noise ratio of the harmonics of `base_hz` inside a band.
pub fn band_hnr(
    sig: &[f64],
    sample_rate: f64,
    base_hz: f64,
    lo_hz: f64,
    hi_hz: f64,
) -> Result<HarmonicReport, AnalysisError> {
    let (k_lo, k_hi) = harmonics_in_band(base_hz, lo_hz, hi_hz);
    harmonic_peaks(sig, sample_rate, base_hz, k_lo.max(1), k_hi)
}

/// Comb spacing that best explains the spectrum in `[lo_hz, hi_hz]`.
///
/// Scores each candidate spacing `s` by the mean level difference between
/// `k * s` and `(k + 1/2) * s` over the band and returns the best, refined
/// by a parabola through neighbouring scores.
/// Fraction of the best comb score a narrower spacing needs to win.
const COMB_MULTIPLE_FRACTION: f64 = 0.8;

pub fn comb_spacing(
    sig: &[f64],
    sample_rate: f64,
    lo_hz: f64,
    hi_hz: f64,
    min_spacing_hz: f64,
    max_spacing_hz: f64,
) -> Result<f64, AnalysisError> {
    let spec = harmonic_spectrum(sig, sample_rate)?;
    if spec.power.iter().all(|&p| p <= 0.0) {
        return Err(AnalysisError::Silent);
    }
    let level = |f: f64| {
        let b = spec.bin_of(f);
        let lo = b.saturating_sub(1);
        let hi = (b + 1).min(spec.power.len() - 1);
        db(spec.power[lo..=hi].iter().cloned().fold(0.0, f64::max))
    };
    let score = |s: f64| {
        let k0 = (lo_hz / s).ceil() as usize;
        let k1 = ((hi_hz / s) - 0.5).floor() as usize;
        if k1 < k0 {
            return f64::NEG_INFINITY;
        }
        (k0..=k1).map(|k| level(k as f64 * s) - level((k as f64 + 0.5) * s)).sum::<f64>() / (k1 - k0 + 1) as f64
    };
    let step = 0.05;
    let candidates: Vec<f64> =
        (0..).map(|i| min_spacing_hz + i as f64 * step).take_while(|&s| s <= max_spacing_hz).collect();
    let scores: Vec<f64> = candidates.iter().map(|&s| score(s)).collect();
    let top = super::spectrum::argmax(&scores);
    if !scores[top].is_finite() || scores[top] <= 0.0 {
        return Err(AnalysisError::NoPeriodicity);
    }
    // Integer multiples of the true spacing score about as well; take the
    // narrowest local maximum close to the top score.
    let is_peak =
        |i: usize| (i == 0 || scores[i] >= scores[i - 1]) && (i + 1 == scores.len() || scores[i] >= scores[i + 1]);
    let first =
        (0..scores.len()).find(|&i| is_peak(i) && scores[i] >= COMB_MULTIPLE_FRACTION * scores[top]).unwrap_or(top);
    let near: Vec<usize> =
        (0..scores.len()).filter(|&i| (candidates[i] / candidates[first] - 1.0).abs() <= 0.03).collect();
    let best = near[super::spectrum::argmax(&near.iter().map(|&i| scores[i]).collect::<Vec<_>>())];
    if best == 0 || best + 1 == scores.len() {
        return Ok(candidates[best]);
    }
    let (a, b, c) = (scores[best - 1], scores[best], scores[best + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok(candidates[best] + offset.clamp(-0.5, 0.5) * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const SR: f64 = 48_000.0;

    fn pulse_train(freq: f64, seconds: f64) -> Vec<f64> {
        let n = (seconds * SR) as usize;
        let period = SR / freq;
        let mut sig = vec![0.0; n];
        let mut t = 0.0;
        while (t as usize) < n {
            // Linear split of a unit pulse across the two nearest samples.
            let i = t as usize;
            let frac = t - i as f64;
            sig[i] += 1.0 - frac;
            if i + 1 < n {
                sig[i + 1] += frac;
            }
            t += period;
        }
        sig
    }

    fn noise(seconds: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).unwrap();
        (0..(seconds * SR) as usize).map(|_| normal.sample(&mut rng)).collect()
    }

    #[test]
    fn pulse_train_shows_twelve_harmonics() {
        let report = harmonic_peaks(&pulse_train(164.815, 1.5), SR, 164.815, 6, 17).unwrap();
        assert_eq!(report.peaks_db.len(), 12);
        assert_eq!(report.longest_run_above(12.0), 12);
    }

    #[test]
    fn white_noise_has_no_harmonics() {
        let report = harmonic_peaks(&noise(2.0, 5), SR, 164.815, 6, 17).unwrap();
        assert!(report.hnr_db <= 3.0, "{}", report.hnr_db);
        assert_eq!(report.longest_run_above(12.0), 0, "{:?}", report.margins_db());
    }

    #[test]
    fn pure_sine_stands_far_above_floor() {
        let sig: Vec<f64> = (0..48_000).map(|i| (2.0 * PI * 440.0 * i as f64 / SR).sin()).collect();
        let report = harmonic_peaks(&sig, SR, 440.0, 1, 1).unwrap();
        assert!(report.peaks_db[0] - report.floor_db >= 40.0);
    }

    #[test]
    fn hnr_is_amplitude_invariant() {
        let mut sig = pulse_train(164.815, 1.0);
        for (x, n) in sig.iter_mut().zip(noise(1.0, 8)) {
            *x += n;
        }
        let a = harmonic_peaks(&sig, SR, 164.815, 6, 17).unwrap();
        for scale in [1e-3, 0.37, 20.0] {
            let scaled: Vec<f64> = sig.iter().map(|x| x * scale).collect();
            let b = harmonic_peaks(&scaled, SR, 164.815, 6, 17).unwrap();
            assert!((a.hnr_db - b.hnr_db).abs() < 0.1);
        }
    }

    #[test]
    fn comb_spacing_of_pulse_trains() {
        for f in [82.41, 164.815, 120.0] {
            let s = comb_spacing(&pulse_train(f, 1.0), SR, 500.0, 3000.0, 50.0, 250.0).unwrap();
            assert!((s / f - 1.0).abs() < 0.005, "{f}: {s}");
        }
    }

    #[test]
    fn harmonic_above_nyquist_rejected() {
        assert!(harmonic_peaks(&pulse_train(1000.0, 1.0), SR, 1000.0, 1, 30).is_err());
    }
}
