use super::spectrum::{db, Spectrum, Window};
use super::AnalysisError;

pub const PITCH_MIN_HZ: f64 = 100.0;
pub const PITCH_MAX_HZ: f64 = 1000.0;
pub const MIN_DURATION_S: f64 = 0.5;

/// Harmonics summed per candidate.
const HPS_HARMONICS: usize = 8;
/// Levels more than this far below the spectral maximum count as zero.
const DYNAMIC_RANGE_DB: f64 = 60.0;
/// Share of the comb's harmonic power an octave above its base must carry
/// to be heard as the pitch; an even comb splits exactly in half.
const DOMINANT_SHARE: f64 = 0.5;
/// Harmonics weaker than this relative to the strongest are left out of the
/// final fit.
const REFINE_RANGE_DB: f64 = 30.0;

fn pitch_spectrum(sig: &[f64], sample_rate: f64) -> Result<Spectrum, AnalysisError> {
    let window = 8192.min(sig.len().next_power_of_two() / 2);
    Spectrum::welch(sig, sample_rate, window, window / 4, 4, Window::Hann)
}

/// Harmonic-product pitch over 100 to 1000 Hz.
///
/// Sums log levels (clipped to a 60 dB range) at the first eight
/// multiples of each candidate and takes the best. Its lowest octave in
/// range is the comb base; the pitch is the highest octave of the base whose
/// harmonics still hold at least half the base's harmonic power, so a weak
/// sub-comb does not pull the pitch down. The result is refined by a
/// least-squares fit to the interpolated harmonic peak frequencies.
pub fn estimate_pitch(sig: &[f64], sample_rate: f64) -> Result<f64, AnalysisError> {
    let needed = (MIN_DURATION_S * sample_rate).ceil() as usize;
    if sig.len() < needed {
        return Err(AnalysisError::TooShort { needed, got: sig.len() });
    }
    let spec = pitch_spectrum(sig, sample_rate)?;
    let max_power = spec.power.iter().cloned().fold(0.0, f64::max);
    if !(max_power > 1e-20) {
        return Err(AnalysisError::Silent);
    }
    let floor_db = db(max_power) - DYNAMIC_RANGE_DB;
    let lifted: Vec<f64> = spec.power.iter().map(|&p| (db(p) - floor_db).max(0.0)).collect();
    let nyquist = sample_rate / 2.0;
    let level = |f: f64| -> f64 {
        if f >= nyquist {
            return 0.0;
        }
        let x = f / spec.bin_hz();
        let i = x.floor() as usize;
        let frac = x - i as f64;
        lifted[i] * (1.0 - frac) + lifted[(i + 1).min(lifted.len() - 1)] * frac
    };
    let score = |f: f64| (1..=HPS_HARMONICS).map(|h| level(h as f64 * f)).sum::<f64>();

    let step = spec.bin_hz() / HPS_HARMONICS as f64;
    let mut best = (PITCH_MIN_HZ, f64::NEG_INFINITY);
    let mut f = PITCH_MIN_HZ;
    while f <= PITCH_MAX_HZ {
        let s = score(f);
        if s > best.1 {
            best = (f, s);
        }
        f += step;
    }
    if best.1 <= 0.0 {
        return Err(AnalysisError::NoPeriodicity);
    }

    // Power at the multiples of `g`.
    let grid_power = |g: f64| -> f64 {
        let mut total = 0.0;
        let mut h = 1;
        while (h as f64 + 0.25) * g < nyquist {
            let c = h as f64 * g;
            total += spec.peak_in(c - g / 4.0, c + g / 4.0).1;
            h += 1;
        }
        total
    };
    let mut base = best.0;
    while base / 2.0 >= PITCH_MIN_HZ {
        base /= 2.0;
    }
    let base_power = grid_power(base);
    let mut pitch = base;
    let mut g = base * 2.0;
    while g <= PITCH_MAX_HZ {
        if grid_power(g) > DOMINANT_SHARE * base_power {
            pitch = g;
        }
        g *= 2.0;
    }
    Ok(refine(&spec, pitch, max_power))
}

/// Least-squares fundamental from the strong harmonic peaks, each refined
/// by parabolic interpolation.
fn refine(spec: &Spectrum, pitch: f64, max_power: f64) -> f64 {
    let nyquist = spec.sample_rate / 2.0;
    let threshold = max_power * 10f64.powf(-REFINE_RANGE_DB / 10.0);
    let (mut num, mut den) = (0.0, 0.0);
    let mut h = 1;
    while (h as f64 + 0.5) * pitch < nyquist {
        let c = h as f64 * pitch;
        let (bin, p) = spec.peak_in(c - pitch / 8.0, c + pitch / 8.0);
        if p >= threshold {
            let freq = spec.refined_peak_hz(bin);
            let w = p / max_power;
            num += w * h as f64 * freq;
            den += w * (h * h) as f64;
        }
        h += 1;
    }
    if den > 0.0 {
        num / den
    } else {
        pitch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const SR: f64 = 48_000.0;

    fn partials(freqs: &[(f64, f64)], seconds: f64) -> Vec<f64> {
        (0..(seconds * SR) as usize)
            .map(|i| {
                let t = i as f64 / SR;
                freqs.iter().map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum()
            })
            .collect()
    }

    #[test]
    fn sine_440() {
        let p = estimate_pitch(&partials(&[(440.0, 0.5)], 1.0), SR).unwrap();
        assert!((p - 440.0).abs() < 1.0, "{p}");
    }

    #[test]
    fn three_harmonics_of_200() {
        let p = estimate_pitch(&partials(&[(200.0, 0.3), (400.0, 0.3), (600.0, 0.3)], 1.0), SR).unwrap();
        assert!((p - 200.0).abs() < 1.0, "{p}");
    }

    #[test]
    fn missing_fundamental() {
        let p = estimate_pitch(&partials(&[(1318.52, 0.3), (1977.78, 1.0), (2637.04, 0.3)], 1.0), SR).unwrap();
        assert!((p / 659.26 - 1.0).abs() < 0.002, "{p}");
    }

    #[test]
    fn weak_odd_lines_do_not_pull_an_octave_down() {
        let p = estimate_pitch(
            &partials(&[(1318.52, 0.3), (1977.78, 1.0), (2637.04, 0.3), (1648.15, 0.03), (2307.41, 0.03)], 1.0),
            SR,
        )
        .unwrap();
        assert!((p / 659.26 - 1.0).abs() < 0.002, "{p}");
    }

    /// Lines every 164.8 Hz, with every fourth one 6 dB up.
    fn quarter_comb(weak: f64) -> Vec<f64> {
        let lines: Vec<(f64, f64)> =
            (5..=17).map(|k| (k as f64 * 164.815, if k % 4 == 0 { 1.0 } else { weak })).collect();
        partials(&lines, 1.0)
    }

    #[test]
    fn dominant_grid_wins_over_sub_comb() {
        let p = estimate_pitch(&quarter_comb(0.5), SR).unwrap();
        assert!((p / 659.26 - 1.0).abs() < 0.002, "{p}");
    }

    #[test]
    fn even_comb_reports_its_spacing() {
        let p = estimate_pitch(&quarter_comb(1.0), SR).unwrap();
        assert!((p / 164.815 - 1.0).abs() < 0.002, "{p}");
    }

    #[test]
    fn errors() {
        assert!(matches!(estimate_pitch(&[0.0; 1000], SR), Err(AnalysisError::TooShort { .. })));
        assert!(matches!(estimate_pitch(&vec![0.0; 48_000], SR), Err(AnalysisError::Silent)));
    }
}
