use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            // Periodic Hann, so overlapping frames at hop len/4 sum flat.
            Window::Hann => (0..len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos()).collect(),
        }
    }
}

pub fn db(power_or_amplitude_sq: f64) -> f64 {
    10.0 * power_or_amplitude_sq.max(1e-300).log10()
}

pub fn amplitude_db(amplitude: f64) -> f64 {
    20.0 * amplitude.max(1e-300).log10()
}

/// Real-input FFT returning the one-sided spectrum (bins 0..=n/2).
pub(crate) struct RealFft {
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self { fft, buffer: vec![Complex64::default(); n], scratch }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    /// Transforms `frame * window`, zero-padded to the FFT length, and
    /// returns squared magnitudes of the one-sided spectrum.
    pub fn power(&mut self, frame: &[f64], window: &[f64], out: &mut Vec<f64>) {
        let n = self.buffer.len();
        for (i, slot) in self.buffer.iter_mut().enumerate() {
            let v = if i < frame.len() { frame[i] * window[i] } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        out.clear();
        out.extend(self.buffer[..=n / 2].iter().map(|c| c.norm_sqr()));
    }
}

/// Short-time magnitude spectra.
///
/// Magnitudes are amplitude-normalized: a sine of amplitude `A` centered on
/// a bin reads `A` at that bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub sample_rate: f64,
    pub window_len: usize,
    pub hop: usize,
    pub window: Window,
    pub frames: Vec<Vec<f64>>,
    /// Multiplier applied to raw FFT magnitudes.
    scale: f64,
}

impl Spectrogram {
    pub fn window_s(&self) -> f64 {
        self.window_len as f64 / self.sample_rate
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / self.window_len as f64
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Sum over frames of the spectral energy, `sum |X_k|^2 / N` over the
    /// full two-sided spectrum. Equals the time-domain energy of the
    /// covered samples for non-overlapping rectangular frames.
    pub fn energy(&self) -> f64 {
        let n = self.window_len;
        self.frames
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let raw_sq = (m / self.scale).powi(2);
                        if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                            raw_sq
                        } else {
                            2.0 * raw_sq
                        }
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .sum()
    }

    /// Bin index with the largest magnitude in a frame.
    pub fn peak_bin(&self, frame: usize) -> usize {
        argmax(&self.frames[frame])
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0
}

/// Spectrogram with explicit frame sizes.
pub fn spectrogram_frames(
    sig: &[f64],
    sample_rate: f64,
    window_len: usize,
    hop: usize,
    window: Window,
) -> Result<Spectrogram, AnalysisError> {
    if window_len < 2 || hop == 0 || hop > window_len {
        return Err(AnalysisError::InvalidParameter(format!(
            "window {window_len} and hop {hop} must satisfy 0 < hop <= window"
        )));
    }
    if sig.len() < window_len {
        return Err(AnalysisError::TooShort { needed: window_len, got: sig.len() });
    }
    let w = window.coefficients(window_len);
    let scale = 2.0 / w.iter().sum::<f64>();
    let mut fft = RealFft::new(window_len);
    let mut power = Vec::new();
    let mut frames = Vec::new();
    let mut start = 0;
    while start + window_len <= sig.len() {
        fft.power(&sig[start..start + window_len], &w, &mut power);
        frames.push(power.iter().map(|p| p.sqrt() * scale).collect());
        start += hop;
    }
    Ok(Spectrogram { sample_rate, window_len, hop, window, frames, scale })
}

/// Hann-windowed spectrogram with sizes given in seconds.
pub fn spectrogram(sig: &[f64], sample_rate: f64, window_s: f64, hop_s: f64) -> Result<Spectrogram, AnalysisError> {
    let window_len = (window_s * sample_rate).round() as usize;
    let hop = (hop_s * sample_rate).round() as usize;
    spectrogram_frames(sig, sample_rate, window_len, hop, Window::Hann)
}

/// Frame-averaged power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub sample_rate: f64,
    pub fft_len: usize,
    /// Mean squared normalized magnitude per bin.
    pub power: Vec<f64>,
}

impl Spectrum {
    /// Averages frames of `window_len` samples, zero-padded by `pad`.
    pub fn welch(
        sig: &[f64],
        sample_rate: f64,
        window_len: usize,
        hop: usize,
        pad: usize,
        window: Window,
    ) -> Result<Spectrum, AnalysisError> {
        if window_len < 2 || hop == 0 || pad == 0 {
            return Err(AnalysisError::InvalidParameter("empty window, hop or padding".into()));
        }
        if sig.len() < window_len {
            return Err(AnalysisError::TooShort { needed: window_len, got: sig.len() });
        }
        let w = window.coefficients(window_len);
        let scale = 2.0 / w.iter().sum::<f64>();
        let mut fft = RealFft::new(window_len * pad);
        let mut frame_power = Vec::new();
        let mut power = vec![0.0; fft.len() / 2 + 1];
        let mut count = 0usize;
        let mut start = 0;
        while start + window_len <= sig.len() {
            fft.power(&sig[start..start + window_len], &w, &mut frame_power);
            for (acc, p) in power.iter_mut().zip(&frame_power) {
                *acc += p * scale * scale;
            }
            count += 1;
            start += hop;
        }
        for p in &mut power {
            *p /= count as f64;
        }
        Ok(Spectrum { sample_rate, fft_len: fft.len(), power })
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / self.fft_len as f64
    }

    pub fn bin_of(&self, freq_hz: f64) -> usize {
        ((freq_hz / self.bin_hz()).round().max(0.0) as usize).min(self.power.len() - 1)
    }

    pub fn freq_of(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz()
    }

    pub fn db_at_bin(&self, bin: usize) -> f64 {
        db(self.power[bin])
    }

    /// Largest power in `[lo_hz, hi_hz]` as (bin, power).
    pub fn peak_in(&self, lo_hz: f64, hi_hz: f64) -> (usize, f64) {
        let lo = self.bin_of(lo_hz.max(0.0));
        let hi = self.bin_of(hi_hz).max(lo);
        let i = lo + argmax(&self.power[lo..=hi]);
        (i, self.power[i])
    }

    /// Total power over bins in `[lo_hz, hi_hz]`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let lo = self.bin_of(lo_hz.max(0.0));
        let hi = self.bin_of(hi_hz).max(lo);
        self.power[lo..=hi].iter().sum()
    }

    /// Peak frequency refined by a parabola through the log levels of the
    /// peak bin and its neighbours.
    pub fn refined_peak_hz(&self, bin: usize) -> f64 {
        if bin == 0 || bin + 1 >= self.power.len() {
            return self.freq_of(bin);
        }
        let (a, b, c) = (self.db_at_bin(bin - 1), self.db_at_bin(bin), self.db_at_bin(bin + 1));
        let denom = a - 2.0 * b + c;
        let offset = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
        (bin as f64 + offset.clamp(-0.5, 0.5)) * self.bin_hz()
    }
}

/// Fraction of total power in `[lo_hz, hi_hz]`.
pub fn band_energy_fraction(sig: &[f64], sample_rate: f64, lo_hz: f64, hi_hz: f64) -> Result<f64, AnalysisError> {
    let spec = Spectrum::welch(sig, sample_rate, 4096, 1024, 1, Window::Hann)?;
    let total: f64 = spec.power.iter().sum();
    if !(total > 0.0) {
        return Err(AnalysisError::Silent);
    }
    Ok(spec.band_power(lo_hz, hi_hz) / total)
}
