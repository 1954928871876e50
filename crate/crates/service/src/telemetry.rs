//! Meter and spectrum frames computed from the output tap, off the render
//! path.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::protocol::ServerFrame;

pub const SPECTRUM_BINS: usize = 64;
pub const SPECTRUM_LO_HZ: f64 = 50.0;
pub const FFT_LEN: usize = 2048;
/// Level reported for digital silence.
pub const FLOOR_DB: f64 = -120.0;

fn to_db(amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        (20.0 * amplitude.log10()).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

/// Keeps the latest [`FFT_LEN`] samples and the level since the last meter.
pub struct Analyzer {
    sample_rate: f64,
    history: Vec<f64>,
    write: usize,
    sum_sq: f64,
    count: usize,
    peak: f64,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buffer: Vec<Complex64>,
}

impl Analyzer {
    pub fn new(sample_rate: f64) -> Self {
        let window = (0..FFT_LEN).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / FFT_LEN as f64).cos()).collect();
        Self {
            sample_rate,
            history: vec![0.0; FFT_LEN],
            write: 0,
            sum_sq: 0.0,
            count: 0,
            peak: 0.0,
            fft: FftPlanner::new().plan_fft_forward(FFT_LEN),
            window,
            buffer: vec![Complex64::default(); FFT_LEN],
        }
    }

    pub fn push(&mut self, x: f64) {
        self.history[self.write] = x;
        self.write = (self.write + 1) % FFT_LEN;
        self.sum_sq += x * x;
        self.count += 1;
        self.peak = self.peak.max(x.abs());
    }

    /// Level of everything pushed since the previous call.
    pub fn meter(&mut self) -> ServerFrame {
        let rms = if self.count > 0 { (self.sum_sq / self.count as f64).sqrt() } else { 0.0 };
        let frame = ServerFrame::Meter { rms_db: to_db(rms), peak_db: to_db(self.peak) };
        self.sum_sq = 0.0;
        self.count = 0;
        self.peak = 0.0;
        frame
    }

    /// Peak dB per log-spaced band of the latest window. A full-scale sine
    /// reads 0 dB.
    pub fn spectrum(&mut self) -> ServerFrame {
        for (i, slot) in self.buffer.iter_mut().enumerate() {
            let x = self.history[(self.write + i) % FFT_LEN];
            *slot = Complex64::new(x * self.window[i], 0.0);
        }
        self.fft.process(&mut self.buffer);
        // Hann coherent gain is one half.
        let scale = 4.0 / FFT_LEN as f64;
        let bin_hz = self.sample_rate / FFT_LEN as f64;
        let hi_hz = self.sample_rate / 2.0;
        let ratio = hi_hz / SPECTRUM_LO_HZ;
        let edge = |k: usize| SPECTRUM_LO_HZ * ratio.powf(k as f64 / SPECTRUM_BINS as f64);
        let bins = (0..SPECTRUM_BINS)
            .map(|k| {
                let lo = (edge(k) / bin_hz).floor() as usize;
                let hi = ((edge(k + 1) / bin_hz).ceil() as usize).clamp(lo + 1, FFT_LEN / 2 + 1);
                let peak = self.buffer[lo..hi].iter().map(|c| c.norm()).fold(0.0, f64::max);
                to_db(peak * scale)
            })
            .collect();
        ServerFrame::Spectrum { lo_hz: SPECTRUM_LO_HZ, hi_hz, bins }
    }
}
