/// Anything whose gain at a frequency can be measured.
pub trait ResponseProbe {
    fn gain_at(&mut self, freq_hz: f64) -> f64;
}

/// Unity gain everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllPass;

impl ResponseProbe for AllPass {
    fn gain_at(&mut self, _freq_hz: f64) -> f64 {
        1.0
    }
}

/// Gain given directly by a function, such as an analytic response.
pub struct FnProbe<F>(pub F);

impl<F: FnMut(f64) -> f64> ResponseProbe for FnProbe<F> {
    fn gain_at(&mut self, freq_hz: f64) -> f64 {
        (self.0)(freq_hz)
    }
}

/// Drives a fresh processor with a sine and measures the steady-state RMS
/// gain.
pub struct SineProbe<M> {
    make: M,
    sample_rate: f64,
    settle_s: f64,
    measure_s: f64,
}

impl<M, P> SineProbe<M>
where
    M: FnMut() -> P,
    P: FnMut(f64) -> f64,
{
    pub fn new(make: M, sample_rate: f64) -> Self {
        Self { make, sample_rate, settle_s: 0.25, measure_s: 0.1 }
    }
}

impl<M, P> ResponseProbe for SineProbe<M>
where
    M: FnMut() -> P,
    P: FnMut(f64) -> f64,
{
    fn gain_at(&mut self, freq_hz: f64) -> f64 {
        let mut process = (self.make)();
        let settle = (self.settle_s * self.sample_rate) as usize;
        // Whole cycles keep the RMS estimate unbiased.
        let cycles = (self.measure_s * freq_hz).ceil().max(1.0);
        let measure = (cycles / freq_hz * self.sample_rate).round() as usize;
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.sample_rate;
        let mut sum_in = 0.0;
        let mut sum_out = 0.0;
        for i in 0..settle + measure {
            let x = (w * i as f64).sin();
            let y = process(x);
            if i >= settle {
                sum_in += x * x;
                sum_out += y * y;
            }
        }
        (sum_out / sum_in).sqrt()
    }
}

/// Least-squares slope of level in dB against octaves, from 2 to 4 octaves
/// above `f0_hz`, sampled at eight points per octave.
pub fn rolloff_slope<P: ResponseProbe + ?Sized>(probe: &mut P, f0_hz: f64) -> f64 {
    let points: Vec<(f64, f64)> = (0..=16)
        .map(|i| {
            let octave = 2.0 + i as f64 / 8.0;
            let gain = probe.gain_at(f0_hz * octave.exp2());
            (octave, 20.0 * gain.max(1e-300).log10())
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
