//! The thirteen headline checks of the synthesizer, each reduced to a
//! pass/fail line. Shared by the `selftest` command and the acceptance
//! tests.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abdomen::{abdominal_bandwidth, helmholtz_f0, Bandpass6, HelmholtzGeometry, PitchMode};
use crate::analysis::{
    analyze, band_energy_fraction, cents, estimate_pitch, rms, rolloff_slope, AnalysisReport, AnalysisWindows,
    SineProbe,
};
use crate::control::{A4_HZ, E4_HZ, E5_HZ};
use crate::error::Result;
use crate::excitation::{DetuneSampler, Excitation, PulseTable};
use crate::plate::{verify_25pct, PlateParams};
use crate::render::{render_score, render_score_for, ScorePlayer, Stereo};
use crate::score::{EventKind, Score};
use crate::voice::VoiceConfig;
use crate::wav::{wav_bytes, WavFormat};

pub const CHECK_COUNT: u8 = 13;

pub const PITCH_TOLERANCE_CENTS: f64 = 15.0;
pub const PITCH_RUNTIME_LIMIT: Duration = Duration::from_secs(10);
pub const COMB_MIN_HARMONICS: usize = 12;
pub const COMB_MIN_MARGIN_DB: f64 = 12.0;
pub const HNR_MIN_DROP_DB: f64 = 10.0;
pub const OCTAVE_SPACING_HZ: f64 = 82.41;
pub const OCTAVE_SPACING_TOLERANCE: f64 = 0.02;
pub const ROLLOFF_MAX_DB_PER_OCT: f64 = -33.0;
pub const MODE_TOLERANCE: f64 = 0.01;
pub const LOUDNESS_TOLERANCE: f64 = 0.01;
pub const BRIGHTNESS_MIN_DB: f64 = 6.0;
pub const BRIGHTNESS_CUTOFF_HZ: f64 = 3000.0;
pub const GATE_SILENCE_S: f64 = 0.06;
pub const RENDER_TIME_LIMIT: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

pub fn check_name(id: u8) -> Option<&'static str> {
    Some(match id {
        1 => "pitch accuracy",
        2 => "harmonic comb",
        3 => "decoherence",
        4 => "octave drop",
        5 => "coherent timing",
        6 => "plate decay",
        7 => "helmholtz",
        8 => "rolloff",
        9 => "mode contract",
        10 => "loudness",
        11 => "gate",
        12 => "determinism",
        13 => "performance",
        _ => return None,
    })
}

/// Runs the checks against a base configuration. Checks that exercise a
/// specific rate or mode override those fields.
pub struct SelfTest {
    config: VoiceConfig,
    demo: Option<(Stereo, AnalysisReport)>,
}

impl SelfTest {
    pub fn new(config: VoiceConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, demo: None })
    }

    pub fn run_all(&mut self) -> Result<Vec<Check>> {
        (1..=CHECK_COUNT).map(|id| self.run(id)).collect()
    }

    pub fn run(&mut self, id: u8) -> Result<Check> {
        let (passed, detail) = match id {
            1 => self.pitch_accuracy()?,
            2 => self.harmonic_comb()?,
            3 => self.decoherence()?,
            4 => self.octave_drop()?,
            5 => self.coherent_timing(),
            6 => self.plate_decay()?,
            7 => helmholtz_oracle()?,
            8 => rolloff()?,
            9 => self.mode_contract()?,
            10 => self.loudness()?,
            11 => self.gate()?,
            12 => self.determinism()?,
            13 => self.performance()?,
            _ => {
                return Err(crate::Error::Config(format!("no check {id}; checks are 1..={CHECK_COUNT}")));
            }
        };
        Ok(Check { id, name: check_name(id).unwrap_or("?"), passed, detail })
    }

    fn sample_rate(&self) -> f64 {
        self.config.sample_rate as f64
    }

    fn demo_report(&mut self) -> Result<&(Stereo, AnalysisReport)> {
        if self.demo.is_none() {
            let audio = render_score(&Score::demo(E5_HZ), &self.config)?;
            let report = analyze(&audio.left, self.sample_rate(), AnalysisWindows::default())?;
            self.demo = Some((audio, report));
        }
        Ok(self.demo.as_ref().expect("demo rendered above"))
    }

    fn pitch_accuracy(&mut self) -> Result<(bool, String)> {
        let start = Instant::now();
        let windows = AnalysisWindows::default();
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, pitch) in [("E5", E5_HZ), ("E4", E4_HZ)] {
            let audio = render_score(&Score::demo(pitch), &self.config)?;
            let middle = audio.window(windows.middle_s.0, windows.middle_s.1);
            match estimate_pitch(middle, self.sample_rate()) {
                Ok(est) => {
                    let err = cents(est, pitch);
                    ok &= err.abs() <= PITCH_TOLERANCE_CENTS;
                    parts.push(format!("{name} {est:.2} Hz ({err:+.2} c)"));
                }
                Err(e) => {
                    ok = false;
                    parts.push(format!("{name} no estimate ({e})"));
                }
            }
        }
        let elapsed = start.elapsed();
        ok &= elapsed < PITCH_RUNTIME_LIMIT;
        parts.push(format!("{:.2} s", elapsed.as_secs_f64()));
        Ok((ok, parts.join(", ")))
    }

    fn harmonic_comb(&mut self) -> Result<(bool, String)> {
        let (_, report) = self.demo_report()?;
        let comb = &report.middle_comb;
        let run = comb.longest_run_above(COMB_MIN_MARGIN_DB);
        Ok((
            run >= COMB_MIN_HARMONICS,
            format!(
                "{run} adjacent harmonics of {:.3} Hz (k {}..={}) at >= {COMB_MIN_MARGIN_DB} dB, weakest {:.1} dB",
                comb.base_hz,
                comb.k_lo,
                comb.k_hi,
                comb.min_margin_db()
            ),
        ))
    }

    fn decoherence(&mut self) -> Result<(bool, String)> {
        let (_, r) = self.demo_report()?;
        Ok((
            r.hnr_drop_db >= HNR_MIN_DROP_DB,
            format!(
                "HNR {:.1} dB middle, {:.1} dB final, drop {:.1} dB",
                r.hnr_middle_db, r.hnr_final_db, r.hnr_drop_db
            ),
        ))
    }

    fn octave_drop(&mut self) -> Result<(bool, String)> {
        let (_, r) = self.demo_report()?;
        let dev = r.final_comb_spacing_hz / OCTAVE_SPACING_HZ - 1.0;
        Ok((
            dev.abs() <= OCTAVE_SPACING_TOLERANCE,
            format!("final comb spacing {:.3} Hz ({:+.2}%)", r.final_comb_spacing_hz, dev * 100.0),
        ))
    }

    fn coherent_timing(&self) -> (bool, String) {
        let sr = 48_000.0;
        let mut exc = Excitation::new(sr, self.config.seed, DetuneSampler::disabled());
        exc.restart();
        let mut onsets = Vec::new();
        for n in 0..sr as usize {
            let step = exc.step(n as f64 / sr, E5_HZ, 1.0, 0.5);
            if step.apodeme_speed_nrm != 1.0 {
                return (false, format!("speed {} at sample {n}", step.apodeme_speed_nrm));
            }
            if let Some(events) = step.contraction {
                onsets.extend(events.iter().map(|e| e.onset_s));
            }
        }
        let Some(&t0) = onsets.first() else {
            return (false, "no buckling events".into());
        };
        let worst =
            onsets.iter().enumerate().map(|(i, t)| ((t - t0 - i as f64 / E5_HZ) * sr).abs()).fold(0.0, f64::max);
        (worst < 1.0, format!("{} onsets, worst deviation {worst:.2e} samples from the 1/{E5_HZ} s grid", onsets.len()))
    }

    fn plate_decay(&self) -> Result<(bool, String)> {
        let c = &self.config.constants;
        let params = PlateParams::from_constants(c);
        let pulses = PulseTable::from_parts(c.pulse_gains(), c.pulse_lead_signs());
        let mut failing = Vec::new();
        for semitone in 0..=12 {
            let pitch = E4_HZ * (semitone as f64 / 12.0).exp2();
            if !verify_25pct(&params, &pulses, pitch, self.sample_rate())? {
                failing.push(format!("{pitch:.2}"));
            }
        }
        let detail = if failing.is_empty() {
            "13 semitones E4..E5 hold 25% until the next pulse".to_string()
        } else {
            format!("fails at {} Hz", failing.join(", "))
        };
        Ok((failing.is_empty(), detail))
    }

    fn mode_contract(&self) -> Result<(bool, String)> {
        let probe_s = 3.0;
        let mut peaks = Vec::new();
        for mode in [PitchMode::FixedE5, PitchMode::PitchFollowing] {
            let config = VoiceConfig { mode, ..self.config.clone() };
            for pitch in [E4_HZ, A4_HZ, E5_HZ] {
                let score = Score::demo(pitch);
                let mut player = ScorePlayer::new(&score, config.clone())?;
                while player.time_s() < probe_s {
                    player.next_block();
                }
                peaks.push((mode, pitch, transfer_peak_hz(player.voice().abdomen().filter())));
            }
        }
        let fixed: Vec<f64> = peaks.iter().filter(|p| p.0 == PitchMode::FixedE5).map(|p| p.2).collect();
        let following: Vec<f64> =
            peaks.iter().filter(|p| p.0 == PitchMode::PitchFollowing).map(|p| p.2 / p.1).collect();
        let spread = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi / lo - 1.0
        };
        let (sf, sp) = (spread(&fixed), spread(&following));
        let fmt_hz = |v: &[f64]| v.iter().map(|f| format!("{f:.1}")).collect::<Vec<_>>().join("/");
        let following_hz: Vec<f64> = peaks.iter().filter(|p| p.0 == PitchMode::PitchFollowing).map(|p| p.2).collect();
        Ok((
            sf <= MODE_TOLERANCE && sp <= MODE_TOLERANCE,
            format!(
                "fixed {} Hz (spread {:.3}%), following {} Hz (peak/pitch spread {:.3}%)",
                fmt_hz(&fixed),
                sf * 100.0,
                fmt_hz(&following_hz),
                sp * 100.0
            ),
        ))
    }

    fn loudness(&self) -> Result<(bool, String)> {
        let render = |l: f64| render_score(&Score::demo(E5_HZ).with_loudness(l), &self.config);
        let levels = [0.1, 0.3, 0.5];
        let renders: Vec<Stereo> = levels.iter().map(|&l| render(l)).collect::<Result<_>>()?;
        let reference = &renders[2].left;
        let ref_rms = rms(reference);
        let peak = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut ok = ref_rms > 0.0;
        let mut parts = Vec::new();
        for (l, audio) in levels.iter().zip(&renders).take(2) {
            let expected = l / levels[2];
            let ratio = rms(&audio.left) / ref_rms;
            let shape_err =
                audio.left.iter().zip(reference).map(|(a, b)| (a - expected * b).abs()).fold(0.0, f64::max) / peak;
            ok &= (ratio / expected - 1.0).abs() <= LOUDNESS_TOLERANCE && shape_err <= 1e-9;
            parts.push(format!("rms {l}/0.5 = {ratio:.5}, shape error {shape_err:.1e}"));
        }
        let sr = self.sample_rate();
        let nyquist = sr / 2.0;
        let soft = band_energy_fraction(reference, sr, BRIGHTNESS_CUTOFF_HZ, nyquist)?;
        let loud = band_energy_fraction(&render(1.0)?.left, sr, BRIGHTNESS_CUTOFF_HZ, nyquist)?;
        let gain_db = 10.0 * (loud / soft).log10();
        ok &= gain_db >= BRIGHTNESS_MIN_DB;
        parts.push(format!("energy above 3 kHz +{gain_db:.2} dB at loudness 1.0"));
        Ok((ok, parts.join(", ")))
    }

    fn gate(&self) -> Result<(bool, String)> {
        let score = Score::demo(E5_HZ);
        let gate_off = score
            .events()
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::GateOff)
            .map(|e| e.t_s)
            .unwrap_or_else(|| score.end_s());
        let sr = self.sample_rate();
        let end_s = gate_off + 2.0 * GATE_SILENCE_S;
        let mut player = ScorePlayer::new(&score, self.config.clone())?;
        let mut out = Vec::new();
        let mut finished_at = None;
        while player.time_s() < end_s {
            out.extend_from_slice(&player.next_block().output_l);
            if finished_at.is_none() && player.voice().is_finished() {
                finished_at = Some(player.time_s());
            }
        }
        let quiet_from = ((gate_off + GATE_SILENCE_S) * sr).ceil() as usize;
        let loud_before = out[..(gate_off * sr) as usize].iter().any(|&x| x != 0.0);
        let silent = out[quiet_from..].iter().all(|&x| x == 0.0);
        let finished =
            finished_at.is_some_and(|t| t <= gate_off + GATE_SILENCE_S + self.config.block_frames as f64 / sr);
        Ok((
            loud_before && silent && finished,
            format!(
                "gate off at {gate_off} s, silent from +{} ms: {silent}, finished at {}",
                GATE_SILENCE_S * 1e3,
                finished_at.map_or("never".into(), |t| format!("{:.4} s", t))
            ),
        ))
    }

    fn determinism(&self) -> Result<(bool, String)> {
        let score = Score::demo(E5_HZ);
        let a = render_score(&score, &self.config)?;
        let b = render_score(&score, &self.config)?;
        let pcm = wav_bytes(&a, WavFormat::Pcm16)? == wav_bytes(&b, WavFormat::Pcm16)?;
        let float = wav_bytes(&a, WavFormat::Float32)? == wav_bytes(&b, WavFormat::Float32)?;
        Ok((pcm && float, format!("16-bit identical: {pcm}, float identical: {float}")))
    }

    fn performance(&self) -> Result<(bool, String)> {
        let score = Score::demo(E5_HZ);
        let duration = crate::render::render_duration_s(&score, &self.config);
        // Best of three, so a cold cache or a busy machine does not decide.
        let mut best = Duration::MAX;
        for _ in 0..3 {
            let start = Instant::now();
            let audio = render_score_for(&score, &self.config, duration)?;
            best = best.min(start.elapsed());
            std::hint::black_box(audio);
        }
        Ok((
            best < RENDER_TIME_LIMIT,
            format!(
                "{duration:.2} s call rendered in {:.1} ms ({:.0}x real time)",
                best.as_secs_f64() * 1e3,
                duration / best.as_secs_f64()
            ),
        ))
    }
}

/// Frequency of the largest gain of the filter's transfer function.
pub fn transfer_peak_hz(filter: &Bandpass6) -> f64 {
    let sr_guess = filter.f0_hz() * 8.0;
    let lo = (filter.f0_hz() / 4.0).max(1.0);
    let hi = (filter.f0_hz() * 4.0).min(sr_guess);
    // Coarse log scan, then golden-section search around the best point.
    let n = 2000;
    let freq = |i: usize| lo * (hi / lo).powf(i as f64 / n as f64);
    let best = (0..=n).max_by(|&a, &b| filter.magnitude(freq(a)).total_cmp(&filter.magnitude(freq(b)))).unwrap_or(0);
    let (mut a, mut b) = (freq(best.saturating_sub(1)), freq((best + 1).min(n)));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-6 * a {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if filter.magnitude(c) > filter.magnitude(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn helmholtz_oracle() -> Result<(bool, String)> {
    let oracle = |a: f64, v: f64, c: f64| c / (2.0 * PI) * (3.0 * PI.powf(1.5) * a.sqrt() / (8.0 * v)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = 10f64.powf(rng.random_range(-7.0..-2.0));
        let v = 10f64.powf(rng.random_range(-8.0..-3.0));
        let c = rng.random_range(300.0..360.0);
        let f = helmholtz_f0(&HelmholtzGeometry::new(a, v, c)?);
        worst = worst.max((f / oracle(a, v, c) - 1.0).abs());
    }
    let (a, v, c) = (3e-5, 1.35e-6, 343.0);
    let base = helmholtz_f0(&HelmholtzGeometry::new(a, v, c)?);
    let quad_v = helmholtz_f0(&HelmholtzGeometry::new(a, 4.0 * v, c)?) / (base / 2.0) - 1.0;
    let hex_a = helmholtz_f0(&HelmholtzGeometry::new(16.0 * a, v, c)?) / (2.0 * base) - 1.0;
    Ok((
        worst <= 1e-9 && quad_v.abs() <= 1e-12 && hex_a.abs() <= 1e-12,
        format!(
            "oracle worst {worst:.1e} over 1000 geometries, 4V law {:.1e}, 16a law {:.1e}",
            quad_v.abs(),
            hex_a.abs()
        ),
    ))
}

/// Measured at 96 kHz on the default E5 abdominal filter, so the top of the
/// fourth octave stays below Nyquist.
fn rolloff() -> Result<(bool, String)> {
    let sr = 96_000.0;
    let f0 = 3.0 * E5_HZ;
    let bw = abdominal_bandwidth(E5_HZ, crate::constants::Constants::default().abd_bandwidth_factor);
    let mut probe = SineProbe::new(
        || {
            let mut bp = Bandpass6::new(f0, bw, 20.0, sr);
            move |x| bp.process(x)
        },
        sr,
    );
    let slope = rolloff_slope(&mut probe, f0);
    Ok((
        slope <= ROLLOFF_MAX_DB_PER_OCT,
        format!("{slope:.2} dB/oct over octaves 2..4 above {f0:.2} Hz (bw {bw:.2} Hz, {sr} Hz)"),
    ))
}
