//! RIFF/WAVE output and input.

use std::io::{Cursor, Seek, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::render::Stereo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

fn spec(sample_rate: u32, format: WavFormat) -> hound::WavSpec {
    match format {
        WavFormat::Pcm16 => {
            hound::WavSpec { channels: 2, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int }
        }
        WavFormat::Float32 => {
            hound::WavSpec { channels: 2, sample_rate, bits_per_sample: 32, sample_format: hound::SampleFormat::Float }
        }
    }
}

pub fn to_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

fn write_to<W: Write + Seek>(writer: W, audio: &Stereo, format: WavFormat) -> Result<()> {
    let mut w = hound::WavWriter::new(writer, spec(audio.sample_rate, format))?;
    for (&l, &r) in audio.left.iter().zip(&audio.right) {
        match format {
            WavFormat::Pcm16 => {
                w.write_sample(to_pcm16(l))?;
                w.write_sample(to_pcm16(r))?;
            }
            WavFormat::Float32 => {
                w.write_sample(l as f32)?;
                w.write_sample(r as f32)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

/// Encodes a complete WAVE file in memory.
pub fn wav_bytes(audio: &Stereo, format: WavFormat) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::new());
    write_to(&mut cursor, audio, format)?;
    Ok(cursor.into_inner())
}

pub fn write_wav(path: &Path, audio: &Stereo, format: WavFormat) -> Result<()> {
    let bytes = wav_bytes(audio, format)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a mono or stereo WAVE file; mono is duplicated to both channels.
pub fn read_wav(path: &Path) -> Result<Stereo> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?
        }
        (hound::SampleFormat::Int, bits) if (8..=32).contains(&bits) => {
            let scale = (1i64 << (bits - 1)) as f64 - 1.0;
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 / scale)).collect::<Result<_, _>>()?
        }
        (format, bits) => return Err(Error::Config(format!("unsupported WAVE encoding {format:?}/{bits}"))),
    };
    let (left, right) = match spec.channels {
        1 => (samples.clone(), samples),
        2 => samples.chunks_exact(2).map(|c| (c[0], c[1])).unzip(),
        n => return Err(Error::Config(format!("unsupported channel count {n}"))),
    };
    Ok(Stereo { sample_rate: spec.sample_rate, left, right })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone() -> Stereo {
        let left: Vec<f64> = (0..4800).map(|i| 0.5 * (i as f64 * 0.05).sin()).collect();
        Stereo { sample_rate: 48_000, right: left.clone(), left }
    }

    #[test]
    fn header_layout() {
        let bytes = wav_bytes(&tone(), WavFormat::Pcm16).unwrap();
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..12], b"WAVE");
        assert_eq!(bytes.len(), 44 + 4800 * 4);
        assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 2);
        assert_eq!(u32::from_le_bytes([bytes[24], bytes[25], bytes[26], bytes[27]]), 48_000);
    }

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("maemi-wav-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for format in [WavFormat::Pcm16, WavFormat::Float32] {
            let path = dir.join(format!("{format:?}.wav"));
            let audio = tone();
            write_wav(&path, &audio, format).unwrap();
            let back = read_wav(&path).unwrap();
            assert_eq!(back.sample_rate, 48_000);
            let tol = if format == WavFormat::Pcm16 { 1.0 / 32767.0 } else { 1e-7 };
            for (a, b) in audio.left.iter().zip(&back.left) {
                assert!((a - b).abs() <= tol);
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn identical_audio_identical_bytes() {
        assert_eq!(wav_bytes(&tone(), WavFormat::Float32).unwrap(), wav_bytes(&tone(), WavFormat::Float32).unwrap());
    }
}
