//! WAV input for SNR estimation and duration derivation.
//!
//! Supports 16-bit integer and 32-bit float PCM; multi-channel files are
//! downmixed by channel averaging.

use std::path::Path;

use crate::error::{AuditError, Result};

/// A decoded mono clip.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Read a WAV file and downmix to mono.
pub fn read_wav_mono(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| AuditError::input(format!("cannot read WAV {}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AuditError::input(format!("{}: zero channels", path.display())));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| AuditError::input(format!("{}: {e}", path.display())))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| AuditError::input(format!("{}: {e}", path.display())))?,
        (format, bits) => {
            return Err(AuditError::input(format!(
                "{}: unsupported WAV encoding {format:?}/{bits}-bit (expected 16-bit int or 32-bit float PCM)",
                path.display()
            )));
        }
    };

    let frames = interleaved.len() / channels;
    let mut samples = Vec::with_capacity(frames);
    for frame in interleaved.chunks_exact(channels) {
        samples.push(frame.iter().sum::<f64>() / channels as f64);
    }
    Ok(AudioClip { samples, sample_rate: spec.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_wav(path: &Path, channels: u16, data: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec).unwrap();
        for &s in data {
            writer.write_sample(s).unwrap();
        }
        writer.finalize().unwrap();
    }

    #[test]
    fn reads_mono_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mono.wav");
        write_wav(&path, 1, &[0, 16384, -16384, 32767]);
        let clip = read_wav_mono(&path).unwrap();
        assert_eq!(clip.sample_rate, 16_000);
        assert_eq!(clip.samples.len(), 4);
        assert!((clip.samples[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn downmixes_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        write_wav(&path, 2, &[16384, -16384, 8192, 8192]);
        let clip = read_wav_mono(&path).unwrap();
        assert_eq!(clip.samples.len(), 2);
        assert!(clip.samples[0].abs() < 1e-9);
        assert!((clip.samples[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn reads_float_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("float.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for &s in &[0.5f32, -0.25] {
            writer.write_sample(s).unwrap();
        }
        writer.finalize().unwrap();
        let clip = read_wav_mono(&path).unwrap();
        assert!((clip.samples[0] - 0.5).abs() < 1e-9);
        assert!((clip.duration_s() - 2.0 / 8000.0).abs() < 1e-12);
    }
}
