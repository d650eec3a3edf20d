//! Mono waveform ingest and egress over RIFF/WAVE.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported WAV format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("corrupt WAV header in {path}: {detail}")]
    CorruptHeader { path: PathBuf, detail: String },
    #[error("cannot write an empty clip")]
    EmptyClip,
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, clipping every sample into `[-1, 1]`. Non-finite
    /// samples become 0.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        let samples = samples
            .into_iter()
            .map(|s| {
                if s.is_finite() {
                    s.clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::NotFound => {
            AudioError::FileNotFound(path.to_path_buf())
        }
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            AudioError::CorruptHeader {
                path: path.to_path_buf(),
                detail: "unexpected end of file".into(),
            }
        }
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::Unsupported => AudioError::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "only PCM (format 1) and IEEE float (format 3) are supported".into(),
        },
        other => AudioError::CorruptHeader {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Reads a 16-bit PCM or 32-bit float WAV file, averaging channels to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::FileNotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::CorruptHeader {
            path: path.to_path_buf(),
            detail: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {fmt:?} samples"),
            })
        }
    };
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate)
}

/// Writes the clip as mono 16-bit PCM.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    if clip.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &clip.samples {
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Linear-interpolation resampling. Output length is
/// `round(len * target_sr / source_sr)`.
pub fn resample(clip: &AudioClip, target_sr: u32) -> Result<AudioClip, AudioError> {
    if target_sr == 0 {
        return Err(AudioError::InvalidSampleRate);
    }
    if target_sr == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let ratio = clip.sample_rate as f64 / target_sr as f64;
    let out_len = (src.len() as f64 * target_sr as f64 / clip.sample_rate as f64).round() as usize;
    let last = src.len().saturating_sub(1);
    let out = (0..out_len)
        .map(|n| {
            let pos = n as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return src.get(last).copied().unwrap_or(0.0);
            }
            let frac = pos - i as f64;
            src[i] + (src[i + 1] - src[i]) * frac
        })
        .collect();
    AudioClip::new(out, target_sr)
}
