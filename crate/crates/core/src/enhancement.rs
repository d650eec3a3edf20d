//! Pre-encoding enhancement stage.
//!
//! The stage takes a noisy clip and returns a cleaner one of the same
//! length. Two methods ship: an exact pass-through and a spectral gate that
//! learns a per-bin noise floor from the leading frames.

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::dsp::{self, DspConfig, DspError};

#[derive(Debug, Error, PartialEq)]
pub enum EnhanceError {
    #[error("clip has {len} samples, the noise profile needs {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("noise_profile_frames must be at least 1")]
    NoProfileFrames,
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub const DEFAULT_GATE_THRESHOLD_DB: f64 = 12.0;
pub const DEFAULT_NOISE_PROFILE_FRAMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EnhancementMethod {
    #[default]
    Passthrough,
    /// Zeroes STFT bins whose magnitude is below the noise floor raised by
    /// `threshold_db`.
    SpectralGate {
        threshold_db: f64,
        noise_profile_frames: usize,
    },
}

impl EnhancementMethod {
    pub fn gate() -> Self {
        EnhancementMethod::SpectralGate {
            threshold_db: DEFAULT_GATE_THRESHOLD_DB,
            noise_profile_frames: DEFAULT_NOISE_PROFILE_FRAMES,
        }
    }
}

impl FromStr for EnhancementMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(EnhancementMethod::Passthrough),
            "gate" => Ok(EnhancementMethod::gate()),
            other => Err(format!(
                "unknown enhancement {other:?}, expected none or gate"
            )),
        }
    }
}

impl fmt::Display for EnhancementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnhancementMethod::Passthrough => f.write_str("none"),
            EnhancementMethod::SpectralGate { .. } => f.write_str("gate"),
        }
    }
}

pub fn enhance(
    clip: &AudioClip,
    method: &EnhancementMethod,
    cfg: &DspConfig,
) -> Result<AudioClip, EnhanceError> {
    match *method {
        EnhancementMethod::Passthrough => Ok(clip.clone()),
        EnhancementMethod::SpectralGate {
            threshold_db,
            noise_profile_frames,
        } => spectral_gate(
            clip,
            threshold_db,
            noise_profile_frames,
            cfg.fft_size,
            cfg.hop_size,
        ),
    }
}

fn spectral_gate(
    clip: &AudioClip,
    threshold_db: f64,
    profile_frames: usize,
    n: usize,
    hop: usize,
) -> Result<AudioClip, EnhanceError> {
    if profile_frames == 0 {
        return Err(EnhanceError::NoProfileFrames);
    }
    let x = clip.samples();
    let needed = n + (profile_frames - 1) * hop;
    if x.len() < needed {
        return Err(EnhanceError::SignalTooShort {
            len: x.len(),
            needed,
        });
    }

    // per-bin floor: mean magnitude over the leading frames
    let lead = dsp::stft_magnitude(&x[..needed], n, hop)?;
    let gain = 10f64.powf(threshold_db / 20.0);
    let gate = lead
        .mean_axis(Axis(0))
        .expect("at least one frame")
        .mapv(|m| m * gain);

    // Pad so every original sample sits under a full stack of windows; the
    // overlap-add is then a scaled tight frame and a [0,1] mask cannot add
    // energy.
    let front = n - hop;
    let mut total = front + x.len() + front;
    if !(total - n).is_multiple_of(hop) {
        total += hop - (total - n) % hop;
    }
    let mut padded = vec![0.0; total];
    padded[front..front + x.len()].copy_from_slice(x);

    let mut spec = dsp::stft(&padded, n, hop)?;
    for mut row in spec.rows_mut() {
        for (c, &g) in row.iter_mut().zip(gate.iter()) {
            if c.norm() < g {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
    let out = dsp::istft(&spec, n, hop)?;
    Ok(
        AudioClip::new(out[front..front + x.len()].to_vec(), clip.sample_rate())
            .expect("rate already valid"),
    )
}
