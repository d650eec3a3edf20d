//! Deterministic feature pipeline: preemphasis, VAD trimming, STFT, mel
//! filterbank and dB normalization.

mod mel;
mod melfile;
mod stft;
mod vad;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;

pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};
pub use melfile::{read_mel, write_mel, MEL_FILE_MAGIC, MEL_FILE_VERSION};
pub use stft::{hann_window, istft, istft_masked, stft, stft_magnitude};
pub use vad::{frame_energies_db, trim_silence, VAD_FRAME, VAD_HOP};

/// Amplitude floor applied before converting to dB.
pub const AMPLITUDE_FLOOR: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("signal has {len} samples, at least {needed} required")]
    SignalTooShort { len: usize, needed: usize },
    #[error("clip sample rate {found} Hz does not match configured {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("mel filter {index} covers no FFT bin; increase fft_size or widen the band")]
    DegenerateFilter { index: usize },
    #[error("invalid DSP configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Feature-extraction parameters. Field names match the hyperparameter JSON
/// keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspConfig {
    pub num_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub fft_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
    pub preemphasis: f64,
    pub min_level_db: f64,
    pub ref_level_db: f64,
    /// Energy drop below the loudest frame at which edge frames are trimmed.
    #[serde(default = "default_vad_threshold_db")]
    pub vad_threshold_db: f64,
}

fn default_vad_threshold_db() -> f64 {
    60.0
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            num_mels: 80,
            fmin: 125.0,
            fmax: 7600.0,
            fft_size: 1024,
            hop_size: 256,
            sample_rate: 22050,
            preemphasis: 0.97,
            min_level_db: -100.0,
            ref_level_db: 20.0,
            vad_threshold_db: default_vad_threshold_db(),
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |msg: String| Err(DspError::InvalidConfig(msg));
        if self.num_mels == 0 || self.fft_size < 2 || self.hop_size == 0 || self.sample_rate == 0 {
            return bad("num_mels, fft_size, hop_size and sample_rate must be positive".into());
        }
        if !self.fft_size.is_multiple_of(2) {
            return bad(format!("fft_size {} must be even", self.fft_size));
        }
        if !(self.fmin >= 0.0
            && self.fmin < self.fmax
            && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return bad(format!(
                "need 0 <= fmin < fmax <= sample_rate/2, got fmin={} fmax={} sr={}",
                self.fmin, self.fmax, self.sample_rate
            ));
        }
        if self.hop_size > self.fft_size {
            return bad(format!(
                "hop_size {} exceeds fft_size {}",
                self.hop_size, self.fft_size
            ));
        }
        if self.min_level_db.is_nan() || self.min_level_db >= 0.0 {
            return bad("min_level_db must be negative".into());
        }
        if self.vad_threshold_db.is_nan() || self.vad_threshold_db <= 0.0 {
            return bad("vad_threshold_db must be positive".into());
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// STFT frame count for a signal of `len` samples (partial tail dropped).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            1 + (len - self.fft_size) / self.hop_size
        }
    }
}

/// `T x num_mels` matrix of normalized log-mel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Array2<f64>,
}

impl MelSpectrogram {
    /// Wraps a matrix, rejecting entries outside `[0, 1]`.
    pub fn new(values: Array2<f64>) -> Result<Self, DspError> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DspError::ShapeMismatch(
                "mel spectrogram entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn frame_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_mels(&self) -> usize {
        self.values.ncols()
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn preemphasize(signal: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    let mut prev = 0.0;
    for (i, &x) in signal.iter().enumerate() {
        out.push(if i == 0 { x } else { x - coeff * prev });
        prev = x;
    }
    out
}

/// Inverse of [`preemphasize`].
pub fn deemphasize(signal: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    let mut prev = 0.0;
    for (i, &y) in signal.iter().enumerate() {
        let x = if i == 0 { y } else { y + coeff * prev };
        out.push(x);
        prev = x;
    }
    out
}

pub fn amp_to_db(amplitude: f64) -> f64 {
    20.0 * amplitude.max(AMPLITUDE_FLOOR).log10()
}

pub fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Maps dB to `[0, 1]` using the reference and minimum levels.
pub fn normalize_db(db: f64, cfg: &DspConfig) -> f64 {
    ((db - cfg.ref_level_db - cfg.min_level_db) / -cfg.min_level_db).clamp(0.0, 1.0)
}

/// Inverse of [`normalize_db`] on the open interval.
pub fn denormalize_db(value: f64, cfg: &DspConfig) -> f64 {
    value.clamp(0.0, 1.0) * -cfg.min_level_db + cfg.min_level_db + cfg.ref_level_db
}

/// Projects a linear magnitude spectrogram (`T x n_bins`) through the mel
/// filterbank and normalizes it.
pub fn linear_to_mel(magnitude: &Array2<f64>, cfg: &DspConfig) -> Result<MelSpectrogram, DspError> {
    if magnitude.ncols() != cfg.n_bins() {
        return Err(DspError::ShapeMismatch(format!(
            "expected {} frequency bins, got {}",
            cfg.n_bins(),
            magnitude.ncols()
        )));
    }
    let fb = mel_filterbank(cfg)?;
    let mel = magnitude.dot(&fb.t());
    MelSpectrogram::new(mel.mapv(|m| normalize_db(amp_to_db(m), cfg)))
}

/// preemphasis, Hann STFT magnitude, mel projection, dB, normalization.
pub fn melspectrogram(clip: &AudioClip, cfg: &DspConfig) -> Result<MelSpectrogram, DspError> {
    cfg.validate()?;
    if clip.sample_rate() != cfg.sample_rate {
        return Err(DspError::SampleRateMismatch {
            expected: cfg.sample_rate,
            found: clip.sample_rate(),
        });
    }
    let emphasized = preemphasize(clip.samples(), cfg.preemphasis);
    let magnitude = stft_magnitude(&emphasized, cfg.fft_size, cfg.hop_size)?;
    linear_to_mel(&magnitude, cfg)
}
