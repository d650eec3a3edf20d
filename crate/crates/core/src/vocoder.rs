//! Griffin-Lim phase reconstruction and mel inversion.

use nalgebra::DMatrix;
use ndarray::Array2;
use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::dsp::{self, DspConfig, DspError, MelSpectrogram, AMPLITUDE_FLOOR};

/// Iteration count used when none is given.
pub const DEFAULT_ITERATIONS: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum VocoderError {
    #[error("Griffin-Lim needs at least one iteration")]
    NoIterations,
    #[error("magnitudes must be finite and non-negative")]
    NegativeMagnitude,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Non-negative `T x (fft_size/2 + 1)` STFT magnitudes with the framing they
/// were computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpectrogram {
    values: Array2<f64>,
    pub fft_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
}

impl LinearSpectrogram {
    pub fn new(
        values: Array2<f64>,
        fft_size: usize,
        hop_size: usize,
        sample_rate: u32,
    ) -> Result<Self, VocoderError> {
        if values.ncols() != fft_size / 2 + 1 {
            return Err(VocoderError::ShapeMismatch(format!(
                "{} bins for fft_size {fft_size}",
                values.ncols()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(VocoderError::NegativeMagnitude);
        }
        Ok(Self {
            values,
            fft_size,
            hop_size,
            sample_rate,
        })
    }

    /// Magnitude STFT of a clip.
    pub fn from_clip(
        clip: &AudioClip,
        fft_size: usize,
        hop_size: usize,
    ) -> Result<Self, VocoderError> {
        let values = dsp::stft_magnitude(clip.samples(), fft_size, hop_size)?;
        Self::new(values, fft_size, hop_size, clip.sample_rate())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn frame_count(&self) -> usize {
        self.values.nrows()
    }

    /// Length of the signal the frames span.
    pub fn signal_len(&self) -> usize {
        match self.frame_count() {
            0 => 0,
            t => (t - 1) * self.hop_size + self.fft_size,
        }
    }
}

/// Reconstructed signal and the consistency error `|| |STFT(x_k)| - target ||`
/// of every iterate, starting from the zero-phase initial estimate.
#[derive(Debug, Clone)]
pub struct GriffinLimTrace {
    pub clip: AudioClip,
    pub errors: Vec<f64>,
}

/// Frobenius distance over the full two-sided spectrum (interior bins count
/// twice), which is the norm the inverse STFT minimizes.
fn consistency_error(spec: &Array2<Complex64>, target: &Array2<f64>) -> f64 {
    let last = target.ncols() - 1;
    let mut acc = 0.0;
    ndarray::Zip::indexed(spec)
        .and(target)
        .for_each(|(_, k), c, m| {
            let w = if k == 0 || k == last { 1.0 } else { 2.0 };
            acc += w * (c.norm() - m).powi(2);
        });
    acc.sqrt()
}

/// Samples whose summed squared window is below this fraction of the peak
/// are held at zero. Near the ends of an uncentred frame grid a single
/// tapered window covers each sample, and the least-squares inverse divides
/// by its square, blowing the edges up far outside [-1, 1].
pub const EDGE_WINDOW_POWER: f64 = 0.1;

fn max_window_power(n: usize, hop: usize) -> f64 {
    let w = dsp::hann_window(n);
    (0..hop)
        .map(|r| w.iter().skip(r).step_by(hop).map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Alternating projections between consistent spectrograms and the target
/// magnitude, starting from zero phase. Magnitudes are raised to `power`
/// first.
pub fn griffin_lim_traced(
    mag: &LinearSpectrogram,
    iterations: usize,
    power: f64,
) -> Result<GriffinLimTrace, VocoderError> {
    if iterations == 0 {
        return Err(VocoderError::NoIterations);
    }
    let (n, hop) = (mag.fft_size, mag.hop_size);
    if mag.values.iter().all(|&v| v == 0.0) {
        let clip = AudioClip::new(vec![0.0; mag.signal_len()], mag.sample_rate)
            .map_err(|_| VocoderError::ShapeMismatch("sample rate must be positive".into()))?;
        return Ok(GriffinLimTrace {
            clip,
            errors: Vec::new(),
        });
    }
    let floor = EDGE_WINDOW_POWER * max_window_power(n, hop);
    let inverse = |s: &Array2<Complex64>| dsp::istft_masked(s, n, hop, floor);
    let target = mag.values.mapv(|v| v.powf(power));
    let mut estimate = inverse(&target.mapv(|m| Complex64::new(m, 0.0)))?;
    let mut errors = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let spec = dsp::stft(&estimate, n, hop)?;
        errors.push(consistency_error(&spec, &target));
        let projected = ndarray::Zip::from(&spec).and(&target).map_collect(|c, &m| {
            let r = c.norm();
            if r > 0.0 {
                c * (m / r)
            } else {
                Complex64::new(m, 0.0)
            }
        });
        estimate = inverse(&projected)?;
    }
    errors.push(consistency_error(&dsp::stft(&estimate, n, hop)?, &target));
    let clip = AudioClip::new(estimate, mag.sample_rate)
        .map_err(|_| VocoderError::ShapeMismatch("sample rate must be positive".into()))?;
    Ok(GriffinLimTrace { clip, errors })
}

/// Griffin-Lim reconstruction; output length is `(T - 1) * hop + fft_size`.
pub fn griffin_lim(
    mag: &LinearSpectrogram,
    iterations: usize,
    power: f64,
) -> Result<AudioClip, VocoderError> {
    Ok(griffin_lim_traced(mag, iterations, power)?.clip)
}

/// Moore-Penrose pseudo-inverse of the mel filterbank, `n_bins x num_mels`.
pub fn mel_pseudo_inverse(cfg: &DspConfig) -> Result<Array2<f64>, VocoderError> {
    let fb = dsp::mel_filterbank(cfg)?;
    let (rows, cols) = fb.dim();
    let m = DMatrix::from_fn(rows, cols, |i, j| fb[[i, j]]);
    let pinv = m
        .pseudo_inverse(1e-10)
        .map_err(|e| VocoderError::ShapeMismatch(e.to_string()))?;
    Ok(Array2::from_shape_fn((cols, rows), |(i, j)| pinv[(i, j)]))
}

/// Inverts the dB normalization and the mel projection. Normalized values
/// at the lower clip boundary carry no level information and are treated
/// as silence; the result is floored at the amplitude floor.
pub fn mel_to_linear(
    mel: &MelSpectrogram,
    cfg: &DspConfig,
) -> Result<LinearSpectrogram, VocoderError> {
    if mel.num_mels() != cfg.num_mels {
        return Err(VocoderError::ShapeMismatch(format!(
            "mel has {} bands, config has {}",
            mel.num_mels(),
            cfg.num_mels
        )));
    }
    let pinv = mel_pseudo_inverse(cfg)?;
    let amplitude = mel.values().mapv(|v| {
        if v <= 0.0 {
            0.0
        } else {
            dsp::db_to_amp(dsp::denormalize_db(v, cfg))
        }
    });
    let linear = amplitude.dot(&pinv.t()).mapv(|x| x.max(AMPLITUDE_FLOOR));
    LinearSpectrogram::new(linear, cfg.fft_size, cfg.hop_size, cfg.sample_rate)
}

/// Mel spectrogram back to a waveform: mel inversion, Griffin-Lim, then
/// de-emphasis.
pub fn vocode_mel(
    mel: &MelSpectrogram,
    cfg: &DspConfig,
    iterations: usize,
    power: f64,
) -> Result<AudioClip, VocoderError> {
    let linear = mel_to_linear(mel, cfg)?;
    let clip = griffin_lim(&linear, iterations, power)?;
    let samples = dsp::deemphasize(clip.samples(), cfg.preemphasis);
    AudioClip::new(samples, cfg.sample_rate)
        .map_err(|_| VocoderError::ShapeMismatch("sample rate must be positive".into()))
}
