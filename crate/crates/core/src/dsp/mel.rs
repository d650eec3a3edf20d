use ndarray::Array2;

use super::{DspConfig, DspError};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with peak weight 1, centers equally spaced on the mel
/// scale between `fmin` and `fmax`. Shape `num_mels x (fft_size/2 + 1)`.
pub fn mel_filterbank(cfg: &DspConfig) -> Result<Array2<f64>, DspError> {
    cfg.validate()?;
    let bins = cfg.n_bins();
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.num_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.num_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let mut fb = Array2::zeros((cfg.num_mels, bins));
    for m in 0..cfg.num_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = ((f - left) / (center - left)).min((right - f) / (right - center));
            if w > 0.0 {
                fb[[m, k]] = w;
                any = true;
            }
        }
        if !any {
            return Err(DspError::DegenerateFilter { index: m });
        }
    }
    Ok(fb)
}
