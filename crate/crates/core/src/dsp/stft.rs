use std::cell::RefCell;
use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::DspError;

thread_local! {
    // planners cache their plans
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex one-sided STFT, `T x (fft_size/2 + 1)`. Row `t` covers samples
/// `[t*hop, t*hop + fft_size)`; a trailing partial frame is dropped.
pub fn stft(
    signal: &[f64],
    fft_size: usize,
    hop_size: usize,
) -> Result<Array2<Complex64>, DspError> {
    if fft_size == 0 || hop_size == 0 {
        return Err(DspError::InvalidConfig(
            "fft_size and hop_size must be positive".into(),
        ));
    }
    if signal.len() < fft_size {
        return Err(DspError::SignalTooShort {
            len: signal.len(),
            needed: fft_size,
        });
    }
    let frames = 1 + (signal.len() - fft_size) / hop_size;
    let bins = fft_size / 2 + 1;
    let window = hann_window(fft_size);
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(fft_size));
    let mut out = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for t in 0..frames {
        let start = t * hop_size;
        for (b, (&x, &w)) in buf
            .iter_mut()
            .zip(signal[start..start + fft_size].iter().zip(&window))
        {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().take(bins).enumerate() {
            out[[t, k]] = *v;
        }
    }
    Ok(out)
}

/// Hann-windowed STFT magnitude.
pub fn stft_magnitude(
    signal: &[f64],
    fft_size: usize,
    hop_size: usize,
) -> Result<Array2<f64>, DspError> {
    Ok(stft(signal, fft_size, hop_size)?.mapv(|c| c.norm()))
}

/// Least-squares inverse STFT (windowed overlap-add divided by the summed
/// squared window). Output length is `(T - 1) * hop + fft_size`. Samples
/// that no window covers come out as zero.
pub fn istft(
    spec: &Array2<Complex64>,
    fft_size: usize,
    hop_size: usize,
) -> Result<Vec<f64>, DspError> {
    istft_masked(spec, fft_size, hop_size, 1e-10)
}

/// [`istft`] that leaves every sample whose summed squared window is below
/// `min_window_power` at zero. That is still the least-squares solution,
/// over signals vanishing on those samples.
pub fn istft_masked(
    spec: &Array2<Complex64>,
    fft_size: usize,
    hop_size: usize,
    min_window_power: f64,
) -> Result<Vec<f64>, DspError> {
    let bins = fft_size / 2 + 1;
    if spec.ncols() != bins {
        return Err(DspError::ShapeMismatch(format!(
            "expected {bins} bins for fft_size {fft_size}, got {}",
            spec.ncols()
        )));
    }
    let frames = spec.nrows();
    if frames == 0 {
        return Ok(Vec::new());
    }
    let len = (frames - 1) * hop_size + fft_size;
    let window = hann_window(fft_size);
    let ifft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(fft_size));
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for t in 0..frames {
        let row = spec.row(t);
        for k in 0..bins {
            buf[k] = row[k];
        }
        // Hermitian completion; DC and Nyquist must be real for a real frame.
        buf[0].im = 0.0;
        if fft_size.is_multiple_of(2) {
            buf[fft_size / 2].im = 0.0;
        }
        for k in bins..fft_size {
            buf[k] = buf[fft_size - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop_size;
        for n in 0..fft_size {
            let w = window[n];
            out[start + n] += w * buf[n].re / fft_size as f64;
            norm[start + n] += w * w;
        }
    }
    for (x, &d) in out.iter_mut().zip(&norm) {
        *x = if d > min_window_power { *x / d } else { 0.0 };
    }
    Ok(out)
}
