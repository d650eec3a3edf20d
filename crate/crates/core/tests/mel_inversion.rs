use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speakerkit::dsp::{self, DspConfig};
use speakerkit::vocoder::{mel_to_linear, vocode_mel};

// Magnitudes of band-passed white noise, smoothed over +-4 bins so the
// spectrum is smooth across frequency.
fn smooth_noise_spectrum(seed: u64, cfg: &DspConfig) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..cfg.sample_rate)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let raw = dsp::stft_magnitude(&white, cfg.fft_size, cfg.hop_size).unwrap();
    let nb = cfg.n_bins();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let mut out = Array2::zeros(raw.dim());
    for (mut dst, src) in out.rows_mut().into_iter().zip(raw.rows()) {
        for k in 0..nb {
            let hz = k as f64 * bin_hz;
            if (300.0..=6000.0).contains(&hz) {
                let window = src.slice(s![k.saturating_sub(4)..=(k + 4).min(nb - 1)]);
                dst[k] = 0.05 * window.mean().unwrap();
            }
        }
    }
    out
}

fn relative_frobenius(estimate: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let diff = (estimate - target).mapv(|x| x * x).sum().sqrt();
    diff / target.mapv(|x| x * x).sum().sqrt()
}

#[test]
fn smooth_spectra_survive_the_mel_projection() {
    let cfg = DspConfig::default();
    for seed in 0..4 {
        let target = smooth_noise_spectrum(seed, &cfg);
        let mel = dsp::linear_to_mel(&target, &cfg).unwrap();
        let back = mel_to_linear(&mel, &cfg).unwrap();
        assert!(back.values().iter().all(|&v| v >= 0.0));
        let err = relative_frobenius(back.values(), &target);
        assert!(err <= 0.35, "seed {seed}: {err}");
    }
}

#[test]
fn vocoded_length_follows_frame_count() {
    let cfg = DspConfig::default();
    let target = smooth_noise_spectrum(9, &cfg);
    let mel = dsp::linear_to_mel(&target, &cfg).unwrap();
    let clip = vocode_mel(&mel, &cfg, 8, 1.4).unwrap();
    assert_eq!(
        clip.len(),
        (mel.frame_count() - 1) * cfg.hop_size + cfg.fft_size
    );
    assert!(clip
        .samples()
        .iter()
        .all(|s| s.is_finite() && s.abs() <= 1.0));
}
