//! Energy-based edge trimming.

use crate::audio_io::AudioClip;

pub const VAD_FRAME: usize = 2048;
pub const VAD_HOP: usize = 512;

/// Start offsets of the VAD analysis frames. A clip shorter than one frame
/// is analysed as a single short frame.
fn frame_starts(len: usize) -> Vec<usize> {
    if len == 0 {
        Vec::new()
    } else if len < VAD_FRAME {
        vec![0]
    } else {
        (0..=(len - VAD_FRAME) / VAD_HOP)
            .map(|t| t * VAD_HOP)
            .collect()
    }
}

/// Frame energies as `20 * log10(rms)`; silent frames are `-inf`.
pub fn frame_energies_db(samples: &[f64]) -> Vec<f64> {
    frame_starts(samples.len())
        .into_iter()
        .map(|s| {
            let frame = &samples[s..(s + VAD_FRAME).min(samples.len())];
            let ms = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
            20.0 * ms.sqrt().log10()
        })
        .collect()
}

/// Drops leading and trailing frames whose energy is more than
/// `threshold_db` below the loudest frame. The kept span runs from the
/// first kept frame's start to the last kept frame's end. An all-silent
/// clip comes back empty.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> AudioClip {
    let samples = clip.samples();
    let energies = frame_energies_db(samples);
    let peak = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let empty = || AudioClip::new(Vec::new(), clip.sample_rate()).expect("rate already valid");
    if !peak.is_finite() {
        return empty();
    }
    let floor = peak - threshold_db;
    let voiced = |e: &f64| *e >= floor;
    let (Some(first), Some(last)) = (
        energies.iter().position(voiced),
        energies.iter().rposition(voiced),
    ) else {
        return empty();
    };
    let starts = frame_starts(samples.len());
    let begin = starts[first];
    let end = (starts[last] + VAD_FRAME).min(samples.len());
    AudioClip::new(samples[begin..end].to_vec(), clip.sample_rate()).expect("rate already valid")
}
