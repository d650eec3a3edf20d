//! Seeded synthetic voices: a harmonic source at a speaker-specific pitch
//! mixed with breath noise, shaped by speaker-specific formant resonators.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SpeakerRecord, ToyDataset};
use crate::audio_io::AudioClip;

/// Voice parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub f0: f64,
    pub formants: [f64; 3],
    pub bandwidths: [f64; 3],
    pub breathiness: f64,
}

impl VoiceProfile {
    /// Speaker `index` of `count`: pitch spaced geometrically over
    /// 95..300 Hz, formants scattered around vowel-like positions.
    pub fn for_speaker<R: Rng>(index: usize, count: usize, rng: &mut R) -> Self {
        let frac = if count > 1 {
            index as f64 / (count - 1) as f64
        } else {
            0.5
        };
        let f0 = 95.0 * (300.0f64 / 95.0).powf(frac);
        let formants = [
            rng.random_range(300.0..900.0),
            rng.random_range(1000.0..2400.0),
            rng.random_range(2500.0..3600.0),
        ];
        let bandwidths = [
            rng.random_range(60.0..120.0),
            rng.random_range(80.0..160.0),
            rng.random_range(120.0..220.0),
        ];
        Self {
            f0,
            formants,
            bandwidths,
            breathiness: rng.random_range(0.005..0.03),
        }
    }

    /// One utterance: jittered pitch with slow vibrato, framed by short
    /// low-level pauses.
    pub fn render<R: Rng>(&self, sample_rate: u32, seconds: f64, rng: &mut R) -> Vec<f64> {
        let sr = sample_rate as f64;
        let n = (seconds * sr) as usize;
        let f0 = self.f0 * rng.random_range(0.96..1.04);
        let vibrato_rate = rng.random_range(4.0..6.5);
        let vibrato_depth = rng.random_range(0.005..0.02);
        let harmonics = ((4000.0 / f0) as usize).max(1);
        let mut phase = rng.random_range(0.0..2.0 * PI);
        let mut source = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / sr;
            let inst = f0 * (1.0 + vibrato_depth * (2.0 * PI * vibrato_rate * t).sin());
            phase += 2.0 * PI * inst / sr;
            let voiced: f64 = (1..=harmonics)
                .map(|k| (k as f64 * phase).sin() / k as f64)
                .sum();
            let noise: f64 = StandardNormal.sample(rng);
            source.push(voiced + self.breathiness * noise);
        }
        let mut out = vec![0.0; n];
        for (&freq, &bw) in self.formants.iter().zip(&self.bandwidths) {
            let r = (-PI * bw / sr).exp();
            let c = 2.0 * r * (2.0 * PI * freq / sr).cos();
            let (mut y1, mut y2) = (0.0, 0.0);
            for (o, &x) in out.iter_mut().zip(&source) {
                let y = (1.0 - r) * x + c * y1 - r * r * y2;
                *o += y;
                y2 = y1;
                y1 = y;
            }
        }
        // 50 ms attack/release
        let ramp = ((0.05 * sr) as usize).min(n / 2).max(1);
        for i in 0..ramp {
            let g = i as f64 / ramp as f64;
            out[i] *= g;
            out[n - 1 - i] *= g;
        }
        let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
        let level = rng.random_range(0.3..0.8) / peak;
        let pause = (0.1 * sr) as usize;
        let mut clip = Vec::with_capacity(n + 2 * pause);
        clip.extend((0..pause).map(|_| 1e-4 * rng.random_range(-1.0..1.0)));
        clip.extend(out.iter().map(|x| x * level));
        clip.extend((0..pause).map(|_| 1e-4 * rng.random_range(-1.0..1.0)));
        clip
    }
}

/// `speakers` voices with `clips_per_speaker` utterances of 0.6-0.9 s each.
pub fn synthetic_corpus(
    speakers: usize,
    clips_per_speaker: usize,
    sample_rate: u32,
    seed: u64,
) -> ToyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..speakers)
        .map(|s| {
            let profile = VoiceProfile::for_speaker(s, speakers, &mut rng);
            let clips = (0..clips_per_speaker)
                .map(|_| {
                    let secs = rng.random_range(0.6..0.9);
                    AudioClip::new(profile.render(sample_rate, secs, &mut rng), sample_rate)
                        .expect("positive sample rate")
                })
                .collect();
            SpeakerRecord {
                id: format!("synth-{s:02}"),
                clips,
            }
        })
        .collect();
    ToyDataset { speakers: records }
}
