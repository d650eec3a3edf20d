//! The acceptance harness: every acceptance criterion as one function, run
//! in order from a single seed.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::attention::{attention_pool, AttentionConfig};
use crate::audio_io::{load_wav, save_wav, AudioClip};
use crate::config::{AdamSettings, Hyperparameters};
use crate::dsp::{self, DspConfig};
use crate::encoder::{
    cross_sample_aggregate, encode_speaker, encode_speaker_with, EncoderConfig, EncoderParams,
    Variant,
};
use crate::enhancement::{enhance, EnhancementMethod};
use crate::enrollment::{bench_enroll, Pipeline};
use crate::exec::Execution;
use crate::reference;
use crate::training::{
    gradcheck_config, gradient_check_suite, synthetic_corpus, train_toy, TrainOptions,
    GRADCHECK_TOLERANCE,
};
use crate::vocoder::{griffin_lim_traced, LinearSpectrogram};

pub const DEFAULT_SEED: u64 = 20190124;

/// Ids and names of every criterion, in report order.
pub const CRITERIA: [(u32, &str); 10] = [
    (1, "gradient fidelity"),
    (2, "oracle equivalence"),
    (3, "permutation invariance"),
    (4, "t1/t2 degeneracy"),
    (5, "configuration fidelity"),
    (6, "griffin-lim"),
    (7, "toy separability"),
    (8, "enrollment latency"),
    (9, "dsp round-trips"),
    (10, "enhancement contract"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// The headline measurement; see `detail` for what it is.
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
    pub runtime_secs: f64,
    /// Wall-clock bound, when the criterion has one.
    pub runtime_limit_secs: Option<f64>,
}

impl CriterionResult {
    /// One human-readable line.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<24} measured {:.3e} (tolerance {:.3e}) {:.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.runtime_secs,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl ReproReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: u32) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.id == id)
    }

    /// The report with wall-clock readings zeroed: the part that must be
    /// identical across runs with one seed.
    pub fn without_timings(&self) -> ReproReport {
        let mut r = self.clone();
        for c in &mut r.criteria {
            c.runtime_secs = 0.0;
            if c.id == 8 {
                c.measured = 0.0;
                c.detail.clear();
            }
        }
        r
    }
}

/// Runs every criterion sequentially, so timed criteria do not compete for
/// cores.
pub fn run_acceptance(seed: u64) -> ReproReport {
    run_acceptance_with(seed, |_| {})
}

pub fn run_acceptance_with(seed: u64, mut on_result: impl FnMut(&CriterionResult)) -> ReproReport {
    let mut criteria = Vec::with_capacity(CRITERIA.len());
    for (id, _) in CRITERIA {
        let r = run_criterion(id, seed).expect("id from CRITERIA");
        on_result(&r);
        criteria.push(r);
    }
    ReproReport { seed, criteria }
}

/// One criterion by id.
pub fn run_criterion(id: u32, seed: u64) -> Option<CriterionResult> {
    let (_, name) = CRITERIA.iter().find(|(i, _)| *i == id)?;
    let start = Instant::now();
    let outcome = match id {
        1 => gradient_fidelity(seed),
        2 => oracle_equivalence(seed),
        3 => permutation_invariance(seed),
        4 => degeneracy(seed),
        5 => configuration_fidelity(),
        6 => griffin_lim_criterion(),
        7 => toy_separability(seed),
        8 => enrollment_latency(seed),
        9 => dsp_round_trips(seed),
        10 => enhancement_contract(seed),
        _ => unreachable!(),
    };
    let runtime = start.elapsed().as_secs_f64();
    let limit = outcome.runtime_limit;
    Some(CriterionResult {
        id,
        name: name.to_string(),
        passed: outcome.passed && limit.is_none_or(|l| runtime < l),
        measured: outcome.measured,
        tolerance: outcome.tolerance,
        detail: outcome.detail,
        runtime_secs: runtime,
        runtime_limit_secs: limit,
    })
}

struct Outcome {
    passed: bool,
    measured: f64,
    tolerance: f64,
    detail: String,
    runtime_limit: Option<f64>,
}

impl Outcome {
    fn at_most(measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail,
            runtime_limit: None,
        }
    }

    fn failed(detail: String) -> Self {
        Self {
            passed: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail,
            runtime_limit: None,
        }
    }

    fn within(mut self, secs: f64) -> Self {
        self.runtime_limit = Some(secs);
        self
    }
}

/// The bundled VCTK-sized encoder (`f_mapped` 30, 8 heads over 16).
pub fn vctk_encoder(variant: Variant) -> EncoderConfig {
    Hyperparameters::vctk()
        .encoder(variant)
        .expect("bundled config is valid")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn gradient_fidelity(seed: u64) -> Outcome {
    let report = gradient_check_suite(&gradcheck_config(Variant::T2), seed);
    let worst = report
        .groups
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .map(|g| format!("worst group {} {}", g.variant, g.group))
        .unwrap_or_default();
    Outcome::at_most(
        report.worst(),
        GRADCHECK_TOLERANCE,
        format!("{} groups over both variants, {worst}", report.groups.len()),
    )
    .within(5.0)
}

/// One random attention and cross-sample instance.
pub fn oracle_instance(rng: &mut ChaCha8Rng) -> (EncoderConfig, EncoderParams, Array2<f64>) {
    let heads = rng.random_range(1..=3);
    let d_t = rng.random_range(1..=3);
    let f_mapped = rng.random_range(1..=6);
    let j = rng.random_range(1..=6);
    let d_emb = rng.random_range(1..=5);
    let variant = if rng.random_bool(0.5) {
        Variant::T1
    } else {
        Variant::T2
    };
    let cfg =
        EncoderConfig::new(4, f_mapped, heads * d_t, heads, d_emb, 6, variant).expect("valid dims");
    let mut params = EncoderParams::init(&cfg, rng.random());
    // widen the weights so the softmaxes are far from uniform
    let scale = rng.random_range(0.5..3.0);
    for m in params.matrices_mut() {
        m.mapv_inplace(|v| v * scale);
    }
    let e = Array2::from_shape_simple_fn((j, f_mapped), || rng.random_range(-2.0..2.0));
    (cfg, params, e)
}

fn oracle_equivalence(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = 128;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (cfg, params, e) = oracle_instance(&mut rng);
        let heads = cfg.cross.num_heads();
        // temporal attention over a frame sequence of the same width
        let t = rng.random_range(1..=9);
        let y = Array2::from_shape_simple_fn((t, cfg.f_mapped), || rng.random_range(-2.0..2.0));
        let fast =
            attention_pool(&y, &params.temporal, &cfg.temporal).expect("consistent instance");
        let (w, pooled) = reference::attention_pool(&y, &params.temporal, heads);
        worst = worst
            .max(max_abs_diff(fast.weights.as_slice().unwrap(), &w))
            .max(max_abs_diff(fast.pooled.as_slice().unwrap(), &pooled));

        let fast = cross_sample_aggregate(&e, &params, &cfg).expect("consistent instance");
        let (w, emb) = reference::cross_sample_aggregate(&e, &params, heads);
        worst = worst
            .max(max_abs_diff(fast.weights.as_slice().unwrap(), &w))
            .max(max_abs_diff(fast.embedding.values(), &emb));
    }
    Outcome::at_most(
        worst,
        1e-10,
        format!("{instances} instances, max abs difference"),
    )
    .within(10.0)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn permutation_invariance(seed: u64) -> Outcome {
    let dsp_cfg = DspConfig::default();
    let cfg = vctk_encoder(Variant::T2);
    let params = EncoderParams::init(&cfg, seed);
    let clips = &synthetic_corpus(1, 6, dsp_cfg.sample_rate, seed).speakers[0].clips;
    let base = match encode_speaker(clips, &dsp_cfg, &cfg, &params) {
        Ok(e) => e,
        Err(e) => return Outcome::failed(e.to_string()),
    };
    let perms = permutations(clips.len());
    let changes = Execution::default().try_map(&perms, |_, p| {
        let shuffled: Vec<AudioClip> = p.iter().map(|&i| clips[i].clone()).collect();
        encode_speaker_with(Execution::Sequential, &shuffled, &dsp_cfg, &cfg, &params)
            .map(|e| max_abs_diff(base.values(), e.values()))
    });
    let worst = match changes {
        Ok(c) => c.into_iter().fold(0.0, f64::max),
        Err(e) => return Outcome::failed(e.to_string()),
    };
    Outcome::at_most(
        worst,
        1e-9,
        format!("{} orderings, max abs change", perms.len()),
    )
    .within(30.0)
}

fn degeneracy(seed: u64) -> Outcome {
    let dsp_cfg = DspConfig::default();
    let t2 = vctk_encoder(Variant::T2);
    let mut params = EncoderParams::init(&t2, seed);
    params.temporal.out.fill(0.0);
    let clips = &synthetic_corpus(1, 6, dsp_cfg.sample_rate, seed ^ 1).speakers[0].clips;
    let a = encode_speaker(clips, &dsp_cfg, &t2, &params);
    let b = encode_speaker(clips, &dsp_cfg, &t2.with_variant(Variant::T1), &params);
    match (a, b) {
        (Ok(a), Ok(b)) => Outcome::at_most(
            max_abs_diff(a.values(), b.values()),
            1e-12,
            "zero temporal score projection, max abs difference".into(),
        ),
        (Err(e), _) | (_, Err(e)) => Outcome::failed(e.to_string()),
    }
}

fn configuration_fidelity() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let parsed = [
        ("vctk", Hyperparameters::parse(crate::config::VCTK_JSON)),
        (
            "libritts_encoder",
            Hyperparameters::parse(crate::config::LIBRITTS_ENCODER_JSON),
        ),
    ];
    for (name, hp) in &parsed {
        let hp = match hp {
            Ok(hp) => hp,
            Err(e) => {
                check(false, &format!("{name}: {e}"));
                continue;
            }
        };
        match (hp.dsp(), hp.encoder(Variant::T2)) {
            (Ok(dsp_cfg), Ok(enc)) => {
                let fb = dsp::mel_filterbank(&DspConfig {
                    fft_size: 1024,
                    ..dsp_cfg.clone()
                });
                check(
                    fb.map(|m| m.dim()).ok() == Some((80, 513)),
                    &format!("{name}: filterbank shape"),
                );
                check(enc.d_embedding == 256, &format!("{name}: d_embedding"));
                check(enc.max_cloning_samples == 6, &format!("{name}: J"));
                let expected = if *name == "vctk" {
                    (8, 16, 2)
                } else {
                    (2, 128, 64)
                };
                let got = (enc.cross.num_heads(), enc.cross.d_attn(), enc.cross.d_t());
                check(got == expected, &format!("{name}: heads/dim/d_t {got:?}"));
            }
            (Err(e), _) => check(false, &format!("{name}: {e}")),
            (_, Err(e)) => check(false, &format!("{name}: {e}")),
        }
    }
    check(
        AttentionConfig::new(8, 15, 2).is_err(),
        "d_attn 15 with 2 heads accepted",
    );
    let detail = if failures.is_empty() {
        "both blocks parse; 80x513, 256, J=6, d_t 2 and 64, 15/2 rejected".to_string()
    } else {
        failures.join("; ")
    };
    Outcome::at_most(failures.len() as f64, 0.0, detail)
}

fn griffin_lim_criterion() -> Outcome {
    let sr = 22050;
    let tone: Vec<f64> = (0..2 * sr)
        .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / sr as f64).sin())
        .collect();
    let clip = AudioClip::new(tone, sr as u32).expect("positive rate");
    let run = || -> Result<(Vec<f64>, usize, usize), crate::vocoder::VocoderError> {
        let mag = LinearSpectrogram::from_clip(&clip, 1024, 256)?;
        let trace = griffin_lim_traced(&mag, 60, Hyperparameters::vctk().power())?;
        let back = dsp::stft_magnitude(trace.clip.samples(), 1024, 256)?;
        let argmax = |row: ndarray::ArrayView1<f64>| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
        };
        let mismatched = back
            .rows()
            .into_iter()
            .zip(mag.values().rows())
            .filter(|(a, b)| argmax(*a) != argmax(*b))
            .count();
        Ok((trace.errors, mismatched, back.nrows()))
    };
    match run() {
        Ok((errors, mismatched, frames)) => {
            // largest relative increase between consecutive iterates
            let worst_rise = errors
                .windows(2)
                .map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE))
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
            let mut o = Outcome::at_most(
                worst_rise,
                1e-9,
                format!(
                    "largest relative error rise over 60 iterations at power 1.4 ({:.4} -> {:.4}); {mismatched}/{frames} frames change dominant bin",
                    errors[0],
                    errors[errors.len() - 1]
                ),
            );
            o.passed &= mismatched == 0;
            o.within(5.0)
        }
        Err(e) => Outcome::failed(e.to_string()),
    }
}

fn toy_separability(seed: u64) -> Outcome {
    let dsp_cfg = DspConfig::default();
    let data = synthetic_corpus(8, 6, dsp_cfg.sample_rate, seed);
    let mut parts = Vec::new();
    let mut worst = f64::INFINITY;
    for variant in [Variant::T1, Variant::T2] {
        let cfg = vctk_encoder(variant);
        let opts = TrainOptions {
            adam: AdamSettings::default(),
            ..TrainOptions::new(40, seed)
        };
        match train_toy(&data, &cfg, &dsp_cfg, &opts) {
            Ok(out) => {
                let last = out.metrics.last().expect("epochs >= 1");
                worst = worst.min(last.separation());
                parts.push(format!(
                    "{variant}: intra {:.3} inter {:.3} gap {:.3}",
                    last.intra_cos,
                    last.inter_cos,
                    last.separation()
                ));
            }
            Err(e) => return Outcome::failed(format!("{variant}: {e}")),
        }
    }
    Outcome {
        passed: worst >= 0.2,
        measured: worst,
        tolerance: 0.2,
        detail: format!("smallest intra-inter gap; {}", parts.join(", ")),
        runtime_limit: Some(180.0),
    }
}

fn scratch_dir(tag: &str, seed: u64) -> std::io::Result<PathBuf> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let dir = std::env::temp_dir().join(format!(
        "speakerkit-{tag}-{}-{seed}-{nanos}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Six 5-second synthetic utterances of one speaker at 22050 Hz.
pub fn latency_clips(seed: u64) -> Vec<AudioClip> {
    let sr = 22050;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = crate::training::VoiceProfile::for_speaker(0, 1, &mut rng);
    (0..6)
        .map(|_| {
            let mut s = profile.render(sr, 4.8, &mut rng);
            s.resize(5 * sr as usize, 0.0);
            AudioClip::new(s, sr).expect("positive rate")
        })
        .collect()
}

fn enrollment_latency(seed: u64) -> Outcome {
    let run = || -> Result<crate::enrollment::BenchReport, String> {
        let hp = Hyperparameters::libritts_encoder();
        let dsp_cfg = hp.dsp().map_err(|e| e.to_string())?;
        let cfg = hp.encoder(Variant::T2).map_err(|e| e.to_string())?;
        let params = EncoderParams::init(&cfg, seed);
        let dir = scratch_dir("latency", seed).map_err(|e| e.to_string())?;
        let mut paths = Vec::new();
        for (i, clip) in latency_clips(seed).iter().enumerate() {
            let p = dir.join(format!("clip{i}.wav"));
            save_wav(clip, &p).map_err(|e| e.to_string())?;
            paths.push(p);
        }
        let method = EnhancementMethod::Passthrough;
        let report = bench_enroll(&paths, &Pipeline::new(&cfg, &dsp_cfg, &params, &method), 3);
        let _ = std::fs::remove_dir_all(&dir);
        report.map_err(|e| e.to_string())
    };
    match run() {
        Ok(r) => Outcome {
            passed: r.median_secs < r.encoder_reference_secs,
            measured: r.median_secs,
            tolerance: r.encoder_reference_secs,
            detail: format!(
                "median of {} runs over six 5 s clips (min {:.3}s, max {:.3}s); reference {} encoder, {} adaptation",
                r.repetitions, r.min_secs, r.max_secs, r.encoder_reference, r.adaptation_reference
            ),
            runtime_limit: None,
        },
        Err(e) => Outcome::failed(e),
    }
}

/// Seeded noise clips of assorted levels with quiet edges.
pub fn noise_corpus(seed: u64, sample_rate: u32) -> Vec<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..6)
        .map(|k| {
            let level = [1e-4, 0.01, 0.1, 0.5, 0.9, 1.0][k];
            let n = rng.random_range(4000..20000);
            let mut s: Vec<f64> = (0..n)
                .map(|_| level * rng.random_range(-1.0..=1.0))
                .collect();
            let quiet = rng.random_range(0..6000);
            s.splice(0..0, std::iter::repeat_n(0.0, quiet));
            s.extend(std::iter::repeat_n(0.0, quiet / 2));
            AudioClip::new(s, sample_rate).expect("positive rate")
        })
        .collect()
}

fn dsp_round_trips(seed: u64) -> Outcome {
    let dsp_cfg = DspConfig::default();
    let corpus = noise_corpus(seed, dsp_cfg.sample_rate);
    let mut failures = Vec::new();

    let mut emphasis: f64 = 0.0;
    for c in &corpus {
        let back = dsp::deemphasize(
            &dsp::preemphasize(c.samples(), dsp_cfg.preemphasis),
            dsp_cfg.preemphasis,
        );
        emphasis = emphasis.max(max_abs_diff(c.samples(), &back));
    }
    if emphasis > 1e-12 {
        failures.push(format!("preemphasis round-trip {emphasis:.3e}"));
    }

    let mut wav_err: f64 = 0.0;
    match scratch_dir("wav", seed) {
        Ok(dir) => {
            for (i, c) in corpus.iter().enumerate() {
                let p = dir.join(format!("n{i}.wav"));
                match save_wav(c, &p).and_then(|_| load_wav(&p)) {
                    Ok(back) => wav_err = wav_err.max(max_abs_diff(c.samples(), back.samples())),
                    Err(e) => failures.push(e.to_string()),
                }
            }
            let _ = std::fs::remove_dir_all(&dir);
        }
        Err(e) => failures.push(e.to_string()),
    }
    if wav_err > 1.0 / 32768.0 {
        failures.push(format!("wav round-trip {wav_err:.3e}"));
    }

    for (i, c) in corpus.iter().enumerate() {
        let once = dsp::trim_silence(c, dsp_cfg.vad_threshold_db);
        if dsp::trim_silence(&once, dsp_cfg.vad_threshold_db) != once {
            failures.push(format!("trim not idempotent on clip {i}"));
        }
        match dsp::melspectrogram(c, &dsp_cfg) {
            Ok(m) if m.values().iter().all(|v| (0.0..=1.0).contains(v)) => {}
            Ok(_) => failures.push(format!("mel of clip {i} leaves [0,1]")),
            Err(e) => failures.push(format!("clip {i}: {e}")),
        }
    }
    let detail = if failures.is_empty() {
        format!("preemphasis {emphasis:.1e}, wav {wav_err:.2e}, trim idempotent, mel in [0,1]")
    } else {
        failures.join("; ")
    };
    Outcome {
        passed: failures.is_empty(),
        measured: emphasis.max(wav_err),
        tolerance: 1.0 / 32768.0,
        detail,
        runtime_limit: None,
    }
}

/// Tone frequency of the gate fixture: the centre of bin 46 at 1024/22050.
pub const FIXTURE_TONE_HZ: f64 = 46.0 * 22050.0 / 1024.0;

/// Half a second of white noise, then 1.5 s of the same noise plus a tone
/// whose power is 10 dB below the total noise power.
pub fn noisy_tone_fixture(seed: u64) -> AudioClip {
    let sr = 22050.0;
    let amp: f64 = 0.05;
    let noise_power = 10.0 * (amp * amp / 2.0);
    let normal = Normal::new(0.0, noise_power.sqrt()).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lead = (0.5 * sr) as usize;
    let samples = (0..(2.0 * sr) as usize)
        .map(|i| {
            let tone = if i >= lead {
                amp * (2.0 * PI * FIXTURE_TONE_HZ * i as f64 / sr).sin()
            } else {
                0.0
            };
            tone + normal.sample(&mut rng)
        })
        .collect();
    AudioClip::new(samples, sr as u32).expect("positive rate")
}

/// Tone power (bins within 2 of the tone) over mean noise-bin power (bins
/// more than 4 away), in dB, over the frames after the first `skip`
/// seconds.
pub fn tone_snr_db(clip: &AudioClip, tone_hz: f64, skip_secs: f64, cfg: &DspConfig) -> f64 {
    let mag = dsp::stft_magnitude(clip.samples(), cfg.fft_size, cfg.hop_size)
        .expect("fixture long enough");
    let k0 = (tone_hz * cfg.fft_size as f64 / clip.sample_rate() as f64).round() as i64;
    let first = (skip_secs * clip.sample_rate() as f64 / cfg.hop_size as f64).ceil() as usize;
    let (mut tone, mut noise, mut noise_bins) = (0.0, 0.0, 0usize);
    for row in mag.rows().into_iter().skip(first) {
        for (k, m) in row.iter().enumerate() {
            let dist = (k as i64 - k0).abs();
            if dist <= 2 {
                tone += m * m;
            } else if dist > 4 {
                noise += m * m;
                noise_bins += 1;
            }
        }
    }
    let frames = mag.nrows().saturating_sub(first).max(1) as f64;
    let noise_mean = (noise / noise_bins.max(1) as f64).max(1e-300);
    10.0 * ((tone / frames) / noise_mean).log10()
}

fn enhancement_contract(seed: u64) -> Outcome {
    let dsp_cfg = DspConfig::default();
    let clip = noisy_tone_fixture(seed);
    let mut failures = Vec::new();
    match enhance(&clip, &EnhancementMethod::Passthrough, &dsp_cfg) {
        Ok(out) if out == clip => {}
        _ => failures.push("passthrough changed the clip".to_string()),
    }
    let gated = match enhance(&clip, &EnhancementMethod::gate(), &dsp_cfg) {
        Ok(g) => g,
        Err(e) => return Outcome::failed(e.to_string()),
    };
    let energy = |c: &AudioClip| c.samples().iter().map(|x| x * x).sum::<f64>();
    if energy(&gated) > energy(&clip) * (1.0 + 1e-12) {
        failures.push("gate increased energy".into());
    }
    if gated.len() != clip.len() {
        failures.push("gate changed length".into());
    }
    let before = tone_snr_db(&clip, FIXTURE_TONE_HZ, 0.5, &dsp_cfg);
    let after = tone_snr_db(&gated, FIXTURE_TONE_HZ, 0.5, &dsp_cfg);
    let gain = after - before;
    if gain < 6.0 {
        failures.push(format!("snr gain {gain:.2} dB"));
    }
    Outcome {
        passed: failures.is_empty(),
        measured: gain,
        tolerance: 6.0,
        detail: format!(
            "tone-bin SNR {before:.1} -> {after:.1} dB, energy {:.3} -> {:.3}{}",
            energy(&clip),
            energy(&gated),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
        runtime_limit: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_complete() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        let mut sorted = p.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        assert_eq!(permutations(6).len(), 720);
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion(11, 0).is_none());
    }

    #[test]
    fn fixture_snr_is_measurable() {
        let cfg = DspConfig::default();
        let clip = noisy_tone_fixture(3);
        let snr = tone_snr_db(&clip, FIXTURE_TONE_HZ, 0.5, &cfg);
        assert!(snr.is_finite());
        assert!(snr > 0.0, "{snr}");
    }
}
