//! Speaker encoder: spectral processing unit, temporal aggregation and
//! cross-sample attention.
//!
//! Per cloning sample `j` with mel frames `M_j` (`T_j x d_mel`):
//!
//! ```text
//! Y_j = ELU(M_j W_spec)                      T_j x f_mapped
//! e_j = mean_t Y_j            (variant t1)
//! e_j = attention_pool(Y_j)   (variant t2)   f_mapped
//! ```
//!
//! The `e_j` are stacked into `E` (`J' x f_mapped`), projected to
//! `E' = E w_s` (`J' x d_embedding`), and combined with cross-sample
//! attention weights `a = attention(E)`: `embedding = sum_j a_j E'_j`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{
    attention_backward_from_trace, attention_forward, elu, elu_grad, init_matrix, outer,
    AttentionConfig, AttentionError, AttentionParams,
};
use crate::audio_io::AudioClip;
use crate::dsp::{self, DspConfig, DspError, MelSpectrogram};
use crate::exec::Execution;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("no cloning samples given")]
    EmptyInput,
    #[error("{given} cloning samples given, at most {max} allowed")]
    TooManySamples { given: usize, max: usize },
    #[error("sample {index} has {len} samples after silence trimming, at least {needed} required")]
    SampleTooShort {
        index: usize,
        len: usize,
        needed: usize,
    },
    #[error("sample {index} is at {found} Hz, expected {expected} Hz")]
    SampleRateMismatch {
        index: usize,
        expected: u32,
        found: u32,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Temporal aggregation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Variant {
    /// Average pooling over frames.
    #[serde(rename = "t1")]
    T1,
    /// Multi-head self-attention pooling over frames.
    #[serde(rename = "t2")]
    #[default]
    T2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::T1 => "t1",
            Variant::T2 => "t2",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t1" => Ok(Variant::T1),
            "t2" => Ok(Variant::T2),
            other => Err(format!("unknown variant {other:?}, expected t1 or t2")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_mel: usize,
    pub f_mapped: usize,
    pub temporal: AttentionConfig,
    pub cross: AttentionConfig,
    pub d_embedding: usize,
    pub max_cloning_samples: usize,
    pub variant: Variant,
}

impl EncoderConfig {
    /// Both attention blocks share `d_attn` and head count, as in the
    /// hyperparameter files.
    pub fn new(
        d_mel: usize,
        f_mapped: usize,
        d_attn: usize,
        num_heads: usize,
        d_embedding: usize,
        max_cloning_samples: usize,
        variant: Variant,
    ) -> Result<Self, EncoderError> {
        let attn = AttentionConfig::new(f_mapped, d_attn, num_heads)?;
        let cfg = Self {
            d_mel,
            f_mapped,
            temporal: attn,
            cross: attn,
            d_embedding,
            max_cloning_samples,
            variant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.d_mel == 0 || self.f_mapped == 0 || self.d_embedding == 0 {
            return Err(EncoderError::InvalidConfig(
                "d_mel, f_mapped and d_embedding must be positive".into(),
            ));
        }
        if self.max_cloning_samples == 0 {
            return Err(EncoderError::InvalidConfig(
                "max_cloning_samples must be at least 1".into(),
            ));
        }
        if self.temporal.d_in() != self.f_mapped || self.cross.d_in() != self.f_mapped {
            return Err(EncoderError::InvalidConfig(
                "attention input width must equal f_mapped".into(),
            ));
        }
        Ok(())
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }
}

/// Every trainable matrix of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// `d_mel x f_mapped`.
    pub spectral: Array2<f64>,
    /// Unused by variant t1.
    pub temporal: AttentionParams,
    pub cross: AttentionParams,
    /// `f_mapped x d_embedding`.
    pub projection: Array2<f64>,
}

impl EncoderParams {
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spectral = init_matrix(&mut rng, cfg.d_mel, cfg.f_mapped);
        let temporal = AttentionParams::init(&cfg.temporal, &mut rng);
        let cross = AttentionParams::init(&cfg.cross, &mut rng);
        let projection = init_matrix(&mut rng, cfg.f_mapped, cfg.d_embedding);
        Self {
            spectral,
            temporal,
            cross,
            projection,
        }
    }

    pub fn zeros(cfg: &EncoderConfig) -> Self {
        Self {
            spectral: Array2::zeros((cfg.d_mel, cfg.f_mapped)),
            temporal: AttentionParams::zeros(&cfg.temporal),
            cross: AttentionParams::zeros(&cfg.cross),
            projection: Array2::zeros((cfg.f_mapped, cfg.d_embedding)),
        }
    }

    pub fn check(&self, cfg: &EncoderConfig) -> Result<(), EncoderError> {
        if self.spectral.dim() != (cfg.d_mel, cfg.f_mapped) {
            return Err(EncoderError::ShapeMismatch(format!(
                "spectral weights are {:?}, expected {:?}",
                self.spectral.dim(),
                (cfg.d_mel, cfg.f_mapped)
            )));
        }
        if self.projection.dim() != (cfg.f_mapped, cfg.d_embedding) {
            return Err(EncoderError::ShapeMismatch(format!(
                "projection is {:?}, expected {:?}",
                self.projection.dim(),
                (cfg.f_mapped, cfg.d_embedding)
            )));
        }
        self.temporal.check(&cfg.temporal)?;
        self.cross.check(&cfg.cross)?;
        if self
            .named()
            .iter()
            .any(|(_, m)| m.iter().any(|v| !v.is_finite()))
        {
            return Err(EncoderError::ShapeMismatch("non-finite parameter".into()));
        }
        Ok(())
    }

    /// `(group name, matrix)` pairs in a fixed order.
    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = vec![("spectral".to_string(), &self.spectral)];
        v.extend(
            self.temporal
                .named()
                .into_iter()
                .map(|(n, m)| (format!("temporal.{n}"), m)),
        );
        v.extend(
            self.cross
                .named()
                .into_iter()
                .map(|(n, m)| (format!("cross.{n}"), m)),
        );
        v.push(("projection".to_string(), &self.projection));
        v
    }

    /// Mutable matrices in the order of [`EncoderParams::named`].
    pub fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.spectral];
        v.extend(self.temporal.matrices_mut());
        v.extend(self.cross.matrices_mut());
        v.push(&mut self.projection);
        v
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &EncoderParams) {
        for (dst, (_, src)) in self.matrices_mut().into_iter().zip(other.named()) {
            dst.scaled_add(alpha, src);
        }
    }
}

/// Fixed-length speaker representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerEmbedding {
    values: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl From<Array1<f64>> for SpeakerEmbedding {
    fn from(a: Array1<f64>) -> Self {
        Self::new(a.to_vec())
    }
}

/// `ELU(mel * W_spec)` per frame.
pub fn spectral_process(
    mel: &Array2<f64>,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Array2<f64>, EncoderError> {
    Ok(spectral_pre_activation(mel, params, cfg)?.mapv(elu))
}

fn spectral_pre_activation(
    mel: &Array2<f64>,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Array2<f64>, EncoderError> {
    if mel.nrows() == 0 {
        return Err(EncoderError::EmptyInput);
    }
    if mel.ncols() != cfg.d_mel {
        return Err(EncoderError::ShapeMismatch(format!(
            "mel has {} bands, encoder expects d_mel = {}",
            mel.ncols(),
            cfg.d_mel
        )));
    }
    if params.spectral.dim() != (cfg.d_mel, cfg.f_mapped) {
        return Err(EncoderError::ShapeMismatch("spectral weights".into()));
    }
    Ok(mel.dot(&params.spectral))
}

/// Collapses frames to one vector: mean for t1, attention pooling for t2.
pub fn temporal_aggregate(
    y: &Array2<f64>,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Array1<f64>, EncoderError> {
    if y.nrows() == 0 {
        return Err(EncoderError::EmptyInput);
    }
    match cfg.variant {
        Variant::T1 => Ok(y.mean_axis(Axis(0)).expect("non-empty")),
        Variant::T2 => Ok(attention_forward(y, &params.temporal, &cfg.temporal)?.pooled),
    }
}

/// Cross-sample attention weights and the resulting embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSample {
    pub weights: Array1<f64>,
    pub embedding: SpeakerEmbedding,
}

/// Attention over the per-sample vectors, each projected to the embedding
/// width and combined with the attention weights.
pub fn cross_sample_aggregate(
    per_sample: &Array2<f64>,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<CrossSample, EncoderError> {
    let j = per_sample.nrows();
    if j == 0 {
        return Err(EncoderError::EmptyInput);
    }
    if j > cfg.max_cloning_samples {
        return Err(EncoderError::TooManySamples {
            given: j,
            max: cfg.max_cloning_samples,
        });
    }
    if params.projection.dim() != (cfg.f_mapped, cfg.d_embedding) {
        return Err(EncoderError::ShapeMismatch("projection".into()));
    }
    let trace = attention_forward(per_sample, &params.cross, &cfg.cross)?;
    let projected = per_sample.dot(&params.projection);
    let embedding = trace.weights.dot(&projected);
    Ok(CrossSample {
        weights: trace.weights,
        embedding: embedding.into(),
    })
}

/// VAD-trims one clip and computes its mel spectrogram, mapping failures
/// onto the sample index.
pub fn sample_features(
    index: usize,
    clip: &AudioClip,
    dsp_cfg: &DspConfig,
) -> Result<MelSpectrogram, EncoderError> {
    if clip.sample_rate() != dsp_cfg.sample_rate {
        return Err(EncoderError::SampleRateMismatch {
            index,
            expected: dsp_cfg.sample_rate,
            found: clip.sample_rate(),
        });
    }
    let trimmed = dsp::trim_silence(clip, dsp_cfg.vad_threshold_db);
    if trimmed.len() < dsp_cfg.fft_size {
        return Err(EncoderError::SampleTooShort {
            index,
            len: trimmed.len(),
            needed: dsp_cfg.fft_size,
        });
    }
    Ok(dsp::melspectrogram(&trimmed, dsp_cfg)?)
}

/// Per-sample temporal embeddings stacked as rows.
pub fn per_sample_embeddings(
    mels: &[&Array2<f64>],
    params: &EncoderParams,
    cfg: &EncoderConfig,
    exec: Execution,
) -> Result<Array2<f64>, EncoderError> {
    let rows = exec.try_map(mels, |_, mel| {
        let y = spectral_process(mel, params, cfg)?;
        temporal_aggregate(&y, params, cfg)
    })?;
    let mut e = Array2::zeros((rows.len(), cfg.f_mapped));
    for (mut dst, src) in e.rows_mut().into_iter().zip(&rows) {
        dst.assign(src);
    }
    Ok(e)
}

/// Embedding from precomputed mel features.
pub fn embed_features(
    mels: &[&Array2<f64>],
    params: &EncoderParams,
    cfg: &EncoderConfig,
    exec: Execution,
) -> Result<SpeakerEmbedding, EncoderError> {
    check_sample_count(mels.len(), cfg)?;
    let e = per_sample_embeddings(mels, params, cfg, exec)?;
    Ok(cross_sample_aggregate(&e, params, cfg)?.embedding)
}

fn check_sample_count(n: usize, cfg: &EncoderConfig) -> Result<(), EncoderError> {
    if n == 0 {
        Err(EncoderError::EmptyInput)
    } else if n > cfg.max_cloning_samples {
        Err(EncoderError::TooManySamples {
            given: n,
            max: cfg.max_cloning_samples,
        })
    } else {
        Ok(())
    }
}

/// Full pipeline from cloning clips to one speaker embedding.
pub fn encode_speaker(
    samples: &[AudioClip],
    dsp_cfg: &DspConfig,
    cfg: &EncoderConfig,
    params: &EncoderParams,
) -> Result<SpeakerEmbedding, EncoderError> {
    encode_speaker_with(Execution::default(), samples, dsp_cfg, cfg, params)
}

pub fn encode_speaker_with(
    exec: Execution,
    samples: &[AudioClip],
    dsp_cfg: &DspConfig,
    cfg: &EncoderConfig,
    params: &EncoderParams,
) -> Result<SpeakerEmbedding, EncoderError> {
    check_sample_count(samples.len(), cfg)?;
    cfg.validate()?;
    params.check(cfg)?;
    dsp_cfg.validate()?;
    if dsp_cfg.num_mels != cfg.d_mel {
        return Err(EncoderError::ShapeMismatch(format!(
            "DSP produces {} mel bands, encoder expects {}",
            dsp_cfg.num_mels, cfg.d_mel
        )));
    }
    let mels = exec.try_map(samples, |i, clip| sample_features(i, clip, dsp_cfg))?;
    let views: Vec<&Array2<f64>> = mels.iter().map(|m| m.values()).collect();
    embed_features(&views, params, cfg, exec)
}

/// Embedding plus gradients of `upstream . embedding` for every parameter.
#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub embedding: SpeakerEmbedding,
    pub params: EncoderParams,
}

struct SampleForward {
    pre_act: Array2<f64>,
    y: Array2<f64>,
    trace: Option<crate::attention::AttentionTrace>,
    pooled: Array1<f64>,
}

/// Exact reverse-mode gradients through cross-sample aggregation, temporal
/// aggregation and the spectral processing unit.
pub fn encoder_backward(
    mels: &[&Array2<f64>],
    params: &EncoderParams,
    cfg: &EncoderConfig,
    upstream: ArrayView1<f64>,
    exec: Execution,
) -> Result<EncoderGradients, EncoderError> {
    check_sample_count(mels.len(), cfg)?;
    if upstream.len() != cfg.d_embedding {
        return Err(EncoderError::ShapeMismatch(format!(
            "upstream gradient has length {}, expected d_embedding = {}",
            upstream.len(),
            cfg.d_embedding
        )));
    }
    let forwards = exec.try_map(mels, |_, mel| -> Result<SampleForward, EncoderError> {
        let pre_act = spectral_pre_activation(mel, params, cfg)?;
        let y = pre_act.mapv(elu);
        let (trace, pooled) = match cfg.variant {
            Variant::T1 => (None, y.mean_axis(Axis(0)).expect("non-empty")),
            Variant::T2 => {
                let tr = attention_forward(&y, &params.temporal, &cfg.temporal)?;
                let pooled = tr.pooled.clone();
                (Some(tr), pooled)
            }
        };
        Ok(SampleForward {
            pre_act,
            y,
            trace,
            pooled,
        })
    })?;

    let mut e = Array2::zeros((forwards.len(), cfg.f_mapped));
    for (mut row, f) in e.rows_mut().into_iter().zip(&forwards) {
        row.assign(&f.pooled);
    }
    let cross_trace = attention_forward(&e, &params.cross, &cfg.cross)?;
    // sum_j a_j (E_j w_s) = (a^T E) w_s
    let embedding = cross_trace.pooled.dot(&params.projection);

    let mut grads = EncoderParams::zeros(cfg);
    grads.projection = outer(cross_trace.pooled.view(), upstream);
    let d_pooled = params.projection.dot(&upstream);
    let cross = attention_backward_from_trace(
        &e,
        &params.cross,
        &cfg.cross,
        &cross_trace,
        d_pooled.view(),
    )?;
    grads.cross = cross.params;

    let per_sample = exec.try_map(&forwards, |j, f| -> Result<_, EncoderError> {
        let d_e = cross.input.row(j);
        let (d_y, temporal) = match &f.trace {
            None => {
                let t = f.y.nrows() as f64;
                let d_y = Array2::from_shape_fn(f.y.raw_dim(), |(_, c)| d_e[c] / t);
                (d_y, None)
            }
            Some(tr) => {
                let g =
                    attention_backward_from_trace(&f.y, &params.temporal, &cfg.temporal, tr, d_e)?;
                (g.input, Some(g.params))
            }
        };
        let d_pre = d_y * &f.pre_act.mapv(elu_grad);
        Ok((mels[j].t().dot(&d_pre), temporal))
    })?;

    // serial, index-ordered accumulation keeps results independent of scheduling
    for (d_spec, temporal) in per_sample {
        grads.spectral += &d_spec;
        if let Some(t) = temporal {
            for (dst, (_, src)) in grads.temporal.matrices_mut().into_iter().zip(t.named()) {
                *dst += src;
            }
        }
    }

    Ok(EncoderGradients {
        embedding: embedding.into(),
        params: grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn small_cfg(variant: Variant) -> EncoderConfig {
        EncoderConfig::new(5, 3, 4, 2, 3, 6, variant).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.random_range(0.0..1.0))
    }

    #[test]
    fn spectral_unit_examples() {
        let cfg = EncoderConfig::new(3, 3, 2, 1, 2, 6, Variant::T1).unwrap();
        let mut params = EncoderParams::init(&cfg, 1);
        let zero = Array2::zeros((2, 3));
        assert!(spectral_process(&zero, &params, &cfg)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        params.spectral = Array2::eye(3);
        let mel = array![[0.1, 0.5, 0.9], [0.0, 1.0, 0.3]];
        assert_eq!(spectral_process(&mel, &params, &cfg).unwrap(), mel);
        assert_eq!(
            spectral_process(&Array2::zeros((0, 3)), &params, &cfg),
            Err(EncoderError::EmptyInput)
        );
        assert!(matches!(
            spectral_process(&Array2::zeros((2, 4)), &params, &cfg),
            Err(EncoderError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn spectral_unit_matches_loop_reference() {
        let cfg = EncoderConfig::new(80, 30, 16, 8, 256, 6, Variant::T2).unwrap();
        let params = EncoderParams::init(&cfg, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mel = random(&mut rng, 3, 80);
        let got = spectral_process(&mel, &params, &cfg).unwrap();
        for t in 0..3 {
            for f in 0..30 {
                let mut acc = 0.0;
                for k in 0..80 {
                    acc += mel[[t, k]] * params.spectral[[k, f]];
                }
                let want = if acc >= 0.0 { acc } else { acc.exp() - 1.0 };
                assert!((got[[t, f]] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn temporal_examples() {
        let cfg = EncoderConfig::new(2, 2, 2, 1, 2, 6, Variant::T1).unwrap();
        let mut params = EncoderParams::init(&cfg, 2);
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(
            temporal_aggregate(&y, &params, &cfg).unwrap(),
            array![2.0, 3.0]
        );

        let t2 = cfg.with_variant(Variant::T2);
        let one = array![[0.4, -0.7]];
        assert_eq!(
            temporal_aggregate(&one, &params, &t2).unwrap(),
            array![0.4, -0.7]
        );

        params.temporal.out.fill(0.0);
        let a = temporal_aggregate(&y, &params, &t2).unwrap();
        assert!((&a - &array![2.0, 3.0]).iter().all(|d| d.abs() <= 1e-12));
    }

    #[test]
    fn cross_sample_examples() {
        let cfg = small_cfg(Variant::T2);
        let params = EncoderParams::init(&cfg, 3);
        let row = array![[0.2, -0.5, 0.8]];
        let one = cross_sample_aggregate(&row, &params, &cfg).unwrap();
        assert_eq!(one.weights, array![1.0]);
        assert_eq!(
            one.embedding.values(),
            row.row(0).dot(&params.projection).to_vec()
        );

        let same = Array2::from_shape_fn((4, 3), |(_, c)| row[[0, c]]);
        let many = cross_sample_aggregate(&same, &params, &cfg).unwrap();
        for (a, b) in many.embedding.values().iter().zip(one.embedding.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((many.weights.sum() - 1.0).abs() < 1e-12);

        assert_eq!(
            cross_sample_aggregate(&Array2::zeros((7, 3)), &params, &cfg).unwrap_err(),
            EncoderError::TooManySamples { given: 7, max: 6 }
        );
        assert_eq!(
            cross_sample_aggregate(&Array2::zeros((0, 3)), &params, &cfg).unwrap_err(),
            EncoderError::EmptyInput
        );
    }

    #[test]
    fn backward_matches_forward_embedding_and_zero_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for variant in [Variant::T1, Variant::T2] {
            let cfg = small_cfg(variant);
            let params = EncoderParams::init(&cfg, 4);
            let mels = [random(&mut rng, 4, 5), random(&mut rng, 6, 5)];
            let views: Vec<_> = mels.iter().collect();
            let fwd = embed_features(&views, &params, &cfg, Execution::Sequential).unwrap();
            let g = encoder_backward(
                &views,
                &params,
                &cfg,
                Array1::zeros(3).view(),
                Execution::Sequential,
            )
            .unwrap();
            for (a, b) in fwd.values().iter().zip(g.embedding.values()) {
                assert!((a - b).abs() < 1e-14);
            }
            assert!(g
                .params
                .named()
                .iter()
                .all(|(_, m)| m.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn singleton_projection_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = small_cfg(Variant::T2);
        let params = EncoderParams::init(&cfg, 5);
        let mel = random(&mut rng, 4, 5);
        let up = array![0.3, -1.1, 0.6];
        let g = encoder_backward(&[&mel], &params, &cfg, up.view(), Execution::Sequential).unwrap();
        let e0 = per_sample_embeddings(&[&mel], &params, &cfg, Execution::Sequential).unwrap();
        let expected = outer(e0.row(0), up.view());
        assert_eq!(g.params.projection, expected);
        // J' = 1 pins the cross weights, so cross parameters see no gradient
        assert!(g
            .params
            .cross
            .named()
            .iter()
            .all(|(_, m)| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("t1".parse::<Variant>().unwrap(), Variant::T1);
        assert_eq!(Variant::T2.to_string(), "t2");
        assert!("t3".parse::<Variant>().is_err());
    }
}
