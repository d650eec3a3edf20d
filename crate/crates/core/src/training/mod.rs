//! Toy-scale discriminative training of the speaker encoder and the
//! finite-difference verification harness.

mod adam;
mod gradcheck;
mod synth;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{outer, softmax};
use crate::audio_io::AudioClip;
use crate::config::AdamSettings;
use crate::dsp::DspConfig;
use crate::encoder::{
    embed_features, encoder_backward, sample_features, EncoderConfig, EncoderError, EncoderParams,
    SpeakerEmbedding,
};
use crate::enrollment::cosine_similarity;
use crate::exec::Execution;

pub use adam::{adam_step, noam_learning_rate, OptimizerState, NOAM_WARMUP_STEPS};
pub use gradcheck::{
    central_difference, gradcheck_config, gradient_check_suite, gradient_check_suite_with,
    relative_error, GradCheckReport, GroupError, FD_EPSILON, GRADCHECK_TOLERANCE,
};
pub use synth::{synthetic_corpus, VoiceProfile};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset has {0} speakers, at least 2 required")]
    DatasetTooSmall(usize),
    #[error("speaker {id} has {clips} clips, at least {needed} required")]
    TooFewClips {
        id: String,
        clips: usize,
        needed: usize,
    },
    #[error("epochs must be at least 1")]
    NoEpochs,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite parameters after epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerRecord {
    pub id: String,
    pub clips: Vec<AudioClip>,
}

/// Labelled speakers; the last clip of every speaker is held out for
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub speakers: Vec<SpeakerRecord>,
}

impl ToyDataset {
    pub fn validate(&self, cfg: &EncoderConfig) -> Result<(), TrainError> {
        if self.speakers.len() < 2 {
            return Err(TrainError::DatasetTooSmall(self.speakers.len()));
        }
        let needed = cfg.max_cloning_samples.max(2);
        for s in &self.speakers {
            if s.clips.len() < needed {
                return Err(TrainError::TooFewClips {
                    id: s.id.clone(),
                    clips: s.clips.len(),
                    needed,
                });
            }
        }
        Ok(())
    }
}

/// Loss and gradients of softmax cross-entropy over `head^T embedding`.
#[derive(Debug, Clone)]
pub struct ClassifierLoss {
    pub loss: f64,
    pub d_embedding: Array1<f64>,
    pub d_head: Array2<f64>,
}

/// Softmax cross-entropy of the logits `head^T embedding` (`head` is
/// `d_embedding x classes`).
pub fn classifier_loss(
    embedding: ArrayView1<f64>,
    label: usize,
    head: &Array2<f64>,
) -> Result<ClassifierLoss, TrainError> {
    let classes = head.ncols();
    if label >= classes {
        return Err(TrainError::LabelOutOfRange { label, classes });
    }
    if head.nrows() != embedding.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "head has {} rows, embedding has length {}",
            head.nrows(),
            embedding.len()
        )));
    }
    let logits = embedding.dot(head);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = (log_sum - logits[label]).max(0.0);
    let mut d_logits = softmax(logits.view()).expect("at least one class");
    d_logits[label] -= 1.0;
    Ok(ClassifierLoss {
        loss,
        d_embedding: head.dot(&d_logits),
        d_head: outer(embedding, d_logits.view()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamSettings,
    pub exec: Execution,
}

impl TrainOptions {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            seed,
            adam: AdamSettings::default(),
            exec: Execution::default(),
        }
    }
}

/// One line of training telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub intra_cos: f64,
    pub inter_cos: f64,
}

impl EpochMetrics {
    pub fn separation(&self) -> f64 {
        self.intra_cos - self.inter_cos
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub head: Array2<f64>,
    pub metrics: Vec<EpochMetrics>,
}

/// Precomputed features of a dataset: training examples (groups of clip
/// indices per speaker) and held-out clips.
struct Prepared {
    features: Vec<Vec<Array2<f64>>>,
    examples: Vec<(usize, Vec<usize>)>,
}

fn prepare(
    dataset: &ToyDataset,
    dsp_cfg: &DspConfig,
    cfg: &EncoderConfig,
    exec: Execution,
) -> Result<Prepared, TrainError> {
    let features = dataset
        .speakers
        .iter()
        .map(|s| {
            exec.try_map(&s.clips, |i, c| {
                sample_features(i, c, dsp_cfg).map(|m| m.values().clone())
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let group = 3.min(cfg.max_cloning_samples);
    let mut examples = Vec::new();
    for (label, clips) in features.iter().enumerate() {
        let train = clips.len() - 1;
        examples.extend((0..train).map(|i| (label, vec![i])));
        if group > 1 {
            let idx: Vec<usize> = (0..train).collect();
            examples.extend(
                idx.chunks(group)
                    .filter(|c| c.len() > 1)
                    .map(|c| (label, c.to_vec())),
            );
        }
    }
    Ok(Prepared { features, examples })
}

/// Mean held-out intra- and inter-speaker cosine. Each speaker's reference
/// embedding uses up to `J` of its training clips; the probe is its
/// held-out clip alone.
fn separation_stats(
    prepared: &Prepared,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    exec: Execution,
) -> Result<(f64, f64), TrainError> {
    let pairs = exec.try_map(&prepared.features, |_, clips| -> Result<_, EncoderError> {
        let train = clips.len() - 1;
        let enrol: Vec<&Array2<f64>> = clips[..train]
            .iter()
            .take(cfg.max_cloning_samples)
            .collect();
        let reference = embed_features(&enrol, params, cfg, Execution::Sequential)?;
        let probe = embed_features(&[&clips[train]], params, cfg, Execution::Sequential)?;
        Ok((reference, probe))
    })?;
    let cos = |a: &SpeakerEmbedding, b: &SpeakerEmbedding| cosine_similarity(a, b).unwrap_or(0.0);
    let n = pairs.len();
    let (mut intra, mut inter) = (0.0, 0.0);
    for (s, (_, probe)) in pairs.iter().enumerate() {
        for (r, (reference, _)) in pairs.iter().enumerate() {
            if s == r {
                intra += cos(probe, reference);
            } else {
                inter += cos(probe, reference);
            }
        }
    }
    Ok((intra / n as f64, inter / (n * (n - 1)) as f64))
}

/// Full-batch training with a linear softmax classifier over speaker
/// labels. One Adam step per epoch; deterministic for a given seed.
pub fn train_toy(
    dataset: &ToyDataset,
    cfg: &EncoderConfig,
    dsp_cfg: &DspConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    train_toy_with_callback(dataset, cfg, dsp_cfg, opts, |_| {})
}

/// [`train_toy`], reporting each epoch's metrics as soon as they exist.
pub fn train_toy_with_callback(
    dataset: &ToyDataset,
    cfg: &EncoderConfig,
    dsp_cfg: &DspConfig,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome, TrainError> {
    if opts.epochs == 0 {
        return Err(TrainError::NoEpochs);
    }
    dataset.validate(cfg)?;
    cfg.validate()?;
    let exec = opts.exec;
    let prepared = prepare(dataset, dsp_cfg, cfg, exec)?;
    let classes = dataset.speakers.len();

    let mut params = EncoderParams::init(cfg, opts.seed);
    // A zero head makes the first update move every column towards its class
    // mean minus the global mean, so encoder gradients are discriminative
    // from the second step on.
    let mut head = Array2::zeros((cfg.d_embedding, classes));

    let mut shapes: Vec<(usize, usize)> = params.named().iter().map(|(_, m)| m.dim()).collect();
    shapes.push(head.dim());
    let mut state = OptimizerState::new(opts.adam, &shapes);

    let mut metrics = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let results = exec.try_map(
            &prepared.examples,
            |_, (label, idx)| -> Result<_, TrainError> {
                let mels: Vec<&Array2<f64>> =
                    idx.iter().map(|&i| &prepared.features[*label][i]).collect();
                let emb = embed_features(&mels, &params, cfg, Execution::Sequential)?;
                let emb = Array1::from(emb.values().to_vec());
                let l = classifier_loss(emb.view(), *label, &head)?;
                let g = encoder_backward(
                    &mels,
                    &params,
                    cfg,
                    l.d_embedding.view(),
                    Execution::Sequential,
                )?;
                Ok((l.loss, g.params, l.d_head))
            },
        )?;

        let n = results.len() as f64;
        let mut grad = EncoderParams::zeros(cfg);
        let mut d_head = Array2::zeros(head.dim());
        let mut loss = 0.0;
        for (l, g, h) in &results {
            loss += l;
            grad.scaled_add(1.0 / n, g);
            d_head.scaled_add(1.0 / n, h);
        }
        loss /= n;

        let grad_refs: Vec<&Array2<f64>> = grad
            .named()
            .into_iter()
            .map(|(_, m)| m)
            .chain(std::iter::once(&d_head))
            .collect();
        let mut targets = params.matrices_mut();
        targets.push(&mut head);
        adam_step(targets, &grad_refs, &mut state)?;

        if params.check(cfg).is_err() || head.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(epoch));
        }
        let (intra_cos, inter_cos) = separation_stats(&prepared, &params, cfg, exec)?;
        let m = EpochMetrics {
            epoch,
            loss,
            intra_cos,
            inter_cos,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome {
        params,
        head,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_classes() {
        let emb = Array1::zeros(4);
        let head = Array2::zeros((4, 5));
        let l = classifier_loss(emb.view(), 2, &head).unwrap();
        assert!((l.loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_margin_saturates() {
        let emb = array![1.0];
        let head = array![[20.0, 0.0, 0.0]];
        assert!(classifier_loss(emb.view(), 0, &head).unwrap().loss < 1e-6);
        assert!(classifier_loss(emb.view(), 1, &head).unwrap().loss > 19.0);
    }

    #[test]
    fn loss_gradients_match_central_differences() {
        let emb = array![0.3, -0.8, 0.5, 0.1];
        let head = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let label = 1;
        let l = classifier_loss(emb.view(), label, &head).unwrap();
        let eps = 1e-5;
        let fd_emb: Vec<f64> = (0..4)
            .map(|i| {
                central_difference(eps, |d| {
                    let mut e = emb.clone();
                    e[i] += d;
                    classifier_loss(e.view(), label, &head).unwrap().loss
                })
            })
            .collect();
        assert!(relative_error(l.d_embedding.as_slice().unwrap(), &fd_emb) < 1e-4);
        let mut fd_head = Vec::new();
        for i in 0..4 {
            for j in 0..3 {
                fd_head.push(central_difference(eps, |d| {
                    let mut h = head.clone();
                    h[[i, j]] += d;
                    classifier_loss(emb.view(), label, &h).unwrap().loss
                }));
            }
        }
        assert!(relative_error(l.d_head.as_slice().unwrap(), &fd_head) < 1e-4);
    }

    #[test]
    fn label_out_of_range() {
        let r = classifier_loss(Array1::zeros(2).view(), 3, &Array2::zeros((2, 3)));
        assert!(matches!(
            r,
            Err(TrainError::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
    }

    #[test]
    fn rejects_bad_datasets_and_zero_epochs() {
        let cfg = EncoderConfig::new(80, 8, 4, 2, 8, 3, crate::Variant::T1).unwrap();
        let dsp = DspConfig::default();
        let one = synthetic_corpus(1, 4, 22050, 0);
        assert!(matches!(
            train_toy(&one, &cfg, &dsp, &TrainOptions::new(1, 0)),
            Err(TrainError::DatasetTooSmall(1))
        ));
        let few = synthetic_corpus(2, 2, 22050, 0);
        assert!(matches!(
            train_toy(&few, &cfg, &dsp, &TrainOptions::new(1, 0)),
            Err(TrainError::TooFewClips { .. })
        ));
        let ok = synthetic_corpus(2, 4, 22050, 0);
        assert!(matches!(
            train_toy(&ok, &cfg, &dsp, &TrainOptions::new(0, 0)),
            Err(TrainError::NoEpochs)
        ));
    }
}
