//! Persistent speaker enrollment: a JSON embedding store, cosine search and
//! the enrollment latency benchmark.

mod bench;
mod store;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::audio_io::{load_wav, AudioClip, AudioError};
use crate::dsp::DspConfig;
use crate::encoder::{
    encode_speaker_with, EncoderConfig, EncoderError, EncoderParams, SpeakerEmbedding,
};
use crate::enhancement::{enhance, EnhanceError, EnhancementMethod};
use crate::exec::Execution;

pub use bench::{
    bench_enroll, bench_enroll_with, BenchReport, ADAPTATION_REFERENCE, ADAPTATION_REFERENCE_SECS,
    ENCODER_REFERENCE, ENCODER_REFERENCE_SECS,
};
pub use store::{
    config_digest, load_params, save_params, write_atomic, EmbeddingStore, EnrollmentRecord,
    STORE_FORMAT_VERSION,
};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SimilarityError {
    #[error("cosine similarity of an all-zero vector")]
    ZeroVector,
    #[error("embedding lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Error)]
pub enum EnrollError {
    #[error("speaker {0:?} is already enrolled")]
    DuplicateSpeaker(String),
    #[error("speaker id must not be empty")]
    EmptySpeakerId,
    #[error("store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("benchmark needs at least 3 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("embedding has length {found}, store holds {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("config digest {found} does not match store digest {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("{path}: {source}")]
    Audio {
        path: PathBuf,
        #[source]
        source: AudioError,
    },
    #[error("{path}: {source}")]
    Enhance {
        path: PathBuf,
        #[source]
        source: EnhanceError,
    },
    #[error("{}: {source}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "encoder".into()))]
    Encoder {
        path: Option<PathBuf>,
        #[source]
        source: EncoderError,
    },
    #[error("{path}: {detail}")]
    Store { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// `a . b / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(
    a: &SpeakerEmbedding,
    b: &SpeakerEmbedding,
) -> Result<f64, SimilarityError> {
    let (a, b) = (a.values(), b.values());
    if a.len() != b.len() {
        return Err(SimilarityError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// One search hit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub speaker_id: String,
    pub similarity: f64,
}

/// Top `k` records by cosine similarity, descending, ties broken by
/// speaker id. `k` larger than the store returns everything.
pub fn nearest(
    store: &EmbeddingStore,
    query: &SpeakerEmbedding,
    k: usize,
) -> Result<Vec<Match>, EnrollError> {
    if store.records.is_empty() {
        return Err(EnrollError::EmptyStore);
    }
    if k == 0 {
        return Err(EnrollError::ZeroK);
    }
    let mut hits = store
        .records
        .iter()
        .map(|r| {
            Ok(Match {
                speaker_id: r.speaker_id.clone(),
                similarity: cosine_similarity(query, &r.embedding)?,
            })
        })
        .collect::<Result<Vec<_>, SimilarityError>>()?;
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.speaker_id.cmp(&b.speaker_id))
    });
    hits.truncate(k);
    Ok(hits)
}

/// Everything needed to turn cloning clips into an embedding.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a> {
    pub encoder: &'a EncoderConfig,
    pub dsp: &'a DspConfig,
    pub params: &'a EncoderParams,
    pub enhance: &'a EnhancementMethod,
    pub exec: Execution,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        encoder: &'a EncoderConfig,
        dsp: &'a DspConfig,
        params: &'a EncoderParams,
        enhance: &'a EnhancementMethod,
    ) -> Self {
        Self {
            encoder,
            dsp,
            params,
            enhance,
            exec: Execution::default(),
        }
    }

    pub fn digest(&self) -> String {
        config_digest(self.encoder, self.dsp)
    }

    /// Loads and enhances every path, in order.
    pub fn load_clips<P: AsRef<Path> + Sync>(
        &self,
        paths: &[P],
    ) -> Result<Vec<AudioClip>, EnrollError> {
        self.exec.try_map(paths, |_, p| {
            let path = p.as_ref();
            let clip = load_wav(path).map_err(|source| EnrollError::Audio {
                path: path.to_path_buf(),
                source,
            })?;
            enhance(&clip, self.enhance, self.dsp).map_err(|source| EnrollError::Enhance {
                path: path.to_path_buf(),
                source,
            })
        })
    }

    /// Encodes already loaded clips; per-sample errors name `paths[index]`.
    pub fn encode_clips<P: AsRef<Path>>(
        &self,
        clips: &[AudioClip],
        paths: &[P],
    ) -> Result<SpeakerEmbedding, EnrollError> {
        encode_speaker_with(self.exec, clips, self.dsp, self.encoder, self.params).map_err(
            |source| {
                let path = offending_index(&source)
                    .and_then(|i| paths.get(i))
                    .map(|p| p.as_ref().to_path_buf());
                EnrollError::Encoder { path, source }
            },
        )
    }

    /// Load, enhance and encode.
    pub fn embed<P: AsRef<Path> + Sync>(
        &self,
        paths: &[P],
    ) -> Result<SpeakerEmbedding, EnrollError> {
        let clips = self.load_clips(paths)?;
        self.encode_clips(&clips, paths)
    }
}

fn offending_index(err: &EncoderError) -> Option<usize> {
    match err {
        EncoderError::SampleTooShort { index, .. }
        | EncoderError::SampleRateMismatch { index, .. } => Some(*index),
        _ => None,
    }
}

/// Encodes the clips and adds a record to the in-memory store.
pub fn enroll_into<P: AsRef<Path> + Sync>(
    store: &mut EmbeddingStore,
    speaker_id: &str,
    paths: &[P],
    pipeline: &Pipeline<'_>,
) -> Result<EnrollmentRecord, EnrollError> {
    if speaker_id.is_empty() {
        return Err(EnrollError::EmptySpeakerId);
    }
    if store.contains(speaker_id) {
        return Err(EnrollError::DuplicateSpeaker(speaker_id.to_string()));
    }
    let digest = pipeline.digest();
    store.check_compatible(pipeline.encoder.d_embedding, &digest)?;
    let embedding = pipeline.embed(paths)?;
    let record = EnrollmentRecord {
        speaker_id: speaker_id.to_string(),
        embedding,
        sample_count: paths.len(),
        created_at: chrono::Utc::now().to_rfc3339(),
        config_digest: digest,
    };
    store.insert(record.clone())?;
    Ok(record)
}

/// Enrolls into the store file at `store_path`, creating it when missing.
/// The file is replaced atomically; on any error it is left untouched.
pub fn enroll<P: AsRef<Path> + Sync>(
    store_path: impl AsRef<Path>,
    speaker_id: &str,
    paths: &[P],
    pipeline: &Pipeline<'_>,
) -> Result<EnrollmentRecord, EnrollError> {
    let store_path = store_path.as_ref();
    let mut store = if store_path.exists() {
        EmbeddingStore::load(store_path)?
    } else {
        EmbeddingStore::new(pipeline.encoder.d_embedding, pipeline.digest())
    };
    let record = enroll_into(&mut store, speaker_id, paths, pipeline)?;
    store.save(store_path)?;
    Ok(record)
}
