use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::EnrollError;
use crate::dsp::DspConfig;
use crate::encoder::{EncoderConfig, EncoderParams, SpeakerEmbedding};

pub const STORE_FORMAT_VERSION: u32 = 1;

/// SHA-256 (hex) of the serialized encoder and DSP configurations.
pub fn config_digest(encoder: &EncoderConfig, dsp: &DspConfig) -> String {
    let text = serde_json::to_string(&(encoder, dsp)).expect("configs serialize");
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentRecord {
    pub speaker_id: String,
    #[serde(
        serialize_with = "seventeen_digits",
        deserialize_with = "embedding_from_json"
    )]
    pub embedding: SpeakerEmbedding,
    pub sample_count: usize,
    /// RFC 3339 timestamp.
    pub created_at: String,
    pub config_digest: String,
}

// Every value as 17 significant digits, which pins down the double exactly.
fn seventeen_digits<S: Serializer>(e: &SpeakerEmbedding, s: S) -> Result<S::Ok, S::Error> {
    let body: Vec<String> = e.values().iter().map(|v| format!("{v:.16e}")).collect();
    let raw = RawValue::from_string(format!("[{}]", body.join(",")))
        .map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

fn embedding_from_json<'de, D: Deserializer<'de>>(d: D) -> Result<SpeakerEmbedding, D::Error> {
    Vec::<f64>::deserialize(d).map(SpeakerEmbedding::new)
}

/// All enrolled speakers of one encoder configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStore {
    pub format_version: u32,
    pub d_embedding: usize,
    pub config_digest: String,
    pub records: Vec<EnrollmentRecord>,
}

impl EmbeddingStore {
    pub fn new(d_embedding: usize, config_digest: String) -> Self {
        Self {
            format_version: STORE_FORMAT_VERSION,
            d_embedding,
            config_digest,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, speaker_id: &str) -> bool {
        self.get(speaker_id).is_some()
    }

    pub fn get(&self, speaker_id: &str) -> Option<&EnrollmentRecord> {
        self.records.iter().find(|r| r.speaker_id == speaker_id)
    }

    pub(crate) fn check_compatible(
        &self,
        d_embedding: usize,
        digest: &str,
    ) -> Result<(), EnrollError> {
        if d_embedding != self.d_embedding {
            return Err(EnrollError::DimensionMismatch {
                expected: self.d_embedding,
                found: d_embedding,
            });
        }
        if digest != self.config_digest {
            return Err(EnrollError::DigestMismatch {
                expected: self.config_digest.clone(),
                found: digest.to_string(),
            });
        }
        Ok(())
    }

    /// Adds a record after checking id uniqueness, length, digest and
    /// finiteness.
    pub fn insert(&mut self, record: EnrollmentRecord) -> Result<(), EnrollError> {
        if record.speaker_id.is_empty() {
            return Err(EnrollError::EmptySpeakerId);
        }
        if self.contains(&record.speaker_id) {
            return Err(EnrollError::DuplicateSpeaker(record.speaker_id));
        }
        self.check_compatible(record.embedding.len(), &record.config_digest)?;
        if !record.embedding.is_finite() {
            return Err(EnrollError::Store {
                path: PathBuf::new(),
                detail: format!("embedding of {:?} is not finite", record.speaker_id),
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("store serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: EmbeddingStore = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if raw.format_version != STORE_FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", raw.format_version));
        }
        let mut store = EmbeddingStore::new(raw.d_embedding, raw.config_digest);
        for r in raw.records {
            store.insert(r).map_err(|e| e.to_string())?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnrollError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EnrollError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|detail| EnrollError::Store {
            path: path.to_path_buf(),
            detail,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnrollError> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

/// Writes to a sibling temporary file, syncs it and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), EnrollError> {
    let path = path.as_ref();
    let io = |source| EnrollError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "store".into());
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn save_params(path: impl AsRef<Path>, params: &EncoderParams) -> Result<(), EnrollError> {
    let text = serde_json::to_string(params).expect("params serialize");
    write_atomic(path, text.as_bytes())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<EncoderParams, EnrollError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EnrollError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EnrollError::Store {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
