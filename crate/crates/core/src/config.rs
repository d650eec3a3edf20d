//! Hyperparameter files.
//!
//! The shipped files are TTS training configurations split across two
//! fragments, with a trailing comma before the first closing brace and a
//! second fragment that starts directly with a key. [`Hyperparameters::parse`]
//! accepts that layout as well as plain JSON. Only the keys this crate uses
//! are interpreted; the rest are kept and reported with a warning.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::dsp::{DspConfig, DspError};
use crate::encoder::{EncoderConfig, EncoderError, Variant};

pub const VCTK_JSON: &str = include_str!("../configs/vctk.json");
pub const LIBRITTS_TTS_JSON: &str = include_str!("../configs/libritts_tts.json");
pub const LIBRITTS_ENCODER_JSON: &str = include_str!("../configs/libritts_encoder.json");

/// Keys with a meaning in this crate.
pub const KNOWN_KEYS: &[&str] = &[
    "num_mels",
    "fmin",
    "fmax",
    "fft_size",
    "hop_size",
    "sample_rate",
    "preemphasis",
    "min_level_db",
    "ref_level_db",
    "vad_threshold_db",
    "speaker_embed_dim",
    "cloning_sample_size",
    "f_mapped",
    "speaker_encoder_attention_num_heads",
    "speaker_encoder_attention_dim",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "initial_learning_rate",
    "lr_schedule",
    "power",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed hyperparameter file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("hyperparameter file is not a JSON object")]
    NotAnObject,
    #[error("missing key {0:?}")]
    MissingKey(&'static str),
    #[error("key {key:?}: {detail}")]
    InvalidValue { key: &'static str, detail: String },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Optimizer constants read from a hyperparameter file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `lr_schedule == "noam_learning_rate_decay"`.
    pub noam: bool,
}

/// A parsed hyperparameter file.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    values: BTreeMap<String, Value>,
}

impl Hyperparameters {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let normalized = normalize_fragments(text);
        let value: Value = serde_json::from_str(&normalized)?;
        let Value::Object(map) = value else {
            return Err(ConfigError::NotAnObject);
        };
        let hp = Self {
            values: map.into_iter().collect(),
        };
        let unknown = hp.unknown_keys();
        if !unknown.is_empty() {
            log::warn!(
                "ignoring {} hyperparameter keys without meaning here: {}",
                unknown.len(),
                unknown.join(", ")
            );
        }
        Ok(hp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Multi-speaker VCTK configuration (f_mapped 30, 8 heads, dim 16).
    pub fn vctk() -> Self {
        Self::parse(VCTK_JSON).expect("bundled file parses")
    }

    /// LibriTTS multi-speaker TTS configuration.
    pub fn libritts_tts() -> Self {
        Self::parse(LIBRITTS_TTS_JSON).expect("bundled file parses")
    }

    /// LibriTTS speaker-encoder configuration (fft 1600, f_mapped 128,
    /// 2 heads, dim 128).
    pub fn libritts_encoder() -> Self {
        Self::parse(LIBRITTS_ENCODER_JSON).expect("bundled file parses")
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn unknown_keys(&self) -> Vec<&str> {
        self.values
            .keys()
            .map(String::as_str)
            .filter(|k| !KNOWN_KEYS.contains(k))
            .collect()
    }

    fn number(&self, key: &'static str) -> Result<f64, ConfigError> {
        match self.values.get(key) {
            None => Err(ConfigError::MissingKey(key)),
            Some(v) => v.as_f64().ok_or_else(|| ConfigError::InvalidValue {
                key,
                detail: format!("expected a number, found {v}"),
            }),
        }
    }

    fn count(&self, key: &'static str) -> Result<usize, ConfigError> {
        match self.values.get(key) {
            None => Err(ConfigError::MissingKey(key)),
            Some(v) => v
                .as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| ConfigError::InvalidValue {
                    key,
                    detail: format!("expected a non-negative integer, found {v}"),
                }),
        }
    }

    pub fn dsp(&self) -> Result<DspConfig, ConfigError> {
        let sample_rate = self.count("sample_rate")?;
        let cfg = DspConfig {
            num_mels: self.count("num_mels")?,
            fmin: self.number("fmin")?,
            fmax: self.number("fmax")?,
            fft_size: self.count("fft_size")?,
            hop_size: self.count("hop_size")?,
            sample_rate: u32::try_from(sample_rate).map_err(|_| ConfigError::InvalidValue {
                key: "sample_rate",
                detail: "out of range".into(),
            })?,
            preemphasis: self.number("preemphasis")?,
            min_level_db: self.number("min_level_db")?,
            ref_level_db: self.number("ref_level_db")?,
            vad_threshold_db: match self.values.get("vad_threshold_db") {
                Some(_) => self.number("vad_threshold_db")?,
                None => 60.0,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn encoder(&self, variant: Variant) -> Result<EncoderConfig, ConfigError> {
        Ok(EncoderConfig::new(
            self.count("num_mels")?,
            self.count("f_mapped")?,
            self.count("speaker_encoder_attention_dim")?,
            self.count("speaker_encoder_attention_num_heads")?,
            self.count("speaker_embed_dim")?,
            self.count("cloning_sample_size")?,
            variant,
        )?)
    }

    pub fn adam(&self) -> Result<AdamSettings, ConfigError> {
        Ok(AdamSettings {
            learning_rate: self.number("initial_learning_rate")?,
            beta1: self.number("adam_beta1")?,
            beta2: self.number("adam_beta2")?,
            epsilon: self.number("adam_eps")?,
            noam: self
                .values
                .get("lr_schedule")
                .and_then(Value::as_str)
                .is_some_and(|s| s == "noam_learning_rate_decay"),
        })
    }

    /// Griffin-Lim magnitude sharpening exponent, 1.0 when absent.
    pub fn power(&self) -> f64 {
        self.values
            .get("power")
            .and_then(Value::as_f64)
            .unwrap_or(1.0)
    }
}

/// Rewrites the fragment layout into a single JSON object: drops trailing
/// commas before `}`/`]` and joins a top-level `}` directly followed by a
/// key into the next fragment. String contents are left untouched.
fn normalize_fragments(text: &str) -> String {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut out = String::with_capacity(chars.len() + 2);
    let wrapped = chars.first() == Some(&'"');
    if wrapped {
        out.push('{');
    }
    let next_significant = |from: usize| chars[from..].iter().copied().find(|c| !c.is_whitespace());
    let mut depth = usize::from(wrapped);
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' if matches!(next_significant(i + 1), Some('}') | Some(']')) => {}
            '{' | '[' => {
                depth += 1;
                out.push(c);
            }
            '}' if depth <= 1 && next_significant(i + 1) == Some('"') => {
                // continuation fragment: keep the object open
                depth = 1;
                out.push(',');
            }
            '}' | ']' => {
                depth = depth.saturating_sub(1);
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    if wrapped && depth > 0 {
        out.push('}');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse_with_expected_values() {
        let d = Hyperparameters::vctk();
        let dsp = d.dsp().unwrap();
        assert_eq!(dsp, DspConfig::default());
        let enc = d.encoder(Variant::T2).unwrap();
        assert_eq!(
            (enc.f_mapped, enc.d_embedding, enc.max_cloning_samples),
            (30, 256, 6)
        );
        assert_eq!(
            (
                enc.temporal.num_heads(),
                enc.temporal.d_attn(),
                enc.temporal.d_t()
            ),
            (8, 16, 2)
        );
        assert_eq!(d.power(), 1.4);
        assert_eq!(
            d.adam().unwrap(),
            AdamSettings {
                learning_rate: 0.0005,
                beta1: 0.5,
                beta2: 0.9,
                epsilon: 1e-6,
                noam: true
            }
        );
        assert_eq!(d.get("n_speakers").and_then(Value::as_u64), Some(108));
        assert_eq!(d.get("vocoder").and_then(Value::as_str), Some("world"));

        let f = Hyperparameters::libritts_encoder();
        let enc = f.encoder(Variant::T1).unwrap();
        assert_eq!(
            (enc.f_mapped, enc.temporal.num_heads(), enc.temporal.d_t()),
            (128, 2, 64)
        );
        assert_eq!(
            (f.dsp().unwrap().fft_size, f.dsp().unwrap().hop_size),
            (1600, 400)
        );

        let e = Hyperparameters::libritts_tts();
        assert_eq!(e.get("n_speakers").and_then(Value::as_u64), Some(1151));
        assert_eq!(e.dsp().unwrap().fft_size, 1024);
    }

    #[test]
    fn plain_json_and_unknown_keys() {
        let hp =
            Hyperparameters::parse(r#"{"num_mels": 40, "mystery": {"a": [1, 2,]}, "s": "x,}"}"#)
                .unwrap();
        assert_eq!(hp.unknown_keys(), vec!["mystery", "s"]);
        assert_eq!(hp.get("s").and_then(Value::as_str), Some("x,}"));
        assert!(matches!(hp.dsp(), Err(ConfigError::MissingKey(_))));
    }

    #[test]
    fn bare_fragment_is_wrapped() {
        let hp = Hyperparameters::parse("\"fft_size\": 512,\n\"power\": 2.0\n").unwrap();
        assert_eq!(hp.power(), 2.0);
    }

    #[test]
    fn indivisible_attention_is_rejected() {
        let text = VCTK_JSON.replace(
            "\"speaker_encoder_attention_dim\": 16",
            "\"speaker_encoder_attention_dim\": 15",
        );
        let text = text.replace(
            "\"speaker_encoder_attention_num_heads\": 8",
            "\"speaker_encoder_attention_num_heads\": 2",
        );
        let hp = Hyperparameters::parse(&text).unwrap();
        assert!(matches!(
            hp.encoder(Variant::T2),
            Err(ConfigError::Encoder(EncoderError::Attention(_)))
        ));
    }

    #[test]
    fn type_errors_name_the_key() {
        let hp = Hyperparameters::parse(
            &VCTK_JSON.replace("\"num_mels\": 80", "\"num_mels\": \"eighty\""),
        )
        .unwrap();
        assert!(matches!(
            hp.dsp(),
            Err(ConfigError::InvalidValue {
                key: "num_mels",
                ..
            })
        ));
        assert!(matches!(
            Hyperparameters::parse("[1, 2]"),
            Err(ConfigError::NotAnObject)
        ));
    }
}
