//! Few-shot speaker embeddings.
//!
//! The pipeline runs from raw waveform audio to a single speaker embedding:
//! VAD trimming, mel spectrogram extraction, a per-frame spectral processing
//! unit, temporal aggregation (average pooling or multi-head self-attention
//! pooling) and cross-sample attention over the cloning samples. Around that
//! core sit a Griffin-Lim vocoder, a spectral-gating enhancement stage, a toy
//! discriminative training loop with finite-difference verification, and a
//! persistent enrollment store with cosine search.
//!
//! Data-parallel loops (per-sample encoding, per-example gradients, finite
//! difference sweeps) run on rayon when the `parallel` feature is enabled and
//! fall back to plain iterators otherwise. See [`exec`].

pub mod attention;
pub mod audio_io;
pub mod config;
pub mod dsp;
pub mod encoder;
pub mod enhancement;
pub mod enrollment;
pub mod exec;
pub mod reference;
pub mod repro;
pub mod training;
pub mod vocoder;

pub use audio_io::AudioClip;
pub use config::Hyperparameters;
pub use dsp::{DspConfig, MelSpectrogram};
pub use encoder::{EncoderConfig, EncoderParams, SpeakerEmbedding, Variant};
pub use exec::Execution;
