use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use tempfile::TempDir;

use speakerkit::audio_io::{save_wav, AudioClip};
use speakerkit::enhancement::EnhancementMethod;
use speakerkit::enrollment::{
    bench_enroll, cosine_similarity, enroll, nearest, EmbeddingStore, EnrollError,
    EnrollmentRecord, Pipeline, ADAPTATION_REFERENCE, ENCODER_REFERENCE,
};
use speakerkit::repro::vctk_encoder;
use speakerkit::training::synthetic_corpus;
use speakerkit::{DspConfig, EncoderConfig, EncoderParams, SpeakerEmbedding, Variant};

struct Fixture {
    dir: TempDir,
    encoder: EncoderConfig,
    dsp: DspConfig,
    params: EncoderParams,
    enhance: EnhancementMethod,
}

impl Fixture {
    fn new() -> Self {
        let encoder = vctk_encoder(Variant::T2);
        Self {
            dir: TempDir::new().unwrap(),
            params: EncoderParams::init(&encoder, 5),
            encoder,
            dsp: DspConfig::default(),
            enhance: EnhancementMethod::Passthrough,
        }
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline::new(&self.encoder, &self.dsp, &self.params, &self.enhance)
    }

    /// Writes `count` clips of synthetic speaker `speaker` and returns their paths.
    fn clips(&self, speaker: usize, count: usize) -> Vec<PathBuf> {
        let corpus = synthetic_corpus(speaker + 1, count, self.dsp.sample_rate, 11);
        corpus.speakers[speaker]
            .clips
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = self.dir.path().join(format!("s{speaker}_{i}.wav"));
                save_wav(c, &p).unwrap();
                p
            })
            .collect()
    }

    fn store_path(&self) -> PathBuf {
        self.dir.path().join("store.json")
    }
}

fn bytes(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn six_clips_enroll_and_reload_bit_exact() {
    let fx = Fixture::new();
    let paths = fx.clips(0, 6);
    let record = enroll(fx.store_path(), "alice", &paths, &fx.pipeline()).unwrap();
    assert_eq!(record.sample_count, 6);
    assert_eq!(record.embedding.len(), fx.encoder.d_embedding);
    assert_eq!(record.config_digest, fx.pipeline().digest());

    let store = EmbeddingStore::load(fx.store_path()).unwrap();
    let loaded = store.get("alice").unwrap();
    let bits = |e: &SpeakerEmbedding| e.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&loaded.embedding), bits(&record.embedding));
    assert_eq!(loaded, &record);

    // enrollment is exactly one inference pass
    let direct = fx.pipeline().embed(&paths).unwrap();
    assert_eq!(bits(&direct), bits(&record.embedding));
}

#[test]
fn duplicate_id_leaves_store_byte_identical() {
    let fx = Fixture::new();
    let paths = fx.clips(0, 3);
    enroll(fx.store_path(), "alice", &paths, &fx.pipeline()).unwrap();
    let before = bytes(&fx.store_path());
    let err = enroll(fx.store_path(), "alice", &fx.clips(1, 3), &fx.pipeline()).unwrap_err();
    assert!(
        matches!(err, EnrollError::DuplicateSpeaker(ref id) if id == "alice"),
        "{err}"
    );
    assert_eq!(bytes(&fx.store_path()), before);
}

#[test]
fn failures_name_the_path_and_leave_store_untouched() {
    let fx = Fixture::new();
    enroll(fx.store_path(), "alice", &fx.clips(0, 2), &fx.pipeline()).unwrap();
    let before = bytes(&fx.store_path());

    let mut paths = fx.clips(1, 3);
    let missing = fx.dir.path().join("missing.wav");
    paths.insert(1, missing.clone());
    let err = enroll(fx.store_path(), "bob", &paths, &fx.pipeline()).unwrap_err();
    match &err {
        EnrollError::Audio { path, .. } => assert_eq!(path, &missing),
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().contains("missing.wav"));
    assert_eq!(bytes(&fx.store_path()), before);

    // a clip too short to survive trimming
    let short = fx.dir.path().join("short.wav");
    save_wav(
        &AudioClip::new(vec![0.3; 200], fx.dsp.sample_rate).unwrap(),
        &short,
    )
    .unwrap();
    let mut paths = fx.clips(1, 2);
    paths.push(short.clone());
    let err = enroll(fx.store_path(), "bob", &paths, &fx.pipeline()).unwrap_err();
    match &err {
        EnrollError::Encoder { path, .. } => assert_eq!(path.as_deref(), Some(short.as_path())),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(bytes(&fx.store_path()), before);

    // a different DSP configuration cannot write into this store
    let mut other = Fixture::new();
    other.dsp.preemphasis = 0.9;
    let err = enroll(fx.store_path(), "bob", &fx.clips(1, 2), &other.pipeline()).unwrap_err();
    assert!(matches!(err, EnrollError::DigestMismatch { .. }), "{err}");
    assert_eq!(bytes(&fx.store_path()), before);
    assert!(!fx
        .dir
        .path()
        .read_dir()
        .unwrap()
        .any(|e| { e.unwrap().file_name().to_string_lossy().ends_with(".tmp") }));
}

#[test]
fn enrolled_speaker_is_its_own_nearest_neighbour() {
    let fx = Fixture::new();
    let clips: Vec<Vec<PathBuf>> = (0..3).map(|s| fx.clips(s, 3)).collect();
    for (s, paths) in clips.iter().enumerate() {
        enroll(fx.store_path(), &format!("spk{s}"), paths, &fx.pipeline()).unwrap();
    }
    let store = EmbeddingStore::load(fx.store_path()).unwrap();
    assert_eq!(store.len(), 3);
    for (s, paths) in clips.iter().enumerate() {
        let query = fx.pipeline().embed(paths).unwrap();
        let hits = nearest(&store, &query, 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].speaker_id, format!("spk{s}"));
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bench_report_orders_timings_and_echoes_references() {
    let fx = Fixture::new();
    let paths = fx.clips(0, 2);
    let report = bench_enroll(&paths, &fx.pipeline(), 3).unwrap();
    assert_eq!(report.samples, 2);
    assert_eq!(report.repetitions, 3);
    assert!(report.min_secs <= report.median_secs && report.median_secs <= report.max_secs);
    assert_eq!(report.encoder_reference, "11 sec.");
    assert_eq!(report.adaptation_reference, "15 min.");
    assert_eq!(ENCODER_REFERENCE, "11 sec.");
    assert_eq!(ADAPTATION_REFERENCE, "15 min.");
    assert!(matches!(
        bench_enroll(&paths, &fx.pipeline(), 2),
        Err(EnrollError::TooFewRepetitions(2))
    ));
    // benchmarking never creates a store
    assert!(!fx.store_path().exists());
}

fn store_of(embeddings: &[Vec<f64>]) -> EmbeddingStore {
    let d = embeddings[0].len();
    let mut store = EmbeddingStore::new(d, "digest".into());
    for (i, v) in embeddings.iter().enumerate() {
        store
            .insert(EnrollmentRecord {
                speaker_id: format!("id{:02}", embeddings.len() - i),
                embedding: SpeakerEmbedding::new(v.clone()),
                sample_count: 1,
                created_at: "2020-01-01T00:00:00+00:00".into(),
                config_digest: "digest".into(),
            })
            .unwrap();
    }
    store
}

fn nonzero(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
        .prop_filter("not all zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn nearest_is_sorted_and_clamped(
        embeddings in (1usize..6).prop_flat_map(|d| prop::collection::vec(nonzero(d), 1..8)),
        k in 1usize..10,
        pick in any::<prop::sample::Index>(),
    ) {
        let store = store_of(&embeddings);
        let query = SpeakerEmbedding::new(embeddings[pick.index(embeddings.len())].clone());
        let hits = nearest(&store, &query, k).unwrap();
        prop_assert_eq!(hits.len(), k.min(embeddings.len()));
        for w in hits.windows(2) {
            prop_assert!(w[0].similarity > w[1].similarity
                || (w[0].similarity == w[1].similarity && w[0].speaker_id < w[1].speaker_id));
        }
        prop_assert!((hits[0].similarity - 1.0).abs() < 1e-12);
        prop_assert!(hits.iter().all(|h| (-1.0..=1.0).contains(&h.similarity)));
    }

    #[test]
    fn store_json_round_trip_is_bit_exact(
        embeddings in (1usize..6).prop_flat_map(|d| prop::collection::vec(
            prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), d), 1..5)),
    ) {
        let store = store_of(&embeddings);
        let back = EmbeddingStore::from_json(&store.to_json()).unwrap();
        for (a, b) in store.records.iter().zip(&back.records) {
            let bits = |e: &SpeakerEmbedding| e.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.embedding), bits(&b.embedding));
        }
        prop_assert_eq!(back, store);
    }

    #[test]
    fn cosine_is_scale_invariant(v in nonzero(5), c in 0.01f64..100.0) {
        let a = SpeakerEmbedding::new(v.clone());
        let scaled = SpeakerEmbedding::new(v.iter().map(|x| c * x).collect());
        let neg = SpeakerEmbedding::new(v.iter().map(|x| -x).collect());
        prop_assert!((cosine_similarity(&a, &scaled).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
    }
}
