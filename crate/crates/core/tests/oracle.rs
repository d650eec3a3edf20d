//! The vectorized attention and cross-sample paths against the loop
//! reference on random instances.

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speakerkit::attention::attention_pool;
use speakerkit::encoder::{cross_sample_aggregate, per_sample_embeddings, spectral_process};
use speakerkit::reference;
use speakerkit::repro::oracle_instance;
use speakerkit::Execution;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fast_paths_match_reference(seed in any::<u64>(), t in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, params, e) = oracle_instance(&mut rng);
        let heads = cfg.cross.num_heads();

        let y = Array2::from_shape_simple_fn((t, cfg.f_mapped), || rng.random_range(-2.0..2.0));
        let fast = attention_pool(&y, &params.temporal, &cfg.temporal).unwrap();
        let (w, pooled) = reference::attention_pool(&y, &params.temporal, heads);
        prop_assert!(max_abs_diff(fast.weights.as_slice().unwrap(), &w) <= 1e-10);
        prop_assert!(max_abs_diff(fast.pooled.as_slice().unwrap(), &pooled) <= 1e-10);
        prop_assert!((fast.weights.sum() - 1.0).abs() < 1e-12);

        let fast = cross_sample_aggregate(&e, &params, &cfg).unwrap();
        let (w, emb) = reference::cross_sample_aggregate(&e, &params, heads);
        prop_assert!(max_abs_diff(fast.weights.as_slice().unwrap(), &w) <= 1e-10);
        prop_assert!(max_abs_diff(fast.embedding.values(), &emb) <= 1e-10);
    }

    #[test]
    fn execution_strategies_agree_bitwise(seed in any::<u64>(), j in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, params, _) = oracle_instance(&mut rng);
        let mels: Vec<Array2<f64>> = (0..j)
            .map(|_| {
                let frames = rng.random_range(1..8);
                Array2::from_shape_simple_fn((frames, cfg.d_mel), || rng.random_range(0.0..1.0))
            })
            .collect();
        let views: Vec<&Array2<f64>> = mels.iter().collect();
        let seq = per_sample_embeddings(&views, &params, &cfg, Execution::Sequential).unwrap();
        let par = per_sample_embeddings(&views, &params, &cfg, Execution::Parallel).unwrap();
        prop_assert_eq!(seq.clone(), par);
        // every row stays inside the range of its frames (convex pooling)
        for (row, mel) in seq.rows().into_iter().zip(&mels) {
            let y = spectral_process(mel, &params, &cfg).unwrap();
            for (f, &v) in row.iter().enumerate() {
                let col = y.column(f);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
