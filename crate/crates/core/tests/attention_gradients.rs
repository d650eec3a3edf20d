use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speakerkit::attention::{
    attention_pool, attention_pool_backward, AttentionConfig, AttentionParams,
};
use speakerkit::training::{central_difference, relative_error, FD_EPSILON, GRADCHECK_TOLERANCE};

struct Instance {
    cfg: AttentionConfig,
    params: AttentionParams,
    y: Array2<f64>,
    upstream: Array1<f64>,
}

fn instance(seed: u64, t: usize, d_in: usize, heads: usize, d_t: usize) -> Instance {
    let cfg = AttentionConfig::new(d_in, heads * d_t, heads).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = AttentionParams::init(&cfg, &mut rng);
    for m in params.matrices_mut() {
        m.mapv_inplace(|v| 2.0 * v);
    }
    let y = Array2::from_shape_simple_fn((t, d_in), || rng.random_range(-1.5..1.5));
    let upstream = Array1::from_shape_simple_fn(d_in, || rng.random_range(-1.0..1.0));
    Instance {
        cfg,
        params,
        y,
        upstream,
    }
}

// Central differences at FD_EPSILON carry rounding noise of roughly
// 1e-11 |f|; a group whose gradient is below 1e-7 |f| cannot be checked to
// the tolerance and is skipped.
fn resolvable(analytic: &[f64], f: f64) -> bool {
    analytic.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-7 * (1.0 + f.abs())
}

fn objective(inst: &Instance, params: &AttentionParams, y: &Array2<f64>) -> f64 {
    attention_pool(y, params, &inst.cfg)
        .unwrap()
        .pooled
        .dot(&inst.upstream)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_matrix_matches_central_differences(
        seed in any::<u64>(),
        t in 1usize..=6,
        d_in in 1usize..=4,
        heads in 1usize..=2,
        d_t in 1usize..=3,
    ) {
        let inst = instance(seed, t, d_in, heads, d_t);
        let grads = attention_pool_backward(&inst.y, &inst.params, &inst.cfg, inst.upstream.view()).unwrap();
        let f = objective(&inst, &inst.params, &inst.y);
        let mut checked = 0;

        for (g, (name, analytic)) in grads.params.named().into_iter().enumerate() {
            let (rows, cols) = analytic.dim();
            let mut numeric = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for j in 0..cols {
                    numeric.push(central_difference(FD_EPSILON, |d| {
                        let mut p = inst.params.clone();
                        p.matrices_mut()[g][[i, j]] += d;
                        objective(&inst, &p, &inst.y)
                    }));
                }
            }
            let a: Vec<f64> = analytic.iter().copied().collect();
            if resolvable(&a, f) {
                checked += 1;
                let err = relative_error(&a, &numeric);
                prop_assert!(err <= GRADCHECK_TOLERANCE, "{name}: {err:e}");
            }
        }
        prop_assume!(checked > 0);

        let mut numeric = Vec::new();
        for i in 0..t {
            for j in 0..d_in {
                numeric.push(central_difference(FD_EPSILON, |d| {
                    let mut y = inst.y.clone();
                    y[[i, j]] += d;
                    objective(&inst, &inst.params, &y)
                }));
            }
        }
        let a: Vec<f64> = grads.input.iter().copied().collect();
        prop_assume!(resolvable(&a, f));
        let err = relative_error(&a, &numeric);
        prop_assert!(err <= GRADCHECK_TOLERANCE, "input: {err:e}");
    }
}
