use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoder::{embed_features, encoder_backward, EncoderConfig, EncoderParams, Variant};
use crate::exec::Execution;

pub const FD_EPSILON: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

// At initialization scale two similar samples give near-uniform attention
// and gradients far below finite-difference resolution.
const WEIGHT_SCALE: f64 = 3.0;

/// `(f(+eps) - f(-eps)) / (2 eps)`.
pub fn central_difference(eps: f64, f: impl Fn(f64) -> f64) -> f64 {
    (f(eps) - f(-eps)) / (2.0 * eps)
}

/// `||a - n|| / (||a|| + ||n||)` over a whole group; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// The small instance used for verification: `d_mel` 5, `f_mapped` 3,
/// two heads over `d_attn` 4, `d_embedding` 3.
pub fn gradcheck_config(variant: Variant) -> EncoderConfig {
    EncoderConfig::new(5, 3, 4, 2, 3, 6, variant).expect("valid dimensions")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub variant: Variant,
    pub group: String,
    pub entries: usize,
    pub relative_error: f64,
    pub analytic_max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.groups.iter().all(|g| g.relative_error <= tolerance)
    }
}

/// Central finite differences over every encoder parameter on two cloning
/// samples of four frames each, for both variants. Weights are widened
/// beyond their init range and the two samples draw from disjoint mel
/// ranges so that every group has a resolvable gradient. The scalar
/// objective is a fixed random projection of the embedding.
pub fn gradient_check_suite(cfg: &EncoderConfig, seed: u64) -> GradCheckReport {
    gradient_check_suite_with(Execution::default(), cfg, seed)
}

pub fn gradient_check_suite_with(
    exec: Execution,
    cfg: &EncoderConfig,
    seed: u64,
) -> GradCheckReport {
    let mut groups = Vec::new();
    for variant in [Variant::T1, Variant::T2] {
        let cfg = cfg.with_variant(variant);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = EncoderParams::init(&cfg, rng.random());
        for m in params.matrices_mut() {
            m.mapv_inplace(|v| v * WEIGHT_SCALE);
        }
        let mels: Vec<Array2<f64>> = (0..2)
            .map(|s| {
                let lo = 0.5 * s as f64;
                Array2::from_shape_simple_fn((4, cfg.d_mel), || rng.random_range(lo..lo + 0.5))
            })
            .collect();
        let upstream =
            Array1::from_shape_simple_fn(cfg.d_embedding, || rng.random_range(-1.0..1.0));
        let views: Vec<&Array2<f64>> = mels.iter().collect();

        let analytic = encoder_backward(
            &views,
            &params,
            &cfg,
            upstream.view(),
            Execution::Sequential,
        )
        .expect("consistent instance");
        let objective = |p: &EncoderParams| -> f64 {
            let e = embed_features(&views, p, &cfg, Execution::Sequential)
                .expect("consistent instance");
            e.values()
                .iter()
                .zip(upstream.iter())
                .map(|(a, b)| a * b)
                .sum()
        };

        let named = analytic.params.named();
        let coords: Vec<(usize, usize, usize)> = named
            .iter()
            .enumerate()
            .flat_map(|(g, (_, m))| {
                let (r, c) = m.dim();
                (0..r).flat_map(move |i| (0..c).map(move |j| (g, i, j)))
            })
            .collect();
        let numeric = exec.map(&coords, |&(g, i, j)| {
            central_difference(FD_EPSILON, |d| {
                let mut p = params.clone();
                p.matrices_mut()[g][[i, j]] += d;
                objective(&p)
            })
        });

        let mut offset = 0;
        for (name, m) in &named {
            let a: Vec<f64> = m.iter().copied().collect();
            let n = &numeric[offset..offset + a.len()];
            offset += a.len();
            groups.push(GroupError {
                variant,
                group: name.clone(),
                entries: a.len(),
                relative_error: relative_error(&a, n),
                analytic_max_abs: a.iter().fold(0.0, |x, y| x.max(y.abs())),
            });
        }
    }
    GradCheckReport { groups }
}
