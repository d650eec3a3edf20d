//! Straight-line reference evaluation of the pooling equations.
//!
//! Nothing here shares code with [`crate::attention`] or [`crate::encoder`]:
//! matrices are copied into nested `Vec`s and every product is an explicit
//! loop. It exists to cross-check the optimized paths and is slow.

#![allow(clippy::needless_range_loop)]

use ndarray::Array2;

use crate::attention::AttentionParams;
use crate::encoder::EncoderParams;

type Mat = Vec<Vec<f64>>;

fn to_rows(m: &Array2<f64>) -> Mat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[[i, j]]).collect())
        .collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let inner = b.len();
    let m = if inner == 0 { 0 } else { b[0].len() };
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += a[i][k] * b[k][j];
            }
            c[i][j] = acc;
        }
    }
    c
}

fn elu_all(a: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            row.iter()
                .map(|&x| if x >= 0.0 { x } else { x.exp() - 1.0 })
                .collect()
        })
        .collect()
}

fn softmax_vec(x: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &v in x {
        if v > max {
            max = v;
        }
    }
    let mut e = Vec::with_capacity(x.len());
    let mut total = 0.0;
    for &v in x {
        let t = (v - max).exp();
        total += t;
        e.push(t);
    }
    for v in e.iter_mut() {
        *v /= total;
    }
    e
}

/// Attention weights over the rows of `y` and the weighted average row.
pub fn attention_pool(
    y: &Array2<f64>,
    params: &AttentionParams,
    num_heads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let y = to_rows(y);
    let t = y.len();
    let d_in = y[0].len();
    let k_act = elu_all(&matmul(&y, &to_rows(&params.pre_k)));
    let q_act = elu_all(&matmul(&y, &to_rows(&params.pre_q)));
    let v_act = elu_all(&matmul(&y, &to_rows(&params.pre_v)));
    let d_attn = params.out.nrows();
    let d_t = d_attn / num_heads;

    let mut concat = vec![vec![0.0; d_attn]; t];
    for h in 0..num_heads {
        let k = matmul(&k_act, &to_rows(&params.head_k[h]));
        let q = matmul(&q_act, &to_rows(&params.head_q[h]));
        let v = matmul(&v_act, &to_rows(&params.head_v[h]));
        for r in 0..t {
            let mut logits = vec![0.0; t];
            for (c, logit) in logits.iter_mut().enumerate() {
                let mut dot = 0.0;
                for x in 0..d_t {
                    dot += q[r][x] * k[c][x];
                }
                *logit = dot / (d_t as f64).sqrt();
            }
            let p = softmax_vec(&logits);
            for x in 0..d_t {
                let mut acc = 0.0;
                for c in 0..t {
                    acc += p[c] * v[c][x];
                }
                concat[r][h * d_t + x] = acc;
            }
        }
    }

    let mut scores = vec![0.0; t];
    for r in 0..t {
        for x in 0..d_attn {
            scores[r] += concat[r][x] * params.out[[x, 0]];
        }
    }
    let a = softmax_vec(&scores);
    let mut pooled = vec![0.0; d_in];
    for r in 0..t {
        for x in 0..d_in {
            pooled[x] += a[r] * y[r][x];
        }
    }
    (a, pooled)
}

/// Cross-sample weights and the embedding `sum_j a_j (e_j W_s)`.
pub fn cross_sample_aggregate(
    per_sample: &Array2<f64>,
    params: &EncoderParams,
    num_heads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (a, _) = attention_pool(per_sample, &params.cross, num_heads);
    let e = to_rows(per_sample);
    let w = to_rows(&params.projection);
    let d_emb = w[0].len();
    let mut out = vec![0.0; d_emb];
    for (j, row) in e.iter().enumerate() {
        for d in 0..d_emb {
            let mut proj = 0.0;
            for (f, &x) in row.iter().enumerate() {
                proj += x * w[f][d];
            }
            out[d] += a[j] * proj;
        }
    }
    (a, out)
}
