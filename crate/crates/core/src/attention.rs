//! Multi-head self-attention pooling with an exact reverse-mode backward
//! pass.
//!
//! Forward, for input rows `Y` (`T x d_in`):
//!
//! ```text
//! K' = ELU(Y Wk'),  Q' = ELU(Y Wq'),  V' = ELU(Y Wv')        T x d_attn
//! K_i = K' Wk_i,    Q_i = Q' Wq_i,    V_i = V' Wv_i          T x d_t
//! head_i = softmax_rows(Q_i K_i^T / sqrt(d_t)) V_i           T x d_t
//! a = softmax(concat(head_1 .. head_I) Wo)                   T
//! pooled = sum_t a_t Y_t                                     d_in
//! ```
//!
//! There is no positional term, so `pooled` is invariant to row order.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("attention dimension {d_attn} is not divisible by {num_heads} heads")]
    IndivisibleHeads { d_attn: usize, num_heads: usize },
    #[error("attention dimensions must be at least 1")]
    ZeroDimension,
    #[error("cannot take softmax of an empty vector")]
    EmptyVector,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Dimensions of one attention block. `d_t = d_attn / num_heads`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAttentionConfig")]
pub struct AttentionConfig {
    d_in: usize,
    d_attn: usize,
    num_heads: usize,
}

#[derive(Deserialize)]
struct RawAttentionConfig {
    d_in: usize,
    d_attn: usize,
    num_heads: usize,
}

impl TryFrom<RawAttentionConfig> for AttentionConfig {
    type Error = AttentionError;
    fn try_from(r: RawAttentionConfig) -> Result<Self, Self::Error> {
        AttentionConfig::new(r.d_in, r.d_attn, r.num_heads)
    }
}

impl AttentionConfig {
    pub fn new(d_in: usize, d_attn: usize, num_heads: usize) -> Result<Self, AttentionError> {
        if d_in == 0 || d_attn == 0 || num_heads == 0 {
            return Err(AttentionError::ZeroDimension);
        }
        if !d_attn.is_multiple_of(num_heads) {
            return Err(AttentionError::IndivisibleHeads { d_attn, num_heads });
        }
        Ok(Self {
            d_in,
            d_attn,
            num_heads,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_attn(&self) -> usize {
        self.d_attn
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn d_t(&self) -> usize {
        self.d_attn / self.num_heads
    }
}

/// Weights of one attention block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub pre_k: Array2<f64>,
    pub pre_q: Array2<f64>,
    pub pre_v: Array2<f64>,
    pub head_k: Vec<Array2<f64>>,
    pub head_q: Vec<Array2<f64>>,
    pub head_v: Vec<Array2<f64>>,
    /// `d_attn x 1` score projection.
    pub out: Array2<f64>,
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, fan-in = rows.
pub(crate) fn init_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

impl AttentionParams {
    pub fn init<R: Rng>(cfg: &AttentionConfig, rng: &mut R) -> Self {
        let (d_in, d_attn, d_t, h) = (cfg.d_in, cfg.d_attn, cfg.d_t(), cfg.num_heads);
        let pre_k = init_matrix(rng, d_in, d_attn);
        let pre_q = init_matrix(rng, d_in, d_attn);
        let pre_v = init_matrix(rng, d_in, d_attn);
        let head_k = (0..h).map(|_| init_matrix(rng, d_attn, d_t)).collect();
        let head_q = (0..h).map(|_| init_matrix(rng, d_attn, d_t)).collect();
        let head_v = (0..h).map(|_| init_matrix(rng, d_attn, d_t)).collect();
        let out = init_matrix(rng, d_attn, 1);
        Self {
            pre_k,
            pre_q,
            pre_v,
            head_k,
            head_q,
            head_v,
            out,
        }
    }

    pub fn zeros(cfg: &AttentionConfig) -> Self {
        let (d_in, d_attn, d_t, h) = (cfg.d_in, cfg.d_attn, cfg.d_t(), cfg.num_heads);
        Self {
            pre_k: Array2::zeros((d_in, d_attn)),
            pre_q: Array2::zeros((d_in, d_attn)),
            pre_v: Array2::zeros((d_in, d_attn)),
            head_k: vec![Array2::zeros((d_attn, d_t)); h],
            head_q: vec![Array2::zeros((d_attn, d_t)); h],
            head_v: vec![Array2::zeros((d_attn, d_t)); h],
            out: Array2::zeros((d_attn, 1)),
        }
    }

    /// Checks every matrix shape against `cfg`.
    pub fn check(&self, cfg: &AttentionConfig) -> Result<(), AttentionError> {
        let (d_in, d_attn, d_t, h) = (cfg.d_in, cfg.d_attn, cfg.d_t(), cfg.num_heads);
        let mut problems = Vec::new();
        for (name, m) in [
            ("pre_k", &self.pre_k),
            ("pre_q", &self.pre_q),
            ("pre_v", &self.pre_v),
        ] {
            if m.dim() != (d_in, d_attn) {
                problems.push(format!(
                    "{name} is {:?}, expected {:?}",
                    m.dim(),
                    (d_in, d_attn)
                ));
            }
        }
        for (name, heads) in [
            ("head_k", &self.head_k),
            ("head_q", &self.head_q),
            ("head_v", &self.head_v),
        ] {
            if heads.len() != h {
                problems.push(format!("{name} has {} heads, expected {h}", heads.len()));
            } else if let Some(m) = heads.iter().find(|m| m.dim() != (d_attn, d_t)) {
                problems.push(format!(
                    "{name} head is {:?}, expected {:?}",
                    m.dim(),
                    (d_attn, d_t)
                ));
            }
        }
        if self.out.dim() != (d_attn, 1) {
            problems.push(format!(
                "out is {:?}, expected {:?}",
                self.out.dim(),
                (d_attn, 1)
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AttentionError::ShapeMismatch(problems.join("; ")))
        }
    }

    /// Named views over every matrix, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = vec![
            ("pre_k".to_string(), &self.pre_k),
            ("pre_q".to_string(), &self.pre_q),
            ("pre_v".to_string(), &self.pre_v),
        ];
        for (name, heads) in [
            ("head_k", &self.head_k),
            ("head_q", &self.head_q),
            ("head_v", &self.head_v),
        ] {
            v.extend(
                heads
                    .iter()
                    .enumerate()
                    .map(|(i, m)| (format!("{name}[{i}]"), m)),
            );
        }
        v.push(("out".to_string(), &self.out));
        v
    }

    /// Mutable matrices in the same order as [`AttentionParams::named`].
    pub fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.pre_k, &mut self.pre_q, &mut self.pre_v];
        v.extend(self.head_k.iter_mut());
        v.extend(self.head_q.iter_mut());
        v.extend(self.head_v.iter_mut());
        v.push(&mut self.out);
        v
    }
}

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of [`elu`] expressed in terms of its input.
pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Max-shifted softmax.
pub fn softmax(scores: ArrayView1<f64>) -> Result<Array1<f64>, AttentionError> {
    if scores.is_empty() {
        return Err(AttentionError::EmptyVector);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = scores.mapv(|s| (s - max).exp());
    let sum = exp.sum();
    Ok(exp / sum)
}

fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let sm = softmax(row.view()).expect("rows are non-empty");
        row.assign(&sm);
    }
    out
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pre_act: [Array2<f64>; 3],
    post_act: [Array2<f64>; 3],
    /// Per head: (K_i, Q_i, V_i, P_i).
    heads: Vec<[Array2<f64>; 4]>,
    concat: Array2<f64>,
    pub weights: Array1<f64>,
    pub pooled: Array1<f64>,
}

/// Output of [`attention_pool`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub weights: Array1<f64>,
    pub pooled: Array1<f64>,
}

fn check_input(y: &Array2<f64>, cfg: &AttentionConfig) -> Result<(), AttentionError> {
    if y.nrows() == 0 {
        return Err(AttentionError::ShapeMismatch("input has no rows".into()));
    }
    if y.ncols() != cfg.d_in {
        return Err(AttentionError::ShapeMismatch(format!(
            "input has {} columns, expected d_in = {}",
            y.ncols(),
            cfg.d_in
        )));
    }
    Ok(())
}

/// Forward pass, keeping every intermediate.
pub fn attention_forward(
    y: &Array2<f64>,
    params: &AttentionParams,
    cfg: &AttentionConfig,
) -> Result<AttentionTrace, AttentionError> {
    check_input(y, cfg)?;
    params.check(cfg)?;
    let pre_act = [
        y.dot(&params.pre_k),
        y.dot(&params.pre_q),
        y.dot(&params.pre_v),
    ];
    let post_act = [
        pre_act[0].mapv(elu),
        pre_act[1].mapv(elu),
        pre_act[2].mapv(elu),
    ];
    let scale = 1.0 / (cfg.d_t() as f64).sqrt();
    let d_t = cfg.d_t();
    let mut concat = Array2::zeros((y.nrows(), cfg.d_attn));
    let mut heads = Vec::with_capacity(cfg.num_heads);
    for i in 0..cfg.num_heads {
        let k = post_act[0].dot(&params.head_k[i]);
        let q = post_act[1].dot(&params.head_q[i]);
        let v = post_act[2].dot(&params.head_v[i]);
        let p = softmax_rows(&(q.dot(&k.t()) * scale));
        concat
            .slice_mut(s![.., i * d_t..(i + 1) * d_t])
            .assign(&p.dot(&v));
        heads.push([k, q, v, p]);
    }
    let scores = concat.dot(&params.out).column(0).to_owned();
    let weights = softmax(scores.view())?;
    let pooled = weights.dot(y);
    Ok(AttentionTrace {
        pre_act,
        post_act,
        heads,
        concat,
        weights,
        pooled,
    })
}

/// Attention weights over the rows of `y` and the weighted row average.
pub fn attention_pool(
    y: &Array2<f64>,
    params: &AttentionParams,
    cfg: &AttentionConfig,
) -> Result<Pooled, AttentionError> {
    let trace = attention_forward(y, params, cfg)?;
    Ok(Pooled {
        weights: trace.weights,
        pooled: trace.pooled,
    })
}

/// Gradients of `upstream . pooled` with respect to the input rows and
/// every parameter.
#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub input: Array2<f64>,
    pub params: AttentionParams,
}

/// Backward pass from a recorded trace.
pub fn attention_backward_from_trace(
    y: &Array2<f64>,
    params: &AttentionParams,
    cfg: &AttentionConfig,
    trace: &AttentionTrace,
    upstream: ArrayView1<f64>,
) -> Result<AttentionGrads, AttentionError> {
    if upstream.len() != cfg.d_in {
        return Err(AttentionError::ShapeMismatch(format!(
            "upstream gradient has length {}, expected {}",
            upstream.len(),
            cfg.d_in
        )));
    }
    let d_t = cfg.d_t();
    let scale = 1.0 / (d_t as f64).sqrt();
    let a = &trace.weights;

    // pooled = a^T Y
    let mut d_y = outer(a.view(), upstream);
    let d_a = y.dot(&upstream);
    let d_scores = a * &(&d_a - a.dot(&d_a));

    let mut grads = AttentionParams::zeros(cfg);
    grads.out = outer(
        trace.concat.t().dot(&d_scores).view(),
        ArrayView1::from(&[1.0]),
    );
    let d_concat = outer(d_scores.view(), params.out.column(0));

    let mut d_post = [
        Array2::zeros(trace.post_act[0].raw_dim()),
        Array2::zeros(trace.post_act[1].raw_dim()),
        Array2::zeros(trace.post_act[2].raw_dim()),
    ];
    for (i, [k, q, v, p]) in trace.heads.iter().enumerate() {
        let d_head = d_concat.slice(s![.., i * d_t..(i + 1) * d_t]);
        let d_p = d_head.dot(&v.t());
        let d_v = p.t().dot(&d_head);
        // row-wise softmax Jacobian
        let row_dot = (&d_p * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let d_s = p * &(&d_p - &row_dot) * scale;
        let d_q = d_s.dot(k);
        let d_k = d_s.t().dot(q);

        grads.head_k[i] = trace.post_act[0].t().dot(&d_k);
        grads.head_q[i] = trace.post_act[1].t().dot(&d_q);
        grads.head_v[i] = trace.post_act[2].t().dot(&d_v);
        d_post[0] += &d_k.dot(&params.head_k[i].t());
        d_post[1] += &d_q.dot(&params.head_q[i].t());
        d_post[2] += &d_v.dot(&params.head_v[i].t());
    }

    let pre_weights = [&params.pre_k, &params.pre_q, &params.pre_v];
    let mut pre_grads = Vec::with_capacity(3);
    for c in 0..3 {
        let d_pre = &d_post[c] * &trace.pre_act[c].mapv(elu_grad);
        pre_grads.push(y.t().dot(&d_pre));
        d_y += &d_pre.dot(&pre_weights[c].t());
    }
    let mut it = pre_grads.into_iter();
    grads.pre_k = it.next().unwrap();
    grads.pre_q = it.next().unwrap();
    grads.pre_v = it.next().unwrap();

    Ok(AttentionGrads {
        input: d_y,
        params: grads,
    })
}

/// Runs the forward pass and backpropagates `upstream` through `pooled`.
pub fn attention_pool_backward(
    y: &Array2<f64>,
    params: &AttentionParams,
    cfg: &AttentionConfig,
    upstream: ArrayView1<f64>,
) -> Result<AttentionGrads, AttentionError> {
    let trace = attention_forward(y, params, cfg)?;
    attention_backward_from_trace(y, params, cfg, &trace, upstream)
}

pub(crate) fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
