//! Analytic gradients.
//!
//! Three reverse paths share the attention backward:
//!
//! - the cross-entropy training loss (all prefix steps, optional dropout);
//! - a gradient arriving on the full-sequence score vector (used by the
//!   shadow-model and distillation squared-error losses);
//! - a gradient arriving directly on the pooled feature (used by the defense
//!   loss, which reaches the model through the attack MLP, not the scores).

use ndarray::{s, Array1, Array2, ArrayView1};
use ndarray::linalg::general_mat_mul;

use crate::geodata::PoiId;
use crate::Result;

use super::model::{attention_step, token_matrix};
use super::ModelParams;

/// Gradient record with the same shape as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embeddings: Array2<f64>,
    pub query_weights: Array2<f64>,
    pub key_weights: Array2<f64>,
    pub position_weights: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Gradients {
        Gradients {
            embeddings: Array2::zeros(params.embeddings.raw_dim()),
            query_weights: Array2::zeros(params.query_weights.raw_dim()),
            key_weights: Array2::zeros(params.key_weights.raw_dim()),
            position_weights: Array2::zeros(params.position_weights.raw_dim()),
        }
    }

    pub fn reset(&mut self) {
        self.embeddings.fill(0.0);
        self.query_weights.fill(0.0);
        self.key_weights.fill(0.0);
        self.position_weights.fill(0.0);
    }
}

impl ModelParams {
    /// `params += scale * grads` across every group.
    pub fn step(&mut self, grads: &Gradients, scale: f64) {
        self.embeddings.scaled_add(scale, &grads.embeddings);
        self.query_weights.scaled_add(scale, &grads.query_weights);
        self.key_weights.scaled_add(scale, &grads.key_weights);
        self.position_weights.scaled_add(scale, &grads.position_weights);
    }
}

/// Softmax vector-Jacobian product: gradient on logits given gradient on
/// probabilities.
pub fn softmax_vjp(probs: ArrayView1<f64>, dprobs: ArrayView1<f64>) -> Array1<f64> {
    let inner = probs.dot(&dprobs);
    let mut out = Array1::zeros(probs.len());
    for (o, (&p, &g)) in out.iter_mut().zip(probs.iter().zip(dprobs.iter())) {
        *o = p * (g - inner);
    }
    out
}

/// Cached per-sequence projections.
pub(crate) struct SeqState {
    pub x: Array2<f64>,
    pub keys: Array2<f64>,
    pub queries: Array2<f64>,
}

impl SeqState {
    pub fn new(params: &ModelParams, prefix: &[PoiId]) -> SeqState {
        let x = token_matrix(params, prefix);
        let keys = x.dot(&params.key_weights.t());
        let queries = x.dot(&params.query_weights.t());
        SeqState { x, keys, queries }
    }
}

/// Accumulator for the attention-side backward over a sequence. Per-step
/// gradients land in dense buffers; the projection and scatter work is
/// deferred to one GEMM pass in [`SeqBackward::finish`].
pub(crate) struct SeqBackward<'a> {
    state: &'a SeqState,
    dx: Array2<f64>,
    dq: Array2<f64>,
    dk: Array2<f64>,
}

impl<'a> SeqBackward<'a> {
    pub fn new(state: &'a SeqState) -> SeqBackward<'a> {
        let shape = state.x.raw_dim();
        SeqBackward {
            state,
            dx: Array2::zeros(shape.clone()),
            dq: Array2::zeros(shape.clone()),
            dk: Array2::zeros(shape),
        }
    }

    /// Backward through attention step `t` given the gradient on its pooled
    /// feature.
    pub fn step(&mut self, attn: &[f64], t: usize, dh: ArrayView1<f64>) {
        let dim = self.state.x.ncols();
        let scale = 1.0 / (dim as f64).sqrt();
        let tokens = self.state.x.slice(s![0..=t, ..]);
        let keys = self.state.keys.slice(s![0..=t, ..]);
        let query = self.state.queries.row(t);

        // h = sum_j w_j x_j
        let dw = tokens.dot(&dh);
        let inner: f64 = attn.iter().zip(dw.iter()).map(|(w, g)| w * g).sum();
        let da: Array1<f64> = attn
            .iter()
            .zip(dw.iter())
            .map(|(w, g)| w * (g - inner) * scale)
            .collect();

        // a_j = (q . k_j) * scale
        self.dq.row_mut(t).scaled_add(1.0, &keys.t().dot(&da));
        for (j, &a) in da.iter().enumerate() {
            self.dk.row_mut(j).scaled_add(a, &query);
            self.dx.row_mut(j).scaled_add(attn[j], &dh);
        }
    }

    /// Fold the accumulated attention gradients into the parameter record.
    pub fn finish(self, params: &ModelParams, prefix: &[PoiId], grads: &mut Gradients) {
        let SeqBackward {
            state,
            mut dx,
            dq,
            dk,
        } = self;
        // q_t = Wq x_t and k_j = Wk x_j, all rows at once.
        general_mat_mul(1.0, &dq.t(), &state.x, 1.0, &mut grads.query_weights);
        general_mat_mul(1.0, &dk.t(), &state.x, 1.0, &mut grads.key_weights);
        general_mat_mul(1.0, &dq, &params.query_weights, 1.0, &mut dx);
        general_mat_mul(1.0, &dk, &params.key_weights, 1.0, &mut dx);

        // x_j = E[p_j] + Pos[j]
        for (j, &p) in prefix.iter().enumerate() {
            grads.embeddings.row_mut(p).scaled_add(1.0, &dx.row(j));
            grads
                .position_weights
                .row_mut(j)
                .scaled_add(1.0, &dx.row(j));
        }
    }
}

/// Backprop a gradient that arrives on the full-sequence score vector.
/// Covers both the tied output layer (`scores = E h`) and the attention path.
pub fn score_grad_full(
    params: &ModelParams,
    prefix: &[PoiId],
    dscore: ArrayView1<f64>,
    grads: &mut Gradients,
) -> Result<()> {
    params.check_prefix(prefix)?;
    let t = prefix.len() - 1;
    let state = SeqState::new(params, prefix);
    let (attn, feature) = attention_step(&state.x, &state.keys, state.queries.row(t), t);

    // scores = E h: dE += ds (x) h, dh = E^T ds.
    for (i, &ds) in dscore.iter().enumerate() {
        grads.embeddings.row_mut(i).scaled_add(ds, &feature);
    }
    let dh = params.embeddings.t().dot(&dscore);

    let mut back = SeqBackward::new(&state);
    back.step(&attn, t, dh.view());
    back.finish(params, prefix, grads);
    Ok(())
}

/// Backprop a gradient that arrives directly on the pooled feature of the
/// full sequence (no score path).
pub fn feature_grad(
    params: &ModelParams,
    prefix: &[PoiId],
    dfeature: ArrayView1<f64>,
    grads: &mut Gradients,
) -> Result<()> {
    params.check_prefix(prefix)?;
    let t = prefix.len() - 1;
    let state = SeqState::new(params, prefix);
    let (attn, _) = attention_step(&state.x, &state.keys, state.queries.row(t), t);
    let mut back = SeqBackward::new(&state);
    back.step(&attn, t, dfeature);
    back.finish(params, prefix, grads);
    Ok(())
}
