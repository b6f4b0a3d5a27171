//! Initialization and the forward pass.

use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::geodata::{PoiId, MAX_SEQ_LEN};
use crate::rng;
use crate::Result;

use super::{InitSpec, ModelParams, SUPPORTED_DIMS};

/// Output of one forward pass over a prefix.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Attention weights over the prefix tokens.
    pub attention: Vec<f64>,
    /// The pooled pre-output feature (what the attack consumes).
    pub feature: Array1<f64>,
    /// Per-POI logits `E · feature`.
    pub scores: Array1<f64>,
    /// Softmax of the scores.
    pub probs: Array1<f64>,
}

/// Draw a fresh model from the experiment's shared initial distribution.
/// Deterministic given the spec; two users with the same dimension start from
/// bit-identical parameters.
pub fn init_model(poi_count: usize, dim: usize, spec: &InitSpec) -> Result<ModelParams> {
    if !SUPPORTED_DIMS.contains(&dim) {
        return Err(Error::invalid(format!(
            "unsupported latent dimension {dim}; pick one of {SUPPORTED_DIMS:?}"
        )));
    }
    if poi_count == 0 {
        return Err(Error::invalid("poi_count must be positive"));
    }
    let normal = Normal::new(spec.mean, spec.std)
        .map_err(|e| Error::invalid(format!("bad init distribution: {e}")))?;
    let mut rng = rng::stream(spec.seed, "init-model", &[dim as u64]);
    let mut draw = |shape: (usize, usize)| {
        Array2::from_shape_simple_fn(shape, || normal.sample(&mut rng))
    };
    Ok(ModelParams {
        embeddings: draw((poi_count, dim)),
        query_weights: draw((dim, dim)),
        key_weights: draw((dim, dim)),
        position_weights: draw((MAX_SEQ_LEN, dim)),
    })
}

/// Token vectors: embedding row plus position row, one row per prefix slot.
pub(crate) fn token_matrix(params: &ModelParams, prefix: &[PoiId]) -> Array2<f64> {
    let dim = params.dim();
    let mut x = Array2::zeros((prefix.len(), dim));
    for (j, &p) in prefix.iter().enumerate() {
        let row = &params.embeddings.row(p) + &params.position_weights.row(j);
        x.row_mut(j).assign(&row);
    }
    x
}

/// Attention step `t`: softmax over scaled query/key dots of tokens `0..=t`,
/// query taken from token `t`. Returns the weights and the pooled feature.
pub(crate) fn attention_step(
    x: &Array2<f64>,
    keys: &Array2<f64>,
    query: ArrayView1<f64>,
    t: usize,
) -> (Vec<f64>, Array1<f64>) {
    let scale = 1.0 / (x.ncols() as f64).sqrt();
    let mut logits: Vec<f64> = (0..=t).map(|j| query.dot(&keys.row(j)) * scale).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
    let mut feature = Array1::zeros(x.ncols());
    for (j, &w) in logits.iter().enumerate() {
        feature.scaled_add(w, &x.row(j));
    }
    (logits, feature)
}

pub(crate) fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = scores.mapv(|s| (s - max).exp());
    let total = out.sum();
    out /= total;
    out
}

/// Full forward pass over a prefix (inference; no dropout).
pub fn forward(params: &ModelParams, prefix: &[PoiId]) -> Result<ForwardOutput> {
    params.check_prefix(prefix)?;
    let x = token_matrix(params, prefix);
    let keys = x.dot(&params.key_weights.t());
    let query = x.row(prefix.len() - 1).dot(&params.query_weights.t());
    let (attention, feature) = attention_step(&x, &keys, query.view(), prefix.len() - 1);
    let scores = params.embeddings.dot(&feature);
    let probs = softmax(&scores);
    Ok(ForwardOutput {
        attention,
        feature,
        scores,
        probs,
    })
}
