//! The attack classifier: an MLP with hidden widths 64/32/8, ReLU
//! activations, and a two-way softmax head. Head 0 carries the probability
//! that the target POI was visited, head 1 the opposite; a member training
//! sample therefore drives head 0 up.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::recsys::snapshot;
use crate::recsys::softmax_vjp;
use crate::rng;
use crate::Result;

use super::AttackSample;

/// Hidden layer widths, fixed by the experimental setting.
pub const HIDDEN_WIDTHS: [usize; 3] = [64, 32, 8];

/// Output head that carries the visited probability.
pub const VISITED_HEAD: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    /// out × in.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// The binary attack classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackMlp {
    pub layers: Vec<MlpLayer>,
}

/// SGD settings for attack-classifier training.
#[derive(Debug, Clone, Copy)]
pub struct MlpTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            learning_rate: 0.05,
            epochs: 300,
            batch_size: 32,
        }
    }
}

impl AttackMlp {
    /// Fresh classifier for features of width `input_dim`, He-initialized.
    pub fn new(input_dim: usize, seed: u64) -> Result<AttackMlp> {
        if input_dim == 0 {
            return Err(Error::invalid("attack MLP input width must be positive"));
        }
        let mut rng = rng::stream(seed, "attack-mlp-init", &[input_dim as u64]);
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(HIDDEN_WIDTHS)
            .chain(std::iter::once(2))
            .collect();
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                MlpLayer {
                    weights: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                        normal.sample(&mut rng)
                    }),
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(AttackMlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Post-activation values per layer; the last entry is the softmax output.
    fn activations(&self, input: ArrayView1<f64>) -> Vec<Array1<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut current = input.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(&current) + &layer.biases;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                z.mapv_inplace(|v| (v - max).exp());
                let total = z.sum();
                z /= total;
            }
            acts.push(z.clone());
            current = z;
        }
        acts
    }

    /// The (visited, not visited) probability pair for a feature vector.
    pub fn predict(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "feature width {} does not match attack MLP input {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(self.activations(input).pop().unwrap())
    }

    /// Probability that the POI behind `input` was visited.
    pub fn visited_probability(&self, input: ArrayView1<f64>) -> Result<f64> {
        Ok(self.predict(input)?[VISITED_HEAD])
    }

    /// Backward pass from a gradient on the output probabilities. Accumulates
    /// parameter gradients into `grads` (if given) and returns the gradient
    /// on the input vector.
    fn backward(
        &self,
        input: ArrayView1<f64>,
        acts: &[Array1<f64>],
        dprobs: ArrayView1<f64>,
        mut grads: Option<&mut MlpGradients>,
    ) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut delta = softmax_vjp(acts[last].view(), dprobs);
        for l in (0..self.layers.len()).rev() {
            let below = if l == 0 {
                input.to_owned()
            } else {
                acts[l - 1].clone()
            };
            if let Some(g) = grads.as_deref_mut() {
                for (r, &d) in delta.iter().enumerate() {
                    g.layers[l].weights.row_mut(r).scaled_add(d, &below);
                }
                g.layers[l].biases.scaled_add(1.0, &delta);
            }
            let mut dbelow = self.layers[l].weights.t().dot(&delta);
            if l > 0 {
                // ReLU mask of the layer below.
                for (v, &a) in dbelow.iter_mut().zip(acts[l - 1].iter()) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = dbelow;
        }
        delta
    }

    /// Gradient of a scalar loss on the visited-head probability with respect
    /// to the input feature (the pathway the defense differentiates through).
    pub fn input_gradient(&self, input: ArrayView1<f64>, dvisited: f64) -> Result<Array1<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid("feature width mismatch"));
        }
        let acts = self.activations(input);
        let mut dprobs = Array1::zeros(2);
        dprobs[VISITED_HEAD] = dvisited;
        Ok(self.backward(input, &acts, dprobs.view(), None))
    }
}

/// Gradient record mirroring the classifier's layers.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<MlpLayer>,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &AttackMlp) -> MlpGradients {
        MlpGradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| MlpLayer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for l in self.layers.iter_mut() {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }
}

impl AttackMlp {
    pub fn step(&mut self, grads: &MlpGradients, scale: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.scaled_add(scale, &g.weights);
            l.biases.scaled_add(scale, &g.biases);
        }
    }
}

/// Binary cross-entropy over samples, with the head pairing such that a
/// member label drives the visited head: summed
/// `-(y log a1 + (1-y) log a0)` where `y = 1 - label`.
pub fn ptia_loss(mlp: &AttackMlp, samples: &[AttackSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let probs = mlp.predict(s.input.view())?;
        let y = 1.0 - f64::from(s.label);
        total -= y * probs[1].max(1e-300).ln() + (1.0 - y) * probs[0].max(1e-300).ln();
    }
    Ok(total)
}

/// Summed loss with gradients accumulated into `grads`.
pub fn ptia_loss_grad(
    mlp: &AttackMlp,
    samples: &[AttackSample],
    grads: &mut MlpGradients,
) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let acts = mlp.activations(s.input.view());
        let probs = &acts[acts.len() - 1];
        let y = 1.0 - f64::from(s.label);
        total -= y * probs[1].max(1e-300).ln() + (1.0 - y) * probs[0].max(1e-300).ln();
        // d/dprobs of the loss.
        let dprobs = ndarray::array![-(1.0 - y) / probs[0].max(1e-300), -y / probs[1].max(1e-300)];
        mlp.backward(s.input.view(), &acts, dprobs.view(), Some(grads));
    }
    Ok(total)
}

/// Train the attack classifier with mini-batch SGD; deterministic per seed.
pub fn train_attack_mlp(
    samples: &[AttackSample],
    input_dim: usize,
    config: &MlpTrainConfig,
    seed: u64,
) -> Result<AttackMlp> {
    let n_members = samples.iter().filter(|s| s.label == 1).count();
    if n_members == 0 || n_members == samples.len() {
        return Err(Error::invalid(
            "attack training needs both member and non-member samples",
        ));
    }
    let mut mlp = AttackMlp::new(input_dim, seed)?;
    let mut grads = MlpGradients::zeros_like(&mlp);
    let mut shuffle = rng::stream(seed, "attack-mlp-shuffle", &[]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.reset();
            for &ix in batch {
                epoch_loss +=
                    ptia_loss_grad(&mlp, &samples[ix..ix + 1], &mut grads)?;
            }
            mlp.step(&grads, -config.learning_rate / batch.len() as f64);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                what: "attack MLP training",
                epoch,
            });
        }
    }
    Ok(mlp)
}

/// Serialize the classifier in the snapshot format.
pub fn write_attack_mlp(w: &mut impl Write, mlp: &AttackMlp) -> Result<()> {
    snapshot::write_header(w, snapshot::KIND_ATTACK_MLP)?;
    snapshot::write_u64(w, mlp.layers.len() as u64)?;
    for l in &mlp.layers {
        snapshot::write_u64(w, l.weights.nrows() as u64)?;
        snapshot::write_u64(w, l.weights.ncols() as u64)?;
        snapshot::write_f64s(w, l.weights.iter())?;
        snapshot::write_f64s(w, l.biases.iter())?;
    }
    Ok(())
}

/// Deserialize a classifier snapshot.
pub fn read_attack_mlp(r: &mut impl Read) -> Result<AttackMlp> {
    snapshot::read_header(r, snapshot::KIND_ATTACK_MLP)?;
    let n = snapshot::read_u64(r)? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = snapshot::read_u64(r)? as usize;
        let cols = snapshot::read_u64(r)? as usize;
        let weights = Array2::from_shape_vec((rows, cols), snapshot::read_f64s(r, rows * cols)?)
            .map_err(|e| Error::Format(format!("bad layer shape: {e}")))?;
        let biases = Array1::from_vec(snapshot::read_f64s(r, rows)?);
        layers.push(MlpLayer { weights, biases });
    }
    Ok(AttackMlp { layers })
}
