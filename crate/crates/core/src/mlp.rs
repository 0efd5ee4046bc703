//! Fully connected ReLU classifier with a softmax head and hand-derived
//! gradients. Exposes every layer's post-activation output as an
//! [`ActivationTrace`] and input gradients for attack crafting.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::rng;

/// One affine layer, `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

/// Outputs `v_0 ..= v_l` of every layer: the input, each hidden ReLU output,
/// and the softmax output. `logits` holds the pre-softmax scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl ActivationTrace {
    pub fn probabilities(&self) -> &[f64] {
        self.layers.last().expect("trace always has an output layer")
    }

    pub fn predicted(&self) -> usize {
        argmax(self.probabilities())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParams("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParams(format!(
                "learning_rate must be > 0 and momentum in [0, 1), got {} / {}",
                self.learning_rate, self.momentum
            )));
        }
        Ok(())
    }
}

/// Accuracy and loss recorded at the end of training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(z)[y]` computed through log-sum-exp.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

struct Forward {
    /// Layer inputs: `inputs[i]` feeds layer `i`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer; the last entry is the logits.
    pre: Vec<Vec<f64>>,
}

impl MlpModel {
    /// All-zero model with the given dims `[d_0, ..., n_classes]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParams(format!("invalid layer dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(MlpModel { layers })
    }

    /// He-normal weights, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = MlpModel::zeros(dims)?;
        let mut rng = rng::stream(seed, "mlp-init");
        for layer in &mut model.layers {
            let fan_in = layer.weights.cols() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
            for w in layer.weights.as_mut_slice() {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParams("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.rows() {
                return Err(Error::DimensionMismatch {
                    expected: l.weights.rows(),
                    got: l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].weights.rows() != l.weights.cols() {
                return Err(Error::DimensionMismatch {
                    expected: layers[i - 1].weights.rows(),
                    got: l.weights.cols(),
                });
            }
            if l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidParams("non-finite bias".into()));
            }
        }
        Ok(MlpModel { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// `[d_0, d_1, ..., n_classes]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.rows()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.rows())
    }

    /// Number of parameterised layers `l`; a trace has `l + 1` entries.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z: Vec<f64> = layer
                .weights
                .row_iter()
                .zip(&layer.bias)
                .map(|(w, b)| dot(w, &a) + b)
                .collect();
            let next = if i == last {
                z.clone()
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        Forward { inputs, pre }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x).pre.pop().expect("non-empty model"))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let Forward { mut inputs, mut pre } = self.forward(x);
        let logits = pre.pop().expect("non-empty model");
        inputs.push(softmax(&logits));
        Ok(ActivationTrace {
            layers: inputs,
            logits,
        })
    }

    /// Back-propagates `upstream` (a gradient w.r.t. the logits) to the input.
    fn backprop_input(&self, fwd: &Forward, upstream: &[f64]) -> Vec<f64> {
        let mut g = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let w = &self.layers[i].weights;
            let mut prev = vec![0.0; w.cols()];
            for (r, &gr) in g.iter().enumerate() {
                if gr == 0.0 {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(w.row(r)) {
                    *p += gr * wv;
                }
            }
            if i > 0 {
                for (p, &z) in prev.iter_mut().zip(&fwd.pre[i - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            g = prev;
        }
        g
    }

    /// Vector–Jacobian product `upstreamᵀ · ∂Z/∂x` for the logits `Z`,
    /// returned together with the logits themselves.
    pub fn logit_vjp(&self, x: &[f64], upstream: impl FnOnce(&[f64]) -> Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let fwd = self.forward(x);
        let logits = fwd.pre.last().expect("non-empty model").clone();
        let up = upstream(&logits);
        if up.len() != logits.len() {
            return Err(Error::DimensionMismatch {
                expected: logits.len(),
                got: up.len(),
            });
        }
        let grad = self.backprop_input(&fwd, &up);
        Ok((logits, grad))
    }

    /// Cross-entropy loss `-ln softmax(Z)[y]` and its gradient w.r.t. `x`.
    pub fn loss_and_input_grad(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check_label(y)?;
        let mut loss = 0.0;
        let (_, grad) = self.logit_vjp(x, |z| {
            loss = cross_entropy(z, y);
            let mut p = softmax(z);
            p[y] -= 1.0;
            p
        })?;
        Ok((loss, grad))
    }

    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(cross_entropy(&self.logits(x)?, y))
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.n_classes() {
            return Err(Error::InvalidLabel {
                label: y,
                n_classes: self.n_classes(),
            });
        }
        Ok(())
    }

    /// Argmax class per row, ties toward the lowest index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(x.row_iter()
            .map(|r| argmax(self.forward(r).pre.last().expect("non-empty model")))
            .collect())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let pred = self.predict(data.features())?;
        let hits = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / data.len() as f64)
    }
}

/// Mini-batch SGD with momentum on mean cross-entropy. Deterministic for a
/// given `cfg.seed`; `eval` (if any) is only used to report test accuracy.
pub fn train(model: &MlpModel, data: &Dataset, cfg: &TrainConfig, eval: Option<&Dataset>) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.dim(),
        });
    }
    if let Some(&bad) = data.labels().iter().find(|&&y| y >= model.n_classes()) {
        return Err(Error::InvalidLabel {
            label: bad,
            n_classes: model.n_classes(),
        });
    }

    let mut model = model.clone();
    let mut velocity: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer {
            weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
            bias: vec![0.0; l.bias.len()],
        })
        .collect();
    let mut rng = rng::stream(cfg.seed, "mlp-train");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut last_epoch_loss = 0.0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Layer> = velocity
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect();
            for &idx in batch {
                let x = data.features().row(idx);
                let y = data.labels()[idx];
                epoch_loss += accumulate_gradients(&model, x, y, &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((layer, vel), grad) in model.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                let params = layer.weights.as_mut_slice().iter_mut().chain(layer.bias.iter_mut());
                let vels = vel.weights.as_mut_slice().iter_mut().chain(vel.bias.iter_mut());
                let gs = grad.weights.as_slice().iter().chain(grad.bias.iter());
                for ((p, v), g) in params.zip(vels).zip(gs) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                    *p += *v;
                }
            }
        }
        last_epoch_loss = epoch_loss / data.len() as f64;
        if !last_epoch_loss.is_finite() {
            return Err(Error::InvalidParams("training diverged (non-finite loss)".into()));
        }
    }

    let train_accuracy = model.accuracy(data)?;
    let test_accuracy = eval.map(|d| model.accuracy(d)).transpose()?;
    Ok((
        model,
        TrainReport {
            final_loss: last_epoch_loss,
            train_accuracy,
            test_accuracy,
        },
    ))
}

/// Adds the parameter gradients of one sample into `grads`, returns its loss.
fn accumulate_gradients(model: &MlpModel, x: &[f64], y: usize, grads: &mut [Layer]) -> f64 {
    let fwd = model.forward(x);
    let logits = fwd.pre.last().expect("non-empty model");
    let loss = cross_entropy(logits, y);
    let mut g = softmax(logits);
    g[y] -= 1.0;
    for i in (0..model.layers.len()).rev() {
        let input = &fwd.inputs[i];
        let grad = &mut grads[i];
        for (r, &gr) in g.iter().enumerate() {
            grad.bias[r] += gr;
            if gr == 0.0 {
                continue;
            }
            for (gw, &a) in grad.weights.row_mut(r).iter_mut().zip(input) {
                *gw += gr * a;
            }
        }
        if i == 0 {
            break;
        }
        let w = &model.layers[i].weights;
        let mut prev = vec![0.0; w.cols()];
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (p, &wv) in prev.iter_mut().zip(w.row(r)) {
                *p += gr * wv;
            }
        }
        for (p, &z) in prev.iter_mut().zip(&fwd.pre[i - 1]) {
            if z <= 0.0 {
                *p = 0.0;
            }
        }
        g = prev;
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(&[4, 5, 10]).unwrap();
        let t = m.forward_trace(&[0.3, 0.1, 0.9, 0.2]).unwrap();
        assert_eq!(t.layers.len(), 3);
        for p in t.probabilities() {
            assert!((p - 0.1).abs() < 1e-15);
        }
        let (loss, grad) = m.loss_and_input_grad(&[0.3, 0.1, 0.9, 0.2], 3).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!(grad.iter().all(|&g| g == 0.0));
        let x = Matrix::from_rows(&[vec![0.0; 4], vec![1.0; 4]]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0, 0]);
    }

    #[test]
    fn relu_passthrough() {
        let mut m = MlpModel::zeros(&[3, 3, 2]).unwrap();
        m.layers[0].weights = Matrix::identity(3);
        let t = m.forward_trace(&[0.2, 0.0, 0.7]).unwrap();
        assert_eq!(t.layers[1], vec![0.2, 0.0, 0.7]);
    }

    #[test]
    fn one_hot_logits_predict_matching_label() {
        let mut m = MlpModel::zeros(&[2, 3]).unwrap();
        m.layers[0].bias = vec![0.0, 0.0, 5.0];
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![2]);
    }

    #[test]
    fn dimension_and_label_errors() {
        let m = MlpModel::zeros(&[2, 3]).unwrap();
        assert!(matches!(m.forward_trace(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.loss_and_input_grad(&[1.0, 2.0], 3), Err(Error::InvalidLabel { .. })));
        assert!(MlpModel::zeros(&[3]).is_err());
    }

    #[test]
    fn memorizes_single_sample() {
        let data = Dataset::new(Matrix::from_rows(&[vec![0.2, 0.8, 0.5]]).unwrap(), vec![1], 3).unwrap();
        let model = MlpModel::init(&[3, 8, 3], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 1,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 3,
        };
        let (trained, report) = train(&model, &data, &cfg, None).unwrap();
        assert!(trained.loss(data.features().row(0), 1).unwrap() < 1e-3);
        assert_eq!(report.train_accuracy, 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = Dataset::new(Matrix::zeros(0, 3), vec![], 2).unwrap();
        let model = MlpModel::init(&[3, 4, 2], 0).unwrap();
        assert!(matches!(
            train(&model, &data, &TrainConfig::default(), None),
            Err(Error::EmptyDataset)
        ));
    }
}
