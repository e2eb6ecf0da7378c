//! Dense ReLU classifier over encoded feature rows, trained with mini-batch
//! Adam and a step learning-rate schedule.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::DistanceClass;
use crate::error::{Error, Result};
use crate::sidecar::KvDocument;

pub const N_OUTPUTS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate is multiplied by `gamma` every `step_size` epochs.
    pub gamma: f64,
    pub step_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![256, 128, 64],
            learning_rate: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            gamma: 0.9,
            step_size: 10,
            epochs: 1000,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_layers.contains(&0) {
            return bad("net.hidden_layers widths must be >= 1");
        }
        if self.epochs < 1 || self.batch_size < 1 || self.step_size < 1 {
            return bad("net.epochs, net.batch_size and net.step_size must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("net.learning_rate must be > 0 and net.gamma in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be > 0");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.gamma.powi((epoch / self.step_size) as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Shape `(inputs, outputs)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

/// Gradients laid out like `DenseNet::layers`.
pub type Gradients = Vec<Layer>;

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
}

impl DenseNet {
    /// He-initialized network: weights ~ N(0, 2 / fan_in), zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(N_OUTPUTS);
        let layers = widths
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
                Layer {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| normal.sample(rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(N_OUTPUTS);
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    /// Returns the pre-activation of every layer; the last one is the logits.
    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = act.dot(&layer.weights) + &layer.bias;
            if i + 1 < self.layers.len() {
                act = z.clone();
                relu_inplace(&mut act);
            }
            pre.push(z);
        }
        pre
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).pop().expect("at least one layer")
    }

    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut p = self.logits(x);
        softmax_rows(&mut p);
        p
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        let logits = self.logits(x);
        cross_entropy(&logits, labels)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Gradients) {
        let pre = self.forward(x);
        let batch = x.nrows() as f64;
        let logits = pre.last().expect("at least one layer");
        let loss = cross_entropy(logits, labels);

        let mut delta = logits.clone();
        softmax_rows(&mut delta);
        for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        delta /= batch;

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 {
                x.to_owned()
            } else {
                pre[l - 1].mapv(|v| v.max(0.0))
            };
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                back.zip_mut_with(&pre[l - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Layer {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum();
    total / labels.len() as f64
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Adam {
    fn new(net: &DenseNet) -> Self {
        let zeros = |net: &DenseNet| {
            net.layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(net),
            v: zeros(net),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut DenseNet, grads: &Gradients, lr: f64, config: &NetConfig) {
        self.t += 1;
        let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceModel {
    pub net: DenseNet,
    /// Mean training cross-entropy before training and after each epoch.
    pub train_loss: Vec<f64>,
}

/// Stacks row vectors into a matrix, checking that every row has `dim`
/// entries.
pub fn to_matrix(vectors: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(vectors.len() * dim);
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        flat.extend_from_slice(v);
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("feature vectors contain non-finite values".into()));
    }
    Ok(Array2::from_shape_vec((vectors.len(), dim), flat).expect("shape checked"))
}

pub fn train_distance(
    vectors: &[Vec<f64>],
    labels: &[DistanceClass],
    config: &NetConfig,
) -> Result<DistanceModel> {
    train_distance_with(vectors, labels, config, |_, _| {})
}

/// Like [`train_distance`], calling `on_epoch(epoch, loss)` after each
/// epoch.
pub fn train_distance_with(
    vectors: &[Vec<f64>],
    labels: &[DistanceClass],
    config: &NetConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<DistanceModel> {
    config.validate()?;
    if vectors.is_empty() {
        return Err(Error::InvalidData("no rows to train the distance model".into()));
    }
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: labels.len(),
        });
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(Error::InvalidData("feature vectors are empty".into()));
    }
    let x = to_matrix(vectors, dim)?;
    let y: Vec<usize> = labels.iter().map(|c| c.index()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = DenseNet::new(dim, &config.hidden_layers, &mut rng);
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut train_loss = vec![net.loss(x.view(), &y)];

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = net.loss_and_gradients(xb.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "distance model loss became {loss} in epoch {epoch}"
                )));
            }
            adam.step(&mut net, &grads, lr, config);
            epoch_loss += loss * chunk.len() as f64;
        }
        let epoch_loss = epoch_loss / x.nrows() as f64;
        if !net.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        train_loss.push(epoch_loss);
        on_epoch(epoch, epoch_loss);
    }
    Ok(DistanceModel { net, train_loss })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowPrediction {
    pub class: DistanceClass,
    pub probabilities: [f64; N_OUTPUTS],
}

/// Per-row softmax and argmax; ties go to the smaller distance.
pub fn predict_rows(model: &DistanceModel, vectors: &[Vec<f64>]) -> Result<Vec<RowPrediction>> {
    let dim = model.net.input_dim();
    if vectors.is_empty() {
        return Ok(Vec::new());
    }
    let x = to_matrix(vectors, dim)?;
    let probs = model.net.probabilities(x.view());
    Ok(probs
        .rows()
        .into_iter()
        .map(|row| {
            let p: [f64; N_OUTPUTS] = std::array::from_fn(|k| row[k]);
            let mut best = 0;
            for k in 1..N_OUTPUTS {
                if p[k] > p[best] {
                    best = k;
                }
            }
            RowPrediction {
                class: DistanceClass::from_index(best).expect("four outputs"),
                probabilities: p,
            }
        })
        .collect())
}

impl DistanceModel {
    pub fn to_kv(&self, doc: &mut KvDocument) {
        doc.set("distance.layers", self.net.layers.len());
        for (i, layer) in self.net.layers.iter().enumerate() {
            let (rows, cols) = layer.weights.dim();
            doc.set(format!("distance.layer.{i}.shape"), format!("{rows} {cols}"));
            let weights: Vec<f64> = layer.weights.iter().copied().collect();
            doc.set_f64s(format!("distance.layer.{i}.weights"), &weights);
            doc.set_f64s(format!("distance.layer.{i}.bias"), layer.bias.as_slice().unwrap());
        }
        doc.set_f64s("distance.train_loss", &self.train_loss);
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        let count: usize = doc.get_parsed("distance.layers")?;
        if count == 0 {
            return Err(Error::Schema("distance model has no layers".into()));
        }
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            let shape: Vec<usize> = doc.get_list(&format!("distance.layer.{i}.shape"))?;
            let [rows, cols] = shape[..] else {
                return Err(Error::Schema(format!("layer {i} shape must have two entries")));
            };
            let weights: Vec<f64> = doc.get_list(&format!("distance.layer.{i}.weights"))?;
            let bias: Vec<f64> = doc.get_list(&format!("distance.layer.{i}.bias"))?;
            if weights.len() != rows * cols || bias.len() != cols {
                return Err(Error::Schema(format!("layer {i} parameter count mismatch")));
            }
            if let Some(prev) = layers.last().map(|l: &Layer| l.weights.ncols()) {
                if prev != rows {
                    return Err(Error::DimensionMismatch {
                        expected: prev,
                        actual: rows,
                    });
                }
            }
            layers.push(Layer {
                weights: Array2::from_shape_vec((rows, cols), weights).expect("length checked"),
                bias: Array1::from(bias),
            });
        }
        let out = layers.last().map(|l| l.weights.ncols()).unwrap_or(0);
        if out != N_OUTPUTS {
            return Err(Error::Schema(format!("output layer has width {out}, expected 4")));
        }
        let net = DenseNet { layers };
        if !net.is_finite() {
            return Err(Error::Schema("distance model has non-finite parameters".into()));
        }
        Ok(Self {
            net,
            train_loss: doc.get_list("distance.train_loss")?,
        })
    }
}

/// Central-difference gradient of the batch loss with respect to every
/// parameter. Test oracle for `loss_and_gradients`.
pub fn finite_difference_gradients(
    net: &DenseNet,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    h: f64,
) -> Gradients {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.layers.len());
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        let mut dw = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                let orig = probe.layers[l].weights[[i, j]];
                probe.layers[l].weights[[i, j]] = orig + h;
                let up = probe.loss(x, labels);
                probe.layers[l].weights[[i, j]] = orig - h;
                let down = probe.loss(x, labels);
                probe.layers[l].weights[[i, j]] = orig;
                dw[[i, j]] = (up - down) / (2.0 * h);
            }
        }
        let mut db = Array1::zeros(cols);
        for j in 0..cols {
            let orig = probe.layers[l].bias[j];
            probe.layers[l].bias[j] = orig + h;
            let up = probe.loss(x, labels);
            probe.layers[l].bias[j] = orig - h;
            let down = probe.loss(x, labels);
            probe.layers[l].bias[j] = orig;
            db[j] = (up - down) / (2.0 * h);
        }
        out.push(Layer {
            weights: dw,
            bias: db,
        });
    }
    out
}

/// Largest relative error `|a - n| / max(|a| + |n|, floor)` over all
/// parameters.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients, floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a
            .weights
            .iter()
            .zip(n.weights.iter())
            .chain(a.bias.iter().zip(n.bias.iter()))
        {
            worst = worst.max((x - y).abs() / (x.abs() + y.abs()).max(floor));
        }
    }
    worst
}
