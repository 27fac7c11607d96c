//! Small classifiers over flat parameter vectors with exact gradients.
//!
//! Parameter layout, row-major throughout:
//! - softmax regression: `W (classes x input)`, then `b (classes)`
//! - one-hidden-layer MLP: `W1 (hidden x input)`, `b1 (hidden)`,
//!   `W2 (classes x hidden)`, `b2 (classes)`; ReLU on the hidden layer.
//!
//! Loss is the mean softmax cross-entropy over a batch.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{check_dims, Error, Result};
use crate::params::{dot, ParamVector};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SoftmaxRegression,
    Mlp1Hidden,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SoftmaxRegression => "softmax",
            ModelKind::Mlp1Hidden => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Ignored for softmax regression.
    pub hidden_width: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn softmax(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::SoftmaxRegression,
            input_dim,
            hidden_width: 0,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_width: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp1Hidden,
            input_dim,
            hidden_width,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let hidden_ok = self.kind == ModelKind::SoftmaxRegression || self.hidden_width > 0;
        if self.input_dim == 0 || self.num_classes == 0 || !hidden_ok {
            return Err(Error::structural(format!("invalid model spec {self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::SoftmaxRegression => (self.input_dim + 1) * self.num_classes,
            ModelKind::Mlp1Hidden => {
                (self.input_dim + 1) * self.hidden_width + (self.hidden_width + 1) * self.num_classes
            }
        }
    }
}

/// A mini-batch of owned rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, input_dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::structural("batch must hold at least one sample"));
        }
        check_dims(labels.len() * input_dim, features.len())?;
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::structural("batch label out of range"));
        }
        Ok(Self {
            features,
            labels,
            input_dim,
        })
    }

    pub fn from_dataset(data: &LabeledDataset, indices: &[usize]) -> Result<Self> {
        let sub = data.subset(indices)?;
        Self::new(sub.features().to_vec(), sub.labels().to_vec(), data.dim(), data.num_classes())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = seeded_rng(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    let mut glorot = |fan_in: usize, fan_out: usize, values: &mut Vec<f64>| {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.random_range(-s..s));
        }
        values.extend(std::iter::repeat_n(0.0, fan_out));
    };
    match spec.kind {
        ModelKind::SoftmaxRegression => glorot(spec.input_dim, spec.num_classes, &mut values),
        ModelKind::Mlp1Hidden => {
            glorot(spec.input_dim, spec.hidden_width, &mut values);
            glorot(spec.hidden_width, spec.num_classes, &mut values);
        }
    }
    debug_assert_eq!(values.len(), spec.param_count());
    Ok(ParamVector::from_vec_unchecked(values))
}

/// Per-sample forward/backward workspace.
struct Workspace {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Workspace {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            hidden_pre: vec![0.0; spec.hidden_width],
            hidden: vec![0.0; spec.hidden_width],
            logits: vec![0.0; spec.num_classes],
            dhidden: vec![0.0; spec.hidden_width],
        }
    }
}

fn forward(spec: &ModelSpec, p: &[f64], x: &[f64], ws: &mut Workspace) {
    let d = spec.input_dim;
    let c = spec.num_classes;
    match spec.kind {
        ModelKind::SoftmaxRegression => {
            let (w, b) = p.split_at(d * c);
            for k in 0..c {
                ws.logits[k] = dot(&w[k * d..(k + 1) * d], x) + b[k];
            }
        }
        ModelKind::Mlp1Hidden => {
            let h = spec.hidden_width;
            let (w1, rest) = p.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(c * h);
            for j in 0..h {
                let pre = dot(&w1[j * d..(j + 1) * d], x) + b1[j];
                ws.hidden_pre[j] = pre;
                ws.hidden[j] = pre.max(0.0);
            }
            for k in 0..c {
                ws.logits[k] = dot(&w2[k * h..(k + 1) * h], &ws.hidden) + b2[k];
            }
        }
    }
}

/// Turn logits into probabilities in place; returns the cross-entropy for `label`.
fn softmax_xent(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted_label = logits[label] - max;
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
    sum.ln() - shifted_label
}

fn backward(spec: &ModelSpec, p: &[f64], x: &[f64], label: usize, scale: f64, ws: &mut Workspace, grad: &mut [f64]) {
    let d = spec.input_dim;
    let c = spec.num_classes;
    // ws.logits holds probabilities; dz = (p - onehot) * scale
    let dz: &mut [f64] = &mut ws.logits;
    dz[label] -= 1.0;
    for v in dz.iter_mut() {
        *v *= scale;
    }
    match spec.kind {
        ModelKind::SoftmaxRegression => {
            let (gw, gb) = grad.split_at_mut(d * c);
            for k in 0..c {
                let g = dz[k];
                for (gwj, xj) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *gwj += g * xj;
                }
                gb[k] += g;
            }
        }
        ModelKind::Mlp1Hidden => {
            let h = spec.hidden_width;
            let w2 = &p[h * d + h..h * d + h + c * h];
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(c * h);
            ws.dhidden.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..c {
                let g = dz[k];
                let row = &w2[k * h..(k + 1) * h];
                for j in 0..h {
                    gw2[k * h + j] += g * ws.hidden[j];
                    ws.dhidden[j] += g * row[j];
                }
                gb2[k] += g;
            }
            for j in 0..h {
                if ws.hidden_pre[j] <= 0.0 {
                    continue;
                }
                let g = ws.dhidden[j];
                for (gwj, xj) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gwj += g * xj;
                }
                gb1[j] += g;
            }
        }
    }
}

/// Mean loss over `n` rows, accumulating the gradient into `grad` (zeroed here).
fn loss_grad_rows<'a>(
    spec: &ModelSpec,
    p: &[f64],
    n: usize,
    row: impl Fn(usize) -> (&'a [f64], usize),
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut ws = Workspace::new(spec);
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    for i in 0..n {
        let (x, y) = row(i);
        forward(spec, p, x, &mut ws);
        loss += softmax_xent(&mut ws.logits, y);
        backward(spec, p, x, y, scale, &mut ws, grad);
    }
    loss * scale
}

fn check_shapes(spec: &ModelSpec, params: &ParamVector, input_dim: usize) -> Result<()> {
    spec.validate()?;
    check_dims(spec.param_count(), params.dim())?;
    check_dims(spec.input_dim, input_dim)
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
    check_shapes(spec, params, batch.input_dim)?;
    if batch.labels.iter().any(|&l| l >= spec.num_classes) {
        return Err(Error::structural("batch label exceeds model classes"));
    }
    let mut grad = vec![0.0; params.dim()];
    let loss = loss_grad_rows(
        spec,
        params.as_slice(),
        batch.len(),
        |i| (batch.row(i), batch.labels[i]),
        &mut grad,
    );
    Ok((loss, ParamVector::new(grad)?))
}

/// `steps` plain SGD updates from `start` on mini-batches of `data`.
///
/// Batches are drawn without replacement: the sample order is reshuffled at
/// every epoch boundary, and the last batch of an epoch may be short.
pub fn sgd_steps(
    spec: &ModelSpec,
    start: &ParamVector,
    data: &LabeledDataset,
    steps: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<ParamVector> {
    if data.is_empty() {
        return Err(Error::structural("sgd on an empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::structural("batch_size must be positive"));
    }
    check_shapes(spec, start, data.dim())?;
    if data.num_classes() > spec.num_classes {
        return Err(Error::structural("dataset has more classes than the model"));
    }
    let mut theta = start.as_slice().to_vec();
    let mut grad = vec![0.0; theta.len()];
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len();
    for _ in 0..steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + batch_size).min(order.len());
        let batch = &order[cursor..end];
        cursor = end;
        loss_grad_rows(
            spec,
            &theta,
            batch.len(),
            |i| (data.row(batch[i]), data.label(batch[i])),
            &mut grad,
        );
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= lr * g;
        }
    }
    ParamVector::new(theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, data: &LabeledDataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::structural("evaluation on an empty dataset"));
    }
    check_shapes(spec, params, data.dim())?;
    let mut ws = Workspace::new(spec);
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..data.len() {
        let y = data.label(i);
        if y >= spec.num_classes {
            return Err(Error::structural("dataset label exceeds model classes"));
        }
        forward(spec, params.as_slice(), data.row(i), &mut ws);
        let mut best = 0;
        for k in 1..spec.num_classes {
            if ws.logits[k] > ws.logits[best] {
                best = k;
            }
        }
        correct += usize::from(best == y);
        loss += softmax_xent(&mut ws.logits, y);
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}
