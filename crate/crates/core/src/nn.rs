//! Dense ReLU network with a softmax cross-entropy head, trained by
//! single-sample SGD with exact backpropagation.
//!
//! Parameters live in one flat [`ModelVector`]; layer `l` stores its weights
//! row-major (`outputs × inputs`) followed by its biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{check, Error, Result};
use crate::seed::{domain, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Flat parameter (or parameter-delta) vector with its layer layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVector {
    values: Vec<f64>,
    layout: Vec<LayerShape>,
}

impl ModelVector {
    pub fn new(values: Vec<f64>, layout: Vec<LayerShape>) -> Result<Self> {
        let expected: usize = layout.iter().map(LayerShape::param_count).sum();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Vec<LayerShape>) -> Self {
        let n = layout.iter().map(LayerShape::param_count).sum();
        Self {
            values: vec![0.0; n],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[LayerShape] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layout.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layout.last().map_or(0, |l| l.outputs)
    }

    fn same_shape(&self, other: &ModelVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LengthMismatch(format!(
                "model layouts differ ({} vs {} parameters)",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// `self − other`.
    pub fn delta_from(&self, other: &ModelVector) -> Result<ModelVector> {
        self.same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self {
            values,
            layout: self.layout.clone(),
        })
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ModelVector) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Offsets of `(weights, biases)` for each layer.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.layout.len());
        let mut at = 0;
        for l in &self.layout {
            let w = at;
            let b = w + l.inputs * l.outputs;
            out.push((w, b));
            at = b + l.outputs;
        }
        out
    }
}

/// Feed-forward classifier architecture and SGD step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Number of classes.
    pub output_dim: usize,
    pub learning_rate: f64,
    pub init_seed: u64,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            input_dim: 784,
            hidden_dims: vec![64],
            output_dim: 10,
            learning_rate: 0.05,
            init_seed: 0,
        }
    }
}

impl NetSpec {
    pub fn validate(&self) -> Result<()> {
        check(self.input_dim > 0, "input_dim", self.input_dim as f64, "must be > 0")?;
        check(self.output_dim > 1, "output_dim", self.output_dim as f64, "must be > 1")?;
        check(
            self.hidden_dims.iter().all(|&h| h > 0),
            "hidden_dims",
            0.0,
            "hidden widths must be > 0",
        )?;
        check(
            self.learning_rate > 0.0,
            "learning_rate",
            self.learning_rate,
            "must be > 0",
        )
    }

    pub fn layout(&self) -> Vec<LayerShape> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2)
            .map(|w| LayerShape {
                inputs: w[0],
                outputs: w[1],
            })
            .collect()
    }
}

/// Weights uniform on `±sqrt(6/fan_in)`, biases zero.
pub fn init_model(spec: &NetSpec) -> ModelVector {
    let mut rng = rng_for(spec.init_seed, domain::INIT, &[]);
    let mut model = ModelVector::zeros(spec.layout());
    let offsets = model.offsets();
    for (l, (w, _)) in model.layout.clone().iter().zip(offsets) {
        let limit = (6.0 / l.inputs as f64).sqrt();
        for v in &mut model.values[w..w + l.inputs * l.outputs] {
            *v = rng.random_range(-limit..limit);
        }
    }
    model
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four interleaved accumulators let the compiler vectorise the loop;
    // the summation order is fixed, so results stay reproducible.
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

const BLOCK: usize = 4;

/// `dot(w, x)` for `BLOCK` inputs sharing one weight row, each summed in
/// exactly `dot`'s order.
fn dot_block(w: &[f64], xs: [&[f64]; BLOCK]) -> [f64; BLOCK] {
    let n = w.len() / 4 * 4;
    let xs = xs.map(|x| &x[..w.len()]);
    let mut acc = [[0.0; 4]; BLOCK];
    for i in (0..n).step_by(4) {
        let wv = &w[i..i + 4];
        for (a, x) in acc.iter_mut().zip(&xs) {
            let xv = &x[i..i + 4];
            a[0] += wv[0] * xv[0];
            a[1] += wv[1] * xv[1];
            a[2] += wv[2] * xv[2];
            a[3] += wv[3] * xv[3];
        }
    }
    let mut out = [0.0; BLOCK];
    for ((o, a), x) in out.iter_mut().zip(&acc).zip(&xs) {
        let mut s = (a[0] + a[1]) + (a[2] + a[3]);
        for i in n..w.len() {
            s += w[i] * x[i];
        }
        *o = s;
    }
    out
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Reusable activation buffers for forward/backward passes.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn for_model(model: &ModelVector) -> Self {
        Self {
            acts: model.layout.iter().map(|l| vec![0.0; l.outputs]).collect(),
            deltas: model.layout.iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }
}

fn check_input(model: &ModelVector, x: &[f64]) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: x.len(),
        });
    }
    Ok(())
}

fn check_label(model: &ModelVector, label: usize) -> Result<()> {
    if label >= model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            found: label,
        });
    }
    Ok(())
}

/// Fills `scratch.acts` with post-activation outputs; the last layer holds
/// raw logits.
fn forward_logits(model: &ModelVector, offsets: &[(usize, usize)], x: &[f64], scratch: &mut Scratch) {
    let last = model.layout.len() - 1;
    for (l, (shape, &(w, b))) in model.layout.iter().zip(offsets).enumerate() {
        let (before, rest) = scratch.acts.split_at_mut(l);
        let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
        let out = &mut rest[0];
        let weights = &model.values[w..b];
        let biases = &model.values[b..b + shape.outputs];
        for (j, o) in out.iter_mut().enumerate() {
            let z = dot(&weights[j * shape.inputs..(j + 1) * shape.inputs], input) + biases[j];
            *o = if l < last { z.max(0.0) } else { z };
        }
    }
}

/// Class probabilities for one input.
pub fn forward(model: &ModelVector, input: &[f64]) -> Result<Vec<f64>> {
    check_input(model, input)?;
    let mut scratch = Scratch::for_model(model);
    forward_logits(model, &model.offsets(), input, &mut scratch);
    let mut p = scratch.acts.pop().expect("at least one layer");
    softmax_in_place(&mut p);
    Ok(p)
}

/// Cross-entropy loss `−ln p_label`.
pub fn loss(model: &ModelVector, input: &[f64], label: usize) -> Result<f64> {
    check_label(model, label)?;
    let p = forward(model, input)?;
    Ok(-p[label].ln())
}

/// Backpropagates from probabilities in `scratch.acts[last]`, invoking
/// `visit(layer, delta, layer_input)` from the last layer down. All deltas
/// are computed from the weights as they were before any visit.
fn backward<F: FnMut(usize, &[f64], &[f64], &mut [f64])>(
    values: &mut [f64],
    layout: &[LayerShape],
    offsets: &[(usize, usize)],
    x: &[f64],
    label: usize,
    scratch: &mut Scratch,
    mut visit: F,
) {
    let last = layout.len() - 1;
    {
        let d = &mut scratch.deltas[last];
        d.copy_from_slice(&scratch.acts[last]);
        d[label] -= 1.0;
    }
    for l in (0..=last).rev() {
        let shape = layout[l];
        let (w, _) = offsets[l];
        if l > 0 {
            let (lower, upper) = scratch.deltas.split_at_mut(l);
            let d_out = &upper[0];
            let d_in = &mut lower[l - 1];
            let a_in = &scratch.acts[l - 1];
            for (k, di) in d_in.iter_mut().enumerate() {
                *di = if a_in[k] > 0.0 {
                    let mut s = 0.0;
                    for (j, &dj) in d_out.iter().enumerate() {
                        s += values[w + j * shape.inputs + k] * dj;
                    }
                    s
                } else {
                    0.0
                };
            }
        }
        let input: &[f64] = if l == 0 { x } else { &scratch.acts[l - 1] };
        visit(l, &scratch.deltas[l], input, values);
    }
}

/// Loss and exact gradient of the cross-entropy loss for one sample.
pub fn gradient(model: &ModelVector, input: &[f64], label: usize) -> Result<(f64, ModelVector)> {
    check_input(model, input)?;
    check_label(model, label)?;
    let offsets = model.offsets();
    let mut scratch = Scratch::for_model(model);
    forward_logits(model, &offsets, input, &mut scratch);
    softmax_in_place(scratch.acts.last_mut().expect("at least one layer"));
    let loss = -scratch.acts.last().expect("layer")[label].ln();
    let mut grad = ModelVector::zeros(model.layout.clone());
    let mut values = model.values.clone();
    backward(
        &mut values,
        &model.layout,
        &offsets,
        input,
        label,
        &mut scratch,
        |l, delta, a_in, _| {
            let (w, b) = offsets[l];
            let n_in = model.layout[l].inputs;
            for (j, &dj) in delta.iter().enumerate() {
                for (k, &ak) in a_in.iter().enumerate() {
                    grad.values[w + j * n_in + k] = dj * ak;
                }
                grad.values[b + j] = dj;
            }
        },
    );
    Ok((loss, grad))
}

/// In-place single-sample SGD with preallocated buffers.
#[derive(Clone, Debug)]
pub struct Sgd {
    offsets: Vec<(usize, usize)>,
    scratch: Scratch,
    lr: f64,
}

impl Sgd {
    pub fn new(model: &ModelVector, lr: f64) -> Self {
        Self {
            offsets: model.offsets(),
            scratch: Scratch::for_model(model),
            lr,
        }
    }

    /// `model ← model − lr·∇loss`. Rows with zero delta and columns with zero
    /// input carry a zero gradient and are skipped.
    pub fn step(&mut self, model: &mut ModelVector, input: &[f64], label: usize) -> Result<()> {
        check_input(model, input)?;
        check_label(model, label)?;
        if self.lr == 0.0 {
            return Ok(());
        }
        forward_logits(model, &self.offsets, input, &mut self.scratch);
        softmax_in_place(self.scratch.acts.last_mut().expect("at least one layer"));
        let lr = self.lr;
        let offsets = &self.offsets;
        let layout = model.layout.clone();
        backward(
            &mut model.values,
            &layout,
            offsets,
            input,
            label,
            &mut self.scratch,
            |l, delta, a_in, values| {
                let (w, b) = offsets[l];
                let n_in = layout[l].inputs;
                for (j, &dj) in delta.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let row = &mut values[w + j * n_in..w + (j + 1) * n_in];
                    for (v, &ak) in row.iter_mut().zip(a_in) {
                        *v -= lr * (dj * ak);
                    }
                    values[b + j] -= lr * dj;
                }
            },
        );
        Ok(())
    }
}

/// One SGD step on a single `(features, label)` sample.
pub fn sgd_step(model: &ModelVector, sample: (&[f64], usize), lr: f64) -> Result<ModelVector> {
    let mut out = model.clone();
    Sgd::new(model, lr).step(&mut out, sample.0, sample.1)?;
    Ok(out)
}

/// Sequential single-sample SGD over `dataset` in the given visiting order,
/// starting from `model`. Returns the parameter delta `w_end − w_start`.
pub fn local_pass(model: &ModelVector, dataset: &LabeledDataset, order: &[usize], lr: f64) -> Result<ModelVector> {
    let mut w = model.clone();
    let mut sgd = Sgd::new(model, lr);
    for &i in order {
        sgd.step(&mut w, &dataset.features[i], dataset.labels[i])?;
    }
    w.delta_from(model)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Predicted class for one input.
pub fn predict(model: &ModelVector, input: &[f64], scratch: &mut Scratch, offsets: &[(usize, usize)]) -> usize {
    forward_logits(model, offsets, input, scratch);
    // Softmax is monotone, so the logits decide.
    argmax(scratch.acts.last().expect("at least one layer"))
}

/// Fraction of samples whose predicted class equals the label.
pub fn evaluate(model: &ModelVector, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: dataset.dim(),
        });
    }
    let offsets = model.offsets();
    let mut scratch = Scratch::for_model(model);
    let mut block: [Vec<Vec<f64>>; BLOCK] = std::array::from_fn(|_| scratch.acts.clone());
    let features = dataset.features.chunks_exact(BLOCK);
    let labels = dataset.labels.chunks_exact(BLOCK);
    let (rest_x, rest_y) = (features.remainder(), labels.remainder());
    let mut correct = 0;
    for (xs, ys) in features.zip(labels) {
        let xs: [&[f64]; BLOCK] = std::array::from_fn(|i| xs[i].as_slice());
        let preds = predict_block(model, &offsets, xs, &mut block);
        correct += preds.iter().zip(ys).filter(|(p, y)| p == y).count();
    }
    correct += rest_x
        .iter()
        .zip(rest_y)
        .filter(|(x, &y)| predict(model, x, &mut scratch, &offsets) == y)
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// `predict` for `BLOCK` inputs at once; `acts[i]` holds sample `i`'s
/// activations. Results equal `predict` bit for bit.
fn predict_block(
    model: &ModelVector,
    offsets: &[(usize, usize)],
    xs: [&[f64]; BLOCK],
    acts: &mut [Vec<Vec<f64>>; BLOCK],
) -> [usize; BLOCK] {
    let last = model.layout.len() - 1;
    let mut z = Vec::new();
    for (l, (shape, &(w, b))) in model.layout.iter().zip(offsets).enumerate() {
        let weights = &model.values[w..b];
        let biases = &model.values[b..b + shape.outputs];
        let inputs: [&[f64]; BLOCK] = std::array::from_fn(|i| if l == 0 { xs[i] } else { acts[i][l - 1].as_slice() });
        z.clear();
        z.extend((0..shape.outputs).map(|j| dot_block(&weights[j * shape.inputs..(j + 1) * shape.inputs], inputs)));
        for (i, a) in acts.iter_mut().enumerate() {
            for (j, (o, zj)) in a[l].iter_mut().zip(&z).enumerate() {
                let v = zj[i] + biases[j];
                *o = if l < last { v.max(0.0) } else { v };
            }
        }
    }
    std::array::from_fn(|i| argmax(&acts[i][last]))
}
