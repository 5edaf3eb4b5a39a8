//! A small dense multi-task classifier.
//!
//! The network is a shared trunk of dense layers followed by two task heads.
//! Each head is a (possibly empty) stack of hidden dense layers ending in a
//! softmax classification layer:
//!
//! ```text
//! x -> trunk -> head_a hidden -> [features a] -> classifier a -> softmax -> p_a
//!            \-> head_b hidden -> [features b] -> classifier b -> softmax -> p_b
//! ```
//!
//! Every hidden layer applies the same activation. Gradients are computed by
//! hand-written backpropagation in `f64`, and parameters are updated with
//! [`AdamState`].

mod adam;
mod checkpoint;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_SCHEMA_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::labels::{LabelVector, PROB_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation '{other}' (expected tanh or relu)"
            ))),
        }
    }
}

/// Selects one of the two task heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    A,
    B,
}

impl Task {
    pub fn other(self) -> Task {
        match self {
            Task::A => Task::B,
            Task::B => Task::A,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::A => "A",
            Task::B => "B",
        }
    }
}

/// Layer widths and activation of a [`MultiTaskNet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    /// Input width followed by the width of each shared hidden layer.
    pub layer_sizes: Vec<usize>,
    /// Hidden widths inside each head, before its classification layer.
    pub head_hidden: Vec<usize>,
    pub classes_a: usize,
    pub classes_b: usize,
    pub activation: Activation,
}

impl NetShape {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() {
            return Err(Error::InvalidConfig("layer_sizes must name the input width".into()));
        }
        if let Some(z) = self.layer_sizes.iter().chain(&self.head_hidden).find(|&&s| s == 0) {
            return Err(Error::InvalidConfig(format!("layer size must be >= 1, got {z}")));
        }
        if self.classes_a < 2 || self.classes_b < 2 {
            return Err(Error::InvalidConfig(format!(
                "each task needs at least 2 classes, got {} and {}",
                self.classes_a, self.classes_b
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self, task: Task) -> usize {
        match task {
            Task::A => self.classes_a,
            Task::B => self.classes_b,
        }
    }

    /// Width of the feature vector returned by [`MultiTaskNet::extract_features`].
    pub fn feature_dim(&self) -> usize {
        *self
            .head_hidden
            .last()
            .unwrap_or_else(|| self.layer_sizes.last().unwrap())
    }
}

/// Fully connected layer `z = W x + b` with `W` stored row-major as `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b
        }));
    }
}

/// Shared trunk plus two task heads.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskNet {
    shape: NetShape,
    trunk: Vec<Dense>,
    head_a: Vec<Dense>,
    head_b: Vec<Dense>,
}

/// Intermediate activations of one forward pass, kept for backpropagation.
struct Trace {
    /// `trunk[0]` is the input; `trunk[l + 1]` is the output of trunk layer `l`.
    trunk: Vec<Vec<f64>>,
    /// Per head: hidden activations (the trunk output is not repeated here).
    head: [Vec<Vec<f64>>; 2],
    probs: [Vec<f64>; 2],
}

/// Per-sample supervision. `None` masks that head's loss term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadTargets {
    pub a: Option<LabelVector>,
    pub b: Option<LabelVector>,
}

impl HeadTargets {
    pub fn only(task: Task, target: LabelVector) -> Self {
        match task {
            Task::A => HeadTargets {
                a: Some(target),
                b: None,
            },
            Task::B => HeadTargets {
                a: None,
                b: Some(target),
            },
        }
    }

    fn get(&self, task: Task) -> Option<&LabelVector> {
        match task {
            Task::A => self.a.as_ref(),
            Task::B => self.b.as_ref(),
        }
    }
}

/// Mean losses of a batch, evaluated before the parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLoss {
    /// Mean over samples of the summed active head terms.
    pub total: f64,
    /// Mean cross-entropy of head a over samples where it was active (0 if none).
    pub task_a: f64,
    pub task_b: f64,
}

/// Convenience constructor with tanh activation and no hidden head layers.
pub fn init_net(layer_sizes: &[usize], classes_a: usize, classes_b: usize, seed: u64) -> Result<MultiTaskNet> {
    MultiTaskNet::new(
        NetShape {
            layer_sizes: layer_sizes.to_vec(),
            head_hidden: Vec::new(),
            classes_a,
            classes_b,
            activation: Activation::Tanh,
        },
        seed,
    )
}

impl MultiTaskNet {
    /// Glorot-uniform weights from a seeded ChaCha8 stream, zero biases.
    pub fn new(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = shape
            .layer_sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        let trunk_out = *shape.layer_sizes.last().unwrap();
        let head = |classes: usize, rng: &mut ChaCha8Rng| {
            let mut widths = vec![trunk_out];
            widths.extend(&shape.head_hidden);
            widths.push(classes);
            widths
                .windows(2)
                .map(|w| Dense::glorot(w[0], w[1], rng))
                .collect::<Vec<_>>()
        };
        let head_a = head(shape.classes_a, &mut rng);
        let head_b = head(shape.classes_b, &mut rng);
        Ok(MultiTaskNet {
            shape,
            trunk,
            head_a,
            head_b,
        })
    }

    /// Assembles a net from explicit layers, checking them against `shape`.
    pub fn from_layers(shape: NetShape, trunk: Vec<Dense>, head_a: Vec<Dense>, head_b: Vec<Dense>) -> Result<Self> {
        shape.validate()?;
        let template = MultiTaskNet {
            shape: shape.clone(),
            trunk: Vec::new(),
            head_a: Vec::new(),
            head_b: Vec::new(),
        };
        let expected = template.layer_dims();
        let got: Vec<(usize, usize)> = trunk
            .iter()
            .chain(&head_a)
            .chain(&head_b)
            .map(|d| (d.inputs, d.outputs))
            .collect();
        if got != expected.iter().map(|(_, i, o)| (*i, *o)).collect::<Vec<_>>() {
            return Err(Error::Shape(format!(
                "layers {got:?} do not match shape {shape:?}"
            )));
        }
        for d in trunk.iter().chain(&head_a).chain(&head_b) {
            if d.weights.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                return Err(Error::Shape("dense layer buffer length mismatch".into()));
            }
        }
        Ok(MultiTaskNet {
            shape,
            trunk,
            head_a,
            head_b,
        })
    }

    /// `(name, inputs, outputs)` of every dense layer in canonical order.
    fn layer_dims(&self) -> Vec<(String, usize, usize)> {
        let s = &self.shape;
        let mut dims: Vec<(String, usize, usize)> = s
            .layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| (format!("trunk.{i}"), w[0], w[1]))
            .collect();
        for (tag, classes) in [("head_a", s.classes_a), ("head_b", s.classes_b)] {
            let mut widths = vec![*s.layer_sizes.last().unwrap()];
            widths.extend(&s.head_hidden);
            widths.push(classes);
            for (i, w) in widths.windows(2).enumerate() {
                dims.push((format!("{tag}.{i}"), w[0], w[1]));
            }
        }
        dims
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn trunk(&self) -> &[Dense] {
        &self.trunk
    }

    pub fn head(&self, task: Task) -> &[Dense] {
        match task {
            Task::A => &self.head_a,
            Task::B => &self.head_b,
        }
    }

    /// All dense layers with their canonical names: trunk, head a, head b.
    pub fn named_layers(&self) -> impl Iterator<Item = (String, &Dense)> {
        let trunk = self.trunk.iter().enumerate().map(|(i, d)| (format!("trunk.{i}"), d));
        let a = self.head_a.iter().enumerate().map(|(i, d)| (format!("head_a.{i}"), d));
        let b = self.head_b.iter().enumerate().map(|(i, d)| (format!("head_b.{i}"), d));
        trunk.chain(a).chain(b)
    }

    /// Parameter buffers in canonical order (weights then bias, per layer).
    pub fn params(&self) -> Vec<&[f64]> {
        self.trunk
            .iter()
            .chain(&self.head_a)
            .chain(&self.head_b)
            .flat_map(|d| [d.weights.as_slice(), d.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.trunk
            .iter_mut()
            .chain(&mut self.head_a)
            .chain(&mut self.head_b)
            .flat_map(|d| [d.weights.as_mut_slice(), d.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Deep copy used as a frozen predictor.
    pub fn snapshot(&self) -> MultiTaskNet {
        self.clone()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, net expects {}",
                x.len(),
                self.shape.input_dim()
            )));
        }
        Ok(())
    }

    fn trunk_forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let act = self.shape.activation;
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.trunk {
            let mut z = Vec::new();
            layer.forward_into(acts.last().unwrap(), &mut z);
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            acts.push(z);
        }
        acts
    }

    /// Runs the hidden part of a head; returns hidden activations (excluding
    /// `input`) and the logits.
    fn head_forward(&self, task: Task, input: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let act = self.shape.activation;
        let layers = self.head(task);
        let (hidden, classifier) = layers.split_at(layers.len() - 1);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(hidden.len());
        for layer in hidden {
            let prev = acts.last().map(Vec::as_slice).unwrap_or(input);
            let mut z = Vec::new();
            layer.forward_into(prev, &mut z);
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            acts.push(z);
        }
        let mut logits = Vec::new();
        classifier[0].forward_into(acts.last().map(Vec::as_slice).unwrap_or(input), &mut logits);
        (acts, logits)
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let trunk = self.trunk_forward(x);
        let top = trunk.last().unwrap();
        let (ha, la) = self.head_forward(Task::A, top);
        let (hb, lb) = self.head_forward(Task::B, top);
        Trace {
            head: [ha, hb],
            probs: [softmax(&la), softmax(&lb)],
            trunk,
        }
    }

    /// Softmax output of the selected head.
    pub fn predict(&self, task: Task, x: &[f64]) -> Result<LabelVector> {
        self.check_input(x)?;
        let trunk = self.trunk_forward(x);
        let (_, logits) = self.head_forward(task, trunk.last().unwrap());
        Ok(LabelVector::from_raw(softmax(&logits)))
    }

    /// Activations feeding the selected head's classification layer.
    pub fn extract_features(&self, task: Task, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut trunk = self.trunk_forward(x);
        let top = trunk.pop().unwrap();
        let (mut hidden, _) = self.head_forward(task, &top);
        Ok(hidden.pop().unwrap_or(top))
    }

    /// Applies only the classification layer and softmax of a head to a
    /// feature vector from [`extract_features`](Self::extract_features).
    pub fn classify_features(&self, task: Task, features: &[f64]) -> Result<LabelVector> {
        let classifier = self.head(task).last().unwrap();
        if features.len() != classifier.inputs {
            return Err(Error::Shape(format!(
                "feature vector has {} entries, classifier expects {}",
                features.len(),
                classifier.inputs
            )));
        }
        let mut logits = Vec::new();
        classifier.forward_into(features, &mut logits);
        Ok(LabelVector::from_raw(softmax(&logits)))
    }

    /// Mean loss and gradients for a batch without touching the parameters.
    ///
    /// Gradients come back in [`params`](Self::params) order.
    pub fn loss_and_gradients(&self, inputs: &[&[f64]], targets: &[HeadTargets]) -> Result<(StepLoss, Vec<Vec<f64>>)> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} target rows",
                inputs.len(),
                targets.len()
            )));
        }
        for (x, t) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            for task in [Task::A, Task::B] {
                if let Some(y) = t.get(task) {
                    if y.len() != self.shape.classes(task) {
                        return Err(Error::Shape(format!(
                            "task {} target has {} classes, head has {}",
                            task.name(),
                            y.len(),
                            self.shape.classes(task)
                        )));
                    }
                }
            }
        }

        let mut grads: Vec<Vec<f64>> = self.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let n = inputs.len() as f64;
        let mut loss = StepLoss::default();
        let mut counts = [0usize; 2];
        let act = self.shape.activation;
        let trunk_groups = 2 * self.trunk.len();
        let head_groups = [2 * self.head_a.len(), 2 * self.head_b.len()];

        for (x, t) in inputs.iter().zip(targets) {
            let trace = self.trace(x);
            let top = trace.trunk.last().unwrap();
            let mut d_top = vec![0.0; top.len()];
            let mut sample_loss = 0.0;

            for (h, task) in [Task::A, Task::B].into_iter().enumerate() {
                let Some(y) = t.get(task) else { continue };
                let p = &trace.probs[h];
                let ce = cross_entropy_unchecked(y.as_slice(), p);
                sample_loss += ce;
                counts[h] += 1;
                match task {
                    Task::A => loss.task_a += ce,
                    Task::B => loss.task_b += ce,
                }

                let mass: f64 = y.as_slice().iter().sum();
                // d(mean loss)/d logits
                let mut delta: Vec<f64> = p
                    .iter()
                    .zip(y.as_slice())
                    .map(|(pk, yk)| (pk * mass - yk) / n)
                    .collect();

                let layers = self.head(task);
                let offset = trunk_groups + if h == 0 { 0 } else { head_groups[0] };
                for l in (0..layers.len()).rev() {
                    let layer = &layers[l];
                    let input: &[f64] = if l == 0 { top } else { &trace.head[h][l - 1] };
                    let gw = &mut grads[offset + 2 * l];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        row.iter_mut().zip(input).for_each(|(g, xi)| *g += d * xi);
                    }
                    grads[offset + 2 * l + 1]
                        .iter_mut()
                        .zip(&delta)
                        .for_each(|(g, d)| *g += d);
                    let mut back = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
                    }
                    if l == 0 {
                        d_top.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
                    } else {
                        let y_prev = &trace.head[h][l - 1];
                        delta = back
                            .iter()
                            .zip(y_prev)
                            .map(|(b, y)| b * act.derivative_from_output(*y))
                            .collect();
                    }
                }
            }
            loss.total += sample_loss;

            let mut delta: Vec<f64> = d_top
                .iter()
                .zip(top)
                .map(|(b, y)| b * act.derivative_from_output(*y))
                .collect();
            for l in (0..self.trunk.len()).rev() {
                let layer = &self.trunk[l];
                let input = &trace.trunk[l];
                let gw = &mut grads[2 * l];
                for (o, d) in delta.iter().enumerate() {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, xi)| *g += d * xi);
                }
                grads[2 * l + 1].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
                if l > 0 {
                    let mut back = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
                    }
                    delta = back
                        .iter()
                        .zip(input)
                        .map(|(b, y)| b * act.derivative_from_output(*y))
                        .collect();
                }
            }
        }

        loss.total /= n;
        if counts[0] > 0 {
            loss.task_a /= counts[0] as f64;
        }
        if counts[1] > 0 {
            loss.task_b /= counts[1] as f64;
        }
        Ok((loss, grads))
    }

    /// Mean batch loss without gradients.
    pub fn batch_loss(&self, inputs: &[&[f64]], targets: &[HeadTargets]) -> Result<f64> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidArgument("batch must be nonempty and aligned".into()));
        }
        let mut total = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            let trace = self.trace(x);
            for (h, task) in [Task::A, Task::B].into_iter().enumerate() {
                if let Some(y) = t.get(task) {
                    total += cross_entropy_unchecked(y.as_slice(), &trace.probs[h]);
                }
            }
        }
        Ok(total / inputs.len() as f64)
    }
}

/// One Adam step on the mean of the active cross-entropy terms of a batch.
///
/// Returns the batch loss measured before the update.
pub fn backward_step(
    net: &mut MultiTaskNet,
    adam: &mut AdamState,
    inputs: &[&[f64]],
    targets: &[HeadTargets],
) -> Result<StepLoss> {
    let (loss, grads) = net.loss_and_gradients(inputs, targets)?;
    adam.apply(&mut net.params_mut(), &grads)?;
    Ok(loss)
}

/// Numerically stable softmax. Entries are floored at the smallest positive
/// normal `f64`, so the output is strictly positive for finite logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter()
        .map(|e| (e / total).max(f64::MIN_POSITIVE))
        .collect()
}

/// `-sum_k target_k * ln(prediction_k)` for soft or one-hot targets.
pub fn cross_entropy(target: &LabelVector, prediction: &LabelVector) -> Result<f64> {
    if target.len() != prediction.len() {
        return Err(Error::Shape(format!(
            "target has {} classes, prediction has {}",
            target.len(),
            prediction.len()
        )));
    }
    if let Some(p) = prediction.as_slice().iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Domain(format!("prediction entry {p} is not positive")));
    }
    Ok(cross_entropy_unchecked(target.as_slice(), prediction.as_slice()))
}

fn cross_entropy_unchecked(target: &[f64], prediction: &[f64]) -> f64 {
    target
        .iter()
        .zip(prediction)
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, p)| -y * p.max(PROB_FLOOR).ln())
        .sum()
}
