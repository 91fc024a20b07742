//! Feed-forward acoustic model: ReLU hidden layers, softmax output over
//! keyword sub-word labels (label 0 is filler), trained by mini-batch SGD
//! on cross-entropy.

use crate::dsp::StackedInput;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_nodes: usize,
    pub n_labels: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            input_dim: 1640,
            hidden_layers: 3,
            hidden_nodes: 128,
            n_labels: 3,
        }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_layers == 0 || self.hidden_nodes == 0 {
            return Err(Error::invalid("topology sizes must be at least 1"));
        }
        if self.n_labels < 2 {
            return Err(Error::invalid(
                "need a filler label and at least one keyword label",
            ));
        }
        Ok(())
    }

    /// `(rows, cols)` of every layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.hidden_nodes, self.input_dim)];
        shapes.extend((1..self.hidden_layers).map(|_| (self.hidden_nodes, self.hidden_nodes)));
        shapes.push((self.n_labels, self.hidden_nodes));
        shapes
    }
}

/// Dense layer with a row-major `rows x cols` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.cols)
                .zip(&self.bias)
                .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()),
        );
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    topology: Topology,
    layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn new(topology: Topology, layers: Vec<Layer>) -> Result<Self> {
        topology.validate()?;
        let shapes = topology.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::invalid(format!(
                "topology implies {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((rows, cols), layer)) in shapes.iter().zip(&layers).enumerate() {
            check_layer_shape(i, layer, *rows, *cols).map_err(Error::InvalidArgument)?;
        }
        Ok(NetworkParams { topology, layers })
    }

    pub fn zeros(topology: Topology) -> Result<Self> {
        topology.validate()?;
        let layers = topology
            .layer_shapes()
            .into_iter()
            .map(|(r, c)| Layer::zeros(r, c))
            .collect();
        Ok(NetworkParams { topology, layers })
    }

    /// He-scaled uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero biases.
    pub fn init(topology: Topology, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(topology)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let limit = (6.0 / layer.cols as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the raw values. Shapes are fixed.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Parameter `idx` in flat order: each layer's weights, then its bias.
    fn value_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let n = layer.weights.len();
            if idx < n {
                return &mut layer.weights[idx];
            }
            idx -= n;
            if idx < layer.bias.len() {
                return &mut layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        &mut self.layers.last_mut().expect("at least one layer").bias
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    /// Softmax posteriors for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.topology.input_dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.topology.input_dim
            )));
        }
        if !self.is_finite() {
            return Err(Error::InvalidState(
                "network parameters contain non-finite values".into(),
            ));
        }
        let mut scratch = Scratch::default();
        Ok(self.forward_unchecked(x, &mut scratch))
    }

    fn forward_unchecked(&self, x: &[f64], scratch: &mut Scratch) -> Vec<f64> {
        let (a, b) = (&mut scratch.a, &mut scratch.b);
        a.clear();
        a.extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(a, b);
            if i < last {
                relu_in_place(b);
            }
            std::mem::swap(a, b);
        }
        softmax(a)
    }

    /// Posterior frame for a stacked input.
    pub fn posterior(&self, x: &StackedInput) -> Result<PosteriorFrame> {
        Ok(PosteriorFrame {
            probs: self.forward(&x.values)?,
            frame_index: x.center_frame_index,
        })
    }

    /// Posteriors for many inputs with a single parameter validation.
    pub fn forward_many<'a, I>(&self, inputs: I) -> Result<Vec<Vec<f64>>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        if !self.is_finite() {
            return Err(Error::InvalidState(
                "network parameters contain non-finite values".into(),
            ));
        }
        let mut scratch = Scratch::default();
        inputs
            .into_iter()
            .map(|x| {
                if x.len() != self.topology.input_dim {
                    return Err(Error::invalid("input dimension mismatch"));
                }
                Ok(self.forward_unchecked(x, &mut scratch))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        String::from_utf8(save_params(self)).expect("json is utf-8")
    }
}

#[derive(Default)]
struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn check_layer_shape(
    i: usize,
    layer: &Layer,
    rows: usize,
    cols: usize,
) -> std::result::Result<(), String> {
    if layer.rows != rows || layer.cols != cols {
        return Err(format!(
            "layer {i}: declared {}x{}, topology requires {rows}x{cols}",
            layer.rows, layer.cols
        ));
    }
    if layer.weights.len() != rows * cols {
        return Err(format!(
            "layer {i}: declared {rows}x{cols} but holds {} weights",
            layer.weights.len()
        ));
    }
    if layer.bias.len() != rows {
        return Err(format!(
            "layer {i}: declared {rows} rows but holds {} biases",
            layer.bias.len()
        ));
    }
    Ok(())
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if !(*x > 0.0) {
            *x = 0.0;
        }
    }
}

/// Softmax with the max logit subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Label posteriors of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFrame {
    pub probs: Vec<f64>,
    pub frame_index: usize,
}

impl PosteriorFrame {
    pub fn n_labels(&self) -> usize {
        self.probs.len()
    }
}

/// Flattened `(input, label)` pairs.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    input_dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(input_dim: usize) -> Self {
        TrainingSet {
            input_dim,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, input: &[f64], label: usize) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "example has dimension {}, set expects {}",
                input.len(),
                self.input_dim
            )));
        }
        self.inputs.extend_from_slice(input);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// Mean cross-entropy over the whole set after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Gradients laid out like the layers they belong to.
struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    fn for_params(params: &NetworkParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Accumulates the cross-entropy gradient of one example into `grads`
/// and returns the example's loss.
fn backprop(params: &NetworkParams, x: &[f64], label: usize, grads: &mut Gradients) -> f64 {
    let n_layers = params.layers.len();
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    activations.push(x.to_vec());
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = Vec::new();
        layer.affine(&activations[i], &mut z);
        if i + 1 < n_layers {
            relu_in_place(&mut z);
        }
        activations.push(z);
    }
    let probs = softmax(&activations[n_layers]);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

    let mut delta = probs;
    delta[label] -= 1.0;
    for i in (0..n_layers).rev() {
        let layer = &params.layers[i];
        let input = &activations[i];
        let g = &mut grads.layers[i];
        for (r, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            g.bias[r] += d;
            let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
            for (gw, a) in row.iter_mut().zip(input) {
                *gw += d * a;
            }
        }
        if i == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.cols];
        for (r, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        // ReLU derivative, using the stored post-activation values.
        for (p, a) in prev.iter_mut().zip(&activations[i]) {
            if !(*a > 0.0) {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    loss
}

/// Cross-entropy of one example.
pub fn example_loss(params: &NetworkParams, x: &[f64], label: usize) -> Result<f64> {
    let probs = params.forward(x)?;
    Ok(-probs[label].max(f64::MIN_POSITIVE).ln())
}

pub fn mean_loss(params: &NetworkParams, data: &TrainingSet) -> Result<f64> {
    let probs = params.forward_many((0..data.len()).map(|i| data.input(i)))?;
    Ok(probs
        .iter()
        .zip(data.labels())
        .map(|(p, &l)| -p[l].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / data.len() as f64)
}

/// Fraction of examples whose arg-max posterior equals the label.
pub fn accuracy(params: &NetworkParams, data: &TrainingSet) -> Result<f64> {
    if data.is_empty() {
        return Ok(1.0);
    }
    let probs = params.forward_many((0..data.len()).map(|i| data.input(i)))?;
    let correct = probs
        .iter()
        .zip(data.labels())
        .filter(|(p, &l)| argmax(p) == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Mini-batch SGD on mean cross-entropy from a seeded He initialisation.
pub fn train_sgd(
    topology: Topology,
    data: &TrainingSet,
    options: &TrainOptions,
) -> Result<TrainReport> {
    let params = NetworkParams::init(topology, options.seed)?;
    train_from(params, data, options)
}

/// Continues training from existing parameters.
pub fn train_from(
    mut params: NetworkParams,
    data: &TrainingSet,
    options: &TrainOptions,
) -> Result<TrainReport> {
    let topology = params.topology;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.input_dim() != topology.input_dim {
        return Err(Error::invalid("training inputs do not match the topology"));
    }
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= topology.n_labels) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} labels",
            topology.n_labels
        )));
    }
    if !(options.learning_rate >= 0.0) || !options.learning_rate.is_finite() {
        return Err(Error::invalid(
            "learning rate must be a non-negative finite number",
        ));
    }
    if options.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::for_params(&params);
    let mut epoch_losses = Vec::with_capacity(options.epochs);

    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(options.batch_size) {
            grads.clear();
            for &i in batch {
                backprop(&params, data.input(i), data.label(i), &mut grads);
            }
            let step = options.learning_rate / batch.len() as f64;
            for (layer, g) in params.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= step * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= step * gb;
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::TrainingDiverged { epoch: epoch + 1 });
        }
        let loss = mean_loss(&params, data)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch: epoch + 1 });
        }
        epoch_losses.push(loss);
    }
    Ok(TrainReport {
        params,
        epoch_losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

/// Denominator floor for the relative error, so parameters whose true
/// gradient is essentially zero are judged by absolute error instead.
const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Compares backprop gradients against central finite differences on every
/// parameter. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    params: &NetworkParams,
    x: &[f64],
    label: usize,
    epsilon: f64,
) -> Result<GradientCheck> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::invalid("epsilon must lie in (0, 1e-2]"));
    }
    if label >= params.topology.n_labels {
        return Err(Error::invalid("label out of range"));
    }
    params.forward(x)?;
    let mut grads = Gradients::for_params(params);
    backprop(params, x, label, &mut grads);
    let analytic: Vec<f64> = grads
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect();

    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for (idx, a) in analytic.iter().enumerate() {
        let original = *probe.value_mut(idx);
        *probe.value_mut(idx) = original + epsilon;
        let plus = example_loss(&probe, x, label)?;
        *probe.value_mut(idx) = original - epsilon;
        let minus = example_loss(&probe, x, label)?;
        *probe.value_mut(idx) = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let abs = (a - numeric).abs();
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR));
    }
    Ok(GradientCheck {
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
    })
}

#[derive(Serialize)]
struct ParamsOut<'a> {
    topology: Topology,
    layers: &'a [Layer],
}

#[derive(Deserialize)]
struct ParamsIn<'a> {
    topology: Topology,
    #[serde(borrow)]
    layers: Vec<&'a RawValue>,
}

/// JSON weight file. Floats are written in shortest round-trip form, so
/// `load_params(save_params(p)) == p` bit for bit.
pub fn save_params(params: &NetworkParams) -> Vec<u8> {
    serde_json::to_vec(&ParamsOut {
        topology: params.topology,
        layers: &params.layers,
    })
    .expect("finite parameters serialize")
}

pub fn load_params(bytes: &[u8]) -> Result<NetworkParams> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "weight file is not valid UTF-8".into(),
    })?;
    let raw: ParamsIn = serde_json::from_str(text).map_err(|e| json_parse_error(text, 0, &e))?;
    raw.topology.validate().map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let shapes = raw.topology.layer_shapes();
    if shapes.len() != raw.layers.len() {
        return Err(Error::Parse {
            offset: 0,
            message: format!(
                "topology implies {} layers, file holds {}",
                shapes.len(),
                raw.layers.len()
            ),
        });
    }
    let mut layers = Vec::with_capacity(raw.layers.len());
    for (i, (value, (rows, cols))) in raw.layers.iter().zip(shapes).enumerate() {
        let offset = value.get().as_ptr() as usize - text.as_ptr() as usize;
        let layer: Layer = serde_json::from_str(value.get())
            .map_err(|e| json_parse_error(value.get(), offset, &e))?;
        check_layer_shape(i, &layer, rows, cols)
            .map_err(|message| Error::Parse { offset, message })?;
        if !layer.is_finite() {
            return Err(Error::Parse {
                offset,
                message: format!("layer {i}: non-finite value"),
            });
        }
        layers.push(layer);
    }
    NetworkParams::new(raw.topology, layers)
}

fn json_parse_error(text: &str, base: usize, e: &serde_json::Error) -> Error {
    // serde_json reports 1-based line and column; turn them into a byte offset.
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == e.line() {
            offset += e.column().saturating_sub(1).min(line.len());
            break;
        }
        offset += line.len();
    }
    Error::Parse {
        offset: base + offset,
        message: e.to_string(),
    }
}
