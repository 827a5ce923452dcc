//! A small softmax MLP with hand-derived gradients.
//!
//! Hidden layers use ReLU; the last layer feeds a softmax. The training
//! objective for one sample is
//!
//! ```text
//! CE(p, t) + α·CE(p, e_y) + β·H(p)
//! ```
//!
//! where `t` is a soft target held constant, `e_y` an optional one-hot
//! label and `H` the prediction entropy. Its gradient with respect to the
//! logits `z` is `p·Σt − t + α(p − e_y) − β·p ⊙ (log p + H)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::riskmath::ProbVector;
use crate::seed;

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Dimension("layer with a zero dimension".into()));
        }
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::Dimension(format!(
                "layer {in_dim}->{out_dim} given {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameter".into()));
        }
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            biases,
        })
    }

    fn zeros_like(&self) -> Self {
        Layer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.biases.len()],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.biases)
                .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }
}

/// Parameters of a feed-forward classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Parameter-shaped gradient (or velocity) buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network without layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(MlpParams { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    /// Euclidean distance between two parameter sets of the same shape.
    pub fn distance(&self, other: &MlpParams) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension("parameter shapes differ".into()));
        }
        Ok(self
            .flat()
            .zip(other.flat())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Mutable access to parameter `k` in layer-major order (weights, then
    /// biases, per layer). Used by finite-difference checks.
    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.biases.len() {
                return &mut l.biases[k];
            }
            k -= l.biases.len();
        }
        panic!("parameter index out of range")
    }
}

impl Gradients {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn get(&self, mut k: usize) -> f64 {
        for l in &self.layers {
            if k < l.weights.len() {
                return l.weights[k];
            }
            k -= l.weights.len();
            if k < l.biases.len() {
                return l.biases[k];
            }
            k -= l.biases.len();
        }
        panic!("gradient index out of range")
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(&mut l.biases).for_each(|v| *v *= factor);
        }
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn same_shape(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.in_dim == p.in_dim && g.out_dim == p.out_dim)
    }
}

/// Scaled uniform initialization with bound `sqrt(6 / (fan_in + fan_out))`
/// and zero biases.
pub fn init_params(layer_dims: &[usize], seed: u64) -> Result<MlpParams> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::Dimension(format!("bad layer dims {layer_dims:?}")));
    }
    let mut rng = seed::rng(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out])
        })
        .collect::<Result<Vec<_>>>()?;
    MlpParams::new(layers)
}

struct Trace {
    /// Input to each layer; `inputs[0]` is the feature vector.
    inputs: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

fn trace(params: &MlpParams, features: &[f64]) -> Result<Trace> {
    if features.len() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "{} features for a network expecting {}",
            features.len(),
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    inputs.push(features.to_vec());
    let mut z = Vec::new();
    for (k, layer) in params.layers.iter().enumerate() {
        layer.affine(&inputs[k], &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pre-activation of layer {k}")));
        }
        if k < last {
            inputs.push(z.iter().map(|v| v.max(0.0)).collect());
        }
    }
    softmax_in_place(&mut z);
    Ok(Trace { inputs, probs: z })
}

/// Raw softmax output, without [`ProbVector`] validation.
pub fn forward_raw(params: &MlpParams, features: &[f64]) -> Result<Vec<f64>> {
    Ok(trace(params, features)?.probs)
}

pub fn forward(params: &MlpParams, features: &[f64]) -> Result<ProbVector> {
    ProbVector::new(forward_raw(params, features)?)
}

fn check_same_classes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{} predicted classes against {} target classes",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub(crate) fn cross_entropy_raw(pred: &[f64], target: &[f64]) -> f64 {
    -pred
        .iter()
        .zip(target)
        .filter(|(_, t)| **t != 0.0)
        .map(|(p, t)| t * p.max(LOG_FLOOR).ln())
        .sum::<f64>()
}

pub(crate) fn entropy_raw(pred: &[f64]) -> f64 {
    -pred
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.max(LOG_FLOOR).ln())
        .sum::<f64>()
}

/// `−Σ target_k log pred_k` with `pred` clamped below at [`LOG_FLOOR`].
pub fn soft_cross_entropy(pred: &ProbVector, target: &ProbVector) -> Result<f64> {
    check_same_classes(pred.as_slice(), target.as_slice())?;
    Ok(cross_entropy_raw(pred.as_slice(), target.as_slice()))
}

pub fn prediction_entropy(pred: &ProbVector) -> f64 {
    entropy_raw(pred.as_slice())
}

/// Per-sample objective: soft-target cross-entropy, an optional weighted
/// hard-label term and a weighted entropy term.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub soft_target: &'a [f64],
    pub hard_label: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
}

impl<'a> LossSpec<'a> {
    /// Plain cross-entropy against `target`.
    pub fn soft(target: &'a [f64]) -> Self {
        LossSpec {
            soft_target: target,
            hard_label: None,
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn value(&self, probs: &[f64]) -> f64 {
        let mut loss = cross_entropy_raw(probs, self.soft_target);
        if let Some(y) = self.hard_label {
            loss += self.alpha * -probs[y].max(LOG_FLOOR).ln();
        }
        if self.beta != 0.0 {
            loss += self.beta * entropy_raw(probs);
        }
        loss
    }

    fn validate(&self, classes: usize) -> Result<()> {
        check_same_classes(&vec![0.0; classes], self.soft_target)?;
        if matches!(self.hard_label, Some(y) if y >= classes) {
            return Err(Error::InvalidArgument("hard label out of range".into()));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::NonFinite("loss weight".into()));
        }
        Ok(())
    }

    fn logit_gradient(&self, probs: &[f64]) -> Vec<f64> {
        let target_mass: f64 = self.soft_target.iter().sum();
        let entropy = entropy_raw(probs);
        probs
            .iter()
            .zip(self.soft_target)
            .enumerate()
            .map(|(j, (&p, &t))| {
                let mut g = p * target_mass - t;
                if let Some(y) = self.hard_label {
                    g += self.alpha * (p - if j == y { 1.0 } else { 0.0 });
                }
                if self.beta != 0.0 {
                    g -= self.beta * p * (p.max(LOG_FLOOR).ln() + entropy);
                }
                g
            })
            .collect()
    }
}

/// Loss and parameter gradient for one sample.
pub fn backward(params: &MlpParams, features: &[f64], spec: &LossSpec) -> Result<(f64, Gradients)> {
    let mut grads = params.zero_gradients();
    let loss = accumulate_backward(params, features, spec, 1.0, &mut grads)?;
    Ok((loss, grads))
}

/// Adds `scale ×` the sample gradient into `grads`; returns the unscaled
/// sample loss.
pub fn accumulate_backward(
    params: &MlpParams,
    features: &[f64],
    spec: &LossSpec,
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    spec.validate(params.classes())?;
    if !grads.same_shape(params) {
        return Err(Error::Dimension("gradient buffer shape".into()));
    }
    let t = trace(params, features)?;
    let loss = spec.value(&t.probs);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut delta = spec.logit_gradient(&t.probs);
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let input = &t.inputs[k];
        let g = &mut grads.layers[k];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let sd = scale * d;
            g.biases[o] += sd;
            let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            row.iter_mut().zip(input).for_each(|(w, x)| *w += sd * x);
        }
        if k > 0 {
            // Back through W, then through the ReLU that produced `input`.
            let mut upstream = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                upstream.iter_mut().zip(row).for_each(|(u, w)| *u += d * w);
            }
            upstream.iter_mut().zip(input).for_each(|(u, &a)| {
                if a <= 0.0 {
                    *u = 0.0
                }
            });
            delta = upstream;
        }
    }
    Ok(loss)
}

/// Classical momentum: `v ← μv + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Momentum {
    pub coefficient: f64,
    velocity: Option<Gradients>,
}

impl Momentum {
    pub fn new(coefficient: f64) -> Self {
        Momentum {
            coefficient,
            velocity: None,
        }
    }
}

pub fn sgd_step(params: &mut MlpParams, grads: &Gradients, learning_rate: f64, state: &mut Momentum) -> Result<()> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {learning_rate}")));
    }
    if !grads.same_shape(params) {
        return Err(Error::Dimension("gradient shape differs from parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mu = state.coefficient;
    let velocity = state.velocity.get_or_insert_with(|| params.zero_gradients());
    if !velocity.same_shape(params) {
        return Err(Error::Dimension("momentum state shape differs from parameters".into()));
    }
    for ((p, g), v) in params.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        let pv = p.weights.iter_mut().chain(&mut p.biases);
        let gv = g.weights.iter().chain(&g.biases);
        let vv = v.weights.iter_mut().chain(&mut v.biases);
        for ((p, g), v) in pv.zip(gv).zip(vv) {
            *v = mu * *v + g;
            *p -= learning_rate * *v;
        }
    }
    Ok(())
}

const CHECKPOINT_HEADER: &str = "cool-mlp-checkpoint v1";

/// Text checkpoint, one record per line:
///
/// ```text
/// cool-mlp-checkpoint v1
/// dims,<d0>,<d1>,...,<dL>
/// W<k>,<row-major weights of layer k>
/// b<k>,<biases of layer k>
/// ```
///
/// Values use shortest round-trip formatting, so reloading is exact.
pub fn checkpoint_to_string(params: &MlpParams) -> String {
    let mut s = String::new();
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let dims: Vec<String> = params.dims().iter().map(usize::to_string).collect();
    let _ = writeln!(s, "{CHECKPOINT_HEADER}");
    let _ = writeln!(s, "dims,{}", dims.join(","));
    for (k, l) in params.layers.iter().enumerate() {
        let _ = writeln!(s, "W{k},{}", join(&l.weights));
        let _ = writeln!(s, "b{k},{}", join(&l.biases));
    }
    s
}

pub fn checkpoint_from_str(text: &str) -> Result<MlpParams> {
    let bad = |what: &str| Error::InvalidArgument(format!("checkpoint: {what}"));
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_HEADER) {
        return Err(bad("missing header"));
    }
    let fields = |line: Option<&str>, tag: &str| -> Result<Vec<String>> {
        let line = line.ok_or_else(|| bad(&format!("missing {tag} record")))?;
        let mut parts = line.split(',');
        if parts.next() != Some(tag) {
            return Err(bad(&format!("expected {tag} record")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let dims = fields(lines.next(), "dims")?
        .iter()
        .map(|v| v.parse::<usize>().map_err(|_| bad("dims")))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 {
        return Err(bad("need at least two dims"));
    }
    let floats = |v: Vec<String>| -> Result<Vec<f64>> {
        v.iter().map(|x| x.parse::<f64>().map_err(|_| bad("number"))).collect()
    };
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let weights = floats(fields(lines.next(), &format!("W{k}"))?)?;
            let biases = floats(fields(lines.next(), &format!("b{k}"))?)?;
            Layer::new(w[0], w[1], weights, biases)
        })
        .collect::<Result<Vec<_>>>()?;
    MlpParams::new(layers)
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
