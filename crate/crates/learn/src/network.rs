//! Dense feed-forward networks.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::tape::{softmax_rows, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
    Softmax,
}

impl Activation {
    fn apply(&self, tape: &mut Tape, z: Var) -> Var {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => tape.sigmoid(z),
            Activation::Relu => tape.relu(z),
            Activation::Softmax => tape.softmax(z),
        }
    }

    fn apply_value(&self, z: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => z.mapv(|x| 1.0 / (1.0 + (-x).exp())),
            Activation::Relu => z.mapv(|x| x.max(0.0)),
            Activation::Softmax => softmax_rows(&z),
        }
    }
}

/// Affine map `x W + b` followed by an activation. An optional 0/1 mask of
/// the same shape as `W` pins the masked-out weights to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
    pub activation: Activation,
    pub mask: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-a..a));
        Self { weight, bias: Array2::zeros((1, outputs)), activation, mask: None }
    }

    /// Block-diagonal layer: input block `i` only feeds output block `i`.
    pub fn block_diagonal(blocks: usize, inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let mask = Array2::from_shape_fn((blocks * inputs, blocks * outputs), |(i, o)| {
            if i / inputs == o / outputs { 1.0 } else { 0.0 }
        });
        let weight = Array2::from_shape_simple_fn(mask.dim(), || rng.random_range(-a..a)) * &mask;
        Self { weight, bias: Array2::zeros((1, blocks * outputs)), activation, mask: Some(mask) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Output {
    /// Every activation applied.
    Full,
    /// Final softmax skipped, for losses that take logits.
    Logits,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
}

impl Network {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LearnError::Shape("a network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(LearnError::Shape(format!(
                    "layer {i} emits {} values, layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.dim() != (1, l.outputs()) {
                return Err(LearnError::Shape(format!("bias of layer {i} has shape {:?}", l.bias.dim())));
            }
            if l.mask.as_ref().is_some_and(|m| m.dim() != l.weight.dim()) {
                return Err(LearnError::Shape(format!("mask of layer {i} does not match its weight")));
            }
        }
        let net = Self { layers };
        if !net.is_finite() {
            return Err(LearnError::Shape("non-finite parameter".into()));
        }
        Ok(net)
    }

    /// Fully connected stack with `widths[i] -> widths[i + 1]` and `activations[i]`.
    pub fn mlp(widths: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Self {
        assert_eq!(widths.len(), activations.len() + 1);
        let layers = widths.windows(2).zip(activations).map(|(w, &a)| Dense::new(w[0], w[1], a, rng)).collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("networks are nonempty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// `[W_0, b_0, W_1, b_1, ...]`
    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Zeroes weights outside each layer's mask.
    pub fn enforce_masks(&mut self) {
        for l in &mut self.layers {
            if let Some(m) = &l.mask {
                l.weight *= m;
            }
        }
    }

    /// Records every parameter as a tape leaf, in [`Network::params`] order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var, output: Output) -> Var {
        assert_eq!(params.len(), 2 * self.layers.len());
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let w = match &l.mask {
                Some(m) => {
                    let m = tape.leaf(m.clone());
                    tape.mul(params[2 * i], m)
                }
                None => params[2 * i],
            };
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, params[2 * i + 1]);
            h = if i == last && output == Output::Logits && l.activation == Activation::Softmax {
                z
            } else {
                l.activation.apply(tape, z)
            };
        }
        h
    }

    /// Tape-free evaluation.
    pub fn predict(&self, x: &Array2<f64>, output: Output) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.weight) + &l.bias;
            h = if i == last && output == Output::Logits && l.activation == Activation::Softmax {
                z
            } else {
                l.activation.apply_value(z)
            };
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LossSpec {
    /// Mean over entries of `(output - target)^2`.
    SquaredError(Array2<f64>),
    /// Mean cross-entropy against class labels, taken on the logits.
    CrossEntropy(Vec<usize>),
    /// `mean(output ⊙ weights)`; exercises saturating outputs directly.
    Linear(Array2<f64>),
}

/// Loss value and its gradient with respect to every parameter.
pub fn evaluate_gradient(network: &Network, input: &Array2<f64>, loss: &LossSpec) -> Result<(f64, Vec<Array2<f64>>)> {
    if input.nrows() == 0 {
        return Err(LearnError::Shape("empty batch".into()));
    }
    if input.ncols() != network.input_width() {
        return Err(LearnError::Shape(format!("input width {} vs {}", input.ncols(), network.input_width())));
    }
    let mut tape = Tape::new();
    let params = network.bind(&mut tape);
    let x = tape.leaf(input.clone());
    let out = match loss {
        LossSpec::SquaredError(target) => {
            let y = network.forward(&mut tape, &params, x, Output::Full);
            let t = tape.leaf(target.clone());
            let d = tape.sub(y, t);
            let sq = tape.mul(d, d);
            tape.mean(sq)
        }
        LossSpec::CrossEntropy(labels) => {
            let y = network.forward(&mut tape, &params, x, Output::Logits);
            tape.cross_entropy(y, labels)
        }
        LossSpec::Linear(weights) => {
            let y = network.forward(&mut tape, &params, x, Output::Full);
            let c = tape.leaf(weights.clone());
            let p = tape.mul(y, c);
            tape.mean(p)
        }
    };
    let value = tape.scalar_value(out);
    if !value.is_finite() {
        return Err(LearnError::Divergence { phase: "evaluate_gradient".into(), epoch: 0, loss: value });
    }
    let grads = tape.backward(out);
    Ok((value, params.iter().map(|&p| grads.wrt(p)).collect()))
}

/// Row-wise argmax.
pub fn argmax_rows(a: &Array2<f64>) -> Vec<usize> {
    a.axis_iter(Axis(0))
        .map(|row| {
            row.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0
        })
        .collect()
}
