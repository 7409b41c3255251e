//! The trainable subnetworks and their on-disk form.
//!
//! A bundle file is a JSON manifest describing every layer, followed by a
//! base64 blob of little-endian `f64` values: per network and layer the
//! weight, bias and (if masked) mask, then the optimizer moments.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::network::{Activation, Dense, Network, Output};
use crate::optim::{Optimizer, OptimizerKind};

pub const BUNDLE_FORMAT: &str = "fakeinv-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Number of latent blocks in the observation and in `h`.
pub const BLOCKS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Width of each observation block.
    pub block_input: usize,
    pub block_hidden: usize,
    /// Width of each block of `h`.
    pub block_output: usize,
    pub predictor_hidden: usize,
    pub estimator_hidden: usize,
    pub num_classes: usize,
    pub num_envs: usize,
}

impl Architecture {
    pub fn input_width(&self) -> usize {
        BLOCKS * self.block_input
    }

    pub fn feature_width(&self) -> usize {
        BLOCKS * self.block_output
    }

    /// Column range of latent block `b` in `h`.
    pub fn block(&self, b: usize) -> std::ops::Range<usize> {
        b * self.block_output..(b + 1) * self.block_output
    }
}

/// Encoder `h`, invariant predictor `g_i`, one domain head `g_d` per
/// environment, selector `s`, and statistics network `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub arch: Architecture,
    pub encoder: Network,
    pub invariant: Network,
    pub domain: Vec<Network>,
    pub selector: Network,
    pub estimator: Network,
    /// Optimizer state in [`ModelBundle::networks`] order; empty before training.
    pub optimizers: Vec<Optimizer>,
}

fn predictor(arch: &Architecture, rng: &mut impl Rng) -> Network {
    Network::mlp(
        &[arch.feature_width(), arch.predictor_hidden, arch.num_classes],
        &[Activation::Relu, Activation::Softmax],
        rng,
    )
}

impl ModelBundle {
    pub fn new(arch: Architecture, rng: &mut impl Rng) -> Self {
        let encoder = Network::new(vec![
            Dense::block_diagonal(BLOCKS, arch.block_input, arch.block_hidden, Activation::Relu, rng),
            Dense::block_diagonal(BLOCKS, arch.block_hidden, arch.block_output, Activation::Identity, rng),
        ])
        .expect("block widths chain");
        let d = arch.feature_width();
        let invariant = predictor(&arch, rng);
        let domain = (0..arch.num_envs).map(|_| predictor(&arch, rng)).collect();
        let selector = Network::mlp(&[d, d, d], &[Activation::Relu, Activation::Sigmoid], rng);
        let estimator = Network::mlp(&[2 * d, arch.estimator_hidden, 1], &[Activation::Relu, Activation::Identity], rng);
        Self { arch, encoder, invariant, domain, selector, estimator, optimizers: Vec::new() }
    }

    pub fn networks(&self) -> Vec<(String, &Network)> {
        let mut out = vec![("encoder".to_string(), &self.encoder), ("invariant".to_string(), &self.invariant)];
        out.extend(self.domain.iter().enumerate().map(|(i, n)| (format!("domain.{i}"), n)));
        out.push(("selector".into(), &self.selector));
        out.push(("estimator".into(), &self.estimator));
        out
    }

    pub(crate) fn networks_mut(&mut self) -> Vec<&mut Network> {
        let mut out = vec![&mut self.encoder, &mut self.invariant];
        out.extend(self.domain.iter_mut());
        out.push(&mut self.selector);
        out.push(&mut self.estimator);
        out
    }

    pub fn init_optimizers(&mut self, kind: OptimizerKind, lr: f64, selector_lr: f64, estimator_lr: f64) {
        let n = self.networks().len();
        self.optimizers = self
            .networks()
            .iter()
            .enumerate()
            .map(|(i, (_, net))| {
                let rate = if i == n - 2 { selector_lr } else if i == n - 1 { estimator_lr } else { lr };
                Optimizer::new(kind, rate, net)
            })
            .collect();
    }

    /// Applies `grads` to network `index` (in [`ModelBundle::networks`] order).
    pub(crate) fn update(&mut self, index: usize, grads: &[Array2<f64>]) {
        let mut opt = std::mem::replace(&mut self.optimizers[index], Optimizer::new(OptimizerKind::Sgd, 0.0, &self.encoder));
        opt.apply(self.networks_mut()[index], grads);
        self.optimizers[index] = opt;
    }

    pub(crate) fn selector_index(&self) -> usize {
        2 + self.domain.len()
    }

    pub(crate) fn estimator_index(&self) -> usize {
        3 + self.domain.len()
    }

    pub fn encode(&self, x: &Array2<f64>) -> Array2<f64> {
        self.encoder.predict(x, Output::Full)
    }

    pub fn selection(&self, h: &Array2<f64>) -> Array2<f64> {
        self.selector.predict(h, Output::Full)
    }

    /// Class probabilities of `g_i(s ⊙ h)` or `g_i(h)`.
    pub fn predict_proba(&self, x: &Array2<f64>, use_selector: bool) -> Array2<f64> {
        let h = self.encode(x);
        let f = if use_selector { self.selection(&h) * &h } else { h };
        self.invariant.predict(&f, Output::Full)
    }

    /// Mean selector output over each latent block of `h`.
    pub fn selector_mass(&self, x: &Array2<f64>) -> [f64; BLOCKS] {
        let s = self.selection(&self.encode(x));
        std::array::from_fn(|b| s.slice(s![.., self.arch.block(b)]).mean().unwrap_or(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.networks().iter().all(|(_, n)| n.is_finite())
    }

    pub fn to_json(&self) -> String {
        let mut blob: Vec<u8> = Vec::new();
        let mut push = |a: &Array2<f64>| a.iter().for_each(|v| blob.extend_from_slice(&v.to_le_bytes()));
        let mut networks = Vec::new();
        for (name, net) in self.networks() {
            let mut layers = Vec::new();
            for l in net.layers() {
                push(&l.weight);
                push(&l.bias);
                if let Some(m) = &l.mask {
                    push(m);
                }
                layers.push(LayerManifest {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    masked: l.mask.is_some(),
                });
            }
            networks.push(NetworkManifest { name, layers });
        }
        let mut optimizers = Vec::new();
        for o in &self.optimizers {
            for (m, v) in &o.moments {
                push(m);
                push(v);
            }
            optimizers.push(OptimizerManifest { kind: o.kind, lr: o.lr, step: o.step });
        }
        let manifest = Manifest {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            architecture: self.arch,
            networks,
            optimizers,
            blob: STANDARD.encode(&blob),
        };
        serde_json::to_string_pretty(&manifest).expect("manifests always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.format != BUNDLE_FORMAT || m.version != BUNDLE_VERSION {
            return Err(LearnError::Bundle(format!("unsupported format {} v{}", m.format, m.version)));
        }
        let bytes = STANDARD.decode(m.blob.as_bytes()).map_err(|e| LearnError::Bundle(e.to_string()))?;
        if bytes.len() % 8 != 0 {
            return Err(LearnError::Bundle("blob length is not a multiple of 8".into()));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let mut reader = BlobReader { values: &values, at: 0 };
        let mut nets = Vec::new();
        for nm in &m.networks {
            let mut layers = Vec::new();
            for l in &nm.layers {
                let weight = reader.take((l.inputs, l.outputs))?;
                let bias = reader.take((1, l.outputs))?;
                let mask = if l.masked { Some(reader.take((l.inputs, l.outputs))?) } else { None };
                layers.push(Dense { weight, bias, activation: l.activation, mask });
            }
            nets.push((nm.name.clone(), Network::new(layers)?));
        }
        let a = m.architecture;
        let mut expected = vec!["encoder".to_string(), "invariant".to_string()];
        expected.extend((0..a.num_envs).map(|i| format!("domain.{i}")));
        expected.extend(["selector".to_string(), "estimator".to_string()]);
        let names: Vec<&String> = nets.iter().map(|(n, _)| n).collect();
        if names != expected.iter().collect::<Vec<_>>() {
            return Err(LearnError::Bundle(format!("network list {names:?} does not match the architecture")));
        }
        let mut nets: Vec<Network> = nets.into_iter().map(|(_, n)| n).collect();
        let estimator = nets.pop().expect("length checked");
        let selector = nets.pop().expect("length checked");
        let domain = nets.split_off(2);
        let invariant = nets.pop().expect("length checked");
        let encoder = nets.pop().expect("length checked");
        let d = a.feature_width();
        let shapes_ok = encoder.input_width() == a.input_width()
            && encoder.output_width() == d
            && invariant.input_width() == d
            && invariant.output_width() == a.num_classes
            && domain.iter().all(|n| n.input_width() == d && n.output_width() == a.num_classes)
            && selector.input_width() == d
            && selector.output_width() == d
            && estimator.input_width() == 2 * d
            && estimator.output_width() == 1;
        if !shapes_ok {
            return Err(LearnError::Bundle("network widths do not match the architecture".into()));
        }
        let mut bundle = Self { arch: a, encoder, invariant, domain, selector, estimator, optimizers: Vec::new() };
        if !m.optimizers.is_empty() && m.optimizers.len() != bundle.networks().len() {
            return Err(LearnError::Bundle("optimizer count does not match the network count".into()));
        }
        let shapes: Vec<Vec<(usize, usize)>> =
            bundle.networks().iter().map(|(_, n)| n.params().iter().map(|p| p.dim()).collect()).collect();
        for (om, shapes) in m.optimizers.iter().zip(shapes) {
            let moments = match om.kind {
                OptimizerKind::Sgd => Vec::new(),
                OptimizerKind::Adam { .. } => {
                    shapes.iter().map(|&d| Ok((reader.take(d)?, reader.take(d)?))).collect::<Result<Vec<_>>>()?
                }
            };
            bundle.optimizers.push(Optimizer { kind: om.kind, lr: om.lr, step: om.step, moments });
        }
        if reader.at != values.len() {
            return Err(LearnError::Bundle(format!("{} trailing values in blob", values.len() - reader.at)));
        }
        Ok(bundle)
    }
}

struct BlobReader<'a> {
    values: &'a [f64],
    at: usize,
}

impl BlobReader<'_> {
    fn take(&mut self, dim: (usize, usize)) -> Result<Array2<f64>> {
        let n = dim.0.checked_mul(dim.1).ok_or_else(|| LearnError::Bundle("layer too large".into()))?;
        let end = self.at.checked_add(n).filter(|&e| e <= self.values.len());
        let end = end.ok_or_else(|| LearnError::Bundle("blob ends early".into()))?;
        let slice = &self.values[self.at..end];
        if slice.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::Bundle("non-finite value in blob".into()));
        }
        self.at = end;
        Ok(Array2::from_shape_vec(dim, slice.to_vec()).expect("length checked"))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    architecture: Architecture,
    networks: Vec<NetworkManifest>,
    optimizers: Vec<OptimizerManifest>,
    blob: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkManifest {
    name: String,
    layers: Vec<LayerManifest>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerManifest {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    masked: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerManifest {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
}
