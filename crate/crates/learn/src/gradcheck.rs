//! Central finite-difference checks of tape gradients on randomized
//! instances of every layer and objective composition used in training.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{Architecture, ModelBundle, BLOCKS};
use crate::mine::shuffled_rows;
use crate::network::{evaluate_gradient, Activation, Dense, LossSpec, Network};
use crate::tape::{Tape, Var};
use crate::train::{game_graph, selector_graph};

pub const STEP: f64 = 1e-5;
/// Below this combined gradient norm the error is reported as absolute.
const FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Sigmoid, ReLU and softmax layers under cross-entropy on logits.
    MlpCrossEntropy,
    /// Identity, sigmoid and softmax layers under squared error.
    MlpSquaredError,
    /// Masked block-diagonal layers under a linear read-out.
    BlockDiagonalLinear,
    /// Game objective of `h`, `g_i` and `s` with the compression penalty.
    GameMain,
    /// Environment-head losses of the game.
    GameDomain,
    /// Selector loss minus the weighted MI bound, w.r.t. `g_i` and `s`.
    Selector,
    /// Donsker–Varadhan bound w.r.t. the statistics network.
    MiBound,
}

pub const COMPOSITIONS: [Composition; 7] = [
    Composition::MlpCrossEntropy,
    Composition::MlpSquaredError,
    Composition::BlockDiagonalLinear,
    Composition::GameMain,
    Composition::GameDomain,
    Composition::Selector,
    Composition::MiBound,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub composition: Composition,
    pub seed: u64,
    /// Largest per-matrix `‖a − n‖ / (‖a‖ + ‖n‖)`.
    pub max_relative_error: f64,
    pub entries: usize,
}

fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = norm(&(analytic - numeric));
    let scale = norm(analytic) + norm(numeric);
    if scale < FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `params`, one entry at a time.
pub fn numeric_gradient(params: &[Array2<f64>], f: impl Fn(&[Array2<f64>]) -> f64, step: f64) -> Vec<Array2<f64>> {
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let (rows, cols) = p[k].dim();
        let mut g = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                let orig = p[k][[i, j]];
                p[k][[i, j]] = orig + step;
                let up = f(&p);
                p[k][[i, j]] = orig - step;
                let down = f(&p);
                p[k][[i, j]] = orig;
                g[[i, j]] = (up - down) / (2.0 * step);
            }
        }
        out.push(g);
    }
    out
}

/// Compares `eval`'s analytic gradients with central differences of its value.
pub fn compare(params: &[Array2<f64>], eval: impl Fn(&[Array2<f64>]) -> (f64, Vec<Array2<f64>>)) -> (f64, usize) {
    let (_, analytic) = eval(params);
    let numeric = numeric_gradient(params, |p| eval(p).0, STEP);
    let worst = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(a, n)).fold(0.0, f64::max);
    (worst, params.iter().map(|p| p.len()).sum())
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

fn randomize(net: &mut Network, rng: &mut ChaCha8Rng) {
    for p in net.params_mut() {
        *p = uniform(rng, p.dim());
    }
}

fn labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn network_check(net: Network, x: Array2<f64>, loss: LossSpec) -> (f64, usize) {
    let params: Vec<Array2<f64>> = net.params().into_iter().cloned().collect();
    compare(&params, |p| {
        let mut n = net.clone();
        for (dst, src) in n.params_mut().into_iter().zip(p) {
            dst.assign(src);
        }
        evaluate_gradient(&n, &x, &loss).expect("instances are well formed")
    })
}

fn flatten(b: &ModelBundle, nets: &[usize]) -> Vec<Array2<f64>> {
    let all = b.networks();
    nets.iter().flat_map(|&i| all[i].1.params().into_iter().cloned()).collect()
}

fn load(b: &mut ModelBundle, nets: &[usize], params: &[Array2<f64>]) {
    let mut it = params.iter();
    let mut all = b.networks_mut();
    for &i in nets {
        for p in all[i].params_mut() {
            p.assign(it.next().expect("one matrix per parameter"));
        }
    }
}

fn grads(tape: &Tape, out: Var, vars: &[Var]) -> (f64, Vec<Array2<f64>>) {
    let g = tape.backward(out);
    (tape.scalar_value(out), vars.iter().map(|&v| g.wrt(v)).collect())
}

struct BundleInstance {
    bundle: ModelBundle,
    batches: Vec<(Array2<f64>, Vec<usize>)>,
}

fn bundle_instance(rng: &mut ChaCha8Rng) -> BundleInstance {
    let arch = Architecture {
        block_input: rng.random_range(1..=3),
        block_hidden: rng.random_range(2..=3),
        block_output: rng.random_range(1..=2),
        predictor_hidden: rng.random_range(2..=4),
        estimator_hidden: rng.random_range(2..=4),
        num_classes: rng.random_range(2..=3),
        num_envs: 2,
    };
    let mut bundle = ModelBundle::new(arch, rng);
    for net in bundle.networks_mut() {
        randomize(net, rng);
    }
    let batches = (0..arch.num_envs)
        .map(|_| {
            let n = rng.random_range(3..=5);
            (uniform(rng, (n, BLOCKS * arch.block_input)), labels(rng, n, arch.num_classes))
        })
        .collect();
    BundleInstance { bundle, batches }
}

/// One randomized instance of `c`, drawn from `seed`.
pub fn check(c: Composition, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (max_relative_error, entries) = match c {
        Composition::MlpCrossEntropy => {
            let w: Vec<usize> = (0..4).map(|_| rng.random_range(2..=4)).collect();
            let mut net = Network::mlp(&w, &[Activation::Sigmoid, Activation::Relu, Activation::Softmax], &mut rng);
            randomize(&mut net, &mut rng);
            let n = rng.random_range(2..=6);
            let x = uniform(&mut rng, (n, w[0]));
            let y = labels(&mut rng, n, w[3]);
            network_check(net, x, LossSpec::CrossEntropy(y))
        }
        Composition::MlpSquaredError => {
            let w: Vec<usize> = (0..4).map(|_| rng.random_range(2..=4)).collect();
            let mut net = Network::mlp(&w, &[Activation::Identity, Activation::Sigmoid, Activation::Softmax], &mut rng);
            randomize(&mut net, &mut rng);
            let n = rng.random_range(2..=6);
            let x = uniform(&mut rng, (n, w[0]));
            let t = uniform(&mut rng, (n, w[3]));
            network_check(net, x, LossSpec::SquaredError(t))
        }
        Composition::BlockDiagonalLinear => {
            let (i, h, o) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
            let mut net = Network::new(vec![
                Dense::block_diagonal(BLOCKS, i, h, Activation::Relu, &mut rng),
                Dense::block_diagonal(BLOCKS, h, o, Activation::Sigmoid, &mut rng),
            ])
            .expect("block widths chain");
            randomize(&mut net, &mut rng);
            let n = rng.random_range(2..=6);
            let x = uniform(&mut rng, (n, BLOCKS * i));
            let w = uniform(&mut rng, (n, BLOCKS * o));
            network_check(net, x, LossSpec::Linear(w))
        }
        Composition::GameMain | Composition::GameDomain => {
            let inst = bundle_instance(&mut rng);
            let beta = rng.random_range(0.1..10.0);
            let bottleneck = rng.random_range(0.01..1.0);
            let envs = inst.bundle.domain.len();
            let nets: Vec<usize> = if c == Composition::GameMain { vec![0, 1, 2 + envs] } else { (2..2 + envs).collect() };
            compare(&flatten(&inst.bundle, &nets), |p| {
                let mut b = inst.bundle.clone();
                load(&mut b, &nets, p);
                let mut tape = Tape::new();
                let g = game_graph(&mut tape, &b, &inst.batches, beta, bottleneck, true);
                if c == Composition::GameMain {
                    let vars: Vec<Var> = [&g.encoder, &g.invariant, g.selector.as_ref().expect("selector bound")]
                        .into_iter()
                        .flatten()
                        .copied()
                        .collect();
                    grads(&tape, g.main, &vars)
                } else {
                    let vars: Vec<Var> = g.domain.iter().flatten().copied().collect();
                    grads(&tape, g.domain_loss, &vars)
                }
            })
        }
        Composition::Selector | Composition::MiBound => {
            let inst = bundle_instance(&mut rng);
            let lambda = rng.random_range(0.1..10.0);
            let mi_weight = rng.random_range(0.1..3.0);
            let (x, y) = &inst.batches[0];
            let perm = shuffled_rows(x.nrows(), &mut rng);
            let envs = inst.bundle.domain.len();
            let nets = if c == Composition::Selector { vec![1, 2 + envs] } else { vec![3 + envs] };
            compare(&flatten(&inst.bundle, &nets), |p| {
                let mut b = inst.bundle.clone();
                load(&mut b, &nets, p);
                let mut tape = Tape::new();
                let g = selector_graph(&mut tape, &b, x, y, lambda, mi_weight, &perm);
                if c == Composition::Selector {
                    let vars: Vec<Var> = g.invariant.iter().chain(&g.selector).copied().collect();
                    grads(&tape, g.objective, &vars)
                } else {
                    grads(&tape, g.bound.expect("mi_weight is positive"), &g.estimator)
                }
            })
        }
    };
    CheckResult { composition: c, seed, max_relative_error, entries }
}

/// Every composition on `instances` seeds.
pub fn check_all(instances: u64) -> Vec<CheckResult> {
    COMPOSITIONS.iter().flat_map(|&c| (0..instances).map(move |s| check(c, s))).collect()
}
