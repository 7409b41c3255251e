//! Training procedures: pooled ERM, the adversarial invariance game, and the
//! alternating selector / subnetwork loop.

use std::f64::consts::LN_2;

use fakeinv_core::dataset::EnvironmentDataset;
use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{Architecture, ModelBundle};
use crate::error::{LearnError, Result};
use crate::mine::{dv_bound, mi_lower_bound, joint_pairs, product_pairs, shuffled_rows};
use crate::network::{argmax_rows, Output};
use crate::optim::OptimizerKind;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the complement term in the selector loss.
    pub lambda: f64,
    /// Weight of the invariance penalty in the adversarial game.
    pub beta: f64,
    pub learning_rate: f64,
    pub selector_learning_rate: f64,
    pub estimator_learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Per-environment minibatch size.
    pub batch_size: usize,
    /// Pretraining epochs for ERM and the adversarial game.
    pub epochs: usize,
    /// Subnetwork steps per outer epoch of the alternating loop.
    pub inner_iterations: usize,
    /// Selector steps per outer epoch.
    pub selector_steps: usize,
    pub max_outer_epochs: usize,
    /// Stop once validation accuracy gains less than `plateau_delta` over this many outer epochs.
    pub plateau_epochs: usize,
    pub plateau_delta: f64,
    /// Weight of the MI lower bound in the selector objective; 0 disables it.
    pub mi_weight: f64,
    /// Weight of the compression penalty `0.5·E‖h‖²`; 0 disables it.
    pub bottleneck_weight: f64,
    pub validation_fraction: f64,
    pub block_hidden: usize,
    pub block_output: usize,
    pub predictor_hidden: usize,
    pub estimator_hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            beta: 1.0,
            learning_rate: 0.05,
            selector_learning_rate: 0.05,
            estimator_learning_rate: 0.01,
            optimizer: OptimizerKind::Sgd,
            batch_size: 128,
            epochs: 10,
            inner_iterations: 10,
            selector_steps: 50,
            max_outer_epochs: 40,
            plateau_epochs: 5,
            plateau_delta: 0.002,
            mi_weight: 1.0,
            bottleneck_weight: 0.0,
            validation_fraction: 0.2,
            block_hidden: 16,
            block_output: 8,
            predictor_hidden: 32,
            estimator_hidden: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("selector_learning_rate", self.selector_learning_rate),
            ("estimator_learning_rate", self.estimator_learning_rate),
        ];
        for (f, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LearnError::config(f, "must be positive"));
            }
        }
        let nonneg = [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("mi_weight", self.mi_weight),
            ("bottleneck_weight", self.bottleneck_weight),
            ("plateau_delta", self.plateau_delta),
        ];
        for (f, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LearnError::config(f, "must be nonnegative"));
            }
        }
        let sizes = [
            ("batch_size", self.batch_size),
            ("max_outer_epochs", self.max_outer_epochs),
            ("plateau_epochs", self.plateau_epochs),
            ("block_hidden", self.block_hidden),
            ("block_output", self.block_output),
            ("predictor_hidden", self.predictor_hidden),
            ("estimator_hidden", self.estimator_hidden),
        ];
        for (f, v) in sizes {
            if v == 0 {
                return Err(LearnError::config(f, "must be positive"));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(LearnError::config("validation_fraction", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    pub fn architecture(&self, data: &TrainingData) -> Architecture {
        Architecture {
            block_input: data.input_width / crate::bundle::BLOCKS,
            block_hidden: self.block_hidden,
            block_output: self.block_output,
            predictor_hidden: self.predictor_hidden,
            estimator_hidden: self.estimator_hidden,
            num_classes: data.num_classes,
            num_envs: data.train.len(),
        }
    }
}

/// Observations and labels of one environment as dense matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvData {
    pub env_id: usize,
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl EnvData {
    pub fn from_dataset(d: &EnvironmentDataset) -> Result<Self> {
        if d.is_empty() {
            return Err(fakeinv_core::Error::EmptyDataset.into());
        }
        let width = d.x_dim();
        let flat: Vec<f64> = d.rows.iter().flat_map(|r| r.x.iter().copied()).collect();
        let x = Array2::from_shape_vec((d.len(), width), flat)
            .map_err(|_| LearnError::Shape("rows have different observation widths".into()))?;
        Ok(Self { env_id: d.env_id, x, y: d.rows.iter().map(|r| r.y).collect() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (self.x.select(Axis(0), idx), idx.iter().map(|&i| self.y[i]).collect())
    }
}

/// Per-environment training sets with their held-out validation tails.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    pub train: Vec<EnvData>,
    pub valid: Vec<EnvData>,
    pub num_classes: usize,
    pub input_width: usize,
}

impl TrainingData {
    pub fn from_datasets(datasets: &[EnvironmentDataset], validation_fraction: f64) -> Result<Self> {
        let first = datasets.first().ok_or(fakeinv_core::Error::EmptyDataset)?;
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for d in datasets {
            if d.num_classes != first.num_classes || d.x_dim() != first.x_dim() {
                return Err(LearnError::Shape("environments disagree on classes or observation width".into()));
            }
            let (t, v) = d.split_tail(validation_fraction);
            if t.is_empty() || v.is_empty() {
                return Err(fakeinv_core::Error::EmptyDataset.into());
            }
            train.push(EnvData::from_dataset(&t)?);
            valid.push(EnvData::from_dataset(&v)?);
        }
        let input_width = first.x_dim();
        if input_width % crate::bundle::BLOCKS != 0 {
            return Err(LearnError::Shape(format!("observation width {input_width} is not three equal blocks")));
        }
        Ok(Self { train, valid, num_classes: first.num_classes, input_width })
    }

    pub fn pooled_validation(&self) -> EnvData {
        pool(&self.valid)
    }
}

fn pool(parts: &[EnvData]) -> EnvData {
    let views: Vec<_> = parts.iter().map(|e| e.x.view()).collect();
    EnvData {
        env_id: usize::MAX,
        x: concatenate(Axis(0), &views).expect("environments share a width"),
        y: parts.iter().flat_map(|e| e.y.iter().copied()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub phase: String,
    /// ERM: cross-entropy. Game: `g_i` loss. Selector: selector loss.
    pub main_loss: f64,
    /// Game: `g_d` loss. Selector: complement loss.
    pub aux_loss: f64,
    /// Compression penalty (game) or MI bound in bits (selector).
    pub penalty: f64,
    pub id_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub bundle: ModelBundle,
    pub curve: Vec<CurvePoint>,
}

fn check_finite(phase: &str, epoch: usize, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&loss) => Err(LearnError::Divergence { phase: phase.into(), epoch, loss }),
        None => Ok(()),
    }
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    fn indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.rng.random_range(0..n)).collect()
    }

    fn batches(&mut self, data: &[EnvData], k: usize) -> Vec<(Array2<f64>, Vec<usize>)> {
        data.iter().map(|e| e.batch(&self.indices(e.len(), k))).collect()
    }
}

fn steps_per_epoch(data: &TrainingData, cfg: &TrainConfig) -> usize {
    let n = data.train.iter().map(EnvData::len).max().unwrap_or(0);
    n.div_ceil(cfg.batch_size).max(1)
}

fn fresh_bundle(data: &TrainingData, cfg: &TrainConfig) -> ModelBundle {
    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut b = ModelBundle::new(cfg.architecture(data), &mut init);
    b.init_optimizers(cfg.optimizer, cfg.learning_rate, cfg.selector_learning_rate, cfg.estimator_learning_rate);
    b
}

fn grads_of(tape: &Tape, out: Var, params: &[Var]) -> Vec<Array2<f64>> {
    let g = tape.backward(out);
    params.iter().map(|&p| g.wrt(p)).collect()
}

/// Pooled cross-entropy minimization of `g_i ∘ h`.
pub fn train_erm(data: &TrainingData, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let mut b = fresh_bundle(data, cfg);
    let mut sampler = Sampler::new(cfg.seed, 1);
    let valid = data.pooled_validation();
    let mut curve = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let steps = steps_per_epoch(data, cfg);
        for _ in 0..steps {
            let batches = sampler.batches(&data.train, cfg.batch_size);
            let views: Vec<_> = batches.iter().map(|(x, _)| x.view()).collect();
            let x = concatenate(Axis(0), &views).expect("shared width");
            let y: Vec<usize> = batches.iter().flat_map(|(_, y)| y.iter().copied()).collect();
            let mut tape = Tape::new();
            let pe = b.encoder.bind(&mut tape);
            let pi = b.invariant.bind(&mut tape);
            let xv = tape.leaf(x);
            let h = b.encoder.forward(&mut tape, &pe, xv, Output::Full);
            let logits = b.invariant.forward(&mut tape, &pi, h, Output::Logits);
            let loss = tape.cross_entropy(logits, &y);
            let value = tape.scalar_value(loss);
            check_finite("erm", epoch, &[value])?;
            total += value;
            let g = tape.backward(loss);
            let ge: Vec<_> = pe.iter().map(|&p| g.wrt(p)).collect();
            let gi: Vec<_> = pi.iter().map(|&p| g.wrt(p)).collect();
            b.update(0, &ge);
            b.update(1, &gi);
        }
        curve.push(CurvePoint {
            epoch,
            phase: "erm".into(),
            main_loss: total / steps as f64,
            aux_loss: 0.0,
            penalty: 0.0,
            id_accuracy: evaluate_data(&b, &valid, false),
        });
    }
    Ok(Trained { bundle: b, curve })
}

#[derive(Clone, Copy, Debug, Default)]
struct GameStats {
    invariant_loss: f64,
    domain_loss: f64,
    penalty: f64,
}

/// Objectives of one adversarial game step, recorded on a tape.
pub struct GameGraph {
    pub encoder: Vec<Var>,
    pub invariant: Vec<Var>,
    pub domain: Vec<Vec<Var>>,
    pub selector: Option<Vec<Var>>,
    /// Minimized by `h` and `g_i`.
    pub main: Var,
    /// Minimized by the environment heads.
    pub domain_loss: Var,
    stats: GameStats,
}

/// Builds both game objectives on `tape`. With `through_selector` the
/// predictors see `s(h) ⊙ h`.
pub fn game_graph(
    tape: &mut Tape,
    b: &ModelBundle,
    batches: &[(Array2<f64>, Vec<usize>)],
    beta: f64,
    bottleneck_weight: f64,
    through_selector: bool,
) -> GameGraph {
    let pe = b.encoder.bind(tape);
    let pi = b.invariant.bind(tape);
    let pd: Vec<Vec<Var>> = b.domain.iter().map(|n| n.bind(tape)).collect();
    let ps = through_selector.then(|| b.selector.bind(tape));
    let n_env = batches.len() as f64;
    let mut main_terms = Vec::new();
    let mut domain_terms = Vec::new();
    let mut penalty_terms = Vec::new();
    let mut stats = GameStats::default();
    for (e, (x, y)) in batches.iter().enumerate() {
        let xv = tape.leaf(x.clone());
        let h = b.encoder.forward(tape, &pe, xv, Output::Full);
        let f = match &ps {
            Some(ps) => {
                let s = b.selector.forward(tape, ps, h, Output::Full);
                tape.mul(s, h)
            }
            None => h,
        };
        let li = b.invariant.forward(tape, &pi, f, Output::Logits);
        let li = tape.cross_entropy(li, y);
        let ld = b.domain[e].forward(tape, &pd[e], f, Output::Logits);
        let ld = tape.cross_entropy(ld, y);
        stats.invariant_loss += tape.scalar_value(li) / n_env;
        stats.domain_loss += tape.scalar_value(ld) / n_env;
        // L_i + β(L_i − L_d)
        let gap = tape.sub(li, ld);
        let gap = tape.scale(gap, beta);
        main_terms.push(tape.add(li, gap));
        domain_terms.push(ld);
        if bottleneck_weight > 0.0 {
            let sq = tape.mul(h, h);
            let m = tape.mean(sq);
            let p = tape.scale(m, 0.5 * b.arch.feature_width() as f64);
            stats.penalty += tape.scalar_value(p) / n_env;
            penalty_terms.push(p);
        }
    }
    let sum = |tape: &mut Tape, terms: &[Var]| {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = tape.add(acc, t);
        }
        tape.scale(acc, 1.0 / n_env)
    };
    let mut main = sum(tape, &main_terms);
    if !penalty_terms.is_empty() {
        let p = sum(tape, &penalty_terms);
        let p = tape.scale(p, bottleneck_weight);
        main = tape.add(main, p);
    }
    let domain_loss = sum(tape, &domain_terms);
    GameGraph { encoder: pe, invariant: pi, domain: pd, selector: ps, main, domain_loss, stats }
}

/// One simultaneous step of the adversarial game; `s` stays fixed.
fn game_step(b: &mut ModelBundle, batches: &[(Array2<f64>, Vec<usize>)], cfg: &TrainConfig, through_selector: bool) -> GameStats {
    let mut tape = Tape::new();
    let g = game_graph(&mut tape, b, batches, cfg.beta, cfg.bottleneck_weight, through_selector);
    let gm = tape.backward(g.main);
    let gd = tape.backward(g.domain_loss);
    let ge: Vec<_> = g.encoder.iter().map(|&p| gm.wrt(p)).collect();
    let gi: Vec<_> = g.invariant.iter().map(|&p| gm.wrt(p)).collect();
    let gds: Vec<Vec<_>> = g.domain.iter().map(|ps| ps.iter().map(|&p| gd.wrt(p)).collect()).collect();
    b.update(0, &ge);
    b.update(1, &gi);
    for (k, g) in gds.iter().enumerate() {
        b.update(2 + k, g);
    }
    g.stats
}

/// Adversarial invariance game: `h` and `g_i` minimize
/// `L_i + β(L_i − L_d)` while each environment head of `g_d` minimizes its own loss.
pub fn train_invrat(data: &TrainingData, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.train.len() < 2 {
        return Err(LearnError::TooFewEnvironments { needed: 2, got: data.train.len() });
    }
    let mut b = fresh_bundle(data, cfg);
    let mut sampler = Sampler::new(cfg.seed, 2);
    let valid = data.pooled_validation();
    let mut curve = Vec::new();
    for epoch in 0..cfg.epochs {
        let steps = steps_per_epoch(data, cfg);
        let mut acc = GameStats::default();
        for _ in 0..steps {
            let batches = sampler.batches(&data.train, cfg.batch_size);
            let s = game_step(&mut b, &batches, cfg, false);
            check_finite("invrat", epoch, &[s.invariant_loss, s.domain_loss, s.penalty])?;
            acc.invariant_loss += s.invariant_loss / steps as f64;
            acc.domain_loss += s.domain_loss / steps as f64;
            acc.penalty += s.penalty / steps as f64;
        }
        curve.push(CurvePoint {
            epoch,
            phase: if cfg.bottleneck_weight > 0.0 { "iib".into() } else { "invrat".into() },
            main_loss: acc.invariant_loss,
            aux_loss: acc.domain_loss,
            penalty: acc.penalty,
            id_accuracy: evaluate_data(&b, &valid, false),
        });
    }
    Ok(Trained { bundle: b, curve })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorLoss {
    /// `E[L(Y, g_i(s ⊙ h))]`
    pub selected: f64,
    /// `E[L(Y, g_i((1 − s) ⊙ h))]`
    pub complement: f64,
    pub value: f64,
}

/// `E[L(Y, g_i(s ⊙ h))] − λ·E[L(Y, g_i((1 − s) ⊙ h))]` on one batch.
pub fn selector_loss(bundle: &ModelBundle, x: &Array2<f64>, y: &[usize], lambda: f64) -> Result<SelectorLoss> {
    let h = bundle.encode(x);
    let s = bundle.selection(&h);
    if s.dim() != h.dim() {
        return Err(LearnError::Shape(format!("selector emits {:?}, encoder {:?}", s.dim(), h.dim())));
    }
    let ce = |f: &Array2<f64>| {
        let mut tape = Tape::new();
        let v = tape.leaf(bundle.invariant.predict(f, Output::Logits));
        let l = tape.cross_entropy(v, y);
        tape.scalar_value(l)
    };
    let selected = ce(&(&s * &h));
    let complement = ce(&(s.mapv(|v| 1.0 - v) * &h));
    Ok(SelectorLoss { selected, complement, value: selected - lambda * complement })
}

#[derive(Clone, Copy, Debug, Default)]
struct SelectorStats {
    loss: SelectorLossParts,
    mi_bits: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct SelectorLossParts {
    selected: f64,
    complement: f64,
    value: f64,
}

/// Selector objective of one outer step, recorded on a tape.
pub struct SelectorGraph {
    pub selector: Vec<Var>,
    pub invariant: Vec<Var>,
    pub estimator: Vec<Var>,
    /// Minimized by `s`.
    pub objective: Var,
    /// Donsker–Varadhan bound in nats, maximized by `T`; present when `mi_weight > 0`.
    pub bound: Option<Var>,
    stats: SelectorStats,
}

/// Selector loss minus `mi_weight` times the MI bound (bits) between `s ⊙ h`
/// and `(1 − s) ⊙ h`, where product pairs use the row permutation `perm`.
pub fn selector_graph(
    tape: &mut Tape,
    b: &ModelBundle,
    x: &Array2<f64>,
    y: &[usize],
    lambda: f64,
    mi_weight: f64,
    perm: &[usize],
) -> SelectorGraph {
    let h = b.encode(x);
    let ps = b.selector.bind(tape);
    let pi = b.invariant.bind(tape);
    let hv = tape.leaf(h);
    let s = b.selector.forward(tape, &ps, hv, Output::Full);
    let z = tape.mul(s, hv);
    let sc = tape.one_minus(s);
    let zc = tape.mul(sc, hv);
    let l1 = b.invariant.forward(tape, &pi, z, Output::Logits);
    let l1 = tape.cross_entropy(l1, y);
    let l2 = b.invariant.forward(tape, &pi, zc, Output::Logits);
    let l2 = tape.cross_entropy(l2, y);
    let weighted = tape.scale(l2, lambda);
    let mut objective = tape.sub(l1, weighted);
    let mut stats = SelectorStats {
        loss: SelectorLossParts {
            selected: tape.scalar_value(l1),
            complement: tape.scalar_value(l2),
            value: tape.scalar_value(objective),
        },
        mi_bits: 0.0,
    };
    let mut pt = Vec::new();
    let mut bound = None;
    if mi_weight > 0.0 {
        pt = b.estimator.bind(tape);
        let joint = tape.concat_cols(z, zc);
        let shuffled = tape.select_rows(zc, perm);
        let product = tape.concat_cols(z, shuffled);
        let dv = dv_bound(tape, &b.estimator, &pt, joint, product);
        stats.mi_bits = tape.scalar_value(dv) / LN_2;
        let reward = tape.scale(dv, mi_weight / LN_2);
        objective = tape.sub(objective, reward);
        bound = Some(dv);
    }
    SelectorGraph { selector: ps, invariant: pi, estimator: pt, objective, bound, stats }
}

/// Outer step: `s` descends on the selector objective; `T` ascends on the bound.
fn selector_step(b: &mut ModelBundle, x: &Array2<f64>, y: &[usize], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> SelectorStats {
    let perm = if cfg.mi_weight > 0.0 { shuffled_rows(x.nrows(), rng) } else { Vec::new() };
    let mut tape = Tape::new();
    let g = selector_graph(&mut tape, b, x, y, cfg.lambda, cfg.mi_weight, &perm);
    let estimator_update = g.bound.map(|dv| {
        let ascent = tape.scale(dv, -1.0);
        grads_of(&tape, ascent, &g.estimator)
    });
    let gs = grads_of(&tape, g.objective, &g.selector);
    let si = b.selector_index();
    b.update(si, &gs);
    if let Some(gt) = estimator_update {
        let ti = b.estimator_index();
        b.update(ti, &gt);
    }
    g.stats
}

/// Alternating loop on a pretrained bundle: selector (and estimator) steps
/// with everything else frozen, then `inner_iterations` game steps on
/// `s ⊙ h` with `s` frozen. Stops on a validation plateau or at
/// `max_outer_epochs`.
pub fn train_iil(bundle: ModelBundle, data: &TrainingData, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.train.len() < 2 {
        return Err(LearnError::TooFewEnvironments { needed: 2, got: data.train.len() });
    }
    let mut b = bundle;
    if b.optimizers.len() != b.networks().len() {
        b.init_optimizers(cfg.optimizer, cfg.learning_rate, cfg.selector_learning_rate, cfg.estimator_learning_rate);
    }
    let mut sampler = Sampler::new(cfg.seed, 3);
    let mut pair_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pair_rng.set_stream(4);
    let valid = data.pooled_validation();
    let mut curve = Vec::new();
    let mut best: Vec<f64> = Vec::new();
    for epoch in 0..cfg.max_outer_epochs {
        let mut sel = SelectorStats::default();
        let k = cfg.selector_steps.max(1) as f64;
        for _ in 0..cfg.selector_steps {
            let batches = sampler.batches(&data.train, cfg.batch_size);
            let views: Vec<_> = batches.iter().map(|(x, _)| x.view()).collect();
            let x = concatenate(Axis(0), &views).expect("shared width");
            let y: Vec<usize> = batches.iter().flat_map(|(_, y)| y.iter().copied()).collect();
            let s = selector_step(&mut b, &x, &y, cfg, &mut pair_rng);
            check_finite("selector", epoch, &[s.loss.value, s.mi_bits])?;
            sel.loss.selected += s.loss.selected / k;
            sel.loss.complement += s.loss.complement / k;
            sel.loss.value += s.loss.value / k;
            sel.mi_bits += s.mi_bits / k;
        }
        let mut game = GameStats::default();
        for _ in 0..cfg.inner_iterations {
            let batches = sampler.batches(&data.train, cfg.batch_size);
            let s = game_step(&mut b, &batches, cfg, true);
            check_finite("inner", epoch, &[s.invariant_loss, s.domain_loss])?;
            game.invariant_loss += s.invariant_loss / cfg.inner_iterations as f64;
            game.domain_loss += s.domain_loss / cfg.inner_iterations as f64;
        }
        let acc = evaluate_data(&b, &valid, true);
        curve.push(CurvePoint {
            epoch,
            phase: "selector".into(),
            main_loss: sel.loss.value,
            aux_loss: sel.loss.complement,
            penalty: sel.mi_bits,
            id_accuracy: acc,
        });
        if cfg.inner_iterations > 0 {
            curve.push(CurvePoint {
                epoch,
                phase: "inner".into(),
                main_loss: game.invariant_loss,
                aux_loss: game.domain_loss,
                penalty: 0.0,
                id_accuracy: acc,
            });
        }
        best.push(best.last().map_or(acc, |&m: &f64| m.max(acc)));
        let w = cfg.plateau_epochs;
        if best.len() > w && best[best.len() - 1] - best[best.len() - 1 - w] < cfg.plateau_delta {
            break;
        }
    }
    Ok(Trained { bundle: b, curve })
}

/// Classification accuracy of `argmax g_i(s ⊙ h(x))` or `argmax g_i(h(x))`.
pub fn evaluate(bundle: &ModelBundle, dataset: &EnvironmentDataset, use_selector: bool) -> Result<f64> {
    Ok(evaluate_data(bundle, &EnvData::from_dataset(dataset)?, use_selector))
}

pub fn evaluate_data(bundle: &ModelBundle, data: &EnvData, use_selector: bool) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let pred = argmax_rows(&bundle.predict_proba(&data.x, use_selector));
    pred.iter().zip(&data.y).filter(|(p, y)| p == y).count() as f64 / data.len() as f64
}

/// MI bound (bits) between `s ⊙ h` and `(1 − s) ⊙ h` on `x`, with a fixed pairing seed.
pub fn selection_mi_bits(bundle: &ModelBundle, x: &Array2<f64>, seed: u64) -> Result<f64> {
    let h = bundle.encode(x);
    let s = bundle.selection(&h);
    let z = &s * &h;
    let zc = s.mapv(|v| 1.0 - v) * &h;
    let perm = shuffled_rows(x.nrows(), &mut ChaCha8Rng::seed_from_u64(seed));
    mi_lower_bound(&bundle.estimator, &joint_pairs(&z, &zc), &product_pairs(&z, &zc, &perm))
}
