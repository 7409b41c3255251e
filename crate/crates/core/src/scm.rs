//! Discrete structural causal models.
//!
//! Every variable has a finite support `0..k` and a conditional probability
//! table indexed by the joint state of its parents (row-major, last parent
//! fastest). The environment variable, when present, is a root whose table is
//! the mixture weight of each environment.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_with, Codebook, CodebookKind, EnvironmentDataset, LatentScales, Latents, Row};
use crate::error::{Error, Result};
use crate::graph::{assumption_graph, AssumptionKind, CausalGraph, ENV, FAKE, INVARIANT, LABEL, OBSERVATION, SPURIOUS};
use crate::info::{increment, JointTable};

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;
const ROW_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub parents: Vec<String>,
    /// One row of `card` probabilities per joint parent state.
    pub table: Vec<f64>,
}

impl Mechanism {
    pub fn root(weights: Vec<f64>) -> Self {
        Self { parents: Vec::new(), table: weights }
    }

    /// Builds the table by evaluating `row(parent_states)` for each parent state.
    pub fn tabulate(parents: &[(&str, usize)], card: usize, row: impl Fn(&[usize]) -> Vec<f64>) -> Self {
        let cards: Vec<usize> = parents.iter().map(|p| p.1).collect();
        let rows: usize = cards.iter().product();
        let mut state = vec![0usize; cards.len()];
        let mut table = Vec::with_capacity(rows * card);
        for _ in 0..rows {
            let r = row(&state);
            debug_assert_eq!(r.len(), card);
            table.extend(r);
            increment(&mut state, &cards);
        }
        Self { parents: parents.iter().map(|p| p.0.to_string()).collect(), table }
    }
}

/// Which environments an exact joint covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Environments {
    /// Mixture over all environments, keeping `E` as a variable.
    Pooled,
    /// A single environment (by external id); `E` is dropped from the table.
    Only(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Shift {
    ZSRandom,
    ZFRandom,
    Both,
}

impl Shift {
    pub const ALL: [Shift; 3] = [Shift::ZSRandom, Shift::ZFRandom, Shift::Both];

    pub fn label(&self) -> &'static str {
        match self {
            Shift::ZSRandom => "zs_random",
            Shift::ZFRandom => "zf_random",
            Shift::Both => "both",
        }
    }

    fn randomizes(&self, var: &str) -> bool {
        matches!((self, var), (Shift::ZSRandom | Shift::Both, SPURIOUS) | (Shift::ZFRandom | Shift::Both, FAKE))
    }
}

/// Association strengths of one environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Probability that `Z_F` copies `Z_c`.
    pub p_e: f64,
    /// Probability that `Z_s` copies `Y`.
    pub p_hat_e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub num_classes: usize,
    pub train_envs: Vec<EnvParams>,
    /// Unshifted associations of the held-out environment used for OOD tests.
    pub test_env: EnvParams,
    pub flip_rate: f64,
    pub obs_dim: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub codebook: CodebookKind,
    #[serde(default)]
    pub scales: LatentScales,
    #[serde(default = "yes")]
    pub fake_branch: bool,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl Default for BenchmarkConfig {
    /// Ten-class symbolic benchmark with two training environments.
    fn default() -> Self {
        Self {
            num_classes: 10,
            train_envs: vec![EnvParams { p_e: 1.0, p_hat_e: 1.0 }, EnvParams { p_e: 0.9, p_hat_e: 0.9 }],
            test_env: EnvParams { p_e: 0.9, p_hat_e: 0.9 },
            flip_rate: 0.25,
            obs_dim: 10,
            noise_sigma: 0.1,
            codebook: CodebookKind::OneHot,
            scales: LatentScales::default(),
            fake_branch: true,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    /// Four-class instance used for exact analysis.
    pub fn desk() -> Self {
        Self { num_classes: 4, obs_dim: 4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |field: String, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(field, format!("{p} is not a probability")))
            }
        };
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "must be at least 2"));
        }
        if self.train_envs.is_empty() {
            return Err(Error::config("train_envs", "at least one environment is required"));
        }
        for (i, e) in self.train_envs.iter().enumerate() {
            prob(format!("train_envs[{i}].p_e"), e.p_e)?;
            prob(format!("train_envs[{i}].p_hat_e"), e.p_hat_e)?;
        }
        prob("test_env.p_e".into(), self.test_env.p_e)?;
        prob("test_env.p_hat_e".into(), self.test_env.p_hat_e)?;
        prob("flip_rate".into(), self.flip_rate)?;
        if self.obs_dim == 0 {
            return Err(Error::config("obs_dim", "must be positive"));
        }
        if self.codebook == CodebookKind::OneHot && self.obs_dim < self.num_classes {
            return Err(Error::config("obs_dim", format!("one-hot needs at least {}", self.num_classes)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and nonnegative"));
        }
        for (f, s) in [("scales.z_c", self.scales.z_c), ("scales.z_f", self.scales.z_f), ("scales.z_s", self.scales.z_s)] {
            if !s.is_finite() {
                return Err(Error::config(f, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn codebook(&self) -> Result<Codebook> {
        Codebook::generate(self.codebook, self.num_classes, self.obs_dim, self.scales, self.seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Provenance of a benchmark-built SCM.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkInfo {
    pub config: BenchmarkConfig,
    pub shift: Option<Shift>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteScm {
    graph: CausalGraph,
    order: Vec<String>,
    supports: BTreeMap<String, usize>,
    mechanisms: BTreeMap<String, Mechanism>,
    env_var: Option<String>,
    /// External id of each environment state.
    env_ids: Vec<usize>,
    benchmark: Option<BenchmarkInfo>,
}

impl DiscreteScm {
    pub fn new(
        graph: CausalGraph,
        supports: BTreeMap<String, usize>,
        mechanisms: BTreeMap<String, Mechanism>,
        env_var: Option<&str>,
    ) -> Result<Self> {
        let order = graph.topological_order();
        for v in &order {
            let card = *supports.get(v).ok_or_else(|| Error::UnknownVariable(v.clone()))?;
            if card == 0 {
                return Err(Error::InvalidDistribution(format!("`{v}` has an empty support")));
            }
            let m = mechanisms.get(v).ok_or_else(|| Error::UnknownVariable(v.clone()))?;
            if m.parents != graph.parents(v) {
                return Err(Error::InvalidDistribution(format!(
                    "mechanism parents of `{v}` are {:?}, graph has {:?}",
                    m.parents,
                    graph.parents(v)
                )));
            }
            let rows: usize = m.parents.iter().map(|p| supports[p]).product();
            if m.table.len() != rows * card {
                return Err(Error::InvalidDistribution(format!("table of `{v}` has the wrong size")));
            }
            for (i, row) in m.table.chunks(card).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::InvalidDistribution(format!("row {i} of `{v}` sums to {sum}")));
                }
            }
        }
        if let Some(name) = mechanisms.keys().find(|k| !graph.contains(k)) {
            return Err(Error::UnknownVariable(name.clone()));
        }
        if let Some(e) = env_var {
            if !mechanisms.get(e).is_some_and(|m| m.parents.is_empty()) {
                return Err(Error::InvalidDistribution(format!("environment `{e}` must be a root")));
            }
        }
        let env_ids = env_var.map_or(Vec::new(), |e| (0..supports[e]).collect());
        Ok(Self { graph, order, supports, mechanisms, env_var: env_var.map(String::from), env_ids, benchmark: None })
    }

    /// Random parameterization of `graph`: every row is drawn from a symmetric
    /// Dirichlet with the given concentration.
    pub fn random(
        graph: CausalGraph,
        supports: BTreeMap<String, usize>,
        env_var: Option<&str>,
        concentration: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let gamma = Gamma::new(concentration, 1.0)
            .map_err(|e| Error::config("concentration", e.to_string()))?;
        let mut mechanisms = BTreeMap::new();
        for v in graph.topological_order() {
            let card = *supports.get(&v).ok_or_else(|| Error::UnknownVariable(v.clone()))?;
            let parents = graph.parents(&v);
            let rows: usize = parents.iter().map(|p| supports[p]).product();
            let mut table = Vec::with_capacity(rows * card);
            for _ in 0..rows {
                let draw: Vec<f64> = (0..card).map(|_| gamma.sample(rng).max(1e-300)).collect();
                let s: f64 = draw.iter().sum();
                table.extend(draw.into_iter().map(|d| d / s));
            }
            mechanisms.insert(v, Mechanism { parents, table });
        }
        Self::new(graph, supports, mechanisms, env_var)
    }

    /// Random near-deterministic parameterization. The row for parent state `r`
    /// of `rows` puts `1 − ε` on the state nearest `r·(card−1)/(rows−1)` (randomly
    /// mirrored per variable) and spreads `ε ~ U(0, noise]` by a flat Dirichlet
    /// draw. The monotone peak keeps extreme parent states apart along chains.
    /// Roots mix a flat Dirichlet draw with uniform.
    pub fn random_peaked(
        graph: CausalGraph,
        supports: BTreeMap<String, usize>,
        env_var: Option<&str>,
        noise: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(noise > 0.0 && noise <= 1.0) {
            return Err(Error::config("noise", "must lie in (0, 1]"));
        }
        let flat: Gamma<f64> = Gamma::new(1.0, 1.0).expect("unit shape is valid");
        let mut mechanisms = BTreeMap::new();
        for v in graph.topological_order() {
            let card = *supports.get(&v).ok_or_else(|| Error::UnknownVariable(v.clone()))?;
            let parents = graph.parents(&v);
            let rows: usize = parents.iter().map(|p| supports[p]).product();
            let mirror = rng.random_bool(0.5);
            let mut table = Vec::with_capacity(rows * card);
            for r in 0..rows {
                let draw: Vec<f64> = (0..card).map(|_| flat.sample(rng).max(1e-300)).collect();
                let s: f64 = draw.iter().sum();
                let row: Vec<f64> = if parents.is_empty() {
                    draw.iter().map(|d| 0.5 * d / s + 0.5 / card as f64).collect()
                } else {
                    let eps = noise * (1.0 - rng.random::<f64>());
                    let at = if rows > 1 { (r * (card - 1) + (rows - 1) / 2) / (rows - 1) } else { 0 };
                    let peak = if mirror { card - 1 - at } else { at };
                    draw.iter()
                        .enumerate()
                        .map(|(i, d)| eps * d / s + if i == peak { 1.0 - eps } else { 0.0 })
                        .collect()
                };
                table.extend(row);
            }
            mechanisms.insert(v, Mechanism { parents, table });
        }
        Self::new(graph, supports, mechanisms, env_var)
    }

    /// Replaces one mechanism (and possibly its support), revalidating the model.
    /// Only valid for variables without children when the support changes.
    pub fn with_mechanism(&self, var: &str, card: usize, mechanism: Mechanism) -> Result<Self> {
        let mut supports = self.supports.clone();
        let mut mechanisms = self.mechanisms.clone();
        if !supports.contains_key(var) {
            return Err(Error::UnknownVariable(var.to_string()));
        }
        supports.insert(var.to_string(), card);
        mechanisms.insert(var.to_string(), mechanism);
        let mut out = Self::new(self.graph.clone(), supports, mechanisms, self.env_var.as_deref())?;
        out.env_ids = self.env_ids.clone();
        out.benchmark = self.benchmark.clone();
        Ok(out)
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    /// Variables in topological order.
    pub fn variables(&self) -> &[String] {
        &self.order
    }

    pub fn support(&self, var: &str) -> Option<usize> {
        self.supports.get(var).copied()
    }

    pub fn mechanism(&self, var: &str) -> Option<&Mechanism> {
        self.mechanisms.get(var)
    }

    pub fn env_var(&self) -> Option<&str> {
        self.env_var.as_deref()
    }

    /// `(external id, mixture weight)` for every environment.
    pub fn env_support(&self) -> Vec<(usize, f64)> {
        match &self.env_var {
            Some(e) => self.env_ids.iter().copied().zip(self.mechanisms[e].table.iter().copied()).collect(),
            None => Vec::new(),
        }
    }

    pub fn benchmark(&self) -> Option<&BenchmarkInfo> {
        self.benchmark.as_ref()
    }

    fn env_state(&self, id: usize) -> Result<usize> {
        self.env_ids.iter().position(|&e| e == id).ok_or(Error::UnknownEnvironment(id))
    }

    fn row_offset(&self, var: &str, state: &BTreeMap<&str, usize>) -> usize {
        let m = &self.mechanisms[var];
        let mut idx = 0;
        for p in &m.parents {
            idx = idx * self.supports[p] + state[p.as_str()];
        }
        idx * self.supports[var]
    }

    pub fn exact_joint(&self, envs: Environments) -> Result<JointTable> {
        self.exact_joint_with_budget(envs, DEFAULT_ENUMERATION_BUDGET)
    }

    /// Full enumeration of the product state space. Fails rather than truncates.
    pub fn exact_joint_with_budget(&self, envs: Environments, budget: u128) -> Result<JointTable> {
        let fixed = match (envs, &self.env_var) {
            (Environments::Only(id), Some(e)) => Some((e.as_str(), self.env_state(id)?)),
            (Environments::Only(id), None) => return Err(Error::UnknownEnvironment(id)),
            (Environments::Pooled, _) => None,
        };
        let kept: Vec<&str> = self
            .order
            .iter()
            .map(String::as_str)
            .filter(|v| fixed.is_none_or(|(e, _)| e != *v))
            .collect();
        let needed: u128 = kept.iter().map(|v| self.supports[*v] as u128).product();
        if needed > budget {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let cards: Vec<usize> = kept.iter().map(|v| self.supports[*v]).collect();
        let strides = crate::info::strides(&cards);
        let mut mass = vec![0.0; needed as usize];
        let mut state: BTreeMap<&str, usize> = BTreeMap::new();
        self.enumerate(0, 1.0, fixed, &mut state, &mut |state, p| {
            let at: usize = kept.iter().zip(&strides).map(|(v, s)| state[v] * s).sum();
            mass[at] += p;
        });
        JointTable::new(kept.iter().map(|v| v.to_string()), cards, mass)
    }

    fn enumerate<'a>(
        &'a self,
        depth: usize,
        prob: f64,
        fixed: Option<(&'a str, usize)>,
        state: &mut BTreeMap<&'a str, usize>,
        emit: &mut dyn FnMut(&BTreeMap<&'a str, usize>, f64),
    ) {
        if depth == self.order.len() {
            emit(state, prob);
            return;
        }
        let var = self.order[depth].as_str();
        if let Some((e, s)) = fixed.filter(|(e, _)| *e == var) {
            state.insert(e, s);
            self.enumerate(depth + 1, prob, fixed, state, emit);
            return;
        }
        let off = self.row_offset(var, state);
        for s in 0..self.supports[var] {
            let p = self.mechanisms[var].table[off + s];
            if p > 0.0 {
                state.insert(var, s);
                self.enumerate(depth + 1, prob * p, fixed, state, emit);
            }
        }
        state.remove(var);
    }

    /// Ancestral sampling. With an environment variable, `env` must name one
    /// of its environments and `E` is clamped to it.
    pub fn sample(&self, env: Option<usize>, n: usize, seed: u64) -> Result<Samples> {
        let clamp = match (&self.env_var, env) {
            (Some(e), Some(id)) => Some((e.as_str(), self.env_state(id)?)),
            (Some(_), None) => None,
            (None, Some(id)) => return Err(Error::UnknownEnvironment(id)),
            (None, None) => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * env.unwrap_or(0) as u64);
        let mut rows = Vec::with_capacity(n);
        let mut state: BTreeMap<&str, usize> = BTreeMap::new();
        for _ in 0..n {
            for var in &self.order {
                let var = var.as_str();
                let s = match clamp {
                    Some((e, s)) if e == var => s,
                    _ => {
                        let off = self.row_offset(var, &state);
                        let row = &self.mechanisms[var].table[off..off + self.supports[var]];
                        categorical(row, &mut rng)
                    }
                };
                state.insert(var, s);
            }
            rows.push(self.order.iter().map(|v| state[v.as_str()]).collect());
        }
        Ok(Samples {
            vars: self.order.clone(),
            cards: self.order.iter().map(|v| self.supports[v]).collect(),
            rows,
        })
    }
}

fn categorical(row: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `u` just above the cumulative sum.
    row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Integer-coded draws, one column per SCM variable in topological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Samples {
    pub vars: Vec<String>,
    pub cards: Vec<usize>,
    pub rows: Vec<Vec<usize>>,
}

impl Samples {
    pub fn column(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn empirical_table<S: AsRef<str>>(&self, vars: &[S]) -> Result<JointTable> {
        let cols = vars
            .iter()
            .map(|v| self.column(v.as_ref()).ok_or_else(|| Error::UnknownVariable(v.as_ref().to_string())))
            .collect::<Result<Vec<_>>>()?;
        JointTable::from_rows(
            vars.iter().map(|v| v.as_ref().to_string()),
            cols.iter().map(|&c| self.cards[c]).collect(),
            self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()),
        )
    }
}

fn mix(p: f64, k: usize, copy_of: usize) -> Vec<f64> {
    (0..k).map(|s| (1.0 - p) / k as f64 + if s == copy_of { p } else { 0.0 }).collect()
}

/// Restructured-SCM instance of the colored-digit recipe. The observation `X`
/// is not a discrete variable here; it is produced by [`generate_dataset`].
pub fn make_rs_benchmark(cfg: &BenchmarkConfig) -> Result<DiscreteScm> {
    build_benchmark(cfg, &cfg.train_envs, (0..cfg.train_envs.len()).collect())
}

/// Single-environment SCM for the held-out test environment, with id equal
/// to the number of training environments.
pub fn make_test_benchmark(cfg: &BenchmarkConfig) -> Result<DiscreteScm> {
    build_benchmark(cfg, &[cfg.test_env], vec![cfg.train_envs.len()])
}

fn build_benchmark(cfg: &BenchmarkConfig, envs: &[EnvParams], ids: Vec<usize>) -> Result<DiscreteScm> {
    cfg.validate()?;
    let k = cfg.num_classes;
    let n_env = envs.len();
    let graph = assumption_graph(AssumptionKind::RsScm, cfg.fake_branch).without_node(OBSERVATION);
    let supports: BTreeMap<String, usize> =
        [(ENV, n_env), (INVARIANT, k), (FAKE, k), (LABEL, k), (SPURIOUS, k)]
            .into_iter()
            .map(|(v, c)| (v.to_string(), c))
            .collect();
    let mut mech = BTreeMap::new();
    mech.insert(ENV.to_string(), Mechanism::root(vec![1.0 / n_env as f64; n_env]));
    mech.insert(INVARIANT.to_string(), Mechanism::tabulate(&[(ENV, n_env)], k, |_| vec![1.0 / k as f64; k]));
    let fake = if cfg.fake_branch {
        Mechanism::tabulate(&[(ENV, n_env), (INVARIANT, k)], k, |s| mix(envs[s[0]].p_e, k, s[1]))
    } else {
        Mechanism::root(vec![1.0 / k as f64; k])
    };
    mech.insert(FAKE.to_string(), fake);
    mech.insert(LABEL.to_string(), Mechanism::tabulate(&[(INVARIANT, k)], k, |s| mix(1.0 - cfg.flip_rate, k, s[0])));
    mech.insert(
        SPURIOUS.to_string(),
        Mechanism::tabulate(&[(ENV, n_env), (LABEL, k)], k, |s| mix(envs[s[0]].p_hat_e, k, s[1])),
    );
    let mut scm = DiscreteScm::new(graph, supports, mech, Some(ENV))?;
    scm.env_ids = ids;
    scm.benchmark = Some(BenchmarkInfo { config: cfg.clone(), shift: None });
    Ok(scm)
}

/// Replaces the mechanism of the shifted latent(s) by a uniform draw that
/// ignores the parents. Parent sets, and every other mechanism, are kept.
pub fn shift_environment(scm: &DiscreteScm, shift: Shift) -> Result<DiscreteScm> {
    let info = scm
        .benchmark
        .as_ref()
        .ok_or_else(|| Error::NotABenchmark("shift_environment needs a benchmark SCM".into()))?;
    let mut out = scm.clone();
    for var in [SPURIOUS, FAKE] {
        if shift.randomizes(var) {
            let k = out.supports[var];
            let m = out.mechanisms.get_mut(var).expect("benchmark SCMs carry every latent");
            m.table = vec![1.0 / k as f64; m.table.len()];
        }
    }
    let combined = match (info.shift, shift) {
        (None, s) => s,
        (Some(a), b) if a == b => a,
        _ => Shift::Both,
    };
    out.benchmark = Some(BenchmarkInfo { config: info.config.clone(), shift: Some(combined) });
    Ok(out)
}

/// Samples `n` latent rows from environment `env` and encodes them into
/// observations. Latents and noise use separate streams of `seed`.
pub fn generate_dataset(
    scm: &DiscreteScm,
    codebook: &Codebook,
    env: usize,
    n: usize,
    seed: u64,
) -> Result<EnvironmentDataset> {
    let info = scm
        .benchmark
        .as_ref()
        .ok_or_else(|| Error::NotABenchmark("datasets are generated from benchmark SCMs".into()))?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let samples = scm.sample(Some(env), n, seed)?;
    let col = |v| samples.column(v).expect("benchmark SCMs carry every latent");
    let (cy, cc, cf, cs) = (col(LABEL), col(INVARIANT), col(FAKE), col(SPURIOUS));
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(2 * env as u64 + 1);
    let rows = samples
        .rows
        .iter()
        .map(|r| {
            let latents = Latents { z_c: r[cc], z_f: r[cf], z_s: r[cs] };
            Row { y: r[cy], latents, x: encode_with(latents, codebook, info.config.noise_sigma, &mut noise) }
        })
        .collect();
    Ok(EnvironmentDataset { env_id: env, num_classes: info.config.num_classes, seed: Some(seed), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(deterministic: bool) -> DiscreteScm {
        let g = CausalGraph::new(["A", "B"], &[("A", "B")]).unwrap();
        let supports = [("A".to_string(), 2), ("B".to_string(), 2)].into();
        let b = if deterministic { vec![1.0, 0.0, 0.0, 1.0] } else { vec![0.7, 0.3, 0.4, 0.6] };
        let mech = [
            ("A".to_string(), Mechanism::root(vec![0.5, 0.5])),
            ("B".to_string(), Mechanism { parents: vec!["A".into()], table: b }),
        ]
        .into();
        DiscreteScm::new(g, supports, mech, None).unwrap()
    }

    #[test]
    fn independent_fair_roots() {
        let g = CausalGraph::new(["A", "B"], &[]).unwrap();
        let supports = [("A".to_string(), 2), ("B".to_string(), 2)].into();
        let mech = [
            ("A".to_string(), Mechanism::root(vec![0.5, 0.5])),
            ("B".to_string(), Mechanism::root(vec![0.5, 0.5])),
        ]
        .into();
        let t = DiscreteScm::new(g, supports, mech, None).unwrap().exact_joint(Environments::Pooled).unwrap();
        assert_eq!(t.mass(), &[0.25; 4]);
    }

    #[test]
    fn deterministic_chain_has_empty_off_diagonal() {
        let t = chain(true).exact_joint(Environments::Pooled).unwrap();
        assert_eq!(t.mass(), &[0.5, 0.0, 0.0, 0.5]);
        let s = chain(true).sample(None, 100, 4).unwrap();
        assert!(s.rows.iter().all(|r| r[0] == r[1]));
    }

    #[test]
    fn desk_benchmark_joint() {
        let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
        let t = scm.exact_joint(Environments::Pooled).unwrap();
        assert_eq!(t.vars(), &["E", "Z_c", "Z_F", "Y", "Z_s"]);
        assert_eq!(t.mass().len(), 512);
        assert!((t.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn benchmark_mechanisms() {
        let cfg = BenchmarkConfig { flip_rate: 0.25, ..BenchmarkConfig::default() };
        let scm = make_rs_benchmark(&cfg).unwrap();
        let env0 = scm.exact_joint(Environments::Only(0)).unwrap();
        let agree = |t: &JointTable, a: &str, b: &str| {
            let m = t.marginal(&[a, b]).unwrap();
            let k = m.cards()[0];
            (0..k).map(|i| m.mass()[i * k + i]).sum::<f64>()
        };
        assert!((agree(&env0, "Z_F", "Z_c") - 1.0).abs() < 1e-12);
        // Uniform redraw: 0.75 + 0.25 / 10.
        assert!((agree(&env0, "Y", "Z_c") - 0.775).abs() < 1e-12);

        let cfg0 = BenchmarkConfig {
            train_envs: vec![EnvParams { p_e: 1.0, p_hat_e: 0.0 }],
            ..BenchmarkConfig::desk()
        };
        let t = make_rs_benchmark(&cfg0).unwrap().exact_joint(Environments::Only(0)).unwrap();
        assert!(t.mi(&["Y"], &["Z_s"]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn shifts_randomize_only_their_latent() {
        let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
        for shift in Shift::ALL {
            let s = shift_environment(&scm, shift).unwrap();
            let t = s.exact_joint(Environments::Pooled).unwrap();
            let zs = t.mi(&["Y"], &["Z_s"]).unwrap();
            let zf = t.mi(&["Z_c"], &["Z_F"]).unwrap();
            assert_eq!(zs.abs() < 1e-12, shift != Shift::ZFRandom, "{shift:?}");
            assert_eq!(zf.abs() < 1e-12, shift != Shift::ZSRandom, "{shift:?}");
            for v in [INVARIANT, LABEL, ENV] {
                assert_eq!(s.mechanism(v), scm.mechanism(v));
            }
        }
        assert!(matches!(shift_environment(&chain(false), Shift::Both), Err(Error::NotABenchmark(_))));
    }

    #[test]
    fn sampling_is_seeded_and_checks_environments() {
        let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
        assert_eq!(scm.sample(Some(1), 50, 3).unwrap(), scm.sample(Some(1), 50, 3).unwrap());
        assert_ne!(scm.sample(Some(1), 50, 3).unwrap(), scm.sample(Some(1), 50, 4).unwrap());
        assert!(matches!(scm.sample(Some(5), 1, 0), Err(Error::UnknownEnvironment(5))));
        assert!(matches!(chain(false).sample(Some(0), 1, 0), Err(Error::UnknownEnvironment(0))));
    }

    #[test]
    fn sampled_association_matches_p_e() {
        let cfg = BenchmarkConfig::desk();
        let scm = make_rs_benchmark(&cfg).unwrap();
        let n = 10_000;
        for (env, params) in cfg.train_envs.iter().enumerate() {
            let s = scm.sample(Some(env), n, 0).unwrap();
            let (c, f) = (s.column("Z_c").unwrap(), s.column("Z_F").unwrap());
            let hits = s.rows.iter().filter(|r| r[c] == r[f]).count() as f64 / n as f64;
            let p = params.p_e + (1.0 - params.p_e) / 4.0;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits - p).abs() <= 3.0 * sigma + 1e-12, "env {env}: {hits} vs {p}");
        }
    }

    #[test]
    fn empirical_frequencies_converge() {
        let cfg = BenchmarkConfig::desk();
        let scm = make_rs_benchmark(&cfg).unwrap();
        let n = 100_000;
        let s = scm.sample(Some(1), n, 42).unwrap();
        let vars = ["Z_c", "Z_F", "Y", "Z_s"];
        let emp = s.empirical_table(&vars).unwrap();
        let exact = scm.exact_joint(Environments::Only(1)).unwrap().marginal(&vars).unwrap();
        let tv: f64 = emp.mass().iter().zip(exact.mass()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        let cells = exact.mass().len() as f64;
        assert!(tv <= 5.0 * (cells / n as f64).sqrt(), "{tv}");
    }

    #[test]
    fn budget_is_enforced() {
        let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
        let err = scm.exact_joint_with_budget(Environments::Pooled, 100).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { needed: 512, budget: 100 }));
    }

    #[test]
    fn invalid_tables_are_rejected() {
        let g = CausalGraph::new(["A"], &[]).unwrap();
        let supports: BTreeMap<String, usize> = [("A".to_string(), 2)].into();
        let bad = [("A".to_string(), Mechanism::root(vec![0.6, 0.6]))].into();
        assert!(DiscreteScm::new(g.clone(), supports.clone(), bad, None).is_err());
        let wrong_parents =
            [("A".to_string(), Mechanism { parents: vec!["B".into()], table: vec![0.5, 0.5] })].into();
        assert!(DiscreteScm::new(g, supports, wrong_parents, None).is_err());
    }

    #[test]
    fn config_validation_names_the_field() {
        let mut cfg = BenchmarkConfig::default();
        cfg.train_envs[1].p_hat_e = 1.5;
        match cfg.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "train_envs[1].p_hat_e"),
            other => panic!("{other:?}"),
        }
        let cfg = BenchmarkConfig { obs_dim: 3, ..BenchmarkConfig::default() };
        assert!(cfg.validate().is_err());
        let back = BenchmarkConfig::from_json(&BenchmarkConfig::default().to_json()).unwrap();
        assert_eq!(back, BenchmarkConfig::default());
    }

    #[test]
    fn generated_datasets_are_reproducible() {
        let cfg = BenchmarkConfig::desk();
        let scm = make_rs_benchmark(&cfg).unwrap();
        let cb = cfg.codebook().unwrap();
        let a = generate_dataset(&scm, &cb, 0, 200, 9).unwrap();
        let b = generate_dataset(&scm, &cb, 0, 200, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x_dim(), 12);
        assert!(a.rows.iter().all(|r| r.y < 4));
        let test = make_test_benchmark(&cfg).unwrap();
        assert_eq!(test.env_support(), vec![(2, 1.0)]);
        assert!(generate_dataset(&test, &cb, 2, 10, 0).is_ok());
    }
}
