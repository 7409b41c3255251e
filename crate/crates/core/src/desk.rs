//! Small exact instances: the split-coordinate benchmark table, random
//! parameterizations of the assumption graphs, and random spuriousness
//! instances.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::Result;
use crate::graph::{assumption_graph, AssumptionKind, ENV, FAKE, INVARIANT, LABEL, OBSERVATION, SPURIOUS};
use crate::info::{JointTable, PhiMap, Tolerances};
use crate::rectifier::{prop1_witness, FeatureMask, Prop1Outcome};
use crate::scm::{make_rs_benchmark, shift_environment, DiscreteScm, Environments, Mechanism, Shift};
use crate::scm::BenchmarkConfig;

/// Pooled exact joint of a benchmark with `Z_c` and `Z_F` replaced by their
/// binary coordinates, which play the role of `h*(X)`.
#[derive(Clone, Debug)]
pub struct DeskInstance {
    pub config: BenchmarkConfig,
    pub shift: Option<Shift>,
    pub table: JointTable,
    pub invariant: Vec<String>,
    pub fake: Vec<String>,
}

impl DeskInstance {
    pub fn build(cfg: &BenchmarkConfig, shift: Option<Shift>) -> Result<Self> {
        let mut scm = make_rs_benchmark(cfg)?;
        if let Some(s) = shift {
            scm = shift_environment(&scm, s)?;
        }
        let joint = scm.exact_joint(Environments::Pooled)?;
        let (joint, invariant) = joint.split_bits(INVARIANT)?;
        let (table, fake) = joint.split_bits(FAKE)?;
        Ok(Self { config: cfg.clone(), shift, table, invariant, fake })
    }

    /// `Z_c` coordinates followed by `Z_F` coordinates.
    pub fn universe(&self) -> Vec<String> {
        self.invariant.iter().chain(&self.fake).cloned().collect()
    }

    pub fn invariant_mask(&self) -> FeatureMask {
        FeatureMask::from_names(&self.universe(), &self.invariant).expect("coordinates come from the universe")
    }

    pub fn full_mask(&self) -> FeatureMask {
        let u = self.universe();
        FeatureMask::from_names(&u, &u).expect("coordinates come from the universe")
    }

    /// Noise-free observation: every latent coordinate.
    pub fn observation(&self) -> Vec<String> {
        let mut obs = self.universe();
        obs.push(SPURIOUS.to_string());
        obs
    }

    pub fn prop1(&self, lambda: f64, beta: f64, tol: Tolerances) -> Result<Prop1Outcome> {
        prop1_witness(&self.table, &self.invariant, &self.fake, &self.observation(), lambda, beta, tol)
    }
}

/// Cardinalities used for random parameterizations of the assumption graphs.
pub fn assumption_supports(kind: AssumptionKind) -> BTreeMap<String, usize> {
    let mut s: BTreeMap<String, usize> =
        [(ENV, 2), (INVARIANT, 3), (LABEL, 2), (SPURIOUS, 3), (OBSERVATION, 2)]
            .into_iter()
            .map(|(v, c)| (v.to_string(), c))
            .collect();
    if kind == AssumptionKind::RsScm {
        s.insert(FAKE.to_string(), 3);
    }
    s
}

/// Random Dirichlet parameterization of an assumption graph (fake branch active).
pub fn random_assumption_scm(kind: AssumptionKind, concentration: f64, rng: &mut impl Rng) -> Result<DiscreteScm> {
    DiscreteScm::random(assumption_graph(kind, true), assumption_supports(kind), Some(ENV), concentration, rng)
}

/// Random near-deterministic parameterization of an assumption graph (fake branch active).
pub fn random_peaked_assumption_scm(kind: AssumptionKind, noise: f64, rng: &mut impl Rng) -> Result<DiscreteScm> {
    DiscreteScm::random_peaked(assumption_graph(kind, true), assumption_supports(kind), Some(ENV), noise, rng)
}

/// Random restructured-model instance whose spurious latent is a pair
/// `Z_s = (A, B)` with `A` depending on `Y` only and `B` on `E` only, plus a
/// random recoding `Φ` of `A`. Returns the pooled joint over `E, Y, Z_s` and Φ.
pub fn random_factored_instance(rng: &mut impl Rng) -> Result<(JointTable, PhiMap)> {
    let card_a = 2;
    let card_b = rng.random_range(2..=3);
    let graph = assumption_graph(AssumptionKind::RsScm, true).without_node(OBSERVATION);
    let mut supports: BTreeMap<String, usize> = [
        (ENV, rng.random_range(2..=3)),
        (INVARIANT, rng.random_range(2..=3)),
        (FAKE, 2),
        (LABEL, rng.random_range(2..=3)),
        (SPURIOUS, 1),
    ]
    .into_iter()
    .map(|(v, c)| (v.to_string(), c))
    .collect();
    let scm = DiscreteScm::random(graph, supports.clone(), Some(ENV), 1.0, rng)?;
    let (n_env, n_y) = (supports[ENV], supports[LABEL]);
    let a_given_y: Vec<Vec<f64>> = (0..n_y).map(|_| simplex(card_a, rng)).collect();
    let b_given_e: Vec<Vec<f64>> = (0..n_env).map(|_| simplex(card_b, rng)).collect();
    supports.insert(SPURIOUS.to_string(), card_a * card_b);
    let zs = Mechanism::tabulate(&[(ENV, n_env), (LABEL, n_y)], card_a * card_b, |s| {
        let mut row = Vec::with_capacity(card_a * card_b);
        for a in 0..card_a {
            for b in 0..card_b {
                row.push(a_given_y[s[1]][a] * b_given_e[s[0]][b]);
            }
        }
        row
    });
    let scm = scm.with_mechanism(SPURIOUS, card_a * card_b, zs)?;
    let table = scm.exact_joint(Environments::Pooled)?.marginal(&[ENV, LABEL, SPURIOUS])?;
    let recode: Vec<usize> = (0..card_a).map(|_| rng.random_range(0..card_a)).collect();
    let phi = PhiMap {
        source: SPURIOUS.into(),
        name: format!("Phi({SPURIOUS})"),
        card: card_a,
        mapping: (0..card_a * card_b).map(|z| recode[z / card_b]).collect(),
    };
    Ok((table, phi))
}

fn simplex(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}
