//! Exact rectification objectives over latent coordinate subsets.
//!
//! A [`FeatureMask`] picks `Z` out of the coordinates of `h*(X)`; the rest is
//! the complement `h*(X)/Z`. Everything here is brute force on a
//! [`JointTable`], so universes are capped at [`MAX_UNIVERSE`] coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ENV, LABEL};
use crate::info::{JointTable, Tolerances};

pub const MAX_UNIVERSE: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask {
    universe: Vec<String>,
    selected: Vec<bool>,
}

impl FeatureMask {
    pub fn new<S: Into<String>>(universe: impl IntoIterator<Item = S>, selected: Vec<bool>) -> Result<Self> {
        let universe: Vec<String> = universe.into_iter().map(Into::into).collect();
        if universe.len() != selected.len() {
            return Err(Error::InvalidDistribution(format!(
                "mask has {} bits for {} coordinates",
                selected.len(),
                universe.len()
            )));
        }
        Ok(Self { universe, selected })
    }

    /// Bit `i` of `index` selects `universe[i]`.
    pub fn from_index<S: AsRef<str>>(universe: &[S], index: u64) -> Self {
        Self {
            universe: universe.iter().map(|s| s.as_ref().to_string()).collect(),
            selected: (0..universe.len()).map(|i| index >> i & 1 == 1).collect(),
        }
    }

    pub fn from_names<S: AsRef<str>, T: AsRef<str>>(universe: &[S], names: &[T]) -> Result<Self> {
        let universe: Vec<String> = universe.iter().map(|s| s.as_ref().to_string()).collect();
        for n in names {
            if !universe.iter().any(|u| u == n.as_ref()) {
                return Err(Error::UnknownVariable(n.as_ref().to_string()));
            }
        }
        let selected = universe.iter().map(|u| names.iter().any(|n| n.as_ref() == u)).collect();
        Ok(Self { universe, selected })
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn bits(&self) -> &[bool] {
        &self.selected
    }

    pub fn index(&self) -> u64 {
        self.selected.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| 1u64 << i).sum()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|b| **b).count()
    }

    pub fn is_full(&self) -> bool {
        self.selected.iter().all(|b| *b)
    }

    pub fn complement(&self) -> Self {
        Self { universe: self.universe.clone(), selected: self.selected.iter().map(|b| !b).collect() }
    }

    pub fn selected_names(&self) -> Vec<&str> {
        self.pick(true)
    }

    pub fn complement_names(&self) -> Vec<&str> {
        self.pick(false)
    }

    fn pick(&self, want: bool) -> Vec<&str> {
        self.universe.iter().zip(&self.selected).filter(|(_, b)| **b == want).map(|(u, _)| u.as_str()).collect()
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.selected_names().join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub mask: FeatureMask,
    pub mask_index: u64,
    pub lambda: f64,
    /// `I[Y; h*/Z | Z]`
    pub first_term_bits: f64,
    /// `I[Y; Z | h*/Z]`
    pub second_term_bits: f64,
    pub combined: f64,
    /// `I[Z; h*/Z]`
    pub anti_collapse_bits: f64,
}

fn check_coordinates(table: &JointTable, mask: &FeatureMask) -> Result<()> {
    table.position(LABEL)?;
    for u in mask.universe() {
        table.position(u)?;
    }
    Ok(())
}

pub fn joint_cmi_objective(table: &JointTable, mask: &FeatureMask, lambda: f64) -> Result<ObjectiveReport> {
    check_coordinates(table, mask)?;
    let (z, rest) = (mask.selected_names(), mask.complement_names());
    let first = table.cmi(&[LABEL], &rest, &z)?.max(0.0);
    let second = table.cmi(&[LABEL], &z, &rest)?.max(0.0);
    let anti = table.mi(&z, &rest)?.max(0.0);
    Ok(ObjectiveReport {
        mask: mask.clone(),
        mask_index: mask.index(),
        lambda,
        first_term_bits: first,
        second_term_bits: second,
        combined: first - lambda * second,
        anti_collapse_bits: anti,
    })
}

/// The same objective through conditional entropies only.
pub fn entropy_form_objective(table: &JointTable, mask: &FeatureMask, lambda: f64) -> Result<f64> {
    check_coordinates(table, mask)?;
    let (z, rest) = (mask.selected_names(), mask.complement_names());
    let all: Vec<&str> = mask.universe().iter().map(String::as_str).collect();
    Ok(table.conditional_entropy(&[LABEL], &z)? - lambda * table.conditional_entropy(&[LABEL], &rest)?
        + (lambda - 1.0) * table.conditional_entropy(&[LABEL], &all)?)
}

fn check_universe<S: AsRef<str>>(table: &JointTable, universe: &[S]) -> Result<()> {
    if universe.len() > MAX_UNIVERSE {
        return Err(Error::EnumerationBound(universe.len()));
    }
    table.position(LABEL)?;
    for u in universe {
        table.position(u.as_ref())?;
    }
    Ok(())
}

/// Reports for every mask over `universe`, ordered by mask index.
pub fn evaluate_all_masks<S: AsRef<str>>(table: &JointTable, universe: &[S], lambda: f64) -> Result<Vec<ObjectiveReport>> {
    check_universe(table, universe)?;
    (0..1u64 << universe.len()).map(|i| joint_cmi_objective(table, &FeatureMask::from_index(universe, i), lambda)).collect()
}

/// Masks with `I[Y; h*/Z | Z] <= tol.zero` and `I[Y; Z | h*/Z] > tol.positive`.
pub fn prop2_oracle<S: AsRef<str>>(table: &JointTable, universe: &[S], tol: Tolerances) -> Result<Vec<FeatureMask>> {
    Ok(evaluate_all_masks(table, universe, 1.0)?
        .into_iter()
        .filter(|r| r.first_term_bits <= tol.zero && r.second_term_bits > tol.positive)
        .map(|r| r.mask)
        .collect())
}

/// Candidate with the largest `I[Z; h*/Z]`. Scores within `tol.zero` of the
/// maximum tie, and ties go to the lowest mask index.
pub fn anti_collapse_select(table: &JointTable, candidates: &[FeatureMask], tol: Tolerances) -> Result<(FeatureMask, f64)> {
    if candidates.is_empty() {
        return Err(Error::NoSelection(0.0));
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        check_coordinates(table, c)?;
        let score = table.mi(&c.selected_names(), &c.complement_names())?.max(0.0);
        scored.push((c, score));
    }
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if best <= tol.zero {
        return Err(Error::NoSelection(best));
    }
    let (mask, score) = scored
        .into_iter()
        .filter(|(_, s)| *s >= best - tol.zero)
        .min_by_key(|(c, _)| c.index())
        .expect("the maximum is attained");
    Ok((mask.clone(), score))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IibValue {
    /// `I[Y; E | Z]`
    pub invariance_bits: f64,
    /// `I[X; Z]`
    pub compression_bits: f64,
    pub value: f64,
}

/// `λ·I[Y;E|Z] + β·I[X;Z]`, where `observation` lists the table variables
/// that make up `X` (they may overlap the mask coordinates).
pub fn iib_objective<S: AsRef<str>>(
    table: &JointTable,
    mask: &FeatureMask,
    observation: &[S],
    lambda: f64,
    beta: f64,
) -> Result<IibValue> {
    check_coordinates(table, mask)?;
    table.position(ENV)?;
    if observation.is_empty() {
        return Err(Error::UnknownVariable("X".into()));
    }
    let z = mask.selected_names();
    let invariance_bits = table.cmi(&[LABEL], &[ENV], &z)?.max(0.0);
    let compression_bits = if z.is_empty() { 0.0 } else { table.shared_information(observation, &z)?.max(0.0) };
    Ok(IibValue { invariance_bits, compression_bits, value: lambda * invariance_bits + beta * compression_bits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Prop1Outcome {
    Witness { mask: FeatureMask, value: IibValue, reference: IibValue },
    /// The fake group is absent, not spurious, or not invariant given `Z_c`.
    PremiseAbsent { reason: String },
    Counterexample { reference: IibValue, best: Option<(FeatureMask, IibValue)> },
}

/// Searches the `n_c`-sized masks over `invariant ∪ fake` that touch the fake
/// group for one scoring no worse than the full mask `invariant ∪ fake`.
pub fn prop1_witness<S: AsRef<str>>(
    table: &JointTable,
    invariant: &[S],
    fake: &[S],
    observation: &[S],
    lambda: f64,
    beta: f64,
    tol: Tolerances,
) -> Result<Prop1Outcome> {
    let universe: Vec<&str> = invariant.iter().chain(fake).map(AsRef::as_ref).collect();
    check_universe(table, &universe)?;
    table.position(ENV)?;
    if fake.is_empty() {
        return Ok(Prop1Outcome::PremiseAbsent { reason: "no fake-invariant coordinates".into() });
    }
    let spurious = table.cmi(&[LABEL], &[ENV], fake)?;
    if spurious <= tol.positive {
        return Ok(Prop1Outcome::PremiseAbsent {
            reason: format!("I[Y;E|fake] = {spurious:.3e} bits, the fake group is not spurious"),
        });
    }
    let residual = table.cmi(&[LABEL], &[ENV], &universe)?;
    if residual > tol.zero {
        return Ok(Prop1Outcome::PremiseAbsent {
            reason: format!("I[Y;E|Z_c,fake] = {residual:.3e} bits, the fake group is not invariant"),
        });
    }
    let n_c = invariant.len();
    let full = FeatureMask::from_index(&universe, (1u64 << universe.len()) - 1);
    let reference = iib_objective(table, &full, observation, lambda, beta)?;
    let fake_bits: u64 = ((1u64 << fake.len()) - 1) << n_c;
    let mut best: Option<(FeatureMask, IibValue)> = None;
    for i in 0..1u64 << universe.len() {
        if i.count_ones() as usize != n_c || i & fake_bits == 0 {
            continue;
        }
        let mask = FeatureMask::from_index(&universe, i);
        let v = iib_objective(table, &mask, observation, lambda, beta)?;
        if best.as_ref().is_none_or(|(_, b)| v.value < b.value) {
            best = Some((mask, v));
        }
    }
    Ok(match best {
        Some((mask, value)) if value.value <= reference.value + tol.zero => {
            Prop1Outcome::Witness { mask, value, reference }
        }
        best => Prop1Outcome::Counterexample { reference, best },
    })
}
