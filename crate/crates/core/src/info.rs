//! Exact information measures over dense joint probability tables.
//!
//! All quantities are in bits. Cells with zero mass contribute nothing, which
//! also means zero-probability conditioning slices are skipped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::EnvironmentDataset;
use crate::error::{Error, Result};
use crate::graph::{ENV, LABEL, SPURIOUS};

const NORMALIZATION_TOL: f64 = 1e-10;

/// Thresholds separating floating-point residue from genuine dependence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// A quantity at or below this is treated as exactly zero.
    pub zero: f64,
    /// A quantity must exceed this to count as strictly positive.
    pub positive: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { zero: 1e-9, positive: 1e-3 }
    }
}

/// Probability mass over the product space of named discrete variables,
/// stored row-major with the last variable varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    vars: Vec<String>,
    cards: Vec<usize>,
    mass: Vec<f64>,
}

impl JointTable {
    pub fn new<S: Into<String>>(
        vars: impl IntoIterator<Item = S>,
        cards: Vec<usize>,
        mass: Vec<f64>,
    ) -> Result<Self> {
        let table = Self { vars: vars.into_iter().map(Into::into).collect(), cards, mass };
        table.validate()?;
        Ok(table)
    }

    /// Builds a table from nonnegative weights (e.g. counts), normalizing them.
    pub fn from_weights<S: Into<String>>(
        vars: impl IntoIterator<Item = S>,
        cards: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() {
            return Err(Error::EmptyTable);
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Self::new(vars, cards, weights.into_iter().map(|w| w / total).collect())
    }

    /// Frequency table of integer-coded rows. Each row lists one state per variable.
    pub fn from_rows<S: Into<String>>(
        vars: impl IntoIterator<Item = S>,
        cards: Vec<usize>,
        rows: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<Self> {
        let vars: Vec<String> = vars.into_iter().map(Into::into).collect();
        let strides = strides(&cards);
        let mut counts = vec![0.0; cards.iter().product()];
        let mut n = 0usize;
        for row in rows {
            if row.len() != cards.len() {
                return Err(Error::Malformed(format!("row has {} states, expected {}", row.len(), cards.len())));
            }
            let mut at = 0;
            for ((&s, &k), &stride) in row.iter().zip(&cards).zip(&strides) {
                if s >= k {
                    return Err(Error::Malformed(format!("state {s} outside cardinality {k}")));
                }
                at += s * stride;
            }
            counts[at] += 1.0;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Self::from_weights(vars, cards, counts)
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn has(&self, var: &str) -> bool {
        self.vars.iter().any(|v| v == var)
    }

    pub fn position(&self, var: &str) -> Result<usize> {
        self.vars.iter().position(|v| v == var).ok_or_else(|| Error::UnknownVariable(var.to_string()))
    }

    pub fn card(&self, var: &str) -> Result<usize> {
        Ok(self.cards[self.position(var)?])
    }

    /// Marginal over `vars`, in the order given.
    pub fn marginal<S: AsRef<str>>(&self, vars: &[S]) -> Result<JointTable> {
        let pos = vars.iter().map(|v| self.position(v.as_ref())).collect::<Result<Vec<_>>>()?;
        let mut seen = BTreeSet::new();
        for &p in &pos {
            if !seen.insert(p) {
                return Err(Error::Overlap(self.vars[p].clone()));
            }
        }
        let cards: Vec<usize> = pos.iter().map(|&p| self.cards[p]).collect();
        let out_strides = strides(&cards);
        let mut mass = vec![0.0; cards.iter().product()];
        let mut state = vec![0usize; self.cards.len()];
        for &m in &self.mass {
            if m > 0.0 {
                let at: usize = pos.iter().zip(&out_strides).map(|(&p, &s)| state[p] * s).sum();
                mass[at] += m;
            }
            increment(&mut state, &self.cards);
        }
        Ok(JointTable { vars: pos.iter().map(|&p| self.vars[p].clone()).collect(), cards, mass })
    }

    /// Shannon entropy of the marginal over `vars`.
    pub fn entropy<S: AsRef<str>>(&self, vars: &[S]) -> Result<f64> {
        let vars = dedup(vars);
        Ok(self.marginal(&vars)?.mass.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum())
    }

    /// `H(target | given)`; the sets may overlap.
    pub fn conditional_entropy<S: AsRef<str>, T: AsRef<str>>(&self, target: &[S], given: &[T]) -> Result<f64> {
        let joint: Vec<&str> = target.iter().map(AsRef::as_ref).chain(given.iter().map(AsRef::as_ref)).collect();
        Ok(self.entropy(&joint)? - self.entropy(given)?)
    }

    /// `I[a; b | c]` by direct summation over the joint of the three sets.
    /// An empty `a` or `b` gives zero.
    pub fn cmi<A: AsRef<str>, B: AsRef<str>, C: AsRef<str>>(&self, a: &[A], b: &[B], c: &[C]) -> Result<f64> {
        let (a, b, c) = (dedup(a), dedup(b), dedup(c));
        for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
            if let Some(v) = x.iter().find(|v| y.contains(v)) {
                return Err(Error::Overlap(v.to_string()));
            }
        }
        for v in a.iter().chain(&b).chain(&c) {
            self.position(v)?;
        }
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        let order: Vec<&str> = a.iter().chain(&b).chain(&c).copied().collect();
        let joint = self.marginal(&order)?;
        let size = |set: &[&str]| set.iter().map(|v| self.card(v).unwrap()).product::<usize>();
        let (na, nb, nc) = (size(&a), size(&b), size(&c));

        let mut pc = vec![0.0; nc];
        let mut pac = vec![0.0; na * nc];
        let mut pbc = vec![0.0; nb * nc];
        for i in 0..na {
            for j in 0..nb {
                for k in 0..nc {
                    let p = joint.mass[(i * nb + j) * nc + k];
                    pc[k] += p;
                    pac[i * nc + k] += p;
                    pbc[j * nc + k] += p;
                }
            }
        }
        let mut total = 0.0;
        for i in 0..na {
            for j in 0..nb {
                for k in 0..nc {
                    let p = joint.mass[(i * nb + j) * nc + k];
                    if p > 0.0 {
                        total += p * (p * pc[k] / (pac[i * nc + k] * pbc[j * nc + k])).log2();
                    }
                }
            }
        }
        Ok(total)
    }

    pub fn mi<A: AsRef<str>, B: AsRef<str>>(&self, a: &[A], b: &[B]) -> Result<f64> {
        self.cmi(a, b, &[] as &[&str])
    }

    /// `H(a) + H(b) - H(a ∪ b)`, defined for overlapping sets (so `I[X; Z] = H(Z)`
    /// when `Z` is a sub-tuple of `X`).
    pub fn shared_information<A: AsRef<str>, B: AsRef<str>>(&self, a: &[A], b: &[B]) -> Result<f64> {
        let union: Vec<&str> = a.iter().map(AsRef::as_ref).chain(b.iter().map(AsRef::as_ref)).collect();
        Ok(self.entropy(a)? + self.entropy(b)? - self.entropy(&union)?)
    }

    /// Appends a variable whose state is a deterministic function of `sources`.
    pub fn with_derived<S: AsRef<str>>(
        &self,
        name: &str,
        card: usize,
        sources: &[S],
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<JointTable> {
        if self.has(name) {
            return Err(Error::Overlap(name.to_string()));
        }
        let pos = sources.iter().map(|s| self.position(s.as_ref())).collect::<Result<Vec<_>>>()?;
        let mut mass = vec![0.0; self.mass.len() * card];
        let mut state = vec![0usize; self.cards.len()];
        let mut args = vec![0usize; pos.len()];
        for (i, &m) in self.mass.iter().enumerate() {
            for (a, &p) in args.iter_mut().zip(&pos) {
                *a = state[p];
            }
            let image = f(&args);
            if image >= card {
                return Err(Error::PhiRange { state: i, image, card });
            }
            mass[i * card + image] = m;
            increment(&mut state, &self.cards);
        }
        let mut vars = self.vars.clone();
        vars.push(name.to_string());
        let mut cards = self.cards.clone();
        cards.push(card);
        Ok(JointTable { vars, cards, mass })
    }

    /// Replaces `var` by binary coordinates `var.0` (least significant bit),
    /// `var.1`, ... of its state index. Returns the new table and the coordinate names.
    pub fn split_bits(&self, var: &str) -> Result<(JointTable, Vec<String>)> {
        let card = self.card(var)?;
        let width = usize::BITS as usize - (card.max(2) - 1).leading_zeros() as usize;
        let names: Vec<String> = (0..width).map(|b| format!("{var}.{b}")).collect();
        let mut table = self.clone();
        for (b, name) in names.iter().enumerate() {
            table = table.with_derived(name, 2, &[var], |s| s[0] >> b & 1)?;
        }
        let keep: Vec<String> = table.vars.iter().filter(|v| *v != var).cloned().collect();
        Ok((table.marginal(&keep)?, names))
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tables always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: JointTable = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        if self.vars.len() != self.cards.len() {
            return Err(Error::InvalidDistribution("variable and cardinality counts differ".into()));
        }
        let mut seen = BTreeSet::new();
        for v in &self.vars {
            if !seen.insert(v) {
                return Err(Error::Overlap(v.clone()));
            }
        }
        let cells = self
            .cards
            .iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .ok_or_else(|| Error::InvalidDistribution("table too large".into()))?;
        if cells == 0 || self.mass.is_empty() {
            return Err(Error::EmptyTable);
        }
        if self.mass.len() != cells {
            return Err(Error::InvalidDistribution(format!(
                "{} mass entries for {cells} cells",
                self.mass.len()
            )));
        }
        if let Some(p) = self.mass.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("invalid mass {p}")));
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(())
    }
}

pub(crate) fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

/// Advances a mixed-radix counter, last digit fastest.
pub(crate) fn increment(state: &mut [usize], cards: &[usize]) {
    for i in (0..state.len()).rev() {
        state[i] += 1;
        if state[i] < cards[i] {
            return;
        }
        state[i] = 0;
    }
}

fn dedup<S: AsRef<str>>(vars: &[S]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    vars.iter().map(AsRef::as_ref).filter(|v| seen.insert(*v)).collect()
}

/// `|I[a;b|c] - (I[a; b∪c] - I[a;c])|`, each term by direct summation.
pub fn chain_rule_residual<S: AsRef<str>>(table: &JointTable, a: &[S], b: &[S], c: &[S]) -> Result<f64> {
    let direct = table.cmi(a, b, c)?;
    let bc: Vec<&str> = b.iter().chain(c).map(AsRef::as_ref).collect();
    Ok((direct - (table.mi(a, &bc)? - table.mi(a, c)?)).abs())
}

/// Deterministic recoding Φ of a source variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiMap {
    pub source: String,
    /// Name given to Φ(source) in the augmented table.
    pub name: String,
    pub card: usize,
    pub mapping: Vec<usize>,
}

impl PhiMap {
    pub fn identity(source: &str, card: usize) -> Self {
        Self { source: source.into(), name: format!("Phi({source})"), card, mapping: (0..card).collect() }
    }

    pub fn constant(source: &str, source_card: usize) -> Self {
        Self { source: source.into(), name: format!("Phi({source})"), card: 1, mapping: vec![0; source_card] }
    }
}

pub fn apply_phi(table: &JointTable, phi: &PhiMap) -> Result<JointTable> {
    let source_card = table.card(&phi.source)?;
    if phi.mapping.len() != source_card {
        return Err(Error::InvalidDistribution(format!(
            "phi covers {} states, `{}` has {source_card}",
            phi.mapping.len(),
            phi.source
        )));
    }
    if let Some((state, &image)) = phi.mapping.iter().enumerate().find(|(_, &m)| m >= phi.card) {
        return Err(Error::PhiRange { state, image, card: phi.card });
    }
    table.with_derived(&phi.name, phi.card, &[phi.source.as_str()], |s| phi.mapping[s[0]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpuriousnessPreconditions {
    pub met: bool,
    /// `I[Z_s; E | Y]`, required strictly positive.
    pub spurious_env_bits: f64,
    /// `I[Φ(Z_s); E | Y]`, required zero.
    pub phi_env_bits: f64,
}

/// Outcome of checking `I[Y;E|Φ(Z_s)] >= I[Y;E|Z_s] > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpuriousnessReport {
    pub claim: String,
    /// `I[Y; E | Φ(Z_s)]`
    pub lhs_bits: f64,
    /// `I[Y; E | Z_s]`
    pub rhs_bits: f64,
    pub preconditions: SpuriousnessPreconditions,
    /// `None` when the preconditions fail and nothing is asserted.
    pub holds: Option<bool>,
}

pub fn verify_spuriousness(table: &JointTable, phi: &PhiMap, tol: Tolerances) -> Result<SpuriousnessReport> {
    for v in [LABEL, ENV, SPURIOUS] {
        table.position(v)?;
    }
    let t = apply_phi(table, phi)?;
    let p = phi.name.as_str();
    let spurious_env_bits = t.cmi(&[SPURIOUS], &[ENV], &[LABEL])?.max(0.0);
    let phi_env_bits = t.cmi(&[p], &[ENV], &[LABEL])?.max(0.0);
    let met = spurious_env_bits > tol.positive && phi_env_bits <= tol.zero;
    let lhs = t.cmi(&[LABEL], &[ENV], &[p])?.max(0.0);
    let rhs = t.cmi(&[LABEL], &[ENV], &[SPURIOUS])?.max(0.0);
    let holds = met.then_some(lhs + tol.zero >= rhs && rhs > tol.zero);
    Ok(SpuriousnessReport {
        claim: "spuriousness".into(),
        lhs_bits: lhs,
        rhs_bits: rhs,
        preconditions: SpuriousnessPreconditions { met, spurious_env_bits, phi_env_bits },
        holds,
    })
}

/// Plug-in frequency table over label, environment and latent columns
/// (`Y`, `E`, `Z_c`, `Z_F`, `Z_s`) pooled across `datasets`.
pub fn empirical_table<S: AsRef<str>>(datasets: &[EnvironmentDataset], vars: &[S]) -> Result<JointTable> {
    let first = datasets.first().ok_or(Error::EmptyDataset)?;
    let k = first.num_classes;
    let num_envs = datasets.iter().map(|d| d.env_id + 1).max().unwrap_or(1);
    let cards = vars
        .iter()
        .map(|v| match v.as_ref() {
            ENV => Ok(num_envs),
            LABEL | crate::graph::INVARIANT | crate::graph::FAKE | SPURIOUS => Ok(k),
            other => Err(Error::UnknownVariable(other.to_string())),
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = datasets.iter().flat_map(|d| {
        d.rows.iter().map(move |r| vars.iter().map(|v| r.column(v.as_ref(), d.env_id).unwrap()).collect())
    });
    let names: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
    JointTable::from_rows(names, cards, rows)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NONE: &[&str] = &[];

    fn fair_bits(n: usize) -> JointTable {
        let names: Vec<String> = (0..n).map(|i| format!("B{i}")).collect();
        JointTable::new(names, vec![2; n], vec![1.0 / (1 << n) as f64; 1 << n]).unwrap()
    }

    pub(crate) fn random_table(rng: &mut ChaCha8Rng) -> JointTable {
        let n = rng.random_range(3..=5);
        let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        let size: usize = cards.iter().product();
        // Sparse-ish weights so zero slices occur.
        let weights: Vec<f64> = (0..size)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>().powi(3) })
            .collect();
        let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
        JointTable::from_weights(names, cards, weights).unwrap()
    }

    #[test]
    fn entropy_basics() {
        let t = fair_bits(2);
        assert!((t.entropy(&["B0"]).unwrap() - 1.0).abs() < 1e-15);
        assert!((t.entropy(&["B0", "B1"]).unwrap() - 2.0).abs() < 1e-15);
        let point = JointTable::new(["A"], vec![3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(point.entropy(&["A"]).unwrap(), 0.0);
        assert_eq!(t.entropy(NONE).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_invalid_tables_are_rejected() {
        assert!(matches!(JointTable::new(["A"], vec![0], vec![]), Err(Error::EmptyTable)));
        assert!(JointTable::new(["A"], vec![2], vec![0.7, 0.7]).is_err());
        assert!(JointTable::new(["A"], vec![2], vec![-0.5, 1.5]).is_err());
        assert!(JointTable::new(["A", "A"], vec![1, 1], vec![1.0]).is_err());
    }

    #[test]
    fn mi_of_independent_and_copied_bits() {
        let t = fair_bits(2);
        assert!(t.mi(&["B0"], &["B1"]).unwrap().abs() < 1e-15);
        let copy = t.marginal(&["B0"]).unwrap().with_derived("C", 2, &["B0"], |s| s[0]).unwrap();
        assert!((copy.mi(&["B0"], &["C"]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn xor_conditional_mutual_information() {
        let t = fair_bits(2).with_derived("Z", 2, &["B0", "B1"], |s| s[0] ^ s[1]).unwrap();
        // Brute force over the 8-cell joint: given Z, B1 determines B0.
        let mut brute = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let pxyz: f64 = if x ^ y == z { 0.25 } else { 0.0 };
                    if pxyz > 0.0 {
                        // p(z)=1/2, p(x,z)=1/4, p(y,z)=1/4
                        brute += pxyz * (pxyz * 0.5 / (0.25 * 0.25)).log2();
                    }
                }
            }
        }
        let got = t.cmi(&["B0"], &["B1"], &["Z"]).unwrap();
        assert!((got - brute).abs() < 1e-15);
        assert!((got - 1.0).abs() < 1e-15);
        assert!(t.mi(&["B0"], &["B1"]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn cmi_rejects_overlap_and_unknown_names() {
        let t = fair_bits(3);
        assert!(matches!(t.cmi(&["B0"], &["B0"], NONE), Err(Error::Overlap(_))));
        assert!(matches!(t.cmi(&["B0"], &["B1"], &["B0"]), Err(Error::Overlap(_))));
        assert!(matches!(t.cmi(&["B0"], &["Q"], NONE), Err(Error::UnknownVariable(_))));
        assert_eq!(t.cmi(NONE, &["B1"], &["B2"]).unwrap(), 0.0);
    }

    #[test]
    fn chain_rule_with_zero_slice() {
        // C = 1 never happens.
        let t = JointTable::new(
            ["A", "B", "C"],
            vec![2, 2, 2],
            vec![0.4, 0.0, 0.1, 0.0, 0.2, 0.0, 0.3, 0.0],
        )
        .unwrap();
        assert!(chain_rule_residual(&t, &["A"], &["B"], &["C"]).unwrap() <= 1e-12);
    }

    #[test]
    fn identities_on_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = random_table(&mut rng);
            let v: Vec<&str> = t.vars().iter().map(String::as_str).collect();
            assert!(chain_rule_residual(&t, &v[..1], &v[1..2], &v[2..]).unwrap() <= 1e-12);
            let i = t.cmi(&v[..1], &v[1..2], &v[2..3]).unwrap();
            assert!(i >= -1e-12);
            // Entropy route agrees with direct summation.
            let h = t.entropy(&[v[0], v[2]]).unwrap() + t.entropy(&[v[1], v[2]]).unwrap()
                - t.entropy(&[v[0], v[1], v[2]]).unwrap()
                - t.entropy(&[v[2]]).unwrap();
            assert!((h - i).abs() <= 1e-12);
        }
    }

    #[test]
    fn phi_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut weights = vec![0.0; 4 * 4];
        weights.iter_mut().for_each(|w| *w = rng.random());
        let t = JointTable::from_weights(["Y", "Z_s"], vec![4, 4], weights).unwrap();
        let base = t.mi(&["Y"], &["Z_s"]).unwrap();

        let id = apply_phi(&t, &PhiMap::identity("Z_s", 4)).unwrap();
        assert!((id.mi(&["Y"], &["Phi(Z_s)"]).unwrap() - base).abs() < 1e-14);

        let c = apply_phi(&t, &PhiMap::constant("Z_s", 4)).unwrap();
        assert!(c.mi(&["Y"], &["Phi(Z_s)"]).unwrap().abs() < 1e-15);

        let merge = PhiMap { source: "Z_s".into(), name: "M".into(), card: 2, mapping: vec![0, 0, 1, 1] };
        let m = apply_phi(&t, &merge).unwrap();
        assert!(m.entropy(&["M"]).unwrap() <= m.entropy(&["Z_s"]).unwrap());

        let bad = PhiMap { source: "Z_s".into(), name: "M".into(), card: 2, mapping: vec![0, 1, 2, 0] };
        assert!(matches!(apply_phi(&t, &bad), Err(Error::PhiRange { image: 2, .. })));
    }

    #[test]
    fn split_bits_preserves_information() {
        let t = JointTable::from_weights(["A", "B"], vec![4, 3], (1..=12).map(f64::from).collect()).unwrap();
        let (s, names) = t.split_bits("A").unwrap();
        assert_eq!(names, vec!["A.0", "A.1"]);
        let a = t.mi(&["A"], &["B"]).unwrap();
        assert!((s.mi(&["A.0", "A.1"], &["B"]).unwrap() - a).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let t = fair_bits(2);
        assert_eq!(JointTable::from_json(&t.to_json()).unwrap(), t);
        assert!(JointTable::from_json(r#"{"vars":["A"],"cards":[2],"mass":[0.2,0.2]}"#).is_err());
    }

    /// Hand-built five-variable instance: `Z_s = (A, B)` where `A` copies a
    /// noisy `Y` and `B` is a noisy copy of `E`; Φ keeps `A`.
    fn lemma_instance() -> JointTable {
        // E -> Y (through an unobserved invariant), Y -> A, E -> B.
        let p_e = [0.5, 0.5];
        let p_y_e = [[0.8, 0.2], [0.3, 0.7]];
        let p_a_y = [[0.9, 0.1], [0.2, 0.8]];
        let p_b_e = [[0.85, 0.15], [0.1, 0.9]];
        let mut mass = vec![0.0; 2 * 2 * 4];
        for e in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        mass[(e * 2 + y) * 4 + a * 2 + b] = p_e[e] * p_y_e[e][y] * p_a_y[y][a] * p_b_e[e][b];
                    }
                }
            }
        }
        JointTable::new(["E", "Y", "Z_s"], vec![2, 2, 4], mass).unwrap()
    }

    #[test]
    fn spuriousness_holds_on_constructed_instance() {
        let t = lemma_instance();
        let phi = PhiMap { source: "Z_s".into(), name: "Phi".into(), card: 2, mapping: vec![0, 0, 1, 1] };
        let r = verify_spuriousness(&t, &phi, Tolerances::default()).unwrap();
        assert!(r.preconditions.met, "{r:?}");
        assert_eq!(r.holds, Some(true));
        assert!(r.lhs_bits >= r.rhs_bits && r.rhs_bits > 0.0);
    }

    #[test]
    fn identity_phi_gives_equality() {
        let t = lemma_instance();
        let r = verify_spuriousness(&t, &PhiMap::identity("Z_s", 4), Tolerances::default()).unwrap();
        assert!((r.lhs_bits - r.rhs_bits).abs() < 1e-12);
        // Identity Φ inherits the environment dependence of Z_s given Y.
        assert!(!r.preconditions.met);
        assert_eq!(r.holds, None);
    }

    #[test]
    fn preconditions_alone_do_not_imply_the_inequality() {
        // Z_s = E xor Y with Y, E independent: a constant Φ meets both
        // preconditions yet I[Y;E|Φ] = 0 < I[Y;E|Z_s] = 1.
        let t = fair_bits(2)
            .with_derived("Z_s", 2, &["B0", "B1"], |s| s[0] ^ s[1])
            .unwrap();
        let t = JointTable::new(["Y", "E", "Z_s"], t.cards().to_vec(), t.mass().to_vec()).unwrap();
        let r = verify_spuriousness(&t, &PhiMap::constant("Z_s", 2), Tolerances::default()).unwrap();
        assert!(r.preconditions.met);
        assert_eq!(r.holds, Some(false));
    }

    #[test]
    fn missing_variables_are_reported() {
        let t = fair_bits(2);
        assert!(verify_spuriousness(&t, &PhiMap::identity("B0", 2), Tolerances::default()).is_err());
    }
}
