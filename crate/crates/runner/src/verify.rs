//! The exact claim suite: each check recomputes its quantities from joint
//! tables and compares them with the stated graphical or information-theoretic
//! property.

use fakeinv_core::desk::{random_factored_instance, random_peaked_assumption_scm, DeskInstance};
use fakeinv_core::graph::{assumption_graph, AssumptionKind, ENV, FAKE, INVARIANT, LABEL, SPURIOUS};
use fakeinv_core::info::{chain_rule_residual, verify_spuriousness, JointTable, Tolerances};
use fakeinv_core::rectifier::{
    anti_collapse_select, entropy_form_objective, evaluate_all_masks, joint_cmi_objective, prop2_oracle, FeatureMask,
    Prop1Outcome,
};
use fakeinv_core::scm::Environments;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::VerifyConfig;

/// Exact identities must hold to this absolute residual.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Agreement required between the two forms of the joint objective.
pub const FORM_TOL: f64 = 1e-10;
/// Minimum share of parameterizations in which a d-connected query shows dependence.
pub const FAITHFULNESS_RATE: f64 = 0.95;
/// Upper bound on the off-peak mass of random near-deterministic mechanisms.
pub const MECHANISM_NOISE: f64 = 0.6;
/// Weights swept by the multi-weight claims.
pub const WEIGHTS: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    PremiseAbsent,
}

impl Verdict {
    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub claim: String,
    pub verdict: Verdict,
    pub detail: Value,
}

/// Every claim the suite reports, in report order.
pub const CLAIMS: [&str; 10] = [
    "d_separation_profiles",
    "d_separation_soundness",
    "chain_rule",
    "information_identities",
    "spuriousness",
    "objective_forms",
    "prop1_witness",
    "prop2_oracle",
    "anti_collapse",
    "trivial_solution_dominance",
];

/// Stated `Y ⊥ E | C` verdicts for each assumption graph.
pub fn expected_profile(kind: AssumptionKind) -> Vec<(Vec<&'static str>, bool)> {
    match kind {
        AssumptionKind::Piif => vec![
            (vec![], false),
            (vec![INVARIANT], true),
            (vec![SPURIOUS], false),
            (vec![INVARIANT, SPURIOUS], false),
        ],
        AssumptionKind::Fiif => vec![
            (vec![], false),
            (vec![INVARIANT], true),
            (vec![SPURIOUS], false),
            (vec![INVARIANT, SPURIOUS], true),
        ],
        AssumptionKind::RsScm => vec![(vec![INVARIANT, FAKE], true), (vec![FAKE], false)],
    }
}

pub const KINDS: [AssumptionKind; 3] = [AssumptionKind::Piif, AssumptionKind::Fiif, AssumptionKind::RsScm];

fn kind_name(kind: AssumptionKind) -> &'static str {
    match kind {
        AssumptionKind::Piif => "PIIF",
        AssumptionKind::Fiif => "FIIF",
        AssumptionKind::RsScm => "RS_SCM",
    }
}

fn query_name(given: &[impl AsRef<str>]) -> String {
    let g: Vec<&str> = given.iter().map(AsRef::as_ref).collect();
    format!("Y,E|{}", g.join(","))
}

pub fn d_separation_profiles() -> anyhow::Result<ClaimResult> {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for kind in KINDS {
        let g = assumption_graph(kind, true);
        for (given, expected) in expected_profile(kind) {
            let q = fakeinv_core::graph::IndependenceQuery::new([LABEL], [ENV], given.clone())?;
            let got = g.d_separated(&q)?;
            checked += 1;
            if got != expected {
                mismatches.push(json!({"graph": kind_name(kind), "query": query_name(&given), "expected": expected, "got": got}));
            }
        }
    }
    Ok(ClaimResult {
        claim: "d_separation_profiles".into(),
        verdict: Verdict::of(mismatches.is_empty()),
        detail: json!({"checked": checked, "mismatches": mismatches}),
    })
}

/// Per-query outcome over random parameterizations of one graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub graph: String,
    pub query: String,
    pub d_separated: bool,
    /// Largest CMI over instances (relevant for separated queries).
    pub max_cmi_bits: f64,
    /// Share of instances with CMI above the positive threshold.
    pub dependent_rate: f64,
}

impl QueryStats {
    pub fn holds(&self, tol: Tolerances) -> bool {
        if self.d_separated {
            self.max_cmi_bits < tol.zero
        } else {
            self.dependent_rate >= FAITHFULNESS_RATE
        }
    }
}

/// CMI of every profile query on `instances` random parameterizations of each graph.
pub fn soundness_stats(instances: usize, tol: Tolerances, seed: u64) -> anyhow::Result<Vec<QueryStats>> {
    let mut out = Vec::new();
    for (k, kind) in KINDS.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let graph = assumption_graph(kind, true);
        let profile = graph.independence_profile()?;
        let mut stats: Vec<QueryStats> = profile
            .iter()
            .map(|(q, sep)| QueryStats {
                graph: kind_name(kind).into(),
                query: query_name(&q.given.iter().collect::<Vec<_>>()),
                d_separated: *sep,
                max_cmi_bits: 0.0,
                dependent_rate: 0.0,
            })
            .collect();
        for _ in 0..instances {
            let joint = random_peaked_assumption_scm(kind, MECHANISM_NOISE, &mut rng)?.exact_joint(Environments::Pooled)?;
            for ((q, _), s) in profile.iter().zip(stats.iter_mut()) {
                let given: Vec<&str> = q.given.iter().map(String::as_str).collect();
                let v = joint.cmi(&[LABEL], &[ENV], &given)?;
                s.max_cmi_bits = s.max_cmi_bits.max(v);
                if v > tol.positive {
                    s.dependent_rate += 1.0 / instances as f64;
                }
            }
        }
        out.extend(stats);
    }
    Ok(out)
}

pub fn d_separation_soundness(cfg: &VerifyConfig) -> anyhow::Result<ClaimResult> {
    let stats = soundness_stats(cfg.random_instances, cfg.tolerances, cfg.seed)?;
    let ok = stats.iter().all(|s| s.holds(cfg.tolerances));
    Ok(ClaimResult {
        claim: "d_separation_soundness".into(),
        verdict: Verdict::of(ok),
        detail: json!({"instances_per_graph": cfg.random_instances, "mechanism_noise": MECHANISM_NOISE, "queries": stats}),
    })
}

/// Random normalized table over up to five variables with up to four states each.
pub fn random_table(rng: &mut impl Rng) -> JointTable {
    let n = rng.random_range(3..=5);
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
    let size: usize = cards.iter().product();
    // Some exact zeros exercise the empty-slice convention.
    let weights: Vec<f64> =
        (0..size).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() + 1e-3 }).collect();
    JointTable::from_weights(names, cards, weights).expect("random tables are well formed")
}

/// Random partition of the table's variables into three groups; `c` may be empty.
fn random_split<'a>(t: &'a JointTable, rng: &mut impl Rng) -> (Vec<&'a str>, Vec<&'a str>, Vec<&'a str>) {
    let mut groups = (Vec::new(), Vec::new(), Vec::new());
    for (i, v) in t.vars().iter().enumerate() {
        let slot = if i < 2 { i } else { rng.random_range(0..3) };
        match slot {
            0 => groups.0.push(v.as_str()),
            1 => groups.1.push(v.as_str()),
            _ => groups.2.push(v.as_str()),
        }
    }
    groups
}

pub fn max_chain_rule_residual(instances: usize, seed: u64) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(10);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let t = random_table(&mut rng);
        let (a, b, c) = random_split(&t, &mut rng);
        worst = worst.max(chain_rule_residual(&t, &a, &b, &c)?);
    }
    Ok(worst)
}

/// Residuals of the decompositions used for the spuriousness derivation,
/// with `V0 = Y`, `V1 = E`, `V2 = Z_s`, `V3 = Φ` and any fifth variable ignored.
pub fn identity_residuals(t: &JointTable) -> anyhow::Result<[f64; 4]> {
    let v = t.vars();
    let (y, e, s, p) = (v[0].as_str(), v[1].as_str(), v[2].as_str(), v[3].as_str());
    // I[Y;E|Φ] = I[Y;E,Φ] − I[Y;Φ] = I[Y;E] + I[Y;Φ|E] − I[Y;Φ]
    let lhs = t.cmi(&[y], &[e], &[p])?;
    let r1 = (lhs - (t.mi(&[y], &[e, p])? - t.mi(&[y], &[p])?)).abs();
    let r2 = (lhs - (t.mi(&[y], &[e])? + t.cmi(&[y], &[p], &[e])? - t.mi(&[y], &[p])?)).abs();
    // I[Y;Φ] − I[Y;Z_s] = I[Y;Φ|Z_s] − I[Y;Z_s|Φ]
    let r3 = ((t.mi(&[y], &[p])? - t.mi(&[y], &[s])?) - (t.cmi(&[y], &[p], &[s])? - t.cmi(&[y], &[s], &[p])?)).abs();
    // I[Z_s;Φ,Y|E] = I[Z_s;Φ|E] + I[Z_s;Y|Φ,E] = I[Z_s;Y|E] + I[Z_s;Φ|Y,E]
    let whole = t.cmi(&[s], &[p, y], &[e])?;
    let a = t.cmi(&[s], &[p], &[e])? + t.cmi(&[s], &[y], &[p, e])?;
    let b = t.cmi(&[s], &[y], &[e])? + t.cmi(&[s], &[p], &[y, e])?;
    let r4 = (whole - a).abs().max((whole - b).abs());
    Ok([r1, r2, r3, r4])
}

pub fn max_identity_residual(instances: usize, seed: u64) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mut t = random_table(&mut rng);
        while t.vars().len() < 4 {
            t = random_table(&mut rng);
        }
        worst = identity_residuals(&t)?.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

fn identity_claim(name: &str, worst: f64, instances: usize) -> ClaimResult {
    ClaimResult {
        claim: name.into(),
        verdict: Verdict::of(worst <= IDENTITY_TOL),
        detail: json!({"instances": instances, "max_residual": worst, "tolerance": IDENTITY_TOL}),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpuriousnessStats {
    /// Instances meeting the preconditions.
    pub instances: usize,
    pub attempts: usize,
    pub violations: usize,
    /// Smallest `I[Y;E|Φ] − I[Y;E|Z_s]` among qualifying instances.
    pub min_gap_bits: f64,
    /// Smallest `I[Y;E|Z_s]` among qualifying instances.
    pub min_rhs_bits: f64,
}

/// Draws factored instances until `wanted` satisfy the preconditions.
pub fn spuriousness_stats(wanted: usize, tol: Tolerances, seed: u64) -> anyhow::Result<SpuriousnessStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(12);
    let mut s = SpuriousnessStats {
        instances: 0,
        attempts: 0,
        violations: 0,
        min_gap_bits: f64::INFINITY,
        min_rhs_bits: f64::INFINITY,
    };
    while s.instances < wanted && s.attempts < 20 * wanted.max(1) {
        s.attempts += 1;
        let (table, phi) = random_factored_instance(&mut rng)?;
        let r = verify_spuriousness(&table, &phi, tol)?;
        let Some(holds) = r.holds else { continue };
        s.instances += 1;
        s.violations += usize::from(!holds);
        s.min_gap_bits = s.min_gap_bits.min(r.lhs_bits - r.rhs_bits);
        s.min_rhs_bits = s.min_rhs_bits.min(r.rhs_bits);
    }
    Ok(s)
}

pub fn spuriousness(cfg: &VerifyConfig) -> anyhow::Result<ClaimResult> {
    let s = spuriousness_stats(cfg.random_instances, cfg.tolerances, cfg.seed)?;
    Ok(ClaimResult {
        claim: "spuriousness".into(),
        verdict: Verdict::of(s.instances == cfg.random_instances && s.violations == 0),
        detail: serde_json::to_value(&s)?,
    })
}

/// Largest `|entropy form − CMI form|` over every mask and weight.
pub fn max_form_gap(desk: &DeskInstance) -> anyhow::Result<f64> {
    let u = desk.universe();
    let mut worst: f64 = 0.0;
    for lambda in WEIGHTS {
        for i in 0..1u64 << u.len() {
            let m = FeatureMask::from_index(&u, i);
            let a = joint_cmi_objective(&desk.table, &m, lambda)?.combined;
            let b = entropy_form_objective(&desk.table, &m, lambda)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Reason the fake branch does not behave as a fake-invariant feature, if any.
pub fn fake_premise_gap(desk: &DeskInstance, tol: Tolerances) -> anyhow::Result<Option<String>> {
    if !desk.config.fake_branch {
        return Ok(Some("fake branch disabled".into()));
    }
    let t = &desk.table;
    let spurious = t.cmi(&[LABEL], &[ENV], &desk.fake)?;
    if spurious <= tol.positive {
        return Ok(Some(format!("I[Y;E|Z_F] = {spurious:.3e} bits")));
    }
    let residual = t.cmi(&[LABEL], &[ENV], &desk.universe())?;
    if residual > tol.zero {
        return Ok(Some(format!("I[Y;E|Z_c,Z_F] = {residual:.3e} bits")));
    }
    Ok(None)
}

fn premise_absent(name: &str, reason: String) -> ClaimResult {
    ClaimResult { claim: name.into(), verdict: Verdict::PremiseAbsent, detail: json!({"reason": reason}) }
}

pub fn prop1_claim(desk: &DeskInstance, tol: Tolerances) -> anyhow::Result<ClaimResult> {
    let mut cases = Vec::new();
    let mut verdict = Verdict::Pass;
    for lambda in WEIGHTS {
        for beta in WEIGHTS {
            let outcome = desk.prop1(lambda, beta, tol)?;
            match &outcome {
                Prop1Outcome::Witness { .. } => {}
                Prop1Outcome::PremiseAbsent { reason } => return Ok(premise_absent("prop1_witness", reason.clone())),
                Prop1Outcome::Counterexample { .. } => verdict = Verdict::Fail,
            }
            cases.push(json!({"lambda": lambda, "beta": beta, "outcome": outcome}));
        }
    }
    Ok(ClaimResult { claim: "prop1_witness".into(), verdict, detail: json!({"cases": cases}) })
}

/// The two masks the oracle is stated to return: `Z_c` and `Z_c ∪ Z_F`.
pub fn stated_oracle_masks(desk: &DeskInstance) -> Vec<FeatureMask> {
    vec![desk.invariant_mask(), desk.full_mask()]
}

pub fn prop2_claim(desk: &DeskInstance, tol: Tolerances) -> anyhow::Result<ClaimResult> {
    if let Some(reason) = fake_premise_gap(desk, tol)? {
        return Ok(premise_absent("prop2_oracle", reason));
    }
    let got = prop2_oracle(&desk.table, &desk.universe(), tol)?;
    let expected = stated_oracle_masks(desk);
    let show = |ms: &[FeatureMask]| ms.iter().map(ToString::to_string).collect::<Vec<_>>();
    Ok(ClaimResult {
        claim: "prop2_oracle".into(),
        verdict: Verdict::of(got == expected),
        detail: json!({"expected": show(&expected), "returned": show(&got)}),
    })
}

pub fn anti_collapse_claim(desk: &DeskInstance, tol: Tolerances) -> anyhow::Result<ClaimResult> {
    if let Some(reason) = fake_premise_gap(desk, tol)? {
        return Ok(premise_absent("anti_collapse", reason));
    }
    let candidates = prop2_oracle(&desk.table, &desk.universe(), tol)?;
    let (mask, score) = anti_collapse_select(&desk.table, &candidates, tol)?;
    Ok(ClaimResult {
        claim: "anti_collapse".into(),
        verdict: Verdict::of(mask == desk.invariant_mask()),
        detail: json!({"candidates": candidates.len(), "selected": mask.to_string(), "score_bits": score}),
    })
}

/// Without the anti-collapse term the full mask scores below `Z_c`.
pub fn dominance_claim(desk: &DeskInstance, tol: Tolerances) -> anyhow::Result<ClaimResult> {
    if let Some(reason) = fake_premise_gap(desk, tol)? {
        return Ok(premise_absent("trivial_solution_dominance", reason));
    }
    let mut cases = Vec::new();
    let mut ok = true;
    for lambda in WEIGHTS {
        let inv = joint_cmi_objective(&desk.table, &desk.invariant_mask(), lambda)?.combined;
        let full = joint_cmi_objective(&desk.table, &desk.full_mask(), lambda)?.combined;
        ok &= full < inv;
        cases.push(json!({"lambda": lambda, "invariant": inv, "full": full}));
    }
    Ok(ClaimResult { claim: "trivial_solution_dominance".into(), verdict: Verdict::of(ok), detail: json!({"cases": cases}) })
}

/// Runs every claim once, in [`CLAIMS`] order.
pub fn run_suite(cfg: &VerifyConfig) -> anyhow::Result<Vec<ClaimResult>> {
    let tol = cfg.tolerances;
    let desk = DeskInstance::build(&cfg.desk, None)?;
    let n = cfg.random_instances;
    let form_gap = max_form_gap(&desk)?;
    let claims = vec![
        d_separation_profiles()?,
        d_separation_soundness(cfg)?,
        identity_claim("chain_rule", max_chain_rule_residual(n, cfg.seed)?, n),
        identity_claim("information_identities", max_identity_residual(n, cfg.seed)?, n),
        spuriousness(cfg)?,
        ClaimResult {
            claim: "objective_forms".into(),
            verdict: Verdict::of(form_gap <= FORM_TOL),
            detail: json!({"masks": 1u64 << desk.universe().len(), "weights": WEIGHTS, "max_gap": form_gap}),
        },
        prop1_claim(&desk, tol)?,
        prop2_claim(&desk, tol)?,
        anti_collapse_claim(&desk, tol)?,
        dominance_claim(&desk, tol)?,
    ];
    debug_assert!(claims.iter().map(|c| c.claim.as_str()).eq(CLAIMS));
    Ok(claims)
}

/// Objective reports for every desk mask, ordered by mask index.
pub fn oracle_reports(desk: &DeskInstance, lambda: f64) -> anyhow::Result<Vec<fakeinv_core::rectifier::ObjectiveReport>> {
    Ok(evaluate_all_masks(&desk.table, &desk.universe(), lambda)?)
}
