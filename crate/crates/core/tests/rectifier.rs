mod common;

use fakeinv_core::desk::DeskInstance;
use fakeinv_core::graph::{ENV, LABEL};
use fakeinv_core::info::Tolerances;
use fakeinv_core::rectifier::{
    anti_collapse_select, entropy_form_objective, iib_objective, joint_cmi_objective, prop2_oracle, FeatureMask, Prop1Outcome,
};
use fakeinv_core::scm::{BenchmarkConfig, Shift};
use fakeinv_core::Error;

fn desk() -> DeskInstance {
    DeskInstance::build(&BenchmarkConfig::desk(), None).unwrap()
}

fn names(m: &FeatureMask) -> (Vec<&str>, Vec<&str>) {
    (m.selected_names(), m.complement_names())
}

/// Masks meeting both oracle conditions, recomputed with the brute-force CMI.
fn brute_force_oracle(d: &DeskInstance, tol: Tolerances) -> Vec<FeatureMask> {
    let u = d.universe();
    (0..1u64 << u.len())
        .map(|i| FeatureMask::from_index(&u, i))
        .filter(|m| {
            let (z, rest) = names(m);
            common::cmi(&d.table, &[LABEL], &rest, &z) <= tol.zero && common::cmi(&d.table, &[LABEL], &z, &rest) > tol.positive
        })
        .collect()
}

#[test]
fn objective_terms_match_brute_force() {
    let d = desk();
    let u = d.universe();
    for i in 0..1u64 << u.len() {
        let m = FeatureMask::from_index(&u, i);
        let (z, rest) = names(&m);
        let r = joint_cmi_objective(&d.table, &m, 0.3).unwrap();
        assert!((r.first_term_bits - common::cmi(&d.table, &[LABEL], &rest, &z)).abs() < 1e-12);
        assert!((r.second_term_bits - common::cmi(&d.table, &[LABEL], &z, &rest)).abs() < 1e-12);
        assert!((r.anti_collapse_bits - common::cmi(&d.table, &z, &rest, &[])).abs() < 1e-12);
        assert!(r.first_term_bits >= 0.0 && r.second_term_bits >= 0.0 && r.anti_collapse_bits >= 0.0);
    }
    let all: Vec<&str> = u.iter().map(String::as_str).collect();
    let full = joint_cmi_objective(&d.table, &d.full_mask(), 1.0).unwrap();
    assert_eq!(full.first_term_bits, 0.0);
    assert!((full.second_term_bits - common::cmi(&d.table, &[LABEL], &all, &[])).abs() < 1e-12);
    let empty = joint_cmi_objective(&d.table, &d.full_mask().complement(), 1.0).unwrap();
    assert_eq!(empty.second_term_bits, 0.0);
    assert!((empty.first_term_bits - common::cmi(&d.table, &[LABEL], &all, &[])).abs() < 1e-12);
}

#[test]
fn invariant_mask_terms() {
    let d = desk();
    let r = joint_cmi_objective(&d.table, &d.invariant_mask(), 0.1).unwrap();
    assert!(r.first_term_bits < 1e-9);
    assert!(r.second_term_bits > 1e-3);
}

#[test]
fn entropy_form_agrees() {
    let d = desk();
    let u = d.universe();
    let all: Vec<&str> = u.iter().map(String::as_str).collect();
    for lambda in [0.0, 0.1, 1.0, 10.0] {
        for i in 0..1u64 << u.len() {
            let m = FeatureMask::from_index(&u, i);
            let a = joint_cmi_objective(&d.table, &m, lambda).unwrap().combined;
            let b = entropy_form_objective(&d.table, &m, lambda).unwrap();
            assert!((a - b).abs() <= 1e-10);
            if lambda == 1.0 {
                let (z, rest) = names(&m);
                let direct = common::cond_entropy(&d.table, &[LABEL], &z) - common::cond_entropy(&d.table, &[LABEL], &rest);
                assert!((b - direct).abs() < 1e-12);
            }
        }
    }
    let m = d.invariant_mask();
    let expected = common::cond_entropy(&d.table, &[LABEL], &names(&m).0)
        - 0.1 * common::cond_entropy(&d.table, &[LABEL], &names(&m).1)
        + (0.1 - 1.0) * common::cond_entropy(&d.table, &[LABEL], &all);
    assert!((entropy_form_objective(&d.table, &m, 0.1).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn oracle_matches_brute_force_enumeration() {
    let d = desk();
    let tol = Tolerances::default();
    let got = prop2_oracle(&d.table, &d.universe(), tol).unwrap();
    assert_eq!(got, brute_force_oracle(&d, tol));
    assert!(got.contains(&d.invariant_mask()));
    assert!(got.contains(&d.full_mask()));
}

#[test]
fn oracle_after_fake_shift() {
    let d = DeskInstance::build(&BenchmarkConfig::desk(), Some(Shift::ZFRandom)).unwrap();
    let tol = Tolerances::default();
    let got = prop2_oracle(&d.table, &d.universe(), tol).unwrap();
    assert_eq!(got, brute_force_oracle(&d, tol));
    // Pure-noise Z_F coordinates can be added to Z_c without changing either term.
    let zc = d.invariant_mask().index();
    assert!(got.iter().all(|m| m.index() & zc == zc));
    assert_eq!(got.len(), 1 << d.fake.len());
    assert!(matches!(anti_collapse_select(&d.table, &got, tol), Err(Error::NoSelection(_))));
}

#[test]
fn oracle_threshold_and_bound() {
    let d = desk();
    let inf = Tolerances { zero: 1e-9, positive: f64::INFINITY };
    assert!(prop2_oracle(&d.table, &d.universe(), inf).unwrap().is_empty());
    let wide: Vec<String> = (0..21).map(|i| format!("C{i}")).collect();
    assert!(matches!(prop2_oracle(&d.table, &wide, Tolerances::default()), Err(Error::EnumerationBound(21))));
}

#[test]
fn oracle_is_permutation_invariant() {
    let d = desk();
    let tol = Tolerances::default();
    let mut rev = d.universe();
    rev.reverse();
    let sets = |u: &[String]| {
        let mut v: Vec<Vec<String>> = prop2_oracle(&d.table, u, tol)
            .unwrap()
            .iter()
            .map(|m| {
                let mut s: Vec<String> = m.selected_names().iter().map(|s| s.to_string()).collect();
                s.sort();
                s
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(sets(&d.universe()), sets(&rev));
}

#[test]
fn anti_collapse_rules() {
    let d = desk();
    let tol = Tolerances::default();
    let (m, score) = anti_collapse_select(&d.table, &[d.invariant_mask(), d.full_mask()], tol).unwrap();
    assert_eq!(m, d.invariant_mask());
    let inv = d.invariant_mask();
    let (zc, zf) = names(&inv);
    assert!((score - common::cmi(&d.table, &zc, &zf, &[])).abs() < 1e-12);
    assert!(score > 0.0);
    assert!(matches!(anti_collapse_select(&d.table, &[d.full_mask()], tol), Err(Error::NoSelection(_))));
    // A mask and its complement score the same; the lower index wins.
    let c = d.invariant_mask().complement();
    let (m, _) = anti_collapse_select(&d.table, &[d.invariant_mask(), c.clone()], tol).unwrap();
    assert_eq!(m.index(), d.invariant_mask().index().min(c.index()));
}

#[test]
fn iib_examples() {
    let d = desk();
    let obs = d.observation();
    let empty = d.full_mask().complement();
    let v = iib_objective(&d.table, &empty, &obs, 0.5, 2.0).unwrap();
    assert!((v.value - 0.5 * common::cmi(&d.table, &[LABEL], &[ENV], &[])).abs() < 1e-12);
    let full = iib_objective(&d.table, &d.full_mask(), &obs, 1.0, 1.0).unwrap();
    assert!(full.invariance_bits <= 1e-9);
    let m = d.invariant_mask();
    let v = iib_objective(&d.table, &m, &obs, 0.7, 0.0).unwrap();
    assert!((v.value - 0.7 * common::cmi(&d.table, &[LABEL], &[ENV], &names(&m).0)).abs() < 1e-12);
}

#[test]
fn witness_examples() {
    let d = desk();
    let tol = Tolerances::default();
    match d.prop1(1.0, 1.0, tol).unwrap() {
        Prop1Outcome::Witness { mask, value, reference } => {
            assert_eq!(mask.count(), d.invariant.len());
            assert!(mask.selected_names().iter().any(|n| d.fake.iter().any(|f| f == n)));
            assert!(value.value <= reference.value + 1e-9);
        }
        other => panic!("{other:?}"),
    }
    // With β = 0 every n_c-sized mask whose first term vanishes scores 0.
    let obs = d.observation();
    let u = d.universe();
    for i in 0..1u64 << u.len() {
        let m = FeatureMask::from_index(&u, i);
        if m.count() != d.invariant.len() {
            continue;
        }
        let v = iib_objective(&d.table, &m, &obs, 1.0, 0.0).unwrap();
        if v.invariance_bits <= tol.zero {
            assert!(v.value <= iib_objective(&d.table, &d.full_mask(), &obs, 1.0, 0.0).unwrap().value + tol.zero);
        }
    }
    assert!(matches!(d.prop1(1.0, 0.0, tol).unwrap(), Prop1Outcome::Witness { .. }));
    let off = DeskInstance::build(&BenchmarkConfig { fake_branch: false, ..BenchmarkConfig::desk() }, None).unwrap();
    assert!(matches!(off.prop1(1.0, 1.0, tol).unwrap(), Prop1Outcome::PremiseAbsent { .. }));
}

#[test]
fn full_mask_outranks_invariant_mask() {
    let d = desk();
    for lambda in [0.1, 1.0, 10.0] {
        let inv = joint_cmi_objective(&d.table, &d.invariant_mask(), lambda).unwrap().combined;
        let full = joint_cmi_objective(&d.table, &d.full_mask(), lambda).unwrap().combined;
        assert!(inv > full, "λ={lambda}: {inv} vs {full}");
    }
}
