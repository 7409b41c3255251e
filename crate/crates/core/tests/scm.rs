mod common;

use std::collections::BTreeMap;

use fakeinv_core::dataset::{encode_observation, Codebook, CodebookKind, LatentScales, Latents};
use fakeinv_core::desk::random_assumption_scm;
use fakeinv_core::graph::{AssumptionKind, CausalGraph, ENV, FAKE, INVARIANT, LABEL, SPURIOUS};
use fakeinv_core::info::JointTable;
use fakeinv_core::scm::{
    generate_dataset, make_rs_benchmark, shift_environment, BenchmarkConfig, DiscreteScm, EnvParams, Environments,
    Mechanism, Shift,
};
use fakeinv_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prob(t: &JointTable, event: impl Fn(&dyn Fn(&str) -> usize) -> bool) -> f64 {
    let vars = t.vars().to_vec();
    common::cells(t)
        .into_iter()
        .filter(|(s, _)| event(&|v: &str| s[vars.iter().position(|n| n == v).unwrap()]))
        .map(|(_, p)| p)
        .sum()
}

#[test]
fn independent_fair_roots() {
    let g = CausalGraph::new(["A", "B"], &[]).unwrap();
    let supports = BTreeMap::from([("A".to_string(), 2), ("B".to_string(), 2)]);
    let mech = BTreeMap::from([
        ("A".to_string(), Mechanism::root(vec![0.5, 0.5])),
        ("B".to_string(), Mechanism::root(vec![0.5, 0.5])),
    ]);
    let t = DiscreteScm::new(g, supports, mech, None).unwrap().exact_joint(Environments::Pooled).unwrap();
    assert_eq!(t.mass(), &[0.25; 4]);
}

#[test]
fn deterministic_chain() {
    let g = CausalGraph::new(["A", "B"], &[("A", "B")]).unwrap();
    let supports = BTreeMap::from([("A".to_string(), 3), ("B".to_string(), 3)]);
    let copy = Mechanism::tabulate(&[("A", 3)], 3, |s| (0..3).map(|b| if b == s[0] { 1.0 } else { 0.0 }).collect());
    let mech = BTreeMap::from([("A".to_string(), Mechanism::root(vec![0.2, 0.3, 0.5])), ("B".to_string(), copy)]);
    let scm = DiscreteScm::new(g, supports, mech, None).unwrap();
    let t = scm.exact_joint(Environments::Pooled).unwrap();
    assert_eq!(prob(&t, |s: &dyn Fn(&str) -> usize| s("A") != s("B")), 0.0);
    let draws = scm.sample(None, 100, 3).unwrap();
    let (a, b) = (draws.column("A").unwrap(), draws.column("B").unwrap());
    assert!(draws.rows.iter().all(|r| r[a] == r[b]));
}

#[test]
fn desk_joint_is_normalized() {
    let t = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap().exact_joint(Environments::Pooled).unwrap();
    assert_eq!(t.mass().len(), 512);
    assert!((t.mass().iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn budget_is_explicit() {
    let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
    let err = scm.exact_joint_with_budget(Environments::Pooled, 100).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { needed: 512, budget: 100 }));
}

#[test]
fn benchmark_mechanisms() {
    let cfg = BenchmarkConfig::default();
    let scm = make_rs_benchmark(&cfg).unwrap();
    let env0 = scm.exact_joint(Environments::Only(0)).unwrap();
    assert!((prob(&env0, |s: &dyn Fn(&str) -> usize| s(FAKE) == s(INVARIANT)) - 1.0).abs() < 1e-12);
    let pooled = scm.exact_joint(Environments::Pooled).unwrap();
    let same = prob(&pooled, |s: &dyn Fn(&str) -> usize| s(LABEL) == s(INVARIANT));
    assert!((same - (0.75 + 0.25 / 10.0)).abs() < 1e-12);

    let none = BenchmarkConfig { train_envs: vec![EnvParams { p_e: 1.0, p_hat_e: 0.0 }; 2], ..BenchmarkConfig::desk() };
    let t = make_rs_benchmark(&none).unwrap().exact_joint(Environments::Only(1)).unwrap();
    assert!(common::cmi(&t, &[LABEL], &[SPURIOUS], &[]).abs() < 1e-12);
}

#[test]
fn shifts_break_their_association_only() {
    let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
    for shift in Shift::ALL {
        let s = shift_environment(&scm, shift).unwrap();
        let t = s.exact_joint(Environments::Pooled).unwrap();
        let ys = common::cmi(&t, &[LABEL], &[SPURIOUS], &[]);
        let cf = common::cmi(&t, &[INVARIANT], &[FAKE], &[]);
        assert_eq!(ys.abs() < 1e-12, shift != Shift::ZFRandom, "{shift:?}");
        assert_eq!(cf.abs() < 1e-12, shift != Shift::ZSRandom, "{shift:?}");
        for v in [INVARIANT, LABEL, ENV] {
            assert_eq!(s.mechanism(v), scm.mechanism(v));
        }
    }
    let plain = random_assumption_scm(AssumptionKind::RsScm, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(shift_environment(&plain, Shift::Both), Err(Error::NotABenchmark(_))));
}

#[test]
fn sampled_association_within_binomial_bound() {
    let cfg = BenchmarkConfig::default();
    let scm = make_rs_benchmark(&cfg).unwrap();
    let n = 10_000;
    let draws = scm.sample(Some(1), n, 0).unwrap();
    let (c, f) = (draws.column(INVARIANT).unwrap(), draws.column(FAKE).unwrap());
    let hits = draws.rows.iter().filter(|r| r[c] == r[f]).count() as f64 / n as f64;
    let p = 0.9 + 0.1 / 10.0;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits - p).abs() <= 3.0 * sigma, "{hits} vs {p}");
    assert!(scm.sample(Some(7), 10, 0).is_err());
}

#[test]
fn empirical_frequencies_converge_in_total_variation() {
    let scm = make_rs_benchmark(&BenchmarkConfig::desk()).unwrap();
    let exact = scm.exact_joint(Environments::Pooled).unwrap();
    let n = 100_000;
    let draws = scm.sample(None, n, 11).unwrap();
    let emp = draws.empirical_table(exact.vars()).unwrap();
    let tv: f64 = exact.mass().iter().zip(emp.mass()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    let s = exact.mass().len() as f64;
    assert!(tv <= 5.0 * (s / n as f64).sqrt(), "tv {tv}");
}

#[test]
fn one_hot_layout() {
    let cb = Codebook::generate(CodebookKind::OneHot, 4, 4, LatentScales::default(), 0).unwrap();
    let x = encode_observation(Latents { z_c: 2, z_f: 0, z_s: 1 }, &cb, 0.0, 0);
    let ones: Vec<usize> = x.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
    assert_eq!(ones, vec![2, 4, 9]);
    assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 3);
}

#[test]
fn noiseless_encoding_is_injective() {
    let cb = Codebook::generate(CodebookKind::OneHot, 4, 4, LatentScales::default(), 0).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for z_c in 0..4 {
        for z_f in 0..4 {
            for z_s in 0..4 {
                let x = encode_observation(Latents { z_c, z_f, z_s }, &cb, 0.0, 0);
                assert!(seen.insert(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()));
            }
        }
    }
}

#[test]
fn noisy_observations_decode() {
    let cfg = BenchmarkConfig::default();
    let scm = make_rs_benchmark(&cfg).unwrap();
    let cb = cfg.codebook().unwrap();
    let d = generate_dataset(&scm, &cb, 0, 10_000, 5).unwrap();
    let ok = d.rows.iter().filter(|r| cb.decode(&r.x) == r.latents).count() as f64 / d.len() as f64;
    assert!(ok >= 0.99, "{ok}");
    assert_eq!(d.x_dim(), 30);
}

#[test]
fn datasets_are_byte_reproducible() {
    let cfg = BenchmarkConfig::desk();
    let scm = make_rs_benchmark(&cfg).unwrap();
    let cb = cfg.codebook().unwrap();
    let bytes = |seed| {
        let mut out = Vec::new();
        generate_dataset(&scm, &cb, 1, 500, seed).unwrap().write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(bytes(3), bytes(3));
    assert_ne!(bytes(3), bytes(4));
    let header = String::from_utf8(bytes(3)).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("env,y,z_c,z_f,z_s,x_0,"));
    assert!(header.ends_with("x_11"));
}
