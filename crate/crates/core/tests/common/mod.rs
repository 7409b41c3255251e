//! Brute-force oracles that share no code with the library.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use fakeinv_core::graph::CausalGraph;
use fakeinv_core::info::JointTable;

/// Entropy in bits of the marginal over `vars`, summing cells directly.
pub fn entropy(t: &JointTable, vars: &[&str]) -> f64 {
    let pos: Vec<usize> = vars.iter().map(|v| t.vars().iter().position(|n| n == v).expect("known variable")).collect();
    let cards = t.cards();
    let mut marg: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut idx = vec![0usize; cards.len()];
    for &p in t.mass() {
        *marg.entry(pos.iter().map(|&i| idx[i]).collect()).or_default() += p;
        for d in (0..cards.len()).rev() {
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    marg.values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

pub fn cmi(t: &JointTable, a: &[&str], b: &[&str], c: &[&str]) -> f64 {
    let cat = |x: &[&str], y: &[&str]| -> Vec<String> { x.iter().chain(y).map(|s| s.to_string()).collect() };
    let h = |v: Vec<String>| entropy(t, &v.iter().map(String::as_str).collect::<Vec<_>>());
    let abc: Vec<String> = a.iter().chain(b).chain(c).map(|s| s.to_string()).collect();
    h(cat(a, c)) + h(cat(b, c)) - h(abc) - h(cat(c, &[]))
}

pub fn cond_entropy(t: &JointTable, a: &[&str], c: &[&str]) -> f64 {
    let ac: Vec<&str> = a.iter().chain(c).copied().collect();
    entropy(t, &ac) - entropy(t, c)
}

/// Cell `(state tuple) -> mass` view of a table.
pub fn cells(t: &JointTable) -> Vec<(Vec<usize>, f64)> {
    let cards = t.cards();
    let mut idx = vec![0usize; cards.len()];
    let mut out = Vec::with_capacity(t.mass().len());
    for &p in t.mass() {
        out.push((idx.clone(), p));
        for d in (0..cards.len()).rev() {
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// d-separation by enumerating every simple path of the skeleton.
pub fn path_separated(g: &CausalGraph, x: &str, y: &str, given: &BTreeSet<String>) -> bool {
    let edges = g.active_edges();
    let nodes = g.nodes().to_vec();
    let is_edge = |a: &str, b: &str| edges.contains(&(a.to_string(), b.to_string()));
    let descendants = |n: &str| -> BTreeSet<String> {
        let mut seen = BTreeSet::from([n.to_string()]);
        let mut stack = vec![n.to_string()];
        while let Some(u) = stack.pop() {
            for (p, c) in &edges {
                if *p == u && seen.insert(c.clone()) {
                    stack.push(c.clone());
                }
            }
        }
        seen
    };
    let blocked = |path: &[String]| {
        path.windows(3).any(|w| {
            let collider = is_edge(&w[0], &w[1]) && is_edge(&w[2], &w[1]);
            if collider {
                descendants(&w[1]).is_disjoint(given)
            } else {
                given.contains(&w[1])
            }
        })
    };
    fn walk(
        nodes: &[String],
        adj: &dyn Fn(&str, &str) -> bool,
        path: &mut Vec<String>,
        target: &str,
        out: &mut Vec<Vec<String>>,
    ) {
        let last = path.last().expect("nonempty").clone();
        if last == target {
            out.push(path.clone());
            return;
        }
        for n in nodes {
            if !path.contains(n) && adj(&last, n) {
                path.push(n.clone());
                walk(nodes, adj, path, target, out);
                path.pop();
            }
        }
    }
    let adj = |a: &str, b: &str| is_edge(a, b) || is_edge(b, a);
    let mut paths = Vec::new();
    walk(&nodes, &adj, &mut vec![x.to_string()], y, &mut paths);
    paths.iter().all(|p| blocked(p))
}
