//! Causal diagrams and d-separation.
//!
//! A [`CausalGraph`] holds a fixed node set, a set of always-active edges and
//! any number of named switch groups. Switching a group off removes its edges
//! from every query but never removes nodes, so a deactivated fake-invariant
//! branch leaves `Z_F` in the graph as an isolated variable.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV: &str = "E";
pub const LABEL: &str = "Y";
pub const INVARIANT: &str = "Z_c";
pub const SPURIOUS: &str = "Z_s";
pub const FAKE: &str = "Z_F";
pub const OBSERVATION: &str = "X";

/// Name of the switch group carrying the fake-invariant branch.
pub const FAKE_GROUP: &str = "fake";

pub type Edge = (String, String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssumptionKind {
    Piif,
    Fiif,
    RsScm,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CausalGraph {
    nodes: Vec<String>,
    edges: BTreeSet<Edge>,
    switch_groups: BTreeMap<String, BTreeSet<Edge>>,
    inactive: BTreeSet<String>,
}

/// `left ⊥ right | given`. Duplicates collapse because the sets are ordered sets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndependenceQuery {
    pub left: BTreeSet<String>,
    pub right: BTreeSet<String>,
    pub given: BTreeSet<String>,
}

impl IndependenceQuery {
    pub fn new<L, R, G, S>(left: L, right: R, given: G) -> Result<Self>
    where
        L: IntoIterator<Item = S>,
        R: IntoIterator<Item = S>,
        G: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let left: BTreeSet<String> = left.into_iter().map(Into::into).collect();
        let right: BTreeSet<String> = right.into_iter().map(Into::into).collect();
        let given: BTreeSet<String> = given.into_iter().map(Into::into).collect();
        for (a, b) in [(&left, &right), (&left, &given), (&right, &given)] {
            if let Some(v) = a.intersection(b).next() {
                return Err(Error::Overlap(v.clone()));
            }
        }
        Ok(Self { left, right, given })
    }

    /// The same query with left and right exchanged.
    pub fn swapped(&self) -> Self {
        Self { left: self.right.clone(), right: self.left.clone(), given: self.given.clone() }
    }
}

impl std::fmt::Display for IndependenceQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        write!(f, "{} _|_ {} | {{{}}}", join(&self.left), join(&self.right), join(&self.given))
    }
}

impl CausalGraph {
    pub fn new<N, S>(nodes: N, edges: &[(&str, &str)]) -> Result<Self>
    where
        N: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = BTreeSet::new();
        let nodes: Vec<String> =
            nodes.into_iter().map(Into::into).filter(|n: &String| seen.insert(n.clone())).collect();
        let graph = Self {
            nodes,
            edges: edges.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect(),
            switch_groups: BTreeMap::new(),
            inactive: BTreeSet::new(),
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Adds a named switch group, initially active.
    pub fn with_switch_group(mut self, name: &str, edges: &[(&str, &str)]) -> Result<Self> {
        self.switch_groups.insert(
            name.to_string(),
            edges.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect(),
        );
        self.validate()?;
        Ok(self)
    }

    pub fn set_group_active(&mut self, name: &str, active: bool) -> Result<()> {
        if !self.switch_groups.contains_key(name) {
            return Err(Error::UnknownGroup(name.to_string()));
        }
        if active {
            self.inactive.remove(name);
        } else {
            self.inactive.insert(name.to_string());
        }
        self.validate()
    }

    pub fn is_group_active(&self, name: &str) -> bool {
        self.switch_groups.contains_key(name) && !self.inactive.contains(name)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.iter().any(|n| n == node)
    }

    pub fn switch_groups(&self) -> &BTreeMap<String, BTreeSet<Edge>> {
        &self.switch_groups
    }

    /// Always-on edges plus the edges of every active switch group.
    pub fn active_edges(&self) -> BTreeSet<Edge> {
        let mut edges = self.edges.clone();
        for (name, group) in &self.switch_groups {
            if !self.inactive.contains(name) {
                edges.extend(group.iter().cloned());
            }
        }
        edges
    }

    /// Active parents of `node`, in node declaration order.
    pub fn parents(&self, node: &str) -> Vec<String> {
        let edges = self.active_edges();
        self.nodes
            .iter()
            .filter(|p| edges.contains(&((*p).clone(), node.to_string())))
            .cloned()
            .collect()
    }

    /// Topological order over active edges, ties broken by declaration order.
    pub fn topological_order(&self) -> Vec<String> {
        let idx = self.index();
        let adj = self.adjacency(&idx);
        let mut indegree = vec![0usize; self.nodes.len()];
        for children in &adj.children {
            for &c in children {
                indegree[c] += 1;
            }
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(self.nodes[i].clone());
            for &c in &adj.children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    /// Copy of the graph without `node` and every edge touching it.
    pub fn without_node(&self, node: &str) -> Self {
        let keep = |e: &Edge| e.0 != node && e.1 != node;
        Self {
            nodes: self.nodes.iter().filter(|n| *n != node).cloned().collect(),
            edges: self.edges.iter().filter(|e| keep(e)).cloned().collect(),
            switch_groups: self
                .switch_groups
                .iter()
                .map(|(k, g)| (k.clone(), g.iter().filter(|e| keep(e)).cloned().collect()))
                .collect(),
            inactive: self.inactive.clone(),
        }
    }

    /// Bayes-ball reachability: is every active path from `left` to `right`
    /// blocked by `given`?
    pub fn d_separated(&self, query: &IndependenceQuery) -> Result<bool> {
        let idx = self.index();
        let lookup = |name: &String| {
            idx.get(name.as_str()).copied().ok_or_else(|| Error::UnknownVariable(name.clone()))
        };
        let left = query.left.iter().map(lookup).collect::<Result<Vec<_>>>()?;
        let right = query.right.iter().map(lookup).collect::<Result<BTreeSet<_>>>()?;
        let given = query.given.iter().map(lookup).collect::<Result<BTreeSet<_>>>()?;
        let adj = self.adjacency(&idx);

        // Nodes that are in `given` or have a descendant in it.
        let mut ancestors = BTreeSet::new();
        let mut stack: Vec<usize> = given.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if ancestors.insert(v) {
                stack.extend(adj.parents[v].iter().copied());
            }
        }

        // (node, arrived_from_child)
        let mut visited = BTreeSet::new();
        let mut queue: VecDeque<(usize, bool)> = left.iter().map(|&v| (v, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            if !visited.insert((v, up)) {
                continue;
            }
            let observed = given.contains(&v);
            if !observed && right.contains(&v) {
                return Ok(false);
            }
            if up && !observed {
                queue.extend(adj.parents[v].iter().map(|&p| (p, true)));
                queue.extend(adj.children[v].iter().map(|&c| (c, false)));
            } else if !up {
                if !observed {
                    queue.extend(adj.children[v].iter().map(|&c| (c, false)));
                }
                if ancestors.contains(&v) {
                    queue.extend(adj.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        Ok(true)
    }

    /// Verdicts for `Y ⊥ E | C` over every subset `C` of the latent nodes
    /// `{Z_c, Z_s, Z_F}` present in the graph, ordered by subset bitmask.
    pub fn independence_profile(&self) -> Result<Vec<(IndependenceQuery, bool)>> {
        let pool: Vec<&str> =
            [INVARIANT, SPURIOUS, FAKE].into_iter().filter(|n| self.contains(n)).collect();
        (0u32..1 << pool.len())
            .map(|bits| {
                let given = pool.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, n)| *n);
                let q = IndependenceQuery::new([LABEL], [ENV], given.collect::<Vec<_>>())?;
                let verdict = self.d_separated(&q)?;
                Ok((q, verdict))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphDoc::from(self)).expect("graph documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    fn validate(&self) -> Result<()> {
        let declared: BTreeSet<&str> = self.nodes.iter().map(String::as_str).collect();
        let all_edges = self.edges.iter().chain(self.switch_groups.values().flatten());
        for (p, c) in all_edges {
            if !declared.contains(p.as_str()) || !declared.contains(c.as_str()) {
                return Err(Error::DanglingEdge(p.clone(), c.clone()));
            }
        }
        for name in &self.inactive {
            if !self.switch_groups.contains_key(name) {
                return Err(Error::UnknownGroup(name.clone()));
            }
        }
        let order = self.topological_order();
        if order.len() != self.nodes.len() {
            let stuck = self.nodes.iter().find(|n| !order.contains(n)).expect("a node is missing");
            return Err(Error::Cycle(stuck.clone()));
        }
        Ok(())
    }

    fn index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }

    fn adjacency(&self, idx: &BTreeMap<&str, usize>) -> Adjacency {
        let n = self.nodes.len();
        let mut adj = Adjacency { parents: vec![Vec::new(); n], children: vec![Vec::new(); n] };
        for (p, c) in self.active_edges() {
            let (p, c) = (idx[p.as_str()], idx[c.as_str()]);
            adj.parents[c].push(p);
            adj.children[p].push(c);
        }
        adj
    }
}

struct Adjacency {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

/// Canonical diagram for one of the three data-generation assumptions.
///
/// FIIF is oriented `Z_c -> Z_s` and the restructured model `Z_c -> Z_F`,
/// with `Z_F -> X` so the fake-invariant variable is observable.
pub fn assumption_graph(kind: AssumptionKind, fake_branch_active: bool) -> CausalGraph {
    use AssumptionKind::*;
    let piif_edges = [
        (ENV, INVARIANT),
        (INVARIANT, LABEL),
        (ENV, SPURIOUS),
        (LABEL, SPURIOUS),
        (INVARIANT, OBSERVATION),
        (SPURIOUS, OBSERVATION),
    ];
    let graph = match kind {
        Piif => CausalGraph::new([ENV, INVARIANT, LABEL, SPURIOUS, OBSERVATION], &piif_edges),
        Fiif => CausalGraph::new(
            [ENV, INVARIANT, LABEL, SPURIOUS, OBSERVATION],
            &[
                (ENV, INVARIANT),
                (INVARIANT, LABEL),
                (INVARIANT, SPURIOUS),
                (ENV, SPURIOUS),
                (INVARIANT, OBSERVATION),
                (SPURIOUS, OBSERVATION),
            ],
        ),
        RsScm => CausalGraph::new([ENV, INVARIANT, FAKE, LABEL, SPURIOUS, OBSERVATION], &piif_edges)
            .and_then(|g| {
                g.with_switch_group(
                    FAKE_GROUP,
                    &[(ENV, FAKE), (INVARIANT, FAKE), (FAKE, OBSERVATION)],
                )
            })
            .and_then(|mut g| {
                g.set_group_active(FAKE_GROUP, fake_branch_active)?;
                Ok(g)
            }),
    };
    graph.expect("assumption graphs are acyclic by construction")
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<String>,
    edges: Vec<[String; 2]>,
    #[serde(default)]
    switch_groups: BTreeMap<String, Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    inactive_groups: BTreeSet<String>,
}

impl From<&CausalGraph> for GraphDoc {
    fn from(g: &CausalGraph) -> Self {
        let pairs = |s: &BTreeSet<Edge>| s.iter().map(|(p, c)| [p.clone(), c.clone()]).collect();
        Self {
            nodes: g.nodes.clone(),
            edges: pairs(&g.edges),
            switch_groups: g.switch_groups.iter().map(|(k, v)| (k.clone(), pairs(v))).collect(),
            inactive_groups: g.inactive.clone(),
        }
    }
}

impl TryFrom<GraphDoc> for CausalGraph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let pairs =
            |v: Vec<[String; 2]>| v.into_iter().map(|[p, c]| (p, c)).collect::<BTreeSet<Edge>>();
        let mut seen = BTreeSet::new();
        let graph = CausalGraph {
            nodes: doc.nodes.into_iter().filter(|n| seen.insert(n.clone())).collect(),
            edges: pairs(doc.edges),
            switch_groups: doc.switch_groups.into_iter().map(|(k, v)| (k, pairs(v))).collect(),
            inactive: doc.inactive_groups,
        };
        graph.validate()?;
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AssumptionKind::*;

    fn yse(graph: &CausalGraph, given: &[&str]) -> bool {
        let q = IndependenceQuery::new([LABEL], [ENV], given.to_vec()).unwrap();
        graph.d_separated(&q).unwrap()
    }

    /// Enumerates every simple path in the skeleton and applies the
    /// chain/fork/collider rules directly.
    fn brute_force_separated(graph: &CausalGraph, q: &IndependenceQuery) -> bool {
        let edges = graph.active_edges();
        let nodes = graph.nodes().to_vec();
        let has = |a: &str, b: &str| edges.contains(&(a.to_string(), b.to_string()));
        let descendants = |v: &str| {
            let mut out = BTreeSet::new();
            let mut stack = vec![v.to_string()];
            while let Some(x) = stack.pop() {
                for n in &nodes {
                    if has(&x, n) && out.insert(n.clone()) {
                        stack.push(n.clone());
                    }
                }
            }
            out
        };
        let blocked = |path: &[String]| {
            path.windows(3).any(|w| {
                let (a, m, b) = (&w[0], &w[1], &w[2]);
                if has(a, m) && has(b, m) {
                    !q.given.contains(m) && descendants(m).is_disjoint(&q.given)
                } else {
                    q.given.contains(m)
                }
            })
        };
        fn walk(
            path: &mut Vec<String>,
            target: &BTreeSet<String>,
            nodes: &[String],
            adjacent: &dyn Fn(&str, &str) -> bool,
            found: &mut Vec<Vec<String>>,
        ) {
            let last = path.last().unwrap().clone();
            if target.contains(&last) && path.len() > 1 {
                found.push(path.clone());
                return;
            }
            for n in nodes {
                if !path.contains(n) && adjacent(&last, n) {
                    path.push(n.clone());
                    walk(path, target, nodes, adjacent, found);
                    path.pop();
                }
            }
        }
        let adjacent = |a: &str, b: &str| has(a, b) || has(b, a);
        let mut paths = Vec::new();
        for s in &q.left {
            walk(&mut vec![s.clone()], &q.right, &nodes, &adjacent, &mut paths);
        }
        paths.iter().all(|p| blocked(p))
    }

    #[test]
    fn piif_bullets() {
        let g = assumption_graph(Piif, false);
        assert_eq!(g.active_edges().len(), 6);
        assert!(g.switch_groups().is_empty());
        assert!(!yse(&g, &[]));
        assert!(yse(&g, &[INVARIANT]));
        assert!(!yse(&g, &[SPURIOUS]));
        assert!(!yse(&g, &[INVARIANT, SPURIOUS]));
    }

    #[test]
    fn fiif_bullets() {
        let g = assumption_graph(Fiif, false);
        assert!(!yse(&g, &[]));
        assert!(yse(&g, &[INVARIANT]));
        assert!(!yse(&g, &[SPURIOUS]));
        assert!(yse(&g, &[INVARIANT, SPURIOUS]));
    }

    #[test]
    fn rs_scm_switching() {
        let off = assumption_graph(RsScm, false);
        let on = assumption_graph(RsScm, true);
        let piif = assumption_graph(Piif, false);
        assert_eq!(off.active_edges(), piif.active_edges());
        assert_eq!(on.active_edges().len(), piif.active_edges().len() + 3);
        assert_eq!(on.nodes(), off.nodes());
        assert!(yse(&on, &[INVARIANT, FAKE]));
        assert!(!yse(&on, &[FAKE]));
    }

    #[test]
    fn rs_fake_queries_match_path_enumeration() {
        let on = assumption_graph(RsScm, true);
        for (q, verdict) in on.independence_profile().unwrap() {
            assert_eq!(verdict, brute_force_separated(&on, &q), "{q}");
        }
    }

    #[test]
    fn inactive_profile_restricts_to_piif() {
        let off = assumption_graph(RsScm, false).independence_profile().unwrap();
        let piif = assumption_graph(Piif, false).independence_profile().unwrap();
        let restricted: Vec<_> = off.into_iter().filter(|(q, _)| !q.given.contains(FAKE)).collect();
        assert_eq!(restricted, piif);
    }

    #[test]
    fn disconnected_nodes_are_separated() {
        let g = CausalGraph::new(["A", "B", "C"], &[("A", "C")]).unwrap();
        let q = IndependenceQuery::new(["A"], ["B"], Vec::<&str>::new()).unwrap();
        assert!(g.d_separated(&q).unwrap());
    }

    #[test]
    fn unknown_variables_and_overlaps_are_rejected() {
        let g = assumption_graph(Piif, false);
        let q = IndependenceQuery::new(["Y"], ["W"], Vec::<&str>::new()).unwrap();
        assert!(matches!(g.d_separated(&q), Err(Error::UnknownVariable(v)) if v == "W"));
        assert!(matches!(IndependenceQuery::new(["Y"], ["E"], ["Y"]), Err(Error::Overlap(_))));
    }

    #[test]
    fn cycles_and_dangling_edges_are_rejected() {
        assert!(matches!(CausalGraph::new(["A", "B"], &[("A", "B"), ("B", "A")]), Err(Error::Cycle(_))));
        assert!(matches!(CausalGraph::new(["A"], &[("A", "B")]), Err(Error::DanglingEdge(..))));
        let g = CausalGraph::new(["A", "B"], &[("A", "B")]).unwrap();
        assert!(matches!(g.with_switch_group("back", &[("B", "A")]), Err(Error::Cycle(_))));
    }

    #[test]
    fn json_round_trip_keeps_switch_state() {
        for active in [true, false] {
            let g = assumption_graph(RsScm, active);
            let back = CausalGraph::from_json(&g.to_json()).unwrap();
            assert_eq!(back, g);
            assert_eq!(back.is_group_active(FAKE_GROUP), active);
        }
        let doc = r#"{"nodes":["A","B"],"edges":[["A","B"]],"switch_groups":{"fake":[["B","A"]]}}"#;
        assert!(CausalGraph::from_json(doc).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_dag() -> impl Strategy<Value = CausalGraph> {
            (3usize..7).prop_flat_map(|n| {
                proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
                    let mut edges = Vec::new();
                    let mut k = 0;
                    for i in 0..n {
                        for j in i + 1..n {
                            if bits[k] {
                                edges.push((names[i].as_str(), names[j].as_str()));
                            }
                            k += 1;
                        }
                    }
                    CausalGraph::new(names.clone(), &edges).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn symmetric_and_matches_path_enumeration(g in random_dag(), mask in 0u32..1024) {
                let n = g.nodes().len();
                let (a, b) = (g.nodes()[0].clone(), g.nodes()[n - 1].clone());
                let given: Vec<String> = (1..n - 1)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| g.nodes()[i].clone())
                    .collect();
                let q = IndependenceQuery::new([a], [b], given).unwrap();
                let fwd = g.d_separated(&q).unwrap();
                prop_assert_eq!(fwd, g.d_separated(&q.swapped()).unwrap());
                prop_assert_eq!(fwd, brute_force_separated(&g, &q));
            }
        }
    }
}
