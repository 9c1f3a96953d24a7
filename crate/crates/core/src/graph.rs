//! Directed communication topologies.
//!
//! An edge `(i, j)` means agent `j` receives from agent `i`. Self-loops are
//! never stored; the protocol adds each agent's own value to its inbox.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::AgentId;

/// Largest graph on which [`Topology::is_r_robust`] runs the exhaustive check.
pub const EXHAUSTIVE_ROBUSTNESS_CAP: usize = 20;

/// Rejection-sampling budget for [`select_f_local_adversaries`].
pub const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({0}, {1}) has an endpoint outside 0..{2}")]
    EdgeOutOfRange(AgentId, AgentId, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(AgentId),
    #[error("subset must be nonempty")]
    EmptySubset,
    #[error("node {0} is not in the graph")]
    UnknownNode(AgentId),
    #[error("robustness parameter r must be positive")]
    ZeroRobustness,
    #[error(
        "exhaustive robustness check is limited to n <= {cap} (got n = {n}); \
         rely on construction-certified robustness instead"
    )]
    TooLargeForExhaustiveCheck { n: usize, cap: usize },
    #[error("an {r}-robust graph needs at least {need} nodes, got {n}")]
    Infeasible { n: usize, r: usize, need: usize },
    #[error("no {f}-local adversary set of size {count} found in {attempts} attempts")]
    Placement { f: usize, count: usize, attempts: usize },
    #[error("adversary set violates the {f}-local bound at node {node} ({seen} adversarial in-neighbors)")]
    NotFLocal { f: usize, node: AgentId, seen: usize },
    #[error("graph file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Directed graph with sorted in- and out-neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    in_nbrs: Vec<Vec<AgentId>>,
    out_nbrs: Vec<Vec<AgentId>>,
}

impl Topology {
    /// `n` isolated nodes.
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        Ok(Self {
            n,
            in_nbrs: vec![Vec::new(); n],
            out_nbrs: vec![Vec::new(); n],
        })
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (AgentId, AgentId)>,
    {
        let mut g = Self::empty(n)?;
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Expands each undirected pair into both directed edges.
    pub fn from_undirected_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (AgentId, AgentId)>,
    {
        let mut g = Self::empty(n)?;
        for (i, j) in edges {
            g.add_edge(i, j)?;
            g.add_edge(j, i)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_edges(
            n,
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
        )
    }

    /// `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn directed_cycle(n: usize) -> Result<Self> {
        if n == 1 {
            return Self::empty(1);
        }
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Undirected path `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Result<Self> {
        Self::from_undirected_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn in_neighbors(&self, j: AgentId) -> &[AgentId] {
        &self.in_nbrs[j]
    }

    pub fn out_neighbors(&self, i: AgentId) -> &[AgentId] {
        &self.out_nbrs[i]
    }

    pub fn has_edge(&self, i: AgentId, j: AgentId) -> bool {
        i < self.n && self.out_nbrs[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out_nbrs.iter().map(Vec::len).sum()
    }

    /// All edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.out_nbrs
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
    }

    pub fn max_in_degree(&self) -> usize {
        self.in_nbrs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Adds `(i, j)`; adding an existing edge is a no-op.
    pub fn add_edge(&mut self, i: AgentId, j: AgentId) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(GraphError::EdgeOutOfRange(i, j, self.n));
        }
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if let Err(pos) = self.out_nbrs[i].binary_search(&j) {
            self.out_nbrs[i].insert(pos, j);
            let pos = self.in_nbrs[j].binary_search(&i).unwrap_err();
            self.in_nbrs[j].insert(pos, i);
        }
        Ok(())
    }

    /// Removes `(i, j)` if present; returns whether it was present.
    pub fn remove_edge(&mut self, i: AgentId, j: AgentId) -> bool {
        if i >= self.n || j >= self.n {
            return false;
        }
        match self.out_nbrs[i].binary_search(&j) {
            Ok(pos) => {
                self.out_nbrs[i].remove(pos);
                let pos = self.in_nbrs[j].binary_search(&i).expect("adjacency lists out of sync");
                self.in_nbrs[j].remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    fn check_subset(&self, subset: &[AgentId]) -> Result<BTreeSet<AgentId>> {
        if subset.is_empty() {
            return Err(GraphError::EmptySubset);
        }
        let set: BTreeSet<AgentId> = subset.iter().copied().collect();
        if let Some(&bad) = set.iter().find(|&&v| v >= self.n) {
            return Err(GraphError::UnknownNode(bad));
        }
        Ok(set)
    }

    /// True iff some node of `subset` has at least `r` in-neighbors outside it.
    pub fn is_r_reachable(&self, subset: &[AgentId], r: usize) -> Result<bool> {
        if r == 0 {
            return Err(GraphError::ZeroRobustness);
        }
        let set = self.check_subset(subset)?;
        Ok(set.iter().any(|&v| {
            self.in_nbrs[v].iter().filter(|u| !set.contains(u)).count() >= r
        }))
    }

    /// Exhaustive `r`-robustness check for `n <= EXHAUSTIVE_ROBUSTNESS_CAP`.
    ///
    /// Reachability is tabulated for all `2^n` subsets, then a subset-sum
    /// transform marks every set `T` that contains a nonempty non-reachable
    /// subset. The graph is robust iff no non-reachable `S` has a non-reachable
    /// subset inside its complement. Cost is `O(n 2^n)`.
    pub fn is_r_robust(&self, r: usize) -> Result<bool> {
        if r == 0 {
            return Err(GraphError::ZeroRobustness);
        }
        let n = self.n;
        if n > EXHAUSTIVE_ROBUSTNESS_CAP {
            return Err(GraphError::TooLargeForExhaustiveCheck {
                n,
                cap: EXHAUSTIVE_ROBUSTNESS_CAP,
            });
        }
        if n == 1 {
            return Ok(true);
        }
        let in_mask: Vec<u32> = self
            .in_nbrs
            .iter()
            .map(|nb| nb.iter().fold(0u32, |m, &u| m | (1 << u)))
            .collect();
        let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        let size = 1usize << n;
        // has_bad[T]: T contains a nonempty subset that is not r-reachable.
        let mut has_bad = vec![false; size];
        for s in 1..size {
            let set = s as u32;
            let mut members = set;
            let mut reachable = false;
            while members != 0 {
                let v = members.trailing_zeros() as usize;
                members &= members - 1;
                if (in_mask[v] & !set).count_ones() as usize >= r {
                    reachable = true;
                    break;
                }
            }
            has_bad[s] = !reachable;
        }
        let bad = has_bad.clone();
        for bit in 0..n {
            let b = 1usize << bit;
            for t in 0..size {
                if t & b != 0 && has_bad[t ^ b] {
                    has_bad[t] = true;
                }
            }
        }
        Ok((1..size).all(|s| !bad[s] || !has_bad[(full ^ s as u32) as usize]))
    }

    /// True iff some node reaches every other node along directed edges.
    pub fn is_rooted(&self) -> bool {
        (0..self.n).any(|root| self.reach_count(root) == self.n)
    }

    fn reach_count(&self, root: AgentId) -> usize {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.out_nbrs[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    /// Text edge list: a header `n <count>` then one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses [`Topology::to_edge_list`] output. Blank lines and `#` comments are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line, message: &str| GraphError::Parse {
            line,
            message: message.to_string(),
        };
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing `n <count>` header"))?;
        let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["n", count] => count
                .parse::<usize>()
                .map_err(|_| parse_err(hline, "node count is not an integer"))?,
            _ => return Err(parse_err(hline, "expected `n <count>` header")),
        };
        let mut g = Self::empty(n)?;
        for (line, l) in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(parse_err(line, "expected `i j`"));
            }
            let i = parts[0].parse().map_err(|_| parse_err(line, "bad source id"))?;
            let j = parts[1].parse().map_err(|_| parse_err(line, "bad target id"))?;
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

/// Grows an `r`-robust graph from the complete graph on `2r - 1` nodes.
///
/// Each later node is attached bidirectionally to `2r - 1` distinct existing
/// nodes chosen uniformly at random. Deterministic for a fixed seed.
pub fn generate_robust_graph(n: usize, r: usize, seed: u64) -> Result<Topology> {
    generate_robust_graph_with_degree(n, r, 0, seed)
}

/// As [`generate_robust_graph`], attaching each new node to
/// `max(2r - 1, degree)` existing nodes (capped by how many exist).
pub fn generate_robust_graph_with_degree(
    n: usize,
    r: usize,
    degree: usize,
    seed: u64,
) -> Result<Topology> {
    if r == 0 {
        return Err(GraphError::ZeroRobustness);
    }
    let base = 2 * r - 1;
    if n < base {
        return Err(GraphError::Infeasible { n, r, need: base });
    }
    let mut g = Topology::empty(n)?;
    for i in 0..base {
        for j in 0..base {
            if i != j {
                g.add_edge(i, j)?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attach = base.max(degree);
    for v in base..n {
        for u in sample(&mut rng, v, attach.min(v)).into_iter() {
            g.add_edge(u, v)?;
            g.add_edge(v, u)?;
        }
    }
    Ok(g)
}

/// Byzantine agent ids together with the local bound `F` they respect.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdversarySet {
    members: BTreeSet<AgentId>,
    f_bound: usize,
}

impl AdversarySet {
    pub fn none(f_bound: usize) -> Self {
        Self {
            members: BTreeSet::new(),
            f_bound,
        }
    }

    /// Validates the `F`-local property against `topology`.
    pub fn new(topology: &Topology, members: impl IntoIterator<Item = AgentId>, f_bound: usize) -> Result<Self> {
        let members: BTreeSet<AgentId> = members.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&v| v >= topology.n()) {
            return Err(GraphError::UnknownNode(bad));
        }
        if let Some((node, seen)) = f_local_violation(topology, &members, f_bound) {
            return Err(GraphError::NotFLocal { f: f_bound, node, seen });
        }
        Ok(Self { members, f_bound })
    }

    pub fn members(&self) -> &BTreeSet<AgentId> {
        &self.members
    }

    pub fn f_bound(&self) -> usize {
        self.f_bound
    }

    pub fn contains(&self, v: AgentId) -> bool {
        self.members.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Regular agents of `topology`, ascending.
    pub fn regular_agents(&self, topology: &Topology) -> Vec<AgentId> {
        (0..topology.n()).filter(|v| !self.contains(*v)).collect()
    }
}

/// First regular node with more than `f` adversarial in-neighbors, if any.
fn f_local_violation(topology: &Topology, members: &BTreeSet<AgentId>, f: usize) -> Option<(AgentId, usize)> {
    (0..topology.n())
        .filter(|v| !members.contains(v))
        .map(|v| (v, topology.in_neighbors(v).iter().filter(|u| members.contains(u)).count()))
        .find(|&(_, seen)| seen > f)
}

pub fn is_f_local(topology: &Topology, members: &[AgentId], f: usize) -> bool {
    f_local_violation(topology, &members.iter().copied().collect(), f).is_none()
}

/// Draws `count` agents uniformly until the set is `f`-local.
pub fn select_f_local_adversaries(topology: &Topology, f: usize, count: usize, seed: u64) -> Result<AdversarySet> {
    let n = topology.n();
    let fail = GraphError::Placement {
        f,
        count,
        attempts: PLACEMENT_ATTEMPTS,
    };
    if count > n {
        return Err(fail);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let members: BTreeSet<AgentId> = sample(&mut rng, n, count).into_iter().collect();
        if f_local_violation(topology, &members, f).is_none() {
            return Ok(AdversarySet { members, f_bound: f });
        }
    }
    Err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reachable_examples() {
        let k4 = Topology::complete(4).unwrap();
        assert!(k4.is_r_reachable(&[0], 3).unwrap());
        assert!(!k4.is_r_reachable(&[0, 1, 2, 3], 1).unwrap());
        let c4 = Topology::directed_cycle(4).unwrap();
        assert!(!c4.is_r_reachable(&[0, 1], 2).unwrap());
        assert!(c4.is_r_reachable(&[0, 1], 1).unwrap());
        assert!(matches!(k4.is_r_reachable(&[], 1), Err(GraphError::EmptySubset)));
        assert!(matches!(k4.is_r_reachable(&[7], 1), Err(GraphError::UnknownNode(7))));
    }

    #[test]
    fn robust_examples() {
        let single = Topology::empty(1).unwrap();
        for r in 1..5 {
            assert!(single.is_r_robust(r).unwrap());
        }
        let k8 = Topology::complete(8).unwrap();
        assert!(k8.is_r_robust(4).unwrap());
        assert!(!k8.is_r_robust(5).unwrap());
        let p3 = Topology::path(3).unwrap();
        assert!(p3.is_r_robust(1).unwrap());
        assert!(!p3.is_r_robust(2).unwrap());
        let big = Topology::empty(21).unwrap();
        assert!(matches!(
            big.is_r_robust(1),
            Err(GraphError::TooLargeForExhaustiveCheck { n: 21, .. })
        ));
    }

    #[test]
    fn generator_shape() {
        let g = generate_robust_graph(25, 11, 7).unwrap();
        assert_eq!(g.n(), 25);
        for i in 0..21 {
            for j in 0..21 {
                assert_eq!(g.has_edge(i, j), i != j);
            }
        }
        for v in 21..25 {
            assert!(g.in_neighbors(v).len() >= 21);
            assert!(g.out_neighbors(v).len() >= 21);
        }
        assert_eq!(g, generate_robust_graph(25, 11, 7).unwrap());

        assert_eq!(generate_robust_graph(5, 3, 0).unwrap(), Topology::complete(5).unwrap());
        assert!(generate_robust_graph(7, 2, 1).unwrap().is_r_robust(2).unwrap());
        assert!(matches!(
            generate_robust_graph(4, 3, 0),
            Err(GraphError::Infeasible { need: 5, .. })
        ));
    }

    #[test]
    fn adversary_placement() {
        let k8 = Topology::complete(8).unwrap();
        for seed in 0..5 {
            let a = select_f_local_adversaries(&k8, 2, 2, seed).unwrap();
            assert_eq!(a.len(), 2);
        }
        assert!(select_f_local_adversaries(&k8, 2, 0, 3).unwrap().is_empty());
        assert!(select_f_local_adversaries(&k8, 1, 2, 3).is_err());

        // center 0 receives from leaves 1..=3
        let star = Topology::from_edges(4, [(1, 0), (2, 0), (3, 0)]).unwrap();
        assert!(!is_f_local(&star, &[1, 2], 1));
        assert!(matches!(
            AdversarySet::new(&star, [1, 2], 1),
            Err(GraphError::NotFLocal { node: 0, seen: 2, .. })
        ));
        assert!(AdversarySet::new(&star, [1], 1).is_ok());
    }

    #[test]
    fn rootedness() {
        assert!(Topology::directed_cycle(5).unwrap().is_rooted());
        assert!(!Topology::empty(2).unwrap().is_rooted());
        assert!(Topology::from_edges(3, [(0, 1), (0, 2)]).unwrap().is_rooted());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate_robust_graph(9, 2, 4).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("n 9\n"));
        assert_eq!(Topology::parse_edge_list(&text).unwrap(), g);
        assert!(matches!(
            Topology::parse_edge_list("n 2\n0 0\n"),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            Topology::parse_edge_list("nodes 2\n"),
            Err(GraphError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn edge_edits_keep_lists_consistent() {
        let mut g = Topology::complete(4).unwrap();
        assert!(g.remove_edge(1, 2));
        assert!(!g.remove_edge(1, 2));
        assert!(!g.in_neighbors(2).contains(&1));
        assert!(!g.out_neighbors(1).contains(&2));
        assert_eq!(g.edge_count(), 11);
    }
}
