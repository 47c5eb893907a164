//! Commutation graphs and the coloring machinery built on them.
//!
//! Vertices are observables; edges join pairs that anticommute. Independent
//! sets are exactly the jointly measurable subsets, so colorings (and their
//! fractional relaxations) translate directly into measurement schedules.

pub mod clique;
pub mod commutation_index;
pub mod kbody;
pub mod misra_gries;
pub mod nfs;

use crate::error::{Error, Result};
use crate::fermion::{supports_commute, MajoranaMonomial};
use crate::pauli::PauliOp;
use std::collections::HashSet;

/// Bit-packed undirected adjacency.
#[derive(Clone, Debug)]
pub struct AdjBits {
    n: usize,
    stride: usize,
    rows: Vec<u64>,
}

impl AdjBits {
    pub fn new(n: usize) -> Self {
        let stride = n.div_ceil(64).max(1);
        AdjBits {
            n,
            stride,
            rows: vec![0; stride * n],
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn set_edge(&mut self, i: usize, j: usize) {
        assert!(i != j && i < self.n && j < self.n);
        self.rows[i * self.stride + j / 64] |= 1 << (j % 64);
        self.rows[j * self.stride + i / 64] |= 1 << (i % 64);
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.stride + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.stride..(i + 1) * self.stride]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn num_edges(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.degree(i));
        for (w, &word) in self.row(i).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out.push(w * 64 + bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in self.neighbors(i) {
                if j > i {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Subgraph induced by `ids`; vertex `k` of the result is `ids[k]`.
    pub fn induced(&self, ids: &[usize]) -> AdjBits {
        let mut sub = AdjBits::new(ids.len());
        for (a, &i) in ids.iter().enumerate() {
            for (b, &j) in ids.iter().enumerate().skip(a + 1) {
                if self.adjacent(i, j) {
                    sub.set_edge(a, b);
                }
            }
        }
        sub
    }

    /// Connected components, each sorted ascending, ordered by smallest
    /// member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut queue = vec![start];
            while let Some(v) = queue.pop() {
                for w in self.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// The observables labelling the vertices of a commutation graph.
#[derive(Clone, Debug)]
pub enum OperatorSet {
    Paulis { n: usize, ops: Vec<PauliOp> },
    Monomials { n_modes: usize, supports: Vec<u128> },
}

impl OperatorSet {
    pub fn from_paulis(ops: Vec<PauliOp>) -> Result<Self> {
        let n = ops
            .first()
            .ok_or_else(|| Error::invalid("empty operator set"))?
            .num_qubits();
        let mut seen = HashSet::new();
        for op in &ops {
            if op.num_qubits() != n {
                return Err(Error::DimensionMismatch(
                    "mixed qubit counts in operator set".into(),
                ));
            }
            if !seen.insert((op.x_bits(), op.z_bits())) {
                return Err(Error::invalid(format!("duplicate operator {}", op.abs())));
            }
        }
        Ok(OperatorSet::Paulis { n, ops })
    }

    pub fn from_monomials(n_modes: usize, monomials: &[MajoranaMonomial]) -> Result<Self> {
        let supports: Vec<u128> = monomials.iter().map(|m| m.support).collect();
        Self::from_supports(n_modes, supports)
    }

    pub fn from_supports(n_modes: usize, supports: Vec<u128>) -> Result<Self> {
        if supports.is_empty() {
            return Err(Error::invalid("empty operator set"));
        }
        let mut seen = HashSet::new();
        for &s in &supports {
            if 2 * n_modes < 128 && s >> (2 * n_modes) != 0 {
                return Err(Error::invalid(
                    "monomial support outside the declared mode count",
                ));
            }
            if !seen.insert(s) {
                return Err(Error::invalid("duplicate monomial support"));
            }
        }
        Ok(OperatorSet::Monomials { n_modes, supports })
    }

    pub fn len(&self) -> usize {
        match self {
            OperatorSet::Paulis { ops, .. } => ops.len(),
            OperatorSet::Monomials { supports, .. } => supports.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn commutes(&self, i: usize, j: usize) -> bool {
        match self {
            OperatorSet::Paulis { ops, .. } => ops[i].commutes(&ops[j]),
            OperatorSet::Monomials { supports, .. } => supports_commute(supports[i], supports[j]),
        }
    }

    pub fn label(&self, i: usize) -> String {
        match self {
            OperatorSet::Paulis { ops, .. } => ops[i].to_string(),
            OperatorSet::Monomials { n_modes, supports } => {
                MajoranaMonomial::new(*n_modes, supports[i], 1.0)
                    .map(|m| m.to_string())
                    .unwrap_or_else(|_| format!("{:#x}", supports[i]))
            }
        }
    }
}

/// Anticommutation structure of an operator set.
#[derive(Clone, Debug)]
pub struct CommutationGraph {
    set: OperatorSet,
    adj: AdjBits,
}

impl CommutationGraph {
    pub fn build(set: OperatorSet) -> Result<Self> {
        let m = set.len();
        let mut adj = AdjBits::new(m);
        for i in 0..m {
            for j in i + 1..m {
                if !set.commutes(i, j) {
                    adj.set_edge(i, j);
                }
            }
        }
        Ok(CommutationGraph { set, adj })
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.n
    }

    pub fn num_edges(&self) -> usize {
        self.adj.num_edges()
    }

    pub fn adjacency(&self) -> &AdjBits {
        &self.adj
    }

    pub fn set(&self) -> &OperatorSet {
        &self.set
    }
}

/// A proper vertex coloring; colors are `0..num_colors`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<u32>,
    pub num_colors: u32,
}

impl Coloring {
    pub fn new(colors: Vec<u32>) -> Self {
        let num_colors = colors.iter().max().map_or(0, |&c| c + 1);
        Coloring { colors, num_colors }
    }

    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_colors as usize];
        for (v, &c) in self.colors.iter().enumerate() {
            out[c as usize].push(v);
        }
        out
    }

    pub fn is_proper(&self, adj: &AdjBits) -> bool {
        if self.colors.len() != adj.num_vertices() {
            return false;
        }
        for (i, j) in adj.edges() {
            if self.colors[i] == self.colors[j] {
                return false;
            }
        }
        true
    }
}

/// First-fit coloring in ascending vertex order.
pub fn greedy_color(adj: &AdjBits) -> Coloring {
    let n = adj.num_vertices();
    let mut colors = vec![u32::MAX; n];
    for v in 0..n {
        let mut used: Vec<bool> = vec![false; n + 1];
        for w in adj.neighbors(v) {
            if w < v {
                used[colors[w] as usize] = true;
            }
        }
        colors[v] = used.iter().position(|&u| !u).unwrap() as u32;
    }
    let coloring = Coloring::new(colors);
    debug_assert!(coloring.is_proper(adj));
    coloring
}

/// Longest induced path that any commutation graph over `n`-qubit Pauli
/// observables can contain, measured in vertices.
pub fn pauli_path_bound(n: usize) -> usize {
    2 * n + 1
}

#[cfg(test)]
pub(crate) fn random_adj(n: usize, p: f64, stream: &mut crate::rng::Stream) -> AdjBits {
    use rand::Rng;
    let mut adj = AdjBits::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if stream.gen::<f64>() < p {
                adj.set_edge(i, j);
            }
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn adjacency_basics() {
        let mut adj = AdjBits::new(70);
        adj.set_edge(0, 69);
        adj.set_edge(64, 65);
        assert!(adj.adjacent(69, 0));
        assert!(!adj.adjacent(1, 2));
        assert_eq!(adj.num_edges(), 2);
        assert_eq!(adj.neighbors(0), vec![69]);
        assert_eq!(adj.degree(64), 1);
        assert_eq!(adj.edges(), vec![(0, 69), (64, 65)]);
    }

    #[test]
    fn components_and_induced() {
        let mut adj = AdjBits::new(6);
        adj.set_edge(0, 2);
        adj.set_edge(2, 4);
        adj.set_edge(1, 3);
        let comps = adj.components();
        assert_eq!(comps, vec![vec![0, 2, 4], vec![1, 3], vec![5]]);
        let sub = adj.induced(&[0, 2, 4]);
        assert!(sub.adjacent(0, 1) && sub.adjacent(1, 2) && !sub.adjacent(0, 2));
    }

    #[test]
    fn graph_edges_are_anticommuting_pairs() {
        let ops = vec![
            PauliOp::parse("XX").unwrap(),
            PauliOp::parse("ZZ").unwrap(),
            PauliOp::parse("XI").unwrap(),
            PauliOp::parse("ZI").unwrap(),
        ];
        let g = CommutationGraph::build(OperatorSet::from_paulis(ops).unwrap()).unwrap();
        assert!(!g.adjacency().adjacent(0, 1)); // XX and ZZ commute
        assert!(g.adjacency().adjacent(2, 3)); // XI and ZI do not
        assert!(g.adjacency().adjacent(1, 2));
        assert_eq!(g.set().label(0), "XX");
    }

    #[test]
    fn duplicate_operators_are_rejected() {
        let dup = vec![
            PauliOp::parse("XY").unwrap(),
            PauliOp::parse("-XY").unwrap(),
        ];
        assert!(OperatorSet::from_paulis(dup).is_err());
        assert!(OperatorSet::from_supports(2, vec![0b11, 0b11]).is_err());
        assert!(OperatorSet::from_supports(1, vec![0b100]).is_err());
    }

    #[test]
    fn greedy_coloring_is_proper() {
        let mut stream = Streams::new(3).stream("greedy");
        for trial in 0..50 {
            let adj = random_adj(12, 0.4, &mut stream);
            let c = greedy_color(&adj);
            assert!(c.is_proper(&adj), "trial {trial}");
            let max_deg = (0..12).map(|v| adj.degree(v)).max().unwrap();
            assert!(c.num_colors as usize <= max_deg + 1);
        }
    }

    #[test]
    fn coloring_classes_partition_vertices() {
        let c = Coloring::new(vec![0, 1, 0, 2]);
        assert_eq!(c.num_colors, 3);
        assert_eq!(c.classes(), vec![vec![0, 2], vec![1], vec![3]]);
    }
}
