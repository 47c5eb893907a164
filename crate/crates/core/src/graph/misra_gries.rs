//! Edge coloring with at most `max_degree + 1` colors, and the one-body
//! observable coloring built on it.
//!
//! Quadratic monomials are edges of an auxiliary graph on the Majorana
//! indices; two of them anticommute exactly when the edges share an
//! endpoint, so a proper edge coloring of the auxiliary graph is a proper
//! vertex coloring of the commutation graph. Every choice point is broken
//! deterministically: the fan apex is the endpoint with fewer colored
//! incident edges (lower id on ties), fans grow along the smallest usable
//! color, and free colors are always the lowest-numbered ones.

use super::Coloring;
use crate::error::{Error, Result};

/// Proper edge coloring; `colors[e]` is the color of input edge `e`.
#[derive(Clone, Debug)]
pub struct EdgeColoring {
    pub colors: Vec<usize>,
    pub num_colors: usize,
}

struct Colorer {
    edges: Vec<(usize, usize)>,
    edge_color: Vec<Option<usize>>,
    /// `used[v][c]` = edge currently giving vertex `v` color `c`.
    used: Vec<Vec<Option<usize>>>,
    incident: Vec<Vec<usize>>,
}

impl Colorer {
    fn other(&self, e: usize, v: usize) -> usize {
        let (a, b) = self.edges[e];
        if a == v {
            b
        } else {
            a
        }
    }

    fn free(&self, v: usize) -> usize {
        self.used[v].iter().position(|s| s.is_none()).unwrap()
    }

    fn is_free(&self, v: usize, c: usize) -> bool {
        self.used[v][c].is_none()
    }

    fn colored_degree(&self, v: usize) -> usize {
        self.used[v].iter().filter(|s| s.is_some()).count()
    }

    fn set(&mut self, e: usize, c: usize) {
        let (a, b) = self.edges[e];
        debug_assert!(self.is_free(a, c) && self.is_free(b, c));
        self.edge_color[e] = Some(c);
        self.used[a][c] = Some(e);
        self.used[b][c] = Some(e);
    }

    fn unset(&mut self, e: usize) {
        let c = self.edge_color[e].take().unwrap();
        let (a, b) = self.edges[e];
        self.used[a][c] = None;
        self.used[b][c] = None;
    }

    /// Maximal fan of `x` starting at `y`: each next edge's color must be
    /// free on the previous fan vertex; among valid extensions the smallest
    /// color wins.
    fn fan(&self, x: usize, y: usize) -> (Vec<usize>, Vec<usize>) {
        let mut verts = vec![y];
        let mut fan_edges = vec![usize::MAX]; // slot 0 is the uncolored edge
        loop {
            let last = *verts.last().unwrap();
            let mut best: Option<(usize, usize, usize)> = None;
            for &e in &self.incident[x] {
                if let Some(c) = self.edge_color[e] {
                    let w = self.other(e, x);
                    if !verts.contains(&w) && self.is_free(last, c) {
                        if best.map_or(true, |(bc, _, _)| c < bc) {
                            best = Some((c, w, e));
                        }
                    }
                }
            }
            match best {
                Some((_, w, e)) => {
                    verts.push(w);
                    fan_edges.push(e);
                }
                None => return (verts, fan_edges),
            }
        }
    }

    /// Swap colors `c` and `d` along the maximal cd-path starting at `x`
    /// (which has no `c`-edge).
    fn invert_path(&mut self, x: usize, c: usize, d: usize) {
        let mut path = Vec::new();
        let mut cur = x;
        let mut want = d;
        while let Some(e) = self.used[cur][want] {
            path.push((e, want));
            cur = self.other(e, cur);
            want = if want == d { c } else { d };
        }
        for &(e, _) in &path {
            self.unset(e);
        }
        for &(e, was) in &path {
            let now = if was == d { c } else { d };
            self.set(e, now);
        }
    }

    fn color_edge(&mut self, e: usize) {
        let (u, v) = self.edges[e];
        let (x, y) = if (self.colored_degree(v), v) < (self.colored_degree(u), u) {
            (v, u)
        } else {
            (u, v)
        };
        let (mut verts, mut fan_edges) = self.fan(x, y);
        let c = self.free(x);
        let d = self.free(*verts.last().unwrap());
        if c != d {
            self.invert_path(x, c, d);
        }
        debug_assert!(self.is_free(x, d));
        // The inversion may have recolored fan edges; keep the longest
        // prefix that is still a fan.
        let mut keep = 1;
        while keep < verts.len() {
            let col = self.edge_color[fan_edges[keep]].unwrap();
            if !self.is_free(verts[keep - 1], col) {
                break;
            }
            keep += 1;
        }
        verts.truncate(keep);
        fan_edges.truncate(keep);
        let w = (0..verts.len())
            .find(|&i| self.is_free(verts[i], d))
            .expect("some fan prefix accepts the free color");
        // Rotate: each fan edge takes its successor's color, freeing the
        // last edge for d.
        for i in 0..w {
            let col = self.edge_color[fan_edges[i + 1]].unwrap();
            self.unset(fan_edges[i + 1]);
            let slot = if i == 0 { e } else { fan_edges[i] };
            self.set(slot, col);
        }
        let slot = if w == 0 { e } else { fan_edges[w] };
        self.set(slot, d);
    }
}

/// Color the edges of a simple graph with at most `max_degree + 1` colors,
/// processing edges in input order.
pub fn color_edges(num_vertices: usize, edges: &[(usize, usize)]) -> Result<EdgeColoring> {
    let mut degree = vec![0usize; num_vertices];
    for (idx, &(a, b)) in edges.iter().enumerate() {
        if a >= num_vertices || b >= num_vertices {
            return Err(Error::invalid(format!("edge {idx} endpoint out of range")));
        }
        if a == b {
            return Err(Error::invalid(format!("edge {idx} is a self-loop")));
        }
        degree[a] += 1;
        degree[b] += 1;
    }
    {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in edges {
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid("duplicate edge"));
            }
        }
    }
    let palette = degree.iter().copied().max().unwrap_or(0) + 1;
    let mut incident = vec![Vec::new(); num_vertices];
    for (idx, &(a, b)) in edges.iter().enumerate() {
        incident[a].push(idx);
        incident[b].push(idx);
    }
    let mut colorer = Colorer {
        edges: edges.to_vec(),
        edge_color: vec![None; edges.len()],
        used: vec![vec![None; palette]; num_vertices],
        incident,
    };
    for e in 0..edges.len() {
        colorer.color_edge(e);
        debug_assert!(colorer.edge_color[e].is_some());
    }
    let colors: Vec<usize> = colorer.edge_color.iter().map(|c| c.unwrap()).collect();
    let num_colors = colors.iter().copied().max().map_or(0, |c| c + 1);
    debug_assert!(num_colors <= palette);
    Ok(EdgeColoring { colors, num_colors })
}

/// Color a set of quadratic Majorana monomials so every class commutes.
/// Uses at most one more color than the largest anticommuting clique.
pub fn misra_gries_one_body(n_modes: usize, supports: &[u128]) -> Result<Coloring> {
    let mut edges = Vec::with_capacity(supports.len());
    for &s in supports {
        if s.count_ones() != 2 {
            return Err(Error::invalid(format!(
                "support {s:#x} is not a quadratic monomial"
            )));
        }
        let a = s.trailing_zeros() as usize;
        let b = (127 - s.leading_zeros()) as usize;
        if b >= 2 * n_modes {
            return Err(Error::invalid(
                "monomial support outside the declared mode count",
            ));
        }
        edges.push((a, b));
    }
    let edge_coloring = color_edges(2 * n_modes, &edges)?;
    Ok(Coloring {
        colors: edge_coloring.colors.iter().map(|&c| c as u32).collect(),
        num_colors: edge_coloring.num_colors as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermion::enumerate_even;
    use crate::graph::{CommutationGraph, OperatorSet};
    use crate::rng::Streams;
    use rand::Rng;

    fn assert_proper(num_vertices: usize, edges: &[(usize, usize)], coloring: &EdgeColoring) {
        let mut at: Vec<Vec<usize>> = vec![Vec::new(); num_vertices];
        for (e, &(a, b)) in edges.iter().enumerate() {
            at[a].push(coloring.colors[e]);
            at[b].push(coloring.colors[e]);
        }
        for v in 0..num_vertices {
            let mut cs = at[v].clone();
            cs.sort_unstable();
            cs.dedup();
            assert_eq!(cs.len(), at[v].len(), "vertex {v} sees a repeated color");
        }
    }

    #[test]
    fn path_uses_two_colors() {
        let edges = [(0, 1), (1, 2), (2, 3)];
        let coloring = color_edges(4, &edges).unwrap();
        assert_proper(4, &edges, &coloring);
        assert_eq!(coloring.num_colors, 2);
    }

    #[test]
    fn disjoint_edges_share_one_color() {
        let supports = [0b000011u128, 0b001100, 0b110000];
        let c = misra_gries_one_body(3, &supports).unwrap();
        assert_eq!(c.num_colors, 1);
    }

    #[test]
    fn one_body_path_example() {
        // Chain c1c2, c2c3, c3c4: two colors suffice and are found.
        let supports = [0b0011u128, 0b0110, 0b1100];
        let c = misra_gries_one_body(2, &supports).unwrap();
        assert_eq!(c.num_colors, 2);
        assert_eq!(c.colors, vec![0, 1, 0]);
    }

    #[test]
    fn triangle_needs_three() {
        let edges = [(0, 1), (0, 2), (1, 2)];
        let coloring = color_edges(3, &edges).unwrap();
        assert_proper(3, &edges, &coloring);
        assert_eq!(coloring.num_colors, 3);
    }

    #[test]
    fn star_stays_at_max_degree() {
        let edges: Vec<(usize, usize)> = (1..=6).map(|i| (0, i)).collect();
        let coloring = color_edges(7, &edges).unwrap();
        assert_proper(7, &edges, &coloring);
        assert_eq!(coloring.num_colors, 6);
    }

    #[test]
    fn random_graphs_stay_within_vizing_bound() {
        let mut stream = Streams::new(53).stream("mg");
        for trial in 0..200 {
            let n = 4 + (trial % 7);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if stream.gen::<f64>() < 0.45 {
                        edges.push((a, b));
                    }
                }
            }
            let coloring = color_edges(n, &edges).unwrap();
            assert_proper(n, &edges, &coloring);
            let mut degree = vec![0usize; n];
            for &(a, b) in &edges {
                degree[a] += 1;
                degree[b] += 1;
            }
            let max_degree = degree.iter().copied().max().unwrap_or(0);
            assert!(
                coloring.num_colors <= max_degree + 1,
                "trial {trial}: {} colors, max degree {max_degree}",
                coloring.num_colors
            );
        }
    }

    #[test]
    fn full_one_body_set_colors_like_a_clique_partition() {
        // All quadratic monomials on 2n = 8 indices: the auxiliary graph is
        // K8. The largest anticommuting clique is a 7-edge star, so the
        // coloring may use at most 8 colors.
        let supports: Vec<u128> = enumerate_even(4, 1)
            .unwrap()
            .into_iter()
            .map(|m| m.support)
            .collect();
        let coloring = misra_gries_one_body(4, &supports).unwrap();
        let g = CommutationGraph::build(OperatorSet::from_supports(4, supports).unwrap()).unwrap();
        assert!(coloring.is_proper(g.adjacency()));
        assert!(coloring.num_colors <= 8);
    }

    #[test]
    fn coloring_respects_commutation_graph_on_random_subsets() {
        let all: Vec<u128> = enumerate_even(4, 1)
            .unwrap()
            .into_iter()
            .map(|m| m.support)
            .collect();
        let mut stream = Streams::new(59).stream("sub");
        for _ in 0..50 {
            let subset: Vec<u128> = all
                .iter()
                .copied()
                .filter(|_| stream.gen::<f64>() < 0.5)
                .collect();
            if subset.is_empty() {
                continue;
            }
            let coloring = misra_gries_one_body(4, &subset).unwrap();
            let g =
                CommutationGraph::build(OperatorSet::from_supports(4, subset).unwrap()).unwrap();
            assert!(coloring.is_proper(g.adjacency()));
            let omega = crate::graph::clique::max_clique(g.adjacency()).lower();
            assert!(coloring.num_colors as usize <= omega + 1);
        }
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(color_edges(3, &[(0, 0)]).is_err());
        assert!(color_edges(3, &[(0, 4)]).is_err());
        assert!(color_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(misra_gries_one_body(2, &[0b0111]).is_err());
        assert!(misra_gries_one_body(1, &[0b0110]).is_err());
    }
}
