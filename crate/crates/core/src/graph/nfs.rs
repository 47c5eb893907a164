//! Neighbour-first search and the level-decomposition coloring built on it.
//!
//! NFS differs from BFS in one way: when a vertex is processed, all of its
//! still-unvisited neighbours become its children at once, and the search
//! then recurses into those children in ascending order. Root-to-node paths
//! in the resulting tree are induced paths of the graph, which caps the
//! depth, and every clique inside one level hangs off a common parent, which
//! drops the level's clique number by one. Recursing on levels therefore
//! colors any graph with `path_bound^(omega - 1)` colors.

use super::{AdjBits, Coloring};
use crate::error::{Error, Result};

/// Spanning tree produced by neighbour-first search.
#[derive(Clone, Debug)]
pub struct NfsTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
    /// Vertices in processing order.
    pub order: Vec<usize>,
}

impl NfsTree {
    /// Vertices grouped by depth, ascending; each level sorted ascending.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let max = self.depth.iter().copied().max().unwrap_or(0);
        let mut out = vec![Vec::new(); max + 1];
        for (v, &d) in self.depth.iter().enumerate() {
            out[d].push(v);
        }
        out
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }
}

/// Neighbour-first search from `root`. The graph must be connected.
pub fn nfs_tree(adj: &AdjBits, root: usize) -> Result<NfsTree> {
    let n = adj.num_vertices();
    if root >= n {
        return Err(Error::invalid(format!("root {root} out of range")));
    }
    let mut parent = vec![None; n];
    let mut depth = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    visited[root] = true;
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        // Claim every unvisited neighbour now; later vertices cannot have
        // them as children.
        let children: Vec<usize> = adj
            .neighbors(v)
            .into_iter()
            .filter(|&w| !visited[w])
            .collect();
        for &w in &children {
            visited[w] = true;
            parent[w] = Some(v);
            depth[w] = depth[v] + 1;
        }
        // LIFO: push in reverse so children are processed ascending, each
        // with its whole subtree, before its next sibling.
        for &w in children.iter().rev() {
            stack.push(w);
        }
    }
    if order.len() != n {
        return Err(Error::Disconnected(format!(
            "search from {root} reached {} of {n} vertices",
            order.len()
        )));
    }
    Ok(NfsTree {
        root,
        parent,
        depth,
        order,
    })
}

/// Color a graph by recursive NFS level decomposition. Components are
/// colored independently and share one palette.
pub fn gyarfas_color(adj: &AdjBits) -> Coloring {
    let n = adj.num_vertices();
    let mut colors = vec![0u32; n];
    let mut palette = 0u32;
    for comp in adj.components() {
        let used = color_component(adj, &comp, &mut colors);
        palette = palette.max(used);
    }
    let coloring = Coloring {
        colors,
        num_colors: palette.max(if n > 0 { 1 } else { 0 }),
    };
    debug_assert!(coloring.is_proper(adj));
    coloring
}

fn color_component(adj: &AdjBits, comp: &[usize], colors: &mut [u32]) -> u32 {
    if comp.len() == 1 {
        colors[comp[0]] = 0;
        return 1;
    }
    let sub = adj.induced(comp);
    // Root at the component's lowest vertex id (local index 0).
    let tree = nfs_tree(&sub, 0).expect("component is connected");
    let mut offset = 0u32;
    for level in tree.levels() {
        let ids: Vec<usize> = level.iter().map(|&k| comp[k]).collect();
        // Fresh local palette for the level, shared by its components.
        let level_adj = adj.induced(&ids);
        let mut used = 0u32;
        for inner in level_adj.components() {
            let global: Vec<usize> = inner.iter().map(|&k| ids[k]).collect();
            used = used.max(color_component(adj, &global, colors));
        }
        // Slide the level into its disjoint color window.
        for &g in &ids {
            colors[g] += offset;
        }
        offset += used;
    }
    offset
}

/// Exact longest induced path, in vertices. Exponential; refuses graphs
/// with more than 24 vertices.
pub fn longest_induced_path(adj: &AdjBits) -> Result<usize> {
    let n = adj.num_vertices();
    if n == 0 {
        return Ok(0);
    }
    if n > 24 {
        return Err(Error::Unsupported(format!(
            "induced path search on {n} > 24 vertices"
        )));
    }
    let rows: Vec<u32> = (0..n)
        .map(|i| {
            let mut m = 0u32;
            for j in adj.neighbors(i) {
                m |= 1 << j;
            }
            m
        })
        .collect();
    let mut best = 1usize;
    fn dfs(rows: &[u32], last: usize, used: u32, forbid: u32, len: usize, best: &mut usize) {
        *best = (*best).max(len);
        let mut cands = rows[last] & !forbid & !used;
        while cands != 0 {
            let w = cands.trailing_zeros() as usize;
            cands &= cands - 1;
            dfs(rows, w, used | 1 << w, forbid | rows[last], len + 1, best);
        }
    }
    for start in 0..n {
        dfs(&rows, start, 1 << start, 0, 1, &mut best);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::clique::max_clique;
    use crate::graph::{random_adj, CommutationGraph, OperatorSet};
    use crate::pauli::enumerate_all;
    use crate::rng::Streams;

    fn cycle(n: usize) -> AdjBits {
        let mut adj = AdjBits::new(n);
        for i in 0..n {
            adj.set_edge(i, (i + 1) % n);
        }
        adj
    }

    #[test]
    fn five_cycle_tree_shape() {
        // From vertex 0 the search claims both ring neighbours at once,
        // then walks the remaining arc: levels {0}, {1,4}, {2}, {3}.
        let tree = nfs_tree(&cycle(5), 0).unwrap();
        assert_eq!(tree.levels(), vec![vec![0], vec![1, 4], vec![2], vec![3]]);
        assert_eq!(tree.parent[2], Some(1));
        assert_eq!(tree.parent[3], Some(2));
        assert_eq!(tree.max_depth(), 3);
        assert_eq!(tree.order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn nfs_rejects_disconnected_graphs() {
        let mut adj = AdjBits::new(4);
        adj.set_edge(0, 1);
        adj.set_edge(2, 3);
        assert!(matches!(nfs_tree(&adj, 0), Err(Error::Disconnected(_))));
    }

    #[test]
    fn tree_paths_are_induced_and_levels_lose_a_clique() {
        let mut stream = Streams::new(43).stream("nfs");
        for trial in 0..40 {
            let adj = random_adj(12, 0.35, &mut stream);
            for comp in adj.components() {
                if comp.len() < 2 {
                    continue;
                }
                let sub = adj.induced(&comp);
                let tree = nfs_tree(&sub, 0).unwrap();
                // Root-to-node chains must be induced paths.
                for v in 0..comp.len() {
                    let mut chain = vec![v];
                    let mut cur = v;
                    while let Some(p) = tree.parent[cur] {
                        chain.push(p);
                        cur = p;
                    }
                    for (a, &u) in chain.iter().enumerate() {
                        for (b, &w) in chain.iter().enumerate() {
                            let adjacent = sub.adjacent(u, w);
                            let consecutive = a.abs_diff(b) == 1;
                            if a != b {
                                assert_eq!(adjacent, consecutive, "trial {trial}");
                            }
                        }
                    }
                }
                // Each level's clique number drops below the graph's.
                let omega = max_clique(&sub).lower();
                for level in tree.levels().iter().skip(1) {
                    let w = max_clique(&sub.induced(level)).lower();
                    assert!(w < omega.max(2), "trial {trial}");
                }
                assert!(tree.max_depth() + 1 <= longest_induced_path(&sub).unwrap());
            }
        }
    }

    #[test]
    fn gyarfas_coloring_is_proper_and_bounded() {
        let mut stream = Streams::new(47).stream("gy");
        for trial in 0..40 {
            let adj = random_adj(11, 0.3, &mut stream);
            let c = gyarfas_color(&adj);
            assert!(c.is_proper(&adj), "trial {trial}");
            let omega = max_clique(&adj).lower();
            let ell = longest_induced_path(&adj).unwrap();
            let bound = (ell as f64).powi(omega.max(1) as i32 - 1);
            assert!(
                (c.num_colors as f64) <= bound,
                "trial {trial}: {} colors vs bound {bound}",
                c.num_colors
            );
        }
    }

    #[test]
    fn pauli_graph_respects_path_bound() {
        // Every induced path in the full 2-qubit commutation graph has at
        // most 2n + 1 = 5 vertices.
        let ops: Vec<_> = enumerate_all(2)
            .unwrap()
            .into_iter()
            .filter(|p| !p.is_identity_support())
            .collect();
        let g = CommutationGraph::build(OperatorSet::from_paulis(ops).unwrap()).unwrap();
        let ell = longest_induced_path(g.adjacency()).unwrap();
        assert!(ell <= crate::graph::pauli_path_bound(2));
        assert!(ell >= 4);
    }

    #[test]
    fn known_path_lengths() {
        assert_eq!(longest_induced_path(&cycle(5)).unwrap(), 4);
        assert_eq!(longest_induced_path(&cycle(6)).unwrap(), 5);
        let mut path = AdjBits::new(6);
        for i in 0..5 {
            path.set_edge(i, i + 1);
        }
        assert_eq!(longest_induced_path(&path).unwrap(), 6);
        assert_eq!(longest_induced_path(&AdjBits::new(3)).unwrap(), 1);
    }

    #[test]
    fn gyarfas_handles_edgeless_and_complete_graphs() {
        let edgeless = AdjBits::new(4);
        let c = gyarfas_color(&edgeless);
        assert_eq!(c.num_colors, 1);
        let mut complete = AdjBits::new(4);
        for i in 0..4 {
            for j in i + 1..4 {
                complete.set_edge(i, j);
            }
        }
        let c = gyarfas_color(&complete);
        assert!(c.is_proper(&complete));
        assert_eq!(c.num_colors, 4);
    }
}
