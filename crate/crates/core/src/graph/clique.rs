//! Clique bounds for commutation graphs.
//!
//! Exact search is branch-and-bound with greedy-coloring pruning, feasible
//! for every graph we audit (up to 128 vertices). Larger graphs fall back
//! to a greedy witness and a degeneracy bound.

use super::AdjBits;

/// Outcome of a clique computation. `witness` is always a real clique, so
/// `witness.len()` is a valid lower bound in both variants.
#[derive(Clone, Debug)]
pub enum CliqueResult {
    Exact { witness: Vec<usize> },
    Bounded { witness: Vec<usize>, upper: usize },
}

impl CliqueResult {
    pub fn lower(&self) -> usize {
        match self {
            CliqueResult::Exact { witness } | CliqueResult::Bounded { witness, .. } => {
                witness.len()
            }
        }
    }

    pub fn upper(&self) -> usize {
        match self {
            CliqueResult::Exact { witness } => witness.len(),
            CliqueResult::Bounded { upper, .. } => *upper,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, CliqueResult::Exact { .. })
    }
}

/// Maximal clique grown from the lowest vertex id, scanning ascending.
pub fn greedy_clique(adj: &AdjBits) -> Vec<usize> {
    greedy_clique_from(adj, 0)
}

/// Maximal clique grown from `start`, scanning all vertices ascending.
pub fn greedy_clique_from(adj: &AdjBits, start: usize) -> Vec<usize> {
    let n = adj.num_vertices();
    if n == 0 {
        return Vec::new();
    }
    let mut clique = vec![start];
    for v in 0..n {
        if v != start && clique.iter().all(|&u| adj.adjacent(u, v)) {
            clique.push(v);
        }
    }
    clique.sort_unstable();
    clique
}

/// Graph degeneracy via min-degree peeling; the clique number is at most
/// degeneracy + 1.
pub fn degeneracy(adj: &AdjBits) -> usize {
    let n = adj.num_vertices();
    let mut degree: Vec<usize> = (0..n).map(|v| adj.degree(v)).collect();
    let mut alive = vec![true; n];
    let mut best = 0;
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| degree[v])
            .unwrap();
        best = best.max(degree[v]);
        alive[v] = false;
        for w in adj.neighbors(v) {
            if alive[w] {
                degree[w] -= 1;
            }
        }
    }
    best
}

/// Largest clique: exact up to 128 vertices, bounded beyond.
pub fn max_clique(adj: &AdjBits) -> CliqueResult {
    let n = adj.num_vertices();
    if n == 0 {
        return CliqueResult::Exact { witness: vec![] };
    }
    if n > 128 {
        return CliqueResult::Bounded {
            witness: greedy_clique(adj),
            upper: degeneracy(adj) + 1,
        };
    }
    let rows: Vec<u128> = (0..n)
        .map(|i| {
            let mut m = 0u128;
            for j in adj.neighbors(i) {
                m |= 1 << j;
            }
            m
        })
        .collect();
    let all: u128 = if n == 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    };
    let mut best = greedy_clique(adj);
    let mut current = Vec::new();
    expand(&rows, all, &mut current, &mut best);
    best.sort_unstable();
    CliqueResult::Exact { witness: best }
}

fn expand(rows: &[u128], cand: u128, current: &mut Vec<usize>, best: &mut Vec<usize>) {
    if cand == 0 {
        if current.len() > best.len() {
            *best = current.clone();
        }
        return;
    }
    // Greedy-color the candidates; a vertex with color c can extend the
    // current clique to size at most current + c.
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut classes: Vec<u128> = Vec::new();
    let mut rest = cand;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let mut c = 0;
        while c < classes.len() && classes[c] & rows[v] != 0 {
            c += 1;
        }
        if c == classes.len() {
            classes.push(0);
        }
        classes[c] |= 1 << v;
        order.push((v, c + 1));
    }
    order.sort_by_key(|&(_, c)| c);
    let mut cand = cand;
    for &(v, c) in order.iter().rev() {
        if current.len() + c <= best.len() {
            return;
        }
        current.push(v);
        expand(rows, cand & rows[v], current, best);
        current.pop();
        cand &= !(1u128 << v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_adj;
    use crate::rng::Streams;

    fn brute_force_clique(adj: &AdjBits) -> usize {
        let n = adj.num_vertices();
        let mut best = 0;
        for mask in 0u32..1 << n {
            let verts: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
            let ok = verts
                .iter()
                .enumerate()
                .all(|(k, &u)| verts[k + 1..].iter().all(|&v| adj.adjacent(u, v)));
            if ok {
                best = best.max(verts.len());
            }
        }
        best
    }

    #[test]
    fn exact_search_matches_brute_force() {
        let mut stream = Streams::new(17).stream("clique");
        for trial in 0..60 {
            let p = 0.2 + 0.6 * (trial % 4) as f64 / 4.0;
            let adj = random_adj(13, p, &mut stream);
            let result = max_clique(&adj);
            assert!(result.is_exact());
            let witness = match &result {
                CliqueResult::Exact { witness } => witness.clone(),
                _ => unreachable!(),
            };
            for (k, &u) in witness.iter().enumerate() {
                for &v in &witness[k + 1..] {
                    assert!(adj.adjacent(u, v));
                }
            }
            assert_eq!(witness.len(), brute_force_clique(&adj), "trial {trial}");
        }
    }

    #[test]
    fn bounds_bracket_the_exact_value() {
        let mut stream = Streams::new(19).stream("bounds");
        for _ in 0..30 {
            let adj = random_adj(14, 0.5, &mut stream);
            let exact = max_clique(&adj).lower();
            assert!(greedy_clique(&adj).len() <= exact);
            assert!(degeneracy(&adj) + 1 >= exact);
            for start in 0..14 {
                let c = greedy_clique_from(&adj, start);
                assert!(c.contains(&start) && c.len() <= exact);
            }
        }
    }

    #[test]
    fn large_graphs_fall_back_to_bounds() {
        let mut adj = AdjBits::new(150);
        for i in 0..10 {
            for j in i + 1..10 {
                adj.set_edge(i, j);
            }
        }
        let result = max_clique(&adj);
        assert!(!result.is_exact());
        assert!(result.lower() >= 10);
        assert!(result.upper() >= result.lower());
    }

    #[test]
    fn empty_and_trivial_graphs() {
        assert_eq!(max_clique(&AdjBits::new(0)).lower(), 0);
        assert_eq!(max_clique(&AdjBits::new(5)).lower(), 1);
    }
}
