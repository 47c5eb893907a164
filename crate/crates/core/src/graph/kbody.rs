//! Fractional colorings of Majorana-monomial commutation graphs.
//!
//! A fractional coloring of size `chi` is a distribution over independent
//! sets that covers every vertex with probability at least `1/chi`. For
//! degree-r monomials the sampler is built recursively:
//!
//! * r = 2: a proper coloring from edge coloring, sampled uniformly.
//! * odd r: a greedy maximal anticommuting set is found; its support union
//!   I partitions the vertices by first touched index. The partition cell
//!   is drawn uniformly, the touched index is stripped, and the cell is
//!   sampled at degree r - 1.
//! * even r: one degree-(r-1) sampler per Majorana index, drawn
//!   independently; a vertex survives when every sampler of its support
//!   picked it. Disjoint even supports commute, so the result is still
//!   independent.
//!
//! The declared size composes the same way and stays below the closed-form
//! bound `chi_bound(r, omega)` whenever `omega` is the true clique number.

use super::Coloring;
use crate::error::{Error, Result};
use crate::fermion::supports_commute;
use crate::rng::Stream;
use rand::Rng;

/// A sampleable fractional coloring over vertices `0..num_vertices`.
#[derive(Clone, Debug)]
pub struct FractionalColoring {
    size_chi: f64,
    num_vertices: usize,
    node: Node,
    supports: Option<Vec<u128>>,
}

#[derive(Clone, Debug)]
enum Node {
    Empty,
    /// Pairwise-anticommuting vertices: singleton classes.
    Singletons {
        members: Vec<usize>,
    },
    /// Uniform draw over proper color classes.
    Classes {
        classes: Vec<Vec<usize>>,
    },
    Odd {
        parts: Vec<Part>,
    },
    Even {
        degree: u32,
        samplers: Vec<Part>,
    },
}

#[derive(Clone, Debug)]
struct Part {
    members: Vec<usize>,
    inner: Box<Node>,
}

impl FractionalColoring {
    /// Wrap a proper coloring as the uniform distribution over its classes.
    pub fn from_coloring(coloring: &Coloring) -> Self {
        let classes = coloring.classes();
        let num_vertices = coloring.colors.len();
        if classes.is_empty() {
            return FractionalColoring {
                size_chi: 1.0,
                num_vertices,
                node: Node::Empty,
                supports: None,
            };
        }
        FractionalColoring {
            size_chi: classes.len() as f64,
            num_vertices,
            node: Node::Classes { classes },
            supports: None,
        }
    }

    /// Sampling cost of the strategy: every vertex is covered with
    /// probability at least `1 / size_chi()`.
    pub fn size_chi(&self) -> f64 {
        self.size_chi
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    /// Exact per-vertex inclusion probabilities of [`sample`](Self::sample).
    /// Every entry is at least `1 / size_chi()`.
    pub fn coverage_probabilities(&self) -> Vec<f64> {
        node_coverage(&self.node, self.num_vertices)
    }

    /// Draw one independent set, ascending vertex ids.
    pub fn sample(&self, stream: &mut Stream) -> Vec<usize> {
        let mut out = sample_node(&self.node, self.num_vertices, stream);
        out.sort_unstable();
        if let Some(supports) = &self.supports {
            debug_assert!(
                out.iter().enumerate().all(|(k, &u)| {
                    out[k + 1..]
                        .iter()
                        .all(|&v| supports_commute(supports[u], supports[v]))
                }),
                "sampled set is not independent"
            );
        }
        out
    }
}

fn node_coverage(node: &Node, num_vertices: usize) -> Vec<f64> {
    match node {
        Node::Empty => vec![0.0; num_vertices],
        Node::Singletons { members } => {
            let mut out = vec![0.0; num_vertices];
            for &v in members {
                out[v] = 1.0 / members.len() as f64;
            }
            out
        }
        Node::Classes { classes } => {
            let mut out = vec![0.0; num_vertices];
            for class in classes {
                for &v in class {
                    out[v] = 1.0 / classes.len() as f64;
                }
            }
            out
        }
        Node::Odd { parts } => {
            let mut out = vec![0.0; num_vertices];
            for part in parts {
                let inner = node_coverage(&part.inner, part.members.len());
                for (k, &v) in part.members.iter().enumerate() {
                    out[v] = inner[k] / parts.len() as f64;
                }
            }
            out
        }
        Node::Even { degree, samplers } => {
            let mut acc = vec![1.0; num_vertices];
            let mut counts = vec![0u32; num_vertices];
            for part in samplers {
                let inner = node_coverage(&part.inner, part.members.len());
                for (k, &v) in part.members.iter().enumerate() {
                    acc[v] *= inner[k];
                    counts[v] += 1;
                }
            }
            (0..num_vertices)
                .map(|v| if counts[v] == *degree { acc[v] } else { 0.0 })
                .collect()
        }
    }
}

fn sample_node(node: &Node, num_vertices: usize, stream: &mut Stream) -> Vec<usize> {
    match node {
        Node::Empty => Vec::new(),
        Node::Singletons { members } => {
            vec![members[stream.gen_range(0..members.len())]]
        }
        Node::Classes { classes } => classes[stream.gen_range(0..classes.len())].clone(),
        Node::Odd { parts } => {
            let part = &parts[stream.gen_range(0..parts.len())];
            let local = sample_node(&part.inner, part.members.len(), stream);
            local.into_iter().map(|k| part.members[k]).collect()
        }
        Node::Even { degree, samplers } => {
            let mut counts = vec![0u32; num_vertices];
            for part in samplers {
                for k in sample_node(&part.inner, part.members.len(), stream) {
                    counts[part.members[k]] += 1;
                }
            }
            (0..num_vertices)
                .filter(|&v| counts[v] == *degree)
                .collect()
        }
    }
}

/// Closed-form size bound for degree-r monomial sets of clique number
/// `omega`.
pub fn chi_bound(r: u32, omega: usize) -> f64 {
    let w = omega.max(1) as f64;
    match r {
        0 => 1.0,
        1 => w,
        2 => w + 1.0,
        _ if r % 2 == 1 => r as f64 * w * chi_bound(r - 1, omega),
        _ => chi_bound(r - 1, omega).powi(r as i32),
    }
}

/// Build a fractional coloring sampler for uniform-degree Majorana
/// monomial supports.
pub fn kbody_fractional_coloring(n_modes: usize, supports: &[u128]) -> Result<FractionalColoring> {
    if supports.is_empty() {
        return Ok(FractionalColoring {
            size_chi: 1.0,
            num_vertices: 0,
            node: Node::Empty,
            supports: Some(Vec::new()),
        });
    }
    let degree = supports[0].count_ones();
    if degree == 0 {
        return Err(Error::invalid(
            "identity support has no generators to color",
        ));
    }
    let mask = if 2 * n_modes >= 128 {
        u128::MAX
    } else {
        (1u128 << (2 * n_modes)) - 1
    };
    let mut seen = std::collections::HashSet::new();
    for &s in supports {
        if s & !mask != 0 {
            return Err(Error::invalid(
                "monomial support outside the declared mode count",
            ));
        }
        if s.count_ones() != degree {
            return Err(Error::invalid(format!(
                "mixed monomial degrees: expected {degree}, found {}",
                s.count_ones()
            )));
        }
        if !seen.insert(s) {
            return Err(Error::invalid("duplicate monomial support"));
        }
    }
    let (node, size_chi) = build(n_modes, supports)?;
    Ok(FractionalColoring {
        size_chi,
        num_vertices: supports.len(),
        node,
        supports: Some(supports.to_vec()),
    })
}

fn build(n_modes: usize, supports: &[u128]) -> Result<(Node, f64)> {
    if supports.is_empty() {
        return Ok((Node::Empty, 1.0));
    }
    let degree = supports[0].count_ones();
    match degree {
        1 => Ok((
            Node::Singletons {
                members: (0..supports.len()).collect(),
            },
            supports.len() as f64,
        )),
        2 => {
            let coloring = crate::graph::misra_gries::misra_gries_one_body(n_modes, supports)?;
            let classes = coloring.classes();
            let chi = classes.len() as f64;
            Ok((Node::Classes { classes }, chi))
        }
        r if r % 2 == 1 => build_odd(n_modes, supports),
        _ => build_even(n_modes, supports, degree),
    }
}

fn build_odd(n_modes: usize, supports: &[u128]) -> Result<(Node, f64)> {
    // Greedy maximal anticommuting set from the lowest vertex, scanning
    // ascending. Odd-degree monomials with disjoint supports anticommute,
    // so every vertex must touch the union of this set's generators.
    let mut clique = vec![0usize];
    for v in 1..supports.len() {
        if clique
            .iter()
            .all(|&u| !supports_commute(supports[u], supports[v]))
        {
            clique.push(v);
        }
    }
    let mut union: u128 = 0;
    for &v in &clique {
        union |= supports[v];
    }
    let mut parts = Vec::new();
    let mut assigned = vec![false; supports.len()];
    let mut max_inner: f64 = 1.0;
    let mut rest = union;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        rest &= rest - 1;
        let members: Vec<usize> = (0..supports.len())
            .filter(|&v| !assigned[v] && supports[v] >> bit & 1 == 1)
            .collect();
        for &v in &members {
            assigned[v] = true;
        }
        let flipped: Vec<u128> = members.iter().map(|&v| supports[v] ^ (1 << bit)).collect();
        let (inner, chi) = build(n_modes, &flipped)?;
        max_inner = max_inner.max(chi);
        parts.push(Part {
            members,
            inner: Box::new(inner),
        });
    }
    if let Some(v) = assigned.iter().position(|&a| !a) {
        return Err(Error::invalid(format!(
            "vertex {v} escapes the anticommuting cover; supports are not uniformly odd"
        )));
    }
    let size = parts.len() as f64 * max_inner;
    Ok((Node::Odd { parts }, size))
}

fn build_even(n_modes: usize, supports: &[u128], degree: u32) -> Result<(Node, f64)> {
    let mut samplers = Vec::new();
    let mut max_inner: f64 = 1.0;
    for i in 0..2 * n_modes {
        let members: Vec<usize> = (0..supports.len())
            .filter(|&v| supports[v] >> i & 1 == 1)
            .collect();
        if members.is_empty() {
            continue;
        }
        let flipped: Vec<u128> = members.iter().map(|&v| supports[v] ^ (1 << i)).collect();
        let (inner, chi) = build(n_modes, &flipped)?;
        max_inner = max_inner.max(chi);
        samplers.push(Part {
            members,
            inner: Box::new(inner),
        });
    }
    Ok((
        Node::Even { degree, samplers },
        max_inner.powi(degree as i32),
    ))
}
