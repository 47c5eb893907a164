//! Majorana monomials and fermion-to-qubit mappings.
//!
//! A monomial is a subset `x` of the `2n` Majorana generators together with
//! a real coefficient; the operator it denotes is the Hermitian-normalized
//! ordered product `i^(|x|(|x|-1)/2) c_1^{x_1} ... c_{2n}^{x_{2n}}`.
//! Supports are bit vectors (`u128`, generator `a` owns bit `a-1`), so the
//! commutation rule and product phases are exact integer arithmetic.

use crate::error::{Error, Result};
use crate::pauli::{PauliOp, MAX_QUBITS};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest mode count accepted symbolically (2n generator bits in a `u128`).
pub const MAX_MODES: usize = 64;

/// A scaled Majorana monomial.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct MajoranaMonomial {
    pub n_modes: usize,
    pub support: u128,
    pub coefficient: f64,
}

impl MajoranaMonomial {
    pub fn new(n_modes: usize, support: u128, coefficient: f64) -> Result<Self> {
        if n_modes == 0 || n_modes > MAX_MODES {
            return Err(Error::invalid(format!(
                "mode count {n_modes} outside 1..={MAX_MODES}"
            )));
        }
        let mask = support_mask(n_modes);
        if support & !mask != 0 {
            return Err(Error::invalid(format!(
                "generator indices outside the first {} Majoranas",
                2 * n_modes
            )));
        }
        if !coefficient.is_finite() {
            return Err(Error::invalid("non-finite coefficient"));
        }
        Ok(MajoranaMonomial {
            n_modes,
            support,
            coefficient,
        })
    }

    /// Degree = number of generators in the product.
    pub fn degree(&self) -> u32 {
        self.support.count_ones()
    }

    /// Generator indices, 1-based as in the text encoding.
    pub fn indices(&self) -> Vec<usize> {
        (0..2 * self.n_modes)
            .filter(|a| self.support >> a & 1 == 1)
            .map(|a| a + 1)
            .collect()
    }

    /// Parse `G[a,b,...]` or `G[a,b,...]*coeff` with 1-based indices.
    pub fn parse(text: &str, n_modes: usize) -> Result<Self> {
        let t = text.trim();
        let rest = t
            .strip_prefix("G[")
            .ok_or_else(|| Error::parse(format!("expected G[...] in {text:?}")))?;
        let close = rest
            .find(']')
            .ok_or_else(|| Error::parse(format!("unterminated index list in {text:?}")))?;
        let (idx_part, tail) = rest.split_at(close);
        let tail = &tail[1..];
        let coefficient = if tail.is_empty() {
            1.0
        } else {
            let c = tail
                .strip_prefix('*')
                .ok_or_else(|| Error::parse(format!("expected '*coeff' suffix in {text:?}")))?;
            c.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(format!("bad coefficient in {text:?}: {e}")))?
        };
        let mut support = 0u128;
        if !idx_part.trim().is_empty() {
            for piece in idx_part.split(',') {
                let a: usize = piece
                    .trim()
                    .parse()
                    .map_err(|e| Error::parse(format!("bad index in {text:?}: {e}")))?;
                if a == 0 || a > 2 * n_modes {
                    return Err(Error::parse(format!(
                        "generator index {a} outside 1..={} in {text:?}",
                        2 * n_modes
                    )));
                }
                let bit = 1u128 << (a - 1);
                if support & bit != 0 {
                    return Err(Error::parse(format!("repeated index {a} in {text:?}")));
                }
                support |= bit;
            }
        }
        MajoranaMonomial::new(n_modes, support, coefficient)
    }
}

impl fmt::Display for MajoranaMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G[")?;
        for (k, a) in self.indices().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "]")?;
        if self.coefficient != 1.0 {
            write!(f, "*{}", self.coefficient)?;
        }
        Ok(())
    }
}

fn support_mask(n_modes: usize) -> u128 {
    if 2 * n_modes >= 128 {
        u128::MAX
    } else {
        (1u128 << (2 * n_modes)) - 1
    }
}

/// Do the monomials with supports `x` and `y` commute? They commute exactly
/// when `|x||y| + |x & y|` is even, independent of any qubit mapping.
pub fn supports_commute(x: u128, y: u128) -> bool {
    let s = x.count_ones() * y.count_ones() + (x & y).count_ones();
    s % 2 == 0
}

/// Hermitization exponent: `Gamma(x) = i^(|x|(|x|-1)/2) c^x`.
fn hermitization_exponent(support: u128) -> u32 {
    let k = support.count_ones();
    (k * k.wrapping_sub(1) / 2) % 4
}

/// Phase of the ordered product: `Gamma(x) Gamma(y) = i^k Gamma(x ^ y)`.
/// Inversions count the generator swaps needed to merge the two ordered
/// products; repeated generators square to one without extra sign.
pub fn product_phase_exponent(x: u128, y: u128) -> u32 {
    let mut inversions = 0u32;
    let mut rest = y;
    while rest != 0 {
        let b = rest.trailing_zeros();
        if b + 1 < 128 {
            inversions += (x >> (b + 1)).count_ones();
        }
        rest &= rest - 1;
    }
    (hermitization_exponent(x)
        + hermitization_exponent(y)
        + 2 * inversions
        + (4 - hermitization_exponent(x ^ y) % 4))
        % 4
}

/// Hermitian monomial basis of degree `2k`: all supports of that size over
/// the `2n` generators, ascending in the packed-bits order.
pub fn enumerate_even(n_modes: usize, k: usize) -> Result<Vec<MajoranaMonomial>> {
    enumerate_degree(n_modes, 2 * k)
}

/// All monomials of exact degree `d`, ascending support order.
pub fn enumerate_degree(n_modes: usize, d: usize) -> Result<Vec<MajoranaMonomial>> {
    if n_modes == 0 || n_modes > MAX_MODES {
        return Err(Error::invalid(format!(
            "mode count {n_modes} outside 1..={MAX_MODES}"
        )));
    }
    if d > 2 * n_modes {
        return Err(Error::invalid(format!(
            "degree {d} exceeds {} generators",
            2 * n_modes
        )));
    }
    let total = 2 * n_modes;
    let mut out = Vec::new();
    if d == 0 {
        out.push(MajoranaMonomial::new(n_modes, 0, 1.0)?);
        return Ok(out);
    }
    // Gosper's hack over u128 supports.
    let mut v: u128 = (1u128 << d) - 1;
    let limit: u128 = if total >= 128 {
        u128::MAX
    } else {
        1u128 << total
    };
    while v < limit {
        out.push(MajoranaMonomial::new(n_modes, v, 1.0)?);
        let c = v & v.wrapping_neg();
        let r = v + c;
        if r == 0 {
            break;
        }
        v = (((r ^ v) >> 2) / c) | r;
    }
    Ok(out)
}

/// Which fermion-to-qubit encoding to use.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum MappingKind {
    TernaryTree,
    JordanWigner,
}

impl MappingKind {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "ternary" | "ternary_tree" | "ternary-tree" => Ok(MappingKind::TernaryTree),
            "jw" | "jordan_wigner" | "jordan-wigner" => Ok(MappingKind::JordanWigner),
            other => Err(Error::parse(format!("unknown mapping {other:?}"))),
        }
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingKind::TernaryTree => write!(f, "ternary"),
            MappingKind::JordanWigner => write!(f, "jw"),
        }
    }
}

/// A concrete assignment of Pauli strings to the `2n` Majorana generators.
#[derive(Clone, Debug)]
pub struct FermionMapping {
    pub kind: MappingKind,
    pub n_modes: usize,
    pub n_qubits: usize,
    majoranas: Vec<PauliOp>,
}

impl FermionMapping {
    pub fn new(kind: MappingKind, n_modes: usize) -> Result<Self> {
        match kind {
            MappingKind::TernaryTree => ternary_tree(n_modes),
            MappingKind::JordanWigner => jordan_wigner(n_modes),
        }
    }

    /// Pauli image of generator `a` (1-based).
    pub fn majorana(&self, a: usize) -> Result<&PauliOp> {
        if a == 0 || a > 2 * self.n_modes {
            return Err(Error::invalid(format!(
                "generator index {a} outside 1..={}",
                2 * self.n_modes
            )));
        }
        Ok(&self.majoranas[a - 1])
    }

    pub fn majoranas(&self) -> &[PauliOp] {
        &self.majoranas
    }

    /// Image of the Hermitian monomial with the given support. The result
    /// is a signed Hermitian Pauli string; the monomial coefficient is not
    /// folded in.
    pub fn monomial_to_pauli(&self, support: u128) -> Result<PauliOp> {
        let mask = support_mask(self.n_modes);
        if support & !mask != 0 {
            return Err(Error::invalid(format!(
                "generator indices outside the first {} Majoranas",
                2 * self.n_modes
            )));
        }
        let mut acc = PauliOp::identity(self.n_qubits);
        for a in 0..2 * self.n_modes {
            if support >> a & 1 == 1 {
                acc = acc.multiply(&self.majoranas[a])?;
            }
        }
        let herm = hermitization_exponent(support);
        let adjusted = PauliOp::new(
            self.n_qubits,
            acc.x_bits(),
            acc.z_bits(),
            (u32::from(acc.phase_exponent()) + herm) as u8 % 4,
        )?;
        if !adjusted.is_hermitian() {
            return Err(Error::NonHermitian(format!(
                "mapped monomial with support {support:#x}"
            )));
        }
        Ok(adjusted)
    }
}

fn jordan_wigner(n_modes: usize) -> Result<FermionMapping> {
    if n_modes == 0 || n_modes > MAX_QUBITS.min(MAX_MODES) {
        return Err(Error::invalid(format!(
            "Jordan-Wigner supports 1..={} modes, requested {n_modes}",
            MAX_QUBITS.min(MAX_MODES)
        )));
    }
    let n = n_modes;
    let mut majoranas = Vec::with_capacity(2 * n);
    for j in 0..n {
        let tail: u64 = (1u64 << j) - 1; // Z string on qubits 0..j
        let bit = 1u64 << j;
        majoranas.push(PauliOp::observable(n, bit, tail, false)?); // Z..ZX
        majoranas.push(PauliOp::observable(n, bit, tail | bit, false)?); // Z..ZY
    }
    Ok(FermionMapping {
        kind: MappingKind::JordanWigner,
        n_modes,
        n_qubits: n,
        majoranas,
    })
}

fn ternary_tree(n_modes: usize) -> Result<FermionMapping> {
    if n_modes == 0 {
        return Err(Error::invalid("mode count must be positive"));
    }
    // Smallest complete ternary tree with at least 2n+1 leaves.
    let needed = 2 * n_modes + 1;
    let mut depth = 1usize;
    let mut leaves = 3usize;
    while leaves < needed {
        depth += 1;
        leaves *= 3;
    }
    let n_qubits = (leaves - 1) / 2;
    if n_qubits > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "ternary tree for {n_modes} modes needs {n_qubits} qubits, beyond the {MAX_QUBITS}-qubit limit"
        )));
    }
    // Internal node k has children 3k+1, 3k+2, 3k+3; internal nodes are
    // exactly the first n_qubits indices of the heap layout. Descend every
    // root-to-leaf path in lexicographic (X < Y < Z) edge order.
    let letters = ['X', 'Y', 'Z'];
    let mut majoranas = Vec::with_capacity(2 * n_modes);
    let mut path = vec![0u8; depth];
    'outer: loop {
        let mut node = 0usize;
        let mut op = PauliOp::identity(n_qubits);
        for &edge in path.iter() {
            op = op.multiply(&PauliOp::single(n_qubits, node, letters[edge as usize])?)?;
            node = 3 * node + 1 + edge as usize;
        }
        majoranas.push(op);
        if majoranas.len() == 2 * n_modes {
            break;
        }
        // Next path in lexicographic order; the trailing leaves (at least
        // one) are dropped.
        let mut slot = depth;
        loop {
            if slot == 0 {
                break 'outer;
            }
            slot -= 1;
            path[slot] += 1;
            if path[slot] < 3 {
                break;
            }
            path[slot] = 0;
        }
    }
    debug_assert_eq!(majoranas.len(), 2 * n_modes);
    Ok(FermionMapping {
        kind: MappingKind::TernaryTree,
        n_modes,
        n_qubits,
        majoranas,
    })
}
