//! Pauli strings in symplectic form with exact global-phase tracking.
//!
//! An operator is stored as `i^phase * prod_j X_j^{x_j} Z_j^{z_j}` where
//! `x` and `z` are bit vectors packed into machine words and `phase` lives in
//! Z_4. Qubit `j` owns bit `1 << j`; in the text encoding the leftmost letter
//! is qubit 0. Products, commutation checks and weights are O(words);
//! everything here is exact integer arithmetic.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Symbolic operators accept at most this many qubits (one machine word).
pub const MAX_QUBITS: usize = 64;
/// Dense matrices are refused above this qubit count.
pub const DENSE_OPERATOR_CAP: usize = 12;
/// Dense statevectors are refused above this qubit count.
pub const DENSE_STATE_CAP: usize = 10;

/// A Pauli string. Ordering is the canonical vertex order used everywhere
/// downstream: lexicographic in `(x, z)`, then phase.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliOp {
    x: u64,
    z: u64,
    phase: u8,
    n: u8,
}

impl PauliOp {
    /// Raw constructor from symplectic bits and a Z_4 phase exponent.
    pub fn new(n: usize, x: u64, z: u64, phase: u8) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "{n} qubits exceeds the {MAX_QUBITS}-qubit symbolic limit"
            )));
        }
        let mask = mask(n);
        if x & !mask != 0 || z & !mask != 0 {
            return Err(Error::invalid(format!(
                "support bits outside the first {n} qubits"
            )));
        }
        Ok(PauliOp {
            x,
            z,
            phase: phase & 3,
            n: n as u8,
        })
    }

    /// Hermitian observable with the given support and sign.
    pub fn observable(n: usize, x: u64, z: u64, negative: bool) -> Result<Self> {
        let mut p = PauliOp::new(n, x, z, 0)?;
        let y = (x & z).count_ones() as u8;
        p.phase = (y + if negative { 2 } else { 0 }) & 3;
        Ok(p)
    }

    pub fn identity(n: usize) -> Self {
        PauliOp::new(n, 0, 0, 0).expect("identity is always valid")
    }

    /// Single-qubit letter ('X', 'Y' or 'Z') at `qubit`, identity elsewhere.
    pub fn single(n: usize, qubit: usize, letter: char) -> Result<Self> {
        if qubit >= n {
            return Err(Error::invalid(format!(
                "qubit {qubit} out of range for n={n}"
            )));
        }
        let bit = 1u64 << qubit;
        let (x, z) = match letter {
            'X' => (bit, 0),
            'Y' => (bit, bit),
            'Z' => (0, bit),
            'I' => (0, 0),
            other => return Err(Error::parse(format!("unknown Pauli letter {other:?}"))),
        };
        PauliOp::observable(n, x, z, false)
    }

    pub fn num_qubits(&self) -> usize {
        self.n as usize
    }

    pub fn x_bits(&self) -> u64 {
        self.x
    }

    pub fn z_bits(&self) -> u64 {
        self.z
    }

    pub fn phase_exponent(&self) -> u8 {
        self.phase
    }

    /// Number of qubits acted on non-trivially.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub fn is_identity_support(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// True when the stored phase makes the dense matrix Hermitian.
    pub fn is_hermitian(&self) -> bool {
        (u32::from(self.phase) + self.y_count()) % 2 == 0
    }

    /// Phase relative to the canonical positive Hermitian string: exponent k
    /// with `self = i^k * |self|`.
    pub fn relative_phase(&self) -> u8 {
        ((u32::from(self.phase) + 4 - self.y_count() % 4) % 4) as u8
    }

    /// Sign of a Hermitian observable (+1.0 or -1.0).
    pub fn sign(&self) -> Result<f64> {
        match self.relative_phase() {
            0 => Ok(1.0),
            2 => Ok(-1.0),
            _ => Err(Error::NonHermitian(self.to_string())),
        }
    }

    /// Canonical positive representative (drops the sign / phase prefix).
    pub fn abs(&self) -> Self {
        let mut p = *self;
        p.phase = (p.y_count() & 3) as u8;
        p
    }

    pub fn negated(&self) -> Self {
        let mut p = *self;
        p.phase = (p.phase + 2) & 3;
        p
    }

    /// Exact operator product.
    pub fn multiply(&self, rhs: &PauliOp) -> Result<Self> {
        if self.n != rhs.n {
            return Err(Error::DimensionMismatch(format!(
                "product of {}-qubit and {}-qubit operators",
                self.n, rhs.n
            )));
        }
        // Per qubit X^a Z^b * X^c Z^d = (-1)^(bc) X^(a+c) Z^(b+d).
        let swaps = (self.z & rhs.x).count_ones();
        let phase = (u32::from(self.phase) + u32::from(rhs.phase) + 2 * swaps) & 3;
        Ok(PauliOp {
            x: self.x ^ rhs.x,
            z: self.z ^ rhs.z,
            phase: phase as u8,
            n: self.n,
        })
    }

    /// True when the operators commute; Pauli pairs either commute or
    /// anticommute, decided by the symplectic form.
    pub fn commutes(&self, rhs: &PauliOp) -> bool {
        let s = (self.x & rhs.z).count_ones() + (self.z & rhs.x).count_ones();
        s % 2 == 0
    }

    /// Letter at `qubit`, ignoring phase.
    pub fn letter(&self, qubit: usize) -> char {
        let x = (self.x >> qubit) & 1;
        let z = (self.z >> qubit) & 1;
        match (x, z) {
            (0, 0) => 'I',
            (1, 0) => 'X',
            (1, 1) => 'Y',
            (0, 1) => 'Z',
            _ => unreachable!(),
        }
    }

    /// Index of this operator's support in the canonical enumeration of all
    /// strings on `n` qubits (phase ignored).
    pub fn canonical_index(&self) -> usize {
        ((self.x as usize) << self.n) | self.z as usize
    }

    /// Packed 2n-bit symplectic code `x | z << n` (phase ignored).
    pub fn code(&self) -> u64 {
        self.x | (self.z << self.n)
    }

    pub fn from_code(n: usize, code: u64) -> Result<Self> {
        let m = mask(n);
        PauliOp::observable(n, code & m, (code >> n) & m, false)
    }

    /// Dense matrix. Column `b` holds `i^phase (-1)^(z.b)` at row `b ^ x`.
    pub fn dense(&self) -> Result<CMatrix> {
        let n = self.num_qubits();
        if n > DENSE_OPERATOR_CAP {
            return Err(Error::DenseCap {
                cap: DENSE_OPERATOR_CAP,
                requested: n,
            });
        }
        let dim = 1usize << n;
        let ph = phase_value(self.phase);
        let mut m = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            let sign = if ((self.z as usize & b).count_ones()) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            m[(b ^ self.x as usize, b)] = ph * sign;
        }
        Ok(m)
    }

    /// Parse the text encoding: optional sign prefix (`+`, `-`, `+i`, `-i`)
    /// followed by one letter per qubit, leftmost letter = qubit 0.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.is_empty() {
            return Err(Error::parse("empty Pauli string"));
        }
        let (prefix, rest) = split_phase_prefix(t);
        if rest.is_empty() {
            return Err(Error::parse(format!("no Pauli letters in {text:?}")));
        }
        let n = rest.chars().count();
        if n > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "{n} qubits exceeds the {MAX_QUBITS}-qubit symbolic limit"
            )));
        }
        let mut x = 0u64;
        let mut z = 0u64;
        for (j, ch) in rest.chars().enumerate() {
            match ch {
                'I' => {}
                'X' => x |= 1 << j,
                'Y' => {
                    x |= 1 << j;
                    z |= 1 << j;
                }
                'Z' => z |= 1 << j,
                other => {
                    return Err(Error::parse(format!(
                        "unknown Pauli letter {other:?} in {text:?}"
                    )))
                }
            }
        }
        let y = (x & z).count_ones();
        let phase = (y + u32::from(prefix)) & 3;
        PauliOp::new(n, x, z, phase as u8)
    }
}

fn split_phase_prefix(t: &str) -> (u8, &str) {
    // Returns the i-exponent of the prefix and the remaining letters.
    // "i" must be lowercase so it cannot collide with the identity letter.
    if let Some(r) = t.strip_prefix("+i").or_else(|| t.strip_prefix("i")) {
        (1, r)
    } else if let Some(r) = t.strip_prefix("-i") {
        (3, r)
    } else if let Some(r) = t.strip_prefix('-') {
        (2, r)
    } else if let Some(r) = t.strip_prefix('+') {
        (0, r)
    } else {
        (0, t)
    }
}

impl fmt::Display for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.relative_phase() {
            0 => {}
            1 => write!(f, "+i")?,
            2 => write!(f, "-")?,
            3 => write!(f, "-i")?,
            _ => unreachable!(),
        }
        for j in 0..self.num_qubits() {
            write!(f, "{}", self.letter(j))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliOp({self})")
    }
}

fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

pub(crate) fn phase_value(phase: u8) -> Complex64 {
    match phase & 3 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        3 => Complex64::new(0.0, -1.0),
        _ => unreachable!(),
    }
}

/// All 4^n Pauli observables on `n` qubits in canonical `(x, z)` order.
pub fn enumerate_all(n: usize) -> Result<Vec<PauliOp>> {
    if n > 16 {
        return Err(Error::invalid(format!(
            "refusing to enumerate 4^{n} Pauli strings"
        )));
    }
    let dim = 1u64 << n;
    let mut out = Vec::with_capacity(1 << (2 * n));
    for x in 0..dim {
        for z in 0..dim {
            out.push(PauliOp::observable(n, x, z, false)?);
        }
    }
    Ok(out)
}

/// All weight-exactly-`k` Pauli observables on `n` qubits, canonical order.
pub fn enumerate_local(n: usize, k: usize) -> Result<Vec<PauliOp>> {
    if k > n {
        return Err(Error::invalid(format!(
            "locality {k} exceeds qubit count {n}"
        )));
    }
    if n > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "{n} qubits exceeds the {MAX_QUBITS}-qubit symbolic limit"
        )));
    }
    let mut out = Vec::new();
    let mut support = Vec::new();
    subsets_of_size(n, k, &mut support, 0, &mut |qubits| {
        // 3^k letter choices over the chosen support.
        let mut letters = vec![0u8; k];
        loop {
            let mut x = 0u64;
            let mut z = 0u64;
            for (slot, &q) in qubits.iter().enumerate() {
                match letters[slot] {
                    0 => x |= 1 << q,
                    1 => {
                        x |= 1 << q;
                        z |= 1 << q;
                    }
                    2 => z |= 1 << q,
                    _ => unreachable!(),
                }
            }
            out.push(PauliOp::observable(n, x, z, false).expect("valid support"));
            // Odometer over letter assignments.
            let mut slot = 0;
            loop {
                if slot == k {
                    return;
                }
                letters[slot] += 1;
                if letters[slot] < 3 {
                    break;
                }
                letters[slot] = 0;
                slot += 1;
            }
        }
    });
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn subsets_of_size(
    n: usize,
    k: usize,
    cur: &mut Vec<usize>,
    from: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if cur.len() == k {
        visit(cur);
        return;
    }
    let needed = k - cur.len();
    for q in from..=(n - needed) {
        cur.push(q);
        subsets_of_size(n, k, cur, q + 1, visit);
        cur.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, CMatrix};
    use num_complex::Complex64;

    fn letter_matrix(c: char) -> CMatrix {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match c {
            'I' => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
            'X' => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
            'Y' => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            'Z' => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
            _ => panic!("bad letter"),
        }
    }

    /// Independent dense construction: textbook Kronecker chain, qubit 0 as
    /// the least significant index bit (innermost factor), then the phase
    /// prefix relative to the plain letter tensor.
    fn dense_reference(p: &PauliOp) -> CMatrix {
        let mut m = CMatrix::identity(1, 1);
        for j in (0..p.num_qubits()).rev() {
            m = kron(&m, &letter_matrix(p.letter(j)));
        }
        m * phase_value(p.relative_phase())
    }

    fn assert_close(a: &CMatrix, b: &CMatrix) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-12, "matrices differ: {x} vs {y}");
        }
    }

    #[test]
    fn dense_matches_kronecker_reference() {
        for text in ["X", "Y", "Z", "I", "XY", "-ZZ", "+iXZ", "-iYIX", "IZXY"] {
            let p = PauliOp::parse(text).unwrap();
            assert_close(&p.dense().unwrap(), &dense_reference(&p));
        }
    }

    #[test]
    fn multiply_matches_dense_products() {
        let all3 = enumerate_all(2).unwrap();
        for a in &all3 {
            for b in &all3 {
                let prod = a.multiply(b).unwrap();
                let lhs = a.dense().unwrap() * b.dense().unwrap();
                assert_close(&lhs, &prod.dense().unwrap());
            }
        }
    }

    #[test]
    fn known_products() {
        let x = PauliOp::parse("X").unwrap();
        let y = PauliOp::parse("Y").unwrap();
        let z = PauliOp::parse("Z").unwrap();
        // XY = iZ, YX = -iZ, XZ = -iY.
        assert_eq!(x.multiply(&y).unwrap().to_string(), "+iZ");
        assert_eq!(y.multiply(&x).unwrap().to_string(), "-iZ");
        assert_eq!(x.multiply(&z).unwrap().to_string(), "-iY");
        assert_eq!(x.multiply(&x).unwrap().to_string(), "I");
    }

    #[test]
    fn commutation_agrees_with_dense_anticommutator() {
        let all = enumerate_all(2).unwrap();
        for a in &all {
            for b in &all {
                let ad = a.dense().unwrap();
                let bd = b.dense().unwrap();
                let comm = &ad * &bd - &bd * &ad;
                let is_zero = comm.iter().all(|c| c.norm() < 1e-12);
                assert_eq!(a.commutes(b), is_zero, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn weight_counts_nonidentity_letters() {
        assert_eq!(PauliOp::parse("IXYI").unwrap().weight(), 2);
        assert_eq!(PauliOp::identity(5).weight(), 0);
        assert_eq!(PauliOp::parse("-XIZ").unwrap().weight(), 2);
    }

    #[test]
    fn parse_round_trips() {
        for text in ["XIZ", "-XIZ", "+iYY", "-iZI", "IIII"] {
            let p = PauliOp::parse(text).unwrap();
            let canonical = p.to_string();
            let q = PauliOp::parse(&canonical).unwrap();
            assert_eq!(p, q);
        }
        assert_eq!(PauliOp::parse("+XIZ").unwrap().to_string(), "XIZ");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(PauliOp::parse("").is_err());
        assert!(PauliOp::parse("XQZ").is_err());
        assert!(PauliOp::parse("-i").is_err());
    }

    #[test]
    fn hermitian_normalization() {
        // Products can be non-Hermitian; observables never are.
        let x = PauliOp::parse("X").unwrap();
        let z = PauliOp::parse("Z").unwrap();
        let xz = x.multiply(&z).unwrap();
        assert!(!xz.is_hermitian());
        assert!(xz.sign().is_err());
        let y = PauliOp::observable(1, 1, 1, true).unwrap();
        assert!(y.is_hermitian());
        assert_eq!(y.sign().unwrap(), -1.0);
        assert_eq!(y.to_string(), "-Y");
        assert_eq!(y.abs().to_string(), "Y");
    }

    #[test]
    fn enumerations_have_expected_sizes() {
        assert_eq!(enumerate_all(3).unwrap().len(), 64);
        // 3^k * C(n, k).
        assert_eq!(enumerate_local(4, 2).unwrap().len(), 9 * 6);
        assert_eq!(enumerate_local(3, 0).unwrap().len(), 1);
        assert!(enumerate_local(2, 3).is_err());
    }

    #[test]
    fn enumeration_is_canonically_sorted() {
        let all = enumerate_all(2).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(all, sorted);
        for (i, p) in all.iter().enumerate() {
            assert_eq!(p.canonical_index(), i);
        }
        let local = enumerate_local(3, 2).unwrap();
        let mut ls = local.clone();
        ls.sort_unstable();
        assert_eq!(local, ls);
    }

    #[test]
    fn codes_round_trip() {
        for p in enumerate_all(3).unwrap() {
            let q = PauliOp::from_code(3, p.code()).unwrap();
            assert_eq!(p, q);
        }
    }
}
