//! Statevector simulation: ensembles of pure states, Pauli expectations,
//! joint measurement of commuting sets, and two-copy Bell sampling.
//!
//! States are dense amplitude vectors, so everything here is gated by
//! `DENSE_STATE_CAP`. Product states additionally carry their single-qubit
//! factors, which lets the Bell sampler run in O(n) per shot instead of
//! O(n 2^n).

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::pauli::{phase_value, PauliOp, DENSE_STATE_CAP};
use crate::rng::Stream;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// A normalized pure state on `n` qubits. Amplitude index bit `j` is the
/// computational value of qubit `j`.
#[derive(Clone, Debug)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_state_size(n)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {n} qubits",
                amps.len()
            )));
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!(
                "state norm^2 = {norm2}, expected 1 within 1e-10"
            )));
        }
        Ok(StateVector { n, amps })
    }

    pub fn computational(n: usize, bits: u64) -> Result<Self> {
        check_state_size(n)?;
        if n < 64 && bits >> n != 0 {
            return Err(Error::invalid("basis label wider than the register"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[bits as usize] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    /// Dense product of single-qubit states.
    pub fn from_factors(factors: &[[Complex64; 2]]) -> Result<Self> {
        let n = factors.len();
        check_state_size(n)?;
        for (j, f) in factors.iter().enumerate() {
            let norm2 = f[0].norm_sqr() + f[1].norm_sqr();
            if (norm2 - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("factor {j} is not normalized")));
            }
        }
        let mut amps = vec![Complex64::new(1.0, 0.0); 1 << n];
        for b in 0..1usize << n {
            let mut a = Complex64::new(1.0, 0.0);
            for (j, f) in factors.iter().enumerate() {
                a *= f[b >> j & 1];
            }
            amps[b] = a;
        }
        Ok(StateVector { n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn expectation(&self, op: &PauliOp) -> Result<f64> {
        check_op(self.n, op)?;
        Ok(expectation_amps(&self.amps, op))
    }
}

fn check_state_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("state needs at least one qubit"));
    }
    if n > DENSE_STATE_CAP {
        return Err(Error::DenseCap {
            cap: DENSE_STATE_CAP,
            requested: n,
        });
    }
    Ok(())
}

fn check_op(n: usize, op: &PauliOp) -> Result<()> {
    if op.num_qubits() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator on {} qubits applied to {n}-qubit state",
            op.num_qubits()
        )));
    }
    if !op.is_hermitian() {
        return Err(Error::NonHermitian(op.to_string()));
    }
    Ok(())
}

/// `<amps|P|amps>` for a raw amplitude slice; caller guarantees shape.
pub(crate) fn expectation_amps(amps: &[Complex64], op: &PauliOp) -> f64 {
    let phase = phase_value(op.phase_exponent());
    let x = op.x_bits() as usize;
    let z = op.z_bits();
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, &amp) in amps.iter().enumerate() {
        let sign = if ((b as u64 & z).count_ones() & 1) == 1 {
            -1.0
        } else {
            1.0
        };
        acc += amps[b ^ x].conj() * amp * sign;
    }
    (acc * phase).re
}

/// `P|amps>` as a fresh vector.
pub(crate) fn apply_pauli(op: &PauliOp, amps: &[Complex64]) -> Vec<Complex64> {
    let phase = phase_value(op.phase_exponent());
    let x = op.x_bits() as usize;
    let z = op.z_bits();
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for (b, &amp) in amps.iter().enumerate() {
        let sign = if ((b as u64 & z).count_ones() & 1) == 1 {
            -1.0
        } else {
            1.0
        };
        out[b ^ x] = amp * sign * phase;
    }
    out
}

/// One pure component of a mixture, with optional product structure.
#[derive(Clone, Debug)]
pub struct EnsembleMember {
    pub weight: f64,
    pub vector: StateVector,
    pub factors: Option<Vec<[Complex64; 2]>>,
}

/// A density operator held as a convex mixture of pure states.
#[derive(Clone, Debug)]
pub struct QuantumState {
    n: usize,
    members: Vec<EnsembleMember>,
}

impl QuantumState {
    pub fn pure(vector: StateVector) -> Self {
        QuantumState {
            n: vector.n,
            members: vec![EnsembleMember {
                weight: 1.0,
                vector,
                factors: None,
            }],
        }
    }

    pub fn pure_product(factors: Vec<[Complex64; 2]>) -> Result<Self> {
        let vector = StateVector::from_factors(&factors)?;
        Ok(QuantumState {
            n: vector.n,
            members: vec![EnsembleMember {
                weight: 1.0,
                vector,
                factors: Some(factors),
            }],
        })
    }

    pub fn ensemble(members: Vec<EnsembleMember>) -> Result<Self> {
        let n = members
            .first()
            .ok_or_else(|| Error::invalid("empty ensemble"))?
            .vector
            .n;
        let mut total = 0.0;
        for m in &members {
            if m.vector.n != n {
                return Err(Error::DimensionMismatch(
                    "mixed qubit counts in ensemble".into(),
                ));
            }
            if m.weight < 0.0 {
                return Err(Error::invalid("negative ensemble weight"));
            }
            total += m.weight;
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!(
                "ensemble weights sum to {total}, expected 1 within 1e-10"
            )));
        }
        Ok(QuantumState { n, members })
    }

    /// Eigen-ensemble of a density matrix (eigenvalues below 1e-12 dropped).
    pub fn from_density_matrix(rho: &CMatrix) -> Result<Self> {
        let dim = rho.nrows();
        if dim == 0 || !dim.is_power_of_two() || rho.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} density matrix",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let n = dim.trailing_zeros() as usize;
        check_state_size(n)?;
        let (vals, vecs) = hermitian_eigen(rho);
        let kept: Vec<usize> = (0..dim).filter(|&i| vals[i] > 1e-12).collect();
        let total: f64 = kept.iter().map(|&i| vals[i]).sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "density matrix trace {total} is not 1"
            )));
        }
        let mut members = Vec::with_capacity(kept.len());
        for &i in &kept {
            let col: Vec<Complex64> = vecs.column(i).iter().copied().collect();
            let norm: f64 = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let amps: Vec<Complex64> = col.iter().map(|c| c / norm).collect();
            members.push(EnsembleMember {
                weight: vals[i] / total,
                vector: StateVector { n, amps },
                factors: None,
            });
        }
        QuantumState::ensemble(members)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn is_pure(&self) -> bool {
        self.members.len() == 1
    }

    pub fn expectation(&self, op: &PauliOp) -> Result<f64> {
        check_op(self.n, op)?;
        Ok(self
            .members
            .iter()
            .map(|m| m.weight * expectation_amps(&m.vector.amps, op))
            .sum())
    }

    pub fn density_matrix(&self) -> CMatrix {
        let dim = 1 << self.n;
        let mut rho = CMatrix::zeros(dim, dim);
        for m in &self.members {
            for r in 0..dim {
                for c in 0..dim {
                    rho[(r, c)] += m.vector.amps[r] * m.vector.amps[c].conj() * m.weight;
                }
            }
        }
        rho
    }

    fn draw_member(&self, stream: &mut Stream) -> &EnsembleMember {
        if self.members.len() == 1 {
            return &self.members[0];
        }
        let r: f64 = stream.gen();
        let mut acc = 0.0;
        for m in &self.members {
            acc += m.weight;
            if r < acc {
                return m;
            }
        }
        self.members.last().unwrap()
    }
}

/// GHZ state `(|0..0> + |1..1>)/sqrt(2)`.
pub fn ghz(n: usize) -> Result<QuantumState> {
    check_state_size(n)?;
    let dim = 1usize << n;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    let w = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[0] = w;
    amps[dim - 1] = w;
    Ok(QuantumState::pure(StateVector { n, amps }))
}

pub(crate) fn gaussian(stream: &mut Stream) -> (f64, f64) {
    let u1: f64 = 1.0 - stream.gen::<f64>();
    let u2: f64 = stream.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * u2;
    (r * t.cos(), r * t.sin())
}

/// Haar-random pure state.
pub fn haar_random(n: usize, stream: &mut Stream) -> Result<QuantumState> {
    check_state_size(n)?;
    let dim = 1usize << n;
    let mut amps = Vec::with_capacity(dim);
    for _ in 0..dim {
        let (re, im) = gaussian(stream);
        amps.push(Complex64::new(re, im));
    }
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in amps.iter_mut() {
        *a /= norm;
    }
    Ok(QuantumState::pure(StateVector { n, amps }))
}

/// Product of independent Haar-random single-qubit states.
pub fn random_product(n: usize, stream: &mut Stream) -> Result<QuantumState> {
    check_state_size(n)?;
    let mut factors = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = gaussian(stream);
        let (c, d) = gaussian(stream);
        let f = [Complex64::new(a, b), Complex64::new(c, d)];
        let norm = (f[0].norm_sqr() + f[1].norm_sqr()).sqrt();
        factors.push([f[0] / norm, f[1] / norm]);
    }
    QuantumState::pure_product(factors)
}

/// Maximally mixed state as a uniform mixture of basis states.
pub fn maximally_mixed(n: usize) -> Result<QuantumState> {
    check_state_size(n)?;
    let dim = 1usize << n;
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let members = (0..dim)
        .map(|b| {
            let factors: Vec<[Complex64; 2]> = (0..n)
                .map(|j| {
                    if b >> j & 1 == 1 {
                        [zero, one]
                    } else {
                        [one, zero]
                    }
                })
                .collect();
            EnsembleMember {
                weight: 1.0 / dim as f64,
                vector: StateVector::computational(n, b as u64).unwrap(),
                factors: Some(factors),
            }
        })
        .collect();
    QuantumState::ensemble(members)
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn single_qubit_factor(c: char) -> Result<[Complex64; 2]> {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let h = Complex64::new(INV_SQRT_2, 0.0);
    let hi = Complex64::new(0.0, INV_SQRT_2);
    Ok(match c {
        '0' => [one, zero],
        '1' => [zero, one],
        '+' => [h, h],
        '-' => [h, -h],
        'R' | 'r' => [h, hi],
        'L' | 'l' => [h, -hi],
        other => {
            return Err(Error::parse(format!(
                "unknown qubit symbol {other:?}, expected 0 1 + - R L"
            )))
        }
    })
}

/// Build a state from a generator string:
/// `ghz`, `haar_random seed=<u64>`, `product <symbols>`,
/// `product random seed=<u64>`, `computational <bits>`, `maximally_mixed`.
/// `n` is required for forms that do not encode the width themselves.
pub fn state_from_generator(spec: &str, n: Option<usize>) -> Result<QuantumState> {
    let mut words = spec.split_whitespace();
    let head = words
        .next()
        .ok_or_else(|| Error::parse("empty state description"))?;
    let need_n = || n.ok_or_else(|| Error::invalid(format!("{head} requires a qubit count")));
    let parse_seed = |w: Option<&str>| -> Result<u64> {
        let w = w.ok_or_else(|| Error::parse("expected seed=<u64>"))?;
        let v = w
            .strip_prefix("seed=")
            .ok_or_else(|| Error::parse(format!("expected seed=<u64>, got {w:?}")))?;
        v.parse()
            .map_err(|e| Error::parse(format!("bad seed {v:?}: {e}")))
    };
    let check_width = |m: usize| -> Result<usize> {
        if let Some(n) = n {
            if n != m {
                return Err(Error::DimensionMismatch(format!(
                    "state describes {m} qubits, expected {n}"
                )));
            }
        }
        Ok(m)
    };
    let state = match head {
        "ghz" => ghz(need_n()?)?,
        "maximally_mixed" | "mixed" => maximally_mixed(need_n()?)?,
        "haar_random" => {
            let seed = parse_seed(words.next())?;
            haar_random(
                need_n()?,
                &mut crate::rng::Streams::new(seed).stream("haar"),
            )?
        }
        "product" => {
            let arg = words
                .next()
                .ok_or_else(|| Error::parse("product needs qubit symbols or 'random'"))?;
            if arg == "random" {
                let seed = parse_seed(words.next())?;
                random_product(
                    need_n()?,
                    &mut crate::rng::Streams::new(seed).stream("product"),
                )?
            } else {
                let m = check_width(arg.chars().count())?;
                let factors = arg
                    .chars()
                    .map(single_qubit_factor)
                    .collect::<Result<Vec<_>>>()?;
                check_state_size(m)?;
                QuantumState::pure_product(factors)?
            }
        }
        "computational" => {
            let arg = words
                .next()
                .ok_or_else(|| Error::parse("computational needs a bitstring"))?;
            let m = check_width(arg.chars().count())?;
            check_state_size(m)?;
            let mut bits = 0u64;
            for (j, c) in arg.chars().enumerate() {
                match c {
                    '0' => {}
                    '1' => bits |= 1 << j,
                    other => return Err(Error::parse(format!("bad bit {other:?}"))),
                }
            }
            QuantumState::pure(StateVector::computational(m, bits)?)
        }
        other => return Err(Error::parse(format!("unknown state generator {other:?}"))),
    };
    if words.next().is_some() {
        return Err(Error::parse(format!("trailing tokens in {spec:?}")));
    }
    Ok(state)
}

/// Parse state file contents: either a single generator line or ket lines
/// `<bitstring> <re> <im>`, one amplitude per line. Leftmost bit is qubit 0.
pub fn parse_state_text(text: &str, n: Option<usize>) -> Result<QuantumState> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::parse("empty state description"));
    }
    let first = lines[0].split_whitespace().next().unwrap_or("");
    if !first.chars().all(|c| c == '0' || c == '1') {
        if lines.len() > 1 {
            return Err(Error::parse("generator line must be alone in the file"));
        }
        return state_from_generator(lines[0], n);
    }
    let width = first.chars().count();
    let m = if let Some(n) = n {
        if n != width {
            return Err(Error::DimensionMismatch(format!(
                "ket lines describe {width} qubits, expected {n}"
            )));
        }
        n
    } else {
        width
    };
    check_state_size(m)?;
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << m];
    let mut seen = vec![false; 1 << m];
    for line in &lines {
        let mut parts = line.split_whitespace();
        let bits_str = parts.next().unwrap();
        if bits_str.chars().count() != m {
            return Err(Error::parse(format!(
                "bitstring {bits_str:?} has wrong width"
            )));
        }
        let mut idx = 0usize;
        for (j, c) in bits_str.chars().enumerate() {
            match c {
                '0' => {}
                '1' => idx |= 1 << j,
                other => return Err(Error::parse(format!("bad bit {other:?}"))),
            }
        }
        let re: f64 = parts
            .next()
            .ok_or_else(|| Error::parse(format!("missing amplitude on {line:?}")))?
            .parse()
            .map_err(|e| Error::parse(format!("bad amplitude on {line:?}: {e}")))?;
        let im: f64 = match parts.next() {
            Some(t) => t
                .parse()
                .map_err(|e| Error::parse(format!("bad amplitude on {line:?}: {e}")))?,
            None => 0.0,
        };
        if parts.next().is_some() {
            return Err(Error::parse(format!("trailing tokens on {line:?}")));
        }
        if seen[idx] {
            return Err(Error::parse(format!("duplicate basis label {bits_str:?}")));
        }
        seen[idx] = true;
        amps[idx] = Complex64::new(re, im);
    }
    Ok(QuantumState::pure(StateVector::new(m, amps)?))
}

/// Jointly measure a pairwise-commuting set of Hermitian Pauli operators
/// by sequential projection; returns one outcome in {-1, +1} per operator.
pub fn measure_commuting_set(
    state: &QuantumState,
    ops: &[PauliOp],
    stream: &mut Stream,
) -> Result<Vec<i8>> {
    for op in ops {
        check_op(state.n, op)?;
    }
    for (i, a) in ops.iter().enumerate() {
        for b in ops.iter().skip(i + 1) {
            if !a.commutes(b) {
                return Err(Error::invalid(format!(
                    "operators {a} and {b} do not commute"
                )));
            }
        }
    }
    let member = state.draw_member(stream);
    let mut amps = member.vector.amps.clone();
    let mut outcomes = Vec::with_capacity(ops.len());
    for op in ops {
        let e = expectation_amps(&amps, op);
        let p_plus = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
        let sign: f64 = if stream.gen::<f64>() < p_plus {
            1.0
        } else {
            -1.0
        };
        let image = apply_pauli(op, &amps);
        let mut norm2 = 0.0;
        for (a, im) in amps.iter_mut().zip(image) {
            *a = (*a + sign * im) / 2.0;
            norm2 += a.norm_sqr();
        }
        let norm = norm2.sqrt();
        debug_assert!(norm > 1e-12, "projector annihilated the state");
        for a in amps.iter_mut() {
            *a /= norm;
        }
        outcomes.push(if sign > 0.0 { 1 } else { -1 });
    }
    Ok(outcomes)
}

/// Operator-count cap for [`joint_outcome_distribution`]; the table has
/// `2^m` entries.
pub const JOINT_OUTCOME_CAP: usize = 20;

/// Branches lighter than this are unreachable projector images and are
/// dropped rather than carried as float dust.
const BRANCH_CUTOFF: f64 = 1e-24;

/// Joint outcome law for measuring a pairwise-commuting set on one copy:
/// entry `b` is `Tr(rho prod_j (I + s_j ops[j]) / 2)` where `s_j = -1` iff
/// bit `j` of `b` is set. Collapse measurement realizes exactly this law in
/// any order, so drawing from the table is interchangeable with
/// [`measure_commuting_set`].
pub fn joint_outcome_distribution(state: &QuantumState, ops: &[PauliOp]) -> Result<Vec<f64>> {
    for op in ops {
        check_op(state.n, op)?;
    }
    for (i, a) in ops.iter().enumerate() {
        for b in ops.iter().skip(i + 1) {
            if !a.commutes(b) {
                return Err(Error::invalid(format!(
                    "operators {a} and {b} do not commute"
                )));
            }
        }
    }
    if ops.len() > JOINT_OUTCOME_CAP {
        return Err(Error::Unsupported(format!(
            "joint outcome table caps at {JOINT_OUTCOME_CAP} operators, got {}",
            ops.len()
        )));
    }
    let mut probs = vec![0.0f64; 1usize << ops.len()];
    for member in &state.members {
        let mut branches: Vec<(usize, Vec<Complex64>)> = vec![(0, member.vector.amps.clone())];
        for (j, op) in ops.iter().enumerate() {
            let mut next = Vec::with_capacity(branches.len() * 2);
            for (idx, amps) in branches {
                let mut plus = amps;
                let mut minus = apply_pauli(op, &plus);
                let mut norm_plus = 0.0;
                let mut norm_minus = 0.0;
                for (p, m) in plus.iter_mut().zip(minus.iter_mut()) {
                    let a = *p;
                    let b = *m;
                    *p = (a + b) / 2.0;
                    *m = (a - b) / 2.0;
                    norm_plus += p.norm_sqr();
                    norm_minus += m.norm_sqr();
                }
                if norm_plus > BRANCH_CUTOFF {
                    next.push((idx, plus));
                }
                if norm_minus > BRANCH_CUTOFF {
                    next.push((idx | (1 << j), minus));
                }
            }
            branches = next;
        }
        for (idx, amps) in branches {
            probs[idx] += member.weight * amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
        }
    }
    Ok(probs)
}

/// Outcome of a transversal two-copy Bell measurement: per-qubit bitflip
/// and phaseflip syndromes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BellSample {
    pub bitflip: u64,
    pub phaseflip: u64,
}

/// Eigenvalue of the Bell outcome under a Hermitian Pauli: the estimator
/// `E[bell_sign(P, s)] = Tr(P rho) Tr(P sigma)` when `s` is sampled from
/// `rho (x) sigma`. Overall operator signs cancel in the two-copy product,
/// so this depends only on the unsigned string.
pub fn bell_sign(op: &PauliOp, sample: &BellSample) -> Result<i8> {
    if !op.is_hermitian() {
        return Err(Error::NonHermitian(op.to_string()));
    }
    let x = op.x_bits();
    let z = op.z_bits();
    let parity = ((x & sample.phaseflip).count_ones()
        + (z & sample.bitflip).count_ones()
        + (x & z).count_ones())
        & 1;
    Ok(if parity == 1 { -1 } else { 1 })
}

/// Draws Bell-measurement outcomes across `rho (x) sigma`.
pub struct BellSampler {
    n: usize,
    rho: QuantumState,
    sigma: QuantumState,
    rho_cdfs: Vec<Option<Vec<f64>>>,
    sigma_cdfs: Vec<Option<Vec<f64>>>,
    scratch: Vec<Complex64>,
}

impl BellSampler {
    pub fn new(rho: &QuantumState, sigma: &QuantumState) -> Result<Self> {
        if rho.n != sigma.n {
            return Err(Error::DimensionMismatch(format!(
                "copies on {} and {} qubits",
                rho.n, sigma.n
            )));
        }
        let amp_cdfs = |s: &QuantumState| -> Vec<Option<Vec<f64>>> {
            s.members
                .iter()
                .map(|m| {
                    if m.factors.is_some() {
                        None
                    } else {
                        let mut acc = 0.0;
                        Some(
                            m.vector
                                .amps
                                .iter()
                                .map(|a| {
                                    acc += a.norm_sqr();
                                    acc
                                })
                                .collect(),
                        )
                    }
                })
                .collect()
        };
        Ok(BellSampler {
            n: rho.n,
            rho_cdfs: amp_cdfs(rho),
            sigma_cdfs: amp_cdfs(sigma),
            rho: rho.clone(),
            sigma: sigma.clone(),
            scratch: vec![Complex64::new(0.0, 0.0); 1 << rho.n],
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn sample(&mut self, stream: &mut Stream) -> BellSample {
        let mi = draw_index(&self.rho, stream);
        let mj = draw_index(&self.sigma, stream);
        let psi = &self.rho.members[mi];
        let phi = &self.sigma.members[mj];
        match (&psi.factors, &phi.factors) {
            (Some(f), Some(g)) => sample_product(f, g, stream),
            _ => {
                let u = draw_basis(&self.rho_cdfs[mi], &psi.vector, stream);
                let v = draw_basis(&self.sigma_cdfs[mj], &phi.vector, stream);
                let a = u ^ v;
                let dim = 1usize << self.n;
                for t in 0..dim {
                    self.scratch[t] = psi.vector.amps[t] * phi.vector.amps[t ^ a as usize];
                }
                walsh_hadamard(&mut self.scratch);
                let total: f64 = self.scratch.iter().map(|w| w.norm_sqr()).sum();
                let target = stream.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut c = dim - 1;
                for (t, w) in self.scratch.iter().enumerate() {
                    acc += w.norm_sqr();
                    if acc > target {
                        c = t;
                        break;
                    }
                }
                BellSample {
                    bitflip: a,
                    phaseflip: c as u64,
                }
            }
        }
    }
}

fn draw_index(state: &QuantumState, stream: &mut Stream) -> usize {
    if state.members.len() == 1 {
        return 0;
    }
    let r: f64 = stream.gen();
    let mut acc = 0.0;
    for (i, m) in state.members.iter().enumerate() {
        acc += m.weight;
        if r < acc {
            return i;
        }
    }
    state.members.len() - 1
}

fn draw_basis(cdf: &Option<Vec<f64>>, vector: &StateVector, stream: &mut Stream) -> u64 {
    let r: f64 = stream.gen();
    match cdf {
        Some(cdf) => {
            let total = *cdf.last().unwrap();
            let idx = cdf.partition_point(|&p| p < r * total);
            idx.min(cdf.len() - 1) as u64
        }
        None => {
            let mut acc = 0.0;
            for (b, a) in vector.amps.iter().enumerate() {
                acc += a.norm_sqr();
                if r < acc {
                    return b as u64;
                }
            }
            vector.amps.len() as u64 - 1
        }
    }
}

fn sample_product(
    psi: &[[Complex64; 2]],
    phi: &[[Complex64; 2]],
    stream: &mut Stream,
) -> BellSample {
    let mut bitflip = 0u64;
    let mut phaseflip = 0u64;
    for (j, (f, g)) in psi.iter().zip(phi).enumerate() {
        let mut probs = [0.0f64; 4];
        let mut total = 0.0;
        for (idx, p) in probs.iter_mut().enumerate() {
            let (a, c) = (idx & 1, idx >> 1);
            let mut amp = f[0] * g[a];
            let odd = f[1] * g[1 ^ a];
            amp += if c == 1 { -odd } else { odd };
            *p = amp.norm_sqr() / 2.0;
            total += *p;
        }
        let target = stream.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = 3;
        for (idx, p) in probs.iter().enumerate() {
            acc += p;
            if acc > target {
                pick = idx;
                break;
            }
        }
        bitflip |= ((pick & 1) as u64) << j;
        phaseflip |= ((pick >> 1) as u64) << j;
    }
    BellSample { bitflip, phaseflip }
}

/// In-place unnormalized Walsh-Hadamard transform.
fn walsh_hadamard(data: &mut [Complex64]) {
    let n = data.len();
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let a = data[j];
                let b = data[j + h];
                data[j] = a + b;
                data[j + h] = a - b;
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

/// Exact Bell-outcome distribution over all `4^n` syndromes, indexed by
/// `bitflip | (phaseflip << n)`. Intended for validation at small `n`.
pub fn bell_outcome_distribution(rho: &QuantumState, sigma: &QuantumState) -> Result<Vec<f64>> {
    if rho.n != sigma.n {
        return Err(Error::DimensionMismatch(format!(
            "copies on {} and {} qubits",
            rho.n, sigma.n
        )));
    }
    let n = rho.n;
    let dim = 1usize << n;
    let mut out = vec![0.0; dim * dim];
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    for pm in &rho.members {
        for sm in &sigma.members {
            let weight = pm.weight * sm.weight;
            for a in 0..dim {
                for (t, slot) in w.iter_mut().enumerate() {
                    *slot = pm.vector.amps[t] * sm.vector.amps[t ^ a];
                }
                walsh_hadamard(&mut w);
                for (c, amp) in w.iter().enumerate() {
                    out[a | (c << n)] += weight * amp.norm_sqr() / dim as f64;
                }
            }
        }
    }
    Ok(out)
}

/// Histogram of `num_samples` Bell-measurement outcomes, indexed like
/// [`bell_outcome_distribution`]. Draws the bin counts jointly from
/// `Multinomial(num_samples, p)` via chained binomials, which has exactly
/// the law of tallying `num_samples` independent [`BellSampler`] draws but
/// costs `O(4^n)` instead of `O(num_samples)`.
pub fn sample_bell_histogram(
    rho: &QuantumState,
    sigma: &QuantumState,
    num_samples: u64,
    stream: &mut Stream,
) -> Result<Vec<u64>> {
    let probs = bell_outcome_distribution(rho, sigma)?;
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = num_samples;
    let mut mass_left = 1.0f64;
    for (slot, &p) in counts.iter_mut().zip(&probs) {
        if remaining == 0 {
            break;
        }
        if mass_left <= p {
            *slot = remaining;
            remaining = 0;
            break;
        }
        let ratio = (p / mass_left).clamp(0.0, 1.0);
        let c = if ratio > 0.0 {
            Binomial::new(remaining, ratio)
                .expect("ratio clamped to [0, 1]")
                .sample(stream)
        } else {
            0
        };
        *slot = c;
        remaining -= c;
        mass_left -= p;
    }
    if remaining > 0 {
        *counts.last_mut().unwrap() += remaining;
    }
    Ok(counts)
}
