//! Matrix-multiplicative-weights computation of a mimicking state.
//!
//! Given magnitude estimates `u_P` for an unknown state `rho`, the solver
//! produces a known density matrix `sigma` with `|Tr(P sigma)| >= eps/4`
//! for every Pauli whose estimated magnitude is at least `3 eps / 4`. The
//! loop maintains a Gibbs iterate, repeatedly finds a Pauli whose iterate
//! expectation is far from `±u_P` on both sides, asks the probe source for
//! the sign of `Tr(P rho)`, and pushes the signed Pauli into the Gibbs
//! exponent. With correct signs and faithful magnitudes the loop provably
//! exits early; hitting the iteration cap is flagged so callers can treat
//! the output as suspect.
//!
//! The iterate is dense, so everything here is capped at
//! [`DENSE_STATE_CAP`] qubits.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::pauli::{PauliOp, DENSE_STATE_CAP};
use crate::rng::Stream;
use crate::sim::{self, QuantumState};
use num_complex::Complex64;

/// Loop parameters, all derived from the qubit count and precision.
#[derive(Clone, Debug)]
pub struct MmwConfig {
    pub epsilon: f64,
    /// Iteration cap `ceil(64 n / eps^2) + 1`.
    pub t_max: usize,
    /// Gibbs step `sqrt(n / t_max)`.
    pub beta: f64,
    /// Shots per sign probe, odd so majority votes cannot tie. Sized so a
    /// Chernoff bound puts each probe's failure probability under
    /// `0.01 / t_max` whenever `|Tr(P rho)| >= eps/2`.
    pub sign_shots: usize,
    /// Keep a dense `(M, omega)` pair per iteration for audits.
    pub record_iterates: bool,
}

impl MmwConfig {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "precision must lie in (0, 1), got {epsilon}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("qubit count must be positive"));
        }
        if n > DENSE_STATE_CAP {
            return Err(Error::DenseCap {
                cap: DENSE_STATE_CAP,
                requested: n,
            });
        }
        let t_max = (64.0 * n as f64 / (epsilon * epsilon)).ceil() as usize + 1;
        let beta = (n as f64 / t_max as f64).sqrt();
        let mut sign_shots =
            (32.0 * (100.0 * t_max as f64).ln() / (epsilon * epsilon)).ceil() as usize;
        sign_shots |= 1;
        Ok(MmwConfig {
            epsilon,
            t_max,
            beta,
            sign_shots,
            record_iterates: false,
        })
    }
}

/// Gibbs iterate `omega = exp(-beta E) / Tr(exp(-beta E))` where `E` is the
/// running sum of signed Paulis.
#[derive(Clone, Debug)]
pub struct GibbsIterate {
    beta: f64,
    exponent_sum: CMatrix,
    omega: CMatrix,
    exponent_min_eig: f64,
}

impl GibbsIterate {
    pub fn new(n: usize, beta: f64) -> Self {
        let dim = 1usize << n;
        let omega = CMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0);
        GibbsIterate {
            beta,
            exponent_sum: CMatrix::zeros(dim, dim),
            omega,
            exponent_min_eig: 0.0,
        }
    }

    pub fn omega(&self) -> &CMatrix {
        &self.omega
    }

    pub fn exponent_sum(&self) -> &CMatrix {
        &self.exponent_sum
    }

    /// Smallest eigenvalue of the accumulated exponent.
    pub fn exponent_min_eig(&self) -> f64 {
        self.exponent_min_eig
    }

    /// Add one update matrix and refresh the iterate. One eigendecomposition
    /// serves both the Gibbs state and the exponent's spectrum.
    pub fn push(&mut self, update: &CMatrix) {
        self.exponent_sum += update;
        let (vals, vecs) = linalg::hermitian_eigen(&self.exponent_sum);
        self.exponent_min_eig = vals[0];
        let dim = self.exponent_sum.nrows();
        let weights: Vec<f64> = vals
            .iter()
            .map(|v| (-self.beta * (v - vals[0])).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut omega = CMatrix::zeros(dim, dim);
        for (k, w) in weights.iter().enumerate() {
            let col = vecs.column(k);
            let scale = Complex64::new(w / total, 0.0);
            for r in 0..dim {
                for c in 0..dim {
                    omega[(r, c)] += col[r] * col[c].conj() * scale;
                }
            }
        }
        self.omega = omega;
        debug_assert!((linalg::trace(&self.omega).re - 1.0).abs() < 1e-9);
        debug_assert!(linalg::min_eigenvalue(&self.omega) > -1e-9);
    }
}

/// Source of sign estimates for `Tr(P rho)`.
pub enum Probe<'a> {
    /// Signs read off the dense oracle; deterministic, consumes no copies.
    Exact(&'a QuantumState),
    /// Majority vote over projective single-copy measurements.
    Sampled {
        state: &'a QuantumState,
        stream: &'a mut Stream,
    },
}

impl Probe<'_> {
    fn num_qubits(&self) -> usize {
        match self {
            Probe::Exact(state) => state.num_qubits(),
            Probe::Sampled { state, .. } => state.num_qubits(),
        }
    }

    fn query(&mut self, op: &PauliOp, shots: usize) -> Result<(i8, u64)> {
        match self {
            Probe::Exact(state) => {
                let e = state.expectation(op)?;
                Ok((if e < 0.0 { -1 } else { 1 }, 0))
            }
            Probe::Sampled { state, stream } => {
                let r = sign_probe(op, state, shots, stream)?;
                Ok((r, shots as u64))
            }
        }
    }
}

/// Majority vote of `shots` projective measurements of `op`, each on a
/// fresh copy. Even-shot ties resolve to +1.
pub fn sign_probe(
    op: &PauliOp,
    state: &QuantumState,
    shots: usize,
    stream: &mut Stream,
) -> Result<i8> {
    if shots == 0 {
        return Err(Error::invalid("sign probe needs at least one shot"));
    }
    let mut sum: i64 = 0;
    for _ in 0..shots {
        sum += i64::from(sim::measure_commuting_set(state, &[*op], stream)?[0]);
    }
    Ok(if sum < 0 { -1 } else { 1 })
}

/// One iteration of the main loop, scalar view.
#[derive(Clone, Debug)]
pub struct MmwStep {
    pub t: usize,
    pub pauli: PauliOp,
    /// Probed sign of `Tr(P rho)`.
    pub r: i8,
    /// `sign(Tr(P omega) - r u_P)`, the coefficient of `P` in the update.
    pub sign_factor: f64,
    /// `Tr(P omega)` on the iterate the Pauli was chosen against.
    pub omega_expectation: f64,
    /// Regret accumulated through this step.
    pub regret_partial: f64,
}

/// Outcome of [`compute_mimicking_state`].
pub struct MmwRun {
    pub sigma: CMatrix,
    /// Iterations executed before exit.
    pub iterations: usize,
    /// True when the loop found no violating Pauli before the cap. Reaching
    /// the cap instead means some probe or magnitude was wrong.
    pub early_exit: bool,
    /// Dense re-verification of `|Tr(P sigma)| >= eps/4` over the
    /// qualifying Paulis.
    pub output_condition_ok: bool,
    pub regret: f64,
    /// `2 sqrt(n t_max)`.
    pub regret_bound: f64,
    pub copies_used: u64,
    pub steps: Vec<MmwStep>,
    /// `(M, omega)` pairs when the config asked for them.
    pub iterates: Option<Vec<(CMatrix, CMatrix)>>,
}

/// Run the multiplicative-weights loop.
///
/// `magnitudes` lists Hermitian, positively signed Paulis with estimates
/// `u_P >= 0`; Paulis absent from the list are treated as having `u_P = 0`
/// and can never qualify. The violator scan visits qualifying Paulis in
/// canonical order and takes the first hit, so runs are deterministic for a
/// given probe source.
pub fn compute_mimicking_state(
    magnitudes: &[(PauliOp, f64)],
    probe: &mut Probe,
    cfg: &MmwConfig,
) -> Result<MmwRun> {
    let n = probe.num_qubits();
    if n > DENSE_STATE_CAP {
        return Err(Error::DenseCap {
            cap: DENSE_STATE_CAP,
            requested: n,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for (op, u) in magnitudes {
        if op.num_qubits() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator {op} does not act on {n} qubits"
            )));
        }
        if !op.is_hermitian() || *op != op.abs() {
            return Err(Error::NonHermitian(format!(
                "magnitude keys must be positively signed Hermitian Paulis, got {op}"
            )));
        }
        if !(*u >= 0.0) {
            return Err(Error::invalid(format!(
                "magnitude estimate for {op} is {u}, must be nonnegative"
            )));
        }
        if !seen.insert(op.canonical_index()) {
            return Err(Error::invalid(format!("duplicate magnitude entry {op}")));
        }
    }

    let threshold = 3.0 * cfg.epsilon / 4.0;
    let margin = cfg.epsilon / 2.0;
    let mut qualifying: Vec<(PauliOp, f64)> = magnitudes
        .iter()
        .filter(|(_, u)| *u >= threshold)
        .copied()
        .collect();
    qualifying.sort_by_key(|(op, _)| op.canonical_index());

    let mut gibbs = GibbsIterate::new(n, cfg.beta);
    let mut steps: Vec<MmwStep> = Vec::new();
    let mut iterates = cfg.record_iterates.then(Vec::new);
    let mut signed_expectation_sum = 0.0;
    let mut copies_used = 0u64;
    let regret_bound = 2.0 * (n as f64 * cfg.t_max as f64).sqrt();

    let finish = |sigma: CMatrix,
                  iterations: usize,
                  early_exit: bool,
                  regret: f64,
                  copies_used: u64,
                  steps: Vec<MmwStep>,
                  iterates: Option<Vec<(CMatrix, CMatrix)>>| {
        let output_condition_ok = qualifying
            .iter()
            .all(|(op, _)| pauli_trace(op, &sigma).abs() >= cfg.epsilon / 4.0 - 1e-9);
        MmwRun {
            sigma,
            iterations,
            early_exit,
            output_condition_ok,
            regret,
            regret_bound,
            copies_used,
            steps,
            iterates,
        }
    };

    for t in 0..cfg.t_max {
        let violator = qualifying.iter().find_map(|(op, u)| {
            let y = pauli_trace(op, gibbs.omega());
            ((y - u).abs() > margin && (y + u).abs() > margin).then_some((*op, *u, y))
        });
        let Some((op, u, y)) = violator else {
            let regret = signed_expectation_sum - gibbs.exponent_min_eig();
            return Ok(finish(
                gibbs.omega().clone(),
                t,
                true,
                regret,
                copies_used,
                steps,
                iterates,
            ));
        };
        let (r, copies) = probe.query(&op, cfg.sign_shots)?;
        copies_used += copies;
        let sign_factor = (y - f64::from(r) * u).signum();
        let update = op.dense()? * Complex64::new(sign_factor, 0.0);
        signed_expectation_sum += sign_factor * y;
        if let Some(rec) = iterates.as_mut() {
            rec.push((update.clone(), gibbs.omega().clone()));
        }
        gibbs.push(&update);
        steps.push(MmwStep {
            t,
            pauli: op,
            r,
            sign_factor,
            omega_expectation: y,
            regret_partial: signed_expectation_sum - gibbs.exponent_min_eig(),
        });
    }

    let regret = signed_expectation_sum - gibbs.exponent_min_eig();
    Ok(finish(
        gibbs.omega().clone(),
        cfg.t_max,
        false,
        regret,
        copies_used,
        steps,
        iterates,
    ))
}

/// `Tr(P m)` for a dense matrix, using the sparse structure of the Pauli.
/// Real part only; the imaginary part vanishes for Hermitian inputs.
pub fn pauli_trace(op: &PauliOp, m: &CMatrix) -> f64 {
    let ph = crate::pauli::phase_value(op.phase_exponent());
    let x = op.x_bits() as usize;
    let z = op.z_bits();
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..m.nrows() {
        let sign = if (c as u64 & z).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        acc += ph * sign * m[(c, c ^ x)];
    }
    acc.re
}

/// Regret of a recorded run: `sum_t Tr(M_t omega_t) - lambda_min(sum_t M_t)`.
/// Empty traces audit to zero.
pub fn regret_audit(iterates: &[(CMatrix, CMatrix)]) -> f64 {
    let Some((first, _)) = iterates.first() else {
        return 0.0;
    };
    let mut exponent = CMatrix::zeros(first.nrows(), first.ncols());
    let mut gain = 0.0;
    for (m, omega) in iterates {
        gain += linalg::trace(&(m * omega)).re;
        exponent += m;
    }
    gain - linalg::min_eigenvalue(&exponent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::enumerate_all;
    use crate::rng::Streams;
    use crate::sim::{haar_random, maximally_mixed, StateVector};

    fn pure(bits: &str) -> QuantumState {
        let n = bits.len();
        let mut index = 0u64;
        for (j, ch) in bits.chars().enumerate() {
            if ch == '1' {
                index |= 1 << j;
            }
        }
        QuantumState::pure(StateVector::computational(n, index).unwrap())
    }

    fn exact_magnitudes(state: &QuantumState) -> Vec<(PauliOp, f64)> {
        enumerate_all(state.num_qubits())
            .unwrap()
            .into_iter()
            .map(|op| {
                let u = state.expectation(&op).unwrap().abs();
                (op, u)
            })
            .collect()
    }

    #[test]
    fn config_derives_loop_parameters() {
        let cfg = MmwConfig::new(3, 0.5).unwrap();
        assert_eq!(cfg.t_max, 769);
        assert!((cfg.beta - (3.0f64 / 769.0).sqrt()).abs() < 1e-15);
        assert_eq!(cfg.sign_shots % 2, 1);
        let expected = (32.0 * (100.0 * 769.0f64).ln() / 0.25).ceil() as usize;
        assert!(cfg.sign_shots == expected || cfg.sign_shots == expected + 1);
        assert!(MmwConfig::new(3, 0.0).is_err());
        assert!(MmwConfig::new(3, 1.0).is_err());
        assert!(matches!(
            MmwConfig::new(11, 0.5),
            Err(Error::DenseCap { .. })
        ));
    }

    #[test]
    fn maximally_mixed_state_exits_immediately() {
        let state = maximally_mixed(2).unwrap();
        let cfg = MmwConfig::new(2, 0.5).unwrap();
        let u = exact_magnitudes(&state);
        let mut probe = Probe::Exact(&state);
        let run = compute_mimicking_state(&u, &mut probe, &cfg).unwrap();
        assert_eq!(run.iterations, 0);
        assert!(run.early_exit);
        assert!(run.output_condition_ok);
        assert_eq!(run.regret, 0.0);
        let dim = 4;
        for r in 0..dim {
            for c in 0..dim {
                let want = if r == c { 0.25 } else { 0.0 };
                assert!((run.sigma[(r, c)] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_state_mimic_reaches_all_z_observables() {
        let state = pure("00");
        let cfg = MmwConfig::new(2, 0.5).unwrap();
        let u = exact_magnitudes(&state);
        let mut probe = Probe::Exact(&state);
        let run = compute_mimicking_state(&u, &mut probe, &cfg).unwrap();
        assert!(run.early_exit);
        assert!(run.output_condition_ok);
        for s in ["ZI", "IZ", "ZZ"] {
            let op = PauliOp::parse(s).unwrap();
            let value = pauli_trace(&op, &run.sigma);
            assert!(value >= 0.125, "{s} gave {value}");
        }
    }

    #[test]
    fn exact_probe_runs_terminate_early_with_bounded_regret() {
        let streams = Streams::new(41);
        for trial in 0..10 {
            let n = 1 + (trial % 3);
            let mut stream = streams.indexed("state", trial as u64);
            let state = haar_random(n, &mut stream).unwrap();
            for epsilon in [0.3, 0.5] {
                let cfg = MmwConfig::new(n, epsilon).unwrap();
                let u = exact_magnitudes(&state);
                let mut probe = Probe::Exact(&state);
                let run = compute_mimicking_state(&u, &mut probe, &cfg).unwrap();
                assert!(run.early_exit, "trial {trial} eps {epsilon} hit the cap");
                assert!(run.iterations < cfg.t_max);
                assert!(run.output_condition_ok);
                assert!(run.regret <= run.regret_bound);
                assert_eq!(run.copies_used, 0);
            }
        }
    }

    #[test]
    fn recorded_iterates_match_the_audit_and_stay_physical() {
        let state = pure("010");
        let mut cfg = MmwConfig::new(3, 0.4).unwrap();
        cfg.record_iterates = true;
        let u = exact_magnitudes(&state);
        let mut probe = Probe::Exact(&state);
        let run = compute_mimicking_state(&u, &mut probe, &cfg).unwrap();
        let iterates = run.iterates.as_ref().unwrap();
        assert_eq!(iterates.len(), run.iterations);
        for (_, omega) in iterates {
            assert!((linalg::trace(omega).re - 1.0).abs() < 1e-9);
            assert!(linalg::min_eigenvalue(omega) > -1e-9);
        }
        // The final-step partial regret audits the same trace prefix but
        // subtracts the exponent spectrum after the last push, which is
        // exactly what regret_audit recomputes.
        if let Some(last) = run.steps.last() {
            let audited = regret_audit(iterates);
            assert!((audited - last.regret_partial).abs() < 1e-9);
        }
        assert!(run.regret <= run.regret_bound);
    }

    #[test]
    fn audit_handles_trivial_traces() {
        assert_eq!(regret_audit(&[]), 0.0);
        let z = PauliOp::parse("Z").unwrap().dense().unwrap();
        let omega = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        let audit = regret_audit(&[(z, omega)]);
        assert!((audit - 1.0).abs() < 1e-12);
        assert!(audit <= 2.0);
    }

    #[test]
    fn sign_probes_vote_correctly() {
        let mut stream = Streams::new(7).stream("probe");
        let z = PauliOp::parse("Z").unwrap();
        for _ in 0..20 {
            assert_eq!(sign_probe(&z, &pure("0"), 5, &mut stream).unwrap(), 1);
            assert_eq!(sign_probe(&z, &pure("1"), 5, &mut stream).unwrap(), -1);
        }
        // <X> = 0.6 state: majority over 201 shots fails with probability
        // well under 1e-4, so 300 trials should all vote +1.
        let (a, b) = ((0.8f64).sqrt(), (0.2f64).sqrt());
        let amps = vec![
            Complex64::new((a + b) / 2f64.sqrt(), 0.0),
            Complex64::new((a - b) / 2f64.sqrt(), 0.0),
        ];
        let plus_ish = QuantumState::pure(StateVector::new(1, amps).unwrap());
        let x = PauliOp::parse("X").unwrap();
        assert!((plus_ish.expectation(&x).unwrap() - 0.6).abs() < 1e-12);
        for _ in 0..300 {
            assert_eq!(sign_probe(&x, &plus_ish, 201, &mut stream).unwrap(), 1);
        }
        assert!(sign_probe(&z, &pure("0"), 0, &mut stream).is_err());
    }

    #[test]
    fn sampled_probes_reach_the_same_answer() {
        let state = pure("00");
        let cfg = MmwConfig::new(2, 0.5).unwrap();
        let u = exact_magnitudes(&state);
        let mut stream = Streams::new(3).stream("mmw");
        let mut probe = Probe::Sampled {
            state: &state,
            stream: &mut stream,
        };
        let run = compute_mimicking_state(&u, &mut probe, &cfg).unwrap();
        assert!(run.early_exit);
        assert!(run.output_condition_ok);
        assert_eq!(
            run.copies_used,
            run.iterations as u64 * cfg.sign_shots as u64
        );
        assert!(run.copies_used > 0);
    }

    #[test]
    fn rejects_malformed_magnitude_tables() {
        let state = pure("00");
        let cfg = MmwConfig::new(2, 0.5).unwrap();
        let mut probe = Probe::Exact(&state);
        let zi = PauliOp::parse("ZI").unwrap();
        let bad_sign = vec![(zi, -0.1)];
        assert!(compute_mimicking_state(&bad_sign, &mut probe, &cfg).is_err());
        let mut probe = Probe::Exact(&state);
        let dup = vec![(zi, 0.5), (zi, 0.6)];
        assert!(compute_mimicking_state(&dup, &mut probe, &cfg).is_err());
        let mut probe = Probe::Exact(&state);
        let negated = vec![(PauliOp::parse("-ZI").unwrap(), 0.5)];
        assert!(compute_mimicking_state(&negated, &mut probe, &cfg).is_err());
        let mut probe = Probe::Exact(&state);
        let wrong_n = vec![(PauliOp::parse("Z").unwrap(), 0.5)];
        assert!(compute_mimicking_state(&wrong_n, &mut probe, &cfg).is_err());
    }
}
