//! The acceptance suite behind both `shadowtomo selftest` and the
//! `acceptance` integration-test target: eleven independent checks, each
//! reporting one pass/fail line. Everything is seeded, so a criterion either
//! always passes or always fails for a given build.

use crate::compress;
use crate::error::Result;
use crate::fermion::{
    enumerate_even, product_phase_exponent, supports_commute, FermionMapping, MappingKind,
};
use crate::graph::clique::max_clique;
use crate::graph::kbody::kbody_fractional_coloring;
use crate::graph::misra_gries::misra_gries_one_body;
use crate::graph::nfs::{gyarfas_color, nfs_tree};
use crate::graph::{pauli_path_bound, AdjBits, CommutationGraph, OperatorSet};
use crate::greens::{
    greens_derivative_exact, learn_greens_derivative, lie_expand, random_sparse, GreensExpansion,
};
use crate::linalg::{max_abs_diff, CMatrix};
use crate::mmw::{compute_mimicking_state, pauli_trace, regret_audit, MmwConfig, Probe};
use crate::pauli::{enumerate_all, phase_value, PauliOp};
use crate::protocols::{
    clique_audit, learn_all_paulis, learn_fermionic, learn_magnitudes, learn_two_copy_template,
    Engine, Targets,
};
use crate::rng::{Stream, Streams};
use crate::sim::{ghz, haar_random, maximally_mixed, random_product, QuantumState};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use std::time::Instant;

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "{} {:2}. {} ({:.1}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.index,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Outcome = Result<(bool, String)>;

fn run(index: usize, name: &'static str, body: fn() -> Outcome) -> CriterionReport {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(body);
    let (passed, detail) = match outcome {
        Ok(Ok(pair)) => pair,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            (false, format!("panic: {msg}"))
        }
    };
    CriterionReport {
        index,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Every criterion, in suite order.
pub const CRITERIA: &[(usize, &'static str, fn() -> Outcome)] = &[
    (1, "algebra oracle equivalence", algebra_oracles),
    (2, "anticommuting uncertainty bound", uncertainty_bound),
    (
        3,
        "neighbour-first-search coloring bounds",
        nfs_coloring_bounds,
    ),
    (4, "one-body edge coloring bound", one_body_coloring_bound),
    (5, "two-body fractional coloring coverage", kbody_coverage),
    (6, "surviving-set clique bound", surviving_clique_bound),
    (
        7,
        "mimicking states via multiplicative weights",
        mimicking_states,
    ),
    (8, "all-Paulis pipeline end to end", all_paulis_end_to_end),
    (
        9,
        "fermionic one-body pipeline end to end",
        fermionic_end_to_end,
    ),
    (
        10,
        "compressed record fidelity and size",
        compression_fidelity,
    ),
    (11, "Green's function derivatives", greens_derivatives),
];

/// Run the listed criteria (all of them when `only` is empty), invoking
/// `progress` as each one finishes.
pub fn run_criteria(
    only: &[usize],
    mut progress: impl FnMut(&CriterionReport),
) -> Vec<CriterionReport> {
    let mut out = Vec::new();
    for &(index, name, body) in CRITERIA {
        if !only.is_empty() && !only.contains(&index) {
            continue;
        }
        let report = run(index, name, body);
        progress(&report);
        out.push(report);
    }
    out
}

fn random_subset(len: usize, size: usize, stream: &mut Stream) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..len).collect();
    ids.shuffle(stream);
    ids.truncate(size);
    ids.sort_unstable();
    ids
}

fn lstsq_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    cov / var
}

// 1. Symbolic Pauli and Majorana products/commutation against dense matrix
// arithmetic, every pair at small sizes, both fermion mappings.
fn algebra_oracles() -> Outcome {
    let tol = 1e-9;
    let mut pairs = 0usize;
    for n in 1..=3 {
        let ops = enumerate_all(n)?;
        let dense: Vec<CMatrix> = ops.iter().map(|p| p.dense().unwrap()).collect();
        for (i, p) in ops.iter().enumerate() {
            for (j, q) in ops.iter().enumerate() {
                let prod = p.multiply(q)?;
                let pq = &dense[i] * &dense[j];
                if max_abs_diff(&prod.dense()?, &pq) > tol {
                    return Ok((false, format!("product mismatch for {p} * {q}")));
                }
                let qp = &dense[j] * &dense[i];
                let dense_commute = max_abs_diff(&pq, &qp) <= tol;
                if p.commutes(q) != dense_commute {
                    return Ok((false, format!("commutation mismatch for {p}, {q}")));
                }
                pairs += 1;
            }
        }
    }
    let mut monomial_pairs = 0usize;
    for kind in [MappingKind::TernaryTree, MappingKind::JordanWigner] {
        for n_modes in 1..=3 {
            let mapping = FermionMapping::new(kind, n_modes)?;
            let supports: Vec<u128> = (0..1u128 << (2 * n_modes)).collect();
            let dense: Vec<CMatrix> = supports
                .iter()
                .map(|&x| mapping.monomial_to_pauli(x).unwrap().dense().unwrap())
                .collect();
            for &x in &supports {
                for &y in &supports {
                    let k = product_phase_exponent(x, y);
                    let lhs = &dense[x as usize] * &dense[y as usize];
                    let rhs = &dense[(x ^ y) as usize] * phase_value((k & 3) as u8);
                    if max_abs_diff(&lhs, &rhs) > tol {
                        return Ok((
                            false,
                            format!("monomial product mismatch at x={x:b}, y={y:b} ({kind:?})"),
                        ));
                    }
                    let back = &dense[y as usize] * &dense[x as usize];
                    let dense_commute = max_abs_diff(&lhs, &back) <= tol;
                    if supports_commute(x, y) != dense_commute {
                        return Ok((
                            false,
                            format!("monomial commutation mismatch at x={x:b}, y={y:b} ({kind:?})"),
                        ));
                    }
                    monomial_pairs += 1;
                }
            }
        }
    }
    Ok((
        true,
        format!("{pairs} Pauli pairs and {monomial_pairs} monomial pairs match dense arithmetic"),
    ))
}

// 2. For pairwise anticommuting Paulis, sum of squared expectations stays
// at most 1 on random density matrices.
fn uncertainty_bound() -> Outcome {
    let streams = Streams::new(0xACC2);
    let mut worst: f64 = 0.0;
    let mut subsets = 0usize;
    for trial in 0..1000usize {
        let n = 1 + trial % 4;
        let mut stream = streams.indexed("state", trial as u64);
        let rho = match trial % 3 {
            0 => haar_random(n, &mut stream)?,
            1 => random_product(n, &mut stream)?,
            _ => {
                let mut dense = CMatrix::zeros(1 << n, 1 << n);
                let mut total = 0.0;
                for _ in 0..3 {
                    let w = 0.2 + stream.gen::<f64>();
                    let member = haar_random(n, &mut stream)?;
                    dense += member.density_matrix() * Complex64::new(w, 0.0);
                    total += w;
                }
                QuantumState::from_density_matrix(&(dense / Complex64::new(total, 0.0)))?
            }
        };
        let mut ops: Vec<PauliOp> = enumerate_all(n)?
            .into_iter()
            .filter(|p| !p.is_identity_support())
            .collect();
        let mut pick = streams.indexed("subset", trial as u64);
        for _ in 0..4 {
            ops.shuffle(&mut pick);
            let mut subset: Vec<PauliOp> = Vec::new();
            for op in &ops {
                if subset.iter().all(|m| !m.commutes(op)) {
                    subset.push(*op);
                }
            }
            let total: f64 = subset
                .iter()
                .map(|p| rho.expectation(p).unwrap().powi(2))
                .sum();
            worst = worst.max(total);
            subsets += 1;
            if total > 1.0 + 1e-9 {
                return Ok((
                    false,
                    format!("squared expectations sum to {total} on an anticommuting set"),
                ));
            }
        }
    }
    Ok((
        true,
        format!("{subsets} maximal anticommuting subsets, worst sum {worst:.6}"),
    ))
}

// 3. Recursive level colorings are proper and within path_bound^(omega - 1)
// on random induced subgraphs of both commutation-graph families, and the
// five-cycle search tree has the expected shape.
fn nfs_coloring_bounds() -> Outcome {
    let streams = Streams::new(0xACC3);
    let pauli_graph = CommutationGraph::build(OperatorSet::from_paulis(enumerate_all(3)?)?)?;
    let monomials = enumerate_even(4, 2)?;
    let fermi_graph = CommutationGraph::build(OperatorSet::from_monomials(4, &monomials)?)?;
    let families = [
        ("pauli", pauli_graph.adjacency(), pauli_path_bound(3)),
        ("fermi", fermi_graph.adjacency(), 2 * 4 + 1),
    ];
    let mut max_colors = 0u32;
    for (label, adj, path_bound) in families {
        let mut stream = streams.stream(label);
        for trial in 0..100 {
            let size = stream.gen_range(4..=40.min(adj.num_vertices()));
            let ids = random_subset(adj.num_vertices(), size, &mut stream);
            let sub = adj.induced(&ids);
            let coloring = gyarfas_color(&sub);
            if !coloring.is_proper(&sub) {
                return Ok((false, format!("improper coloring ({label} trial {trial})")));
            }
            let clique = max_clique(&sub);
            if !clique.is_exact() {
                return Ok((
                    false,
                    format!("clique search fell back ({label} trial {trial})"),
                ));
            }
            let omega = clique.lower().max(1);
            let bound = (path_bound as f64).powi(omega as i32 - 1);
            if (coloring.num_colors as f64) > bound {
                return Ok((
                    false,
                    format!(
                        "{} colors exceeds {bound} at omega {omega} ({label} trial {trial})",
                        coloring.num_colors
                    ),
                ));
            }
            max_colors = max_colors.max(coloring.num_colors);
        }
    }
    let mut five_cycle = AdjBits::new(5);
    for i in 0..5 {
        five_cycle.set_edge(i, (i + 1) % 5);
    }
    let tree = nfs_tree(&five_cycle, 0)?;
    let shape_ok = tree.levels() == vec![vec![0], vec![1, 4], vec![2], vec![3]]
        && tree.parent[2] == Some(1)
        && tree.parent[3] == Some(2);
    if !shape_ok {
        return Ok((false, "five-cycle search tree has the wrong shape".into()));
    }
    Ok((
        true,
        format!("200 induced subgraphs within bound (max colors {max_colors}); C5 tree shape ok"),
    ))
}

// 4. One-body colorings are proper and use at most omega + 1 colors on
// random subsets of the degree-2 monomials over eight modes.
fn one_body_coloring_bound() -> Outcome {
    let streams = Streams::new(0xACC4);
    let mut stream = streams.stream("subsets");
    let all: Vec<u128> = enumerate_even(8, 1)?.iter().map(|m| m.support).collect();
    for trial in 0..200 {
        let size = stream.gen_range(5..=all.len());
        let supports: Vec<u128> = random_subset(all.len(), size, &mut stream)
            .into_iter()
            .map(|i| all[i])
            .collect();
        let coloring = misra_gries_one_body(8, &supports)?;
        let graph = CommutationGraph::build(OperatorSet::from_supports(8, supports)?)?;
        if !coloring.is_proper(graph.adjacency()) {
            return Ok((false, format!("improper coloring (trial {trial})")));
        }
        let clique = max_clique(graph.adjacency());
        if !clique.is_exact() {
            return Ok((false, format!("clique search fell back (trial {trial})")));
        }
        if coloring.num_colors as usize > clique.lower() + 1 {
            return Ok((
                false,
                format!(
                    "{} colors on omega {} (trial {trial})",
                    coloring.num_colors,
                    clique.lower()
                ),
            ));
        }
    }
    Ok((true, "200 random one-body subsets within omega + 1".into()))
}

// 5. Sampled independent sets of the two-body fractional coloring pairwise
// commute, and per-vertex coverage matches its guarantee empirically.
fn kbody_coverage() -> Outcome {
    let streams = Streams::new(0xACC5);
    let shots = 10_000usize;
    let mut min_margin = f64::INFINITY;
    for n_modes in [3usize, 4] {
        let supports: Vec<u128> = enumerate_even(n_modes, 2)?
            .iter()
            .map(|m| m.support)
            .collect();
        let fc = kbody_fractional_coloring(n_modes, &supports)?;
        let mut counts = vec![0u64; supports.len()];
        let mut stream = streams.indexed("samples", n_modes as u64);
        for _ in 0..shots {
            let set = fc.sample(&mut stream);
            for (a, &u) in set.iter().enumerate() {
                for &v in set.iter().skip(a + 1) {
                    if !supports_commute(supports[u], supports[v]) {
                        return Ok((
                            false,
                            format!(
                                "sampled set contains an anticommuting pair at {n_modes} modes"
                            ),
                        ));
                    }
                }
                counts[u] += 1;
            }
        }
        let floor = 1.0 / fc.size_chi();
        for (v, (&c, &p)) in counts.iter().zip(&fc.coverage_probabilities()).enumerate() {
            let empirical = c as f64 / shots as f64;
            let sigma = (p * (1.0 - p) / shots as f64).sqrt();
            let margin = empirical - (floor - 3.0 * sigma);
            min_margin = min_margin.min(margin);
            if margin < 0.0 {
                return Ok((
                    false,
                    format!("vertex {v} covered {empirical:.4} < 1/chi {floor:.4} - 3 sigma"),
                ));
            }
        }
    }
    Ok((
        true,
        format!("2 x {shots} samples pairwise commute; worst coverage margin {min_margin:.4}"),
    ))
}

// 6. The surviving set after the magnitude stage has clique number at most
// 4 / eps^2 in at least 99 of 100 seeded runs.
fn surviving_clique_bound() -> Outcome {
    let streams = Streams::new(0xACC6);
    let targets = Targets::all_paulis(3)?;
    let mut ok = 0usize;
    for run_idx in 0..100usize {
        let epsilon = if run_idx % 2 == 0 { 0.3 } else { 0.5 };
        let mut state_stream = streams.indexed("state", run_idx as u64);
        let rho = match run_idx % 4 {
            0 => haar_random(3, &mut state_stream)?,
            1 => random_product(3, &mut state_stream)?,
            2 => ghz(3)?,
            _ => maximally_mixed(3)?,
        };
        let mut stream = streams.indexed("bell", run_idx as u64);
        let table = learn_magnitudes(&rho, &targets, epsilon, 0.01, &mut stream, false)?;
        let omega = clique_audit(&table, &targets)?;
        if (omega as f64) <= 4.0 / (epsilon * epsilon) {
            ok += 1;
        }
    }
    Ok((
        ok >= 99,
        format!("clique bound held in {ok}/100 magnitude runs"),
    ))
}

// 7. With exact sign probes the multiplicative-weights loop terminates
// early, its output passes dense verification, and recorded regret stays
// within 2 sqrt(n T) on every run.
fn mimicking_states() -> Outcome {
    let streams = Streams::new(0xACC7);
    let mut runs = 0usize;
    let mut max_iter_fraction: f64 = 0.0;
    for trial in 0..50usize {
        let n = 1 + trial % 3;
        let mut stream = streams.indexed("state", trial as u64);
        let rho = match trial % 4 {
            0 => haar_random(n, &mut stream)?,
            1 => random_product(n, &mut stream)?,
            2 => ghz(n)?,
            _ => maximally_mixed(n)?,
        };
        let ops = enumerate_all(n)?;
        let magnitudes: Vec<(PauliOp, f64)> = ops
            .iter()
            .map(|p| Ok((*p, rho.expectation(p)?.abs())))
            .collect::<Result<_>>()?;
        for epsilon in [0.3, 0.5] {
            let mut cfg = MmwConfig::new(n, epsilon)?;
            cfg.record_iterates = true;
            let mut probe = Probe::Exact(&rho);
            let run = compute_mimicking_state(&magnitudes, &mut probe, &cfg)?;
            if !run.early_exit {
                return Ok((false, format!("loop hit the cap (n={n}, eps={epsilon})")));
            }
            for (op, u) in &magnitudes {
                if *u >= 0.75 * epsilon && pauli_trace(op, &run.sigma).abs() < epsilon / 4.0 {
                    return Ok((false, format!("output misses {op} (n={n}, eps={epsilon})")));
                }
            }
            let regret = regret_audit(run.iterates.as_ref().expect("recorded"));
            if regret > run.regret_bound {
                return Ok((
                    false,
                    format!("regret {regret:.3} above bound {:.3}", run.regret_bound),
                ));
            }
            max_iter_fraction = max_iter_fraction.max(run.iterations as f64 / cfg.t_max as f64);
            runs += 1;
        }
    }
    Ok((
        true,
        format!("{runs} runs exit early (worst at {max_iter_fraction:.3} of the cap) with bounded regret"),
    ))
}

// 8. The all-Paulis pipeline is epsilon-accurate on at least 95 of 100
// seeded Haar states at n = 3, and its Bell-stage ledger grows subscaling
// in a log-log fit over n = 2..5.
fn all_paulis_end_to_end() -> Outcome {
    let streams = Streams::new(0xACC8);
    let epsilon = 0.4;
    let mut ok = 0usize;
    for trial in 0..100u64 {
        let trial_streams = streams.child("trial", trial);
        let rho = haar_random(3, &mut trial_streams.stream("state"))?;
        let run = learn_all_paulis(&rho, epsilon, &trial_streams)?;
        let targets = Targets::all_paulis(3)?;
        let max_err = targets
            .ops()
            .iter()
            .enumerate()
            .map(|(i, op)| (run.report.estimates[i] - rho.expectation(op).unwrap()).abs())
            .fold(0.0f64, f64::max);
        if max_err <= epsilon {
            ok += 1;
        }
    }
    let mut points = Vec::new();
    for n in 2..=5usize {
        let trial_streams = streams.child("scaling", n as u64);
        let rho = haar_random(n, &mut trial_streams.stream("state"))?;
        let run = learn_all_paulis(&rho, epsilon, &trial_streams)?;
        let bell: u64 = run
            .report
            .stages
            .iter()
            .filter(|s| s.stage.ends_with(".bell"))
            .map(|s| s.copies)
            .sum();
        points.push(((n as f64).ln(), (bell as f64).ln()));
    }
    let slope = lstsq_slope(&points);
    let passed = ok >= 95 && slope <= 1.5;
    Ok((
        passed,
        format!("{ok}/100 trials within eps; Bell-ledger log-log slope {slope:.3}"),
    ))
}

// 9. The one-body fermionic pipeline gets every pair estimate within eps in
// at least 95 of 100 trials per size, and the single-copy stage's coloring
// stays within 4 / eps^2 + 1.
fn fermionic_end_to_end() -> Outcome {
    let streams = Streams::new(0xACC9);
    let epsilon = 0.3;
    let chi_cap = 4.0 / (epsilon * epsilon) + 1.0;
    let mut summary = Vec::new();
    let mut passed = true;
    for n_modes in [4usize, 6, 8] {
        let mapping = FermionMapping::new(MappingKind::JordanWigner, n_modes)?;
        let expected_targets = (2 * n_modes) * (2 * n_modes - 1) / 2;
        let mut ok = 0usize;
        for trial in 0..100u64 {
            let trial_streams = streams.child("trial", n_modes as u64 * 1000 + trial);
            let rho = random_product(mapping.n_qubits, &mut trial_streams.stream("state"))?;
            let run = learn_fermionic(&rho, &mapping, 1, epsilon, &trial_streams)?;
            if run.targets.len() != expected_targets {
                return Ok((
                    false,
                    format!("{} targets at {n_modes} modes", run.targets.len()),
                ));
            }
            if let Some(stage2) = &run.stage2 {
                if stage2.size_chi > chi_cap {
                    return Ok((
                        false,
                        format!(
                            "stage-2 coloring size {} at {n_modes} modes",
                            stage2.size_chi
                        ),
                    ));
                }
            }
            let within = run.targets.ops().iter().enumerate().all(|(i, op)| {
                (run.report.estimates[i] - rho.expectation(op).unwrap()).abs() <= epsilon
            });
            if within {
                ok += 1;
            }
        }
        passed &= ok >= 95;
        summary.push(format!("{n_modes} modes {ok}/100"));
    }
    Ok((passed, summary.join(", ")))
}

// 10. Compressed-record queries reproduce the pipeline's estimates bit for
// bit, serialization round-trips exactly, and file size tracks the
// predicted bit count within a factor-2 band across sizes.
fn compression_fidelity() -> Outcome {
    let streams = Streams::new(0xACCA);
    let epsilon = 0.5;
    for n in [2usize, 3] {
        let run_streams = streams.child("exact", n as u64);
        let rho = haar_random(n, &mut run_streams.stream("state"))?;
        let targets = Targets::all_paulis(n)?;
        let artifacts =
            learn_two_copy_template(&rho, &targets, Engine::Greedy, epsilon, &run_streams, true)?;
        let rep = compress::compress(&artifacts)?;
        for (i, op) in targets.ops().iter().enumerate() {
            let got = compress::query(&rep, op)?;
            if got.estimate.to_bits() != artifacts.report.estimates[i].to_bits()
                || got.in_s_eps != artifacts.report.in_s_eps[i]
                || got.extrapolated
            {
                return Ok((false, format!("query mismatch on {op} at n={n}")));
            }
            let negated = compress::query(&rep, &op.negated())?;
            if !negated.extrapolated || negated.estimate != -got.estimate {
                return Ok((false, format!("negated query wrong on {op} at n={n}")));
            }
        }
        let bytes = compress::serialize(&rep);
        let back = compress::deserialize(&bytes)?;
        if back != rep || compress::serialize(&back) != bytes {
            return Ok((false, format!("round trip not bit-exact at n={n}")));
        }
    }
    let mut ratios = Vec::new();
    for n in 2..=5usize {
        let run_streams = streams.child("size", n as u64);
        let rho = maximally_mixed(n)?;
        let targets = Targets::all_paulis(n)?;
        let artifacts =
            learn_two_copy_template(&rho, &targets, Engine::Greedy, epsilon, &run_streams, true)?;
        let rep = compress::compress(&artifacts)?;
        let measured = (compress::serialize(&rep).len() * 8) as f64;
        let predicted = compress::predicted_bits(n, rep.bell.len(), rep.records.len());
        ratios.push(measured / predicted);
    }
    let spread = ratios.iter().cloned().fold(0.0, f64::max)
        / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        spread <= 2.0,
        format!(
            "queries bit-exact; size/prediction ratios {:?} (spread {spread:.2})",
            ratios
                .iter()
                .map(|r| (r * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        ),
    ))
}

// 11. Symbolic Liouvillian expansions match dense nested commutators, term
// counts respect their combinatorial cap, and learned derivative matrices
// land within eps of the exact ones.
fn greens_derivatives() -> Outcome {
    let streams = Streams::new(0xACCB);
    let tol = 1e-9;
    for n_modes in 2..=4usize {
        let mapping = FermionMapping::new(MappingKind::JordanWigner, n_modes)?;
        let h = random_sparse(n_modes, 2, 2, &mut streams.indexed("dense", n_modes as u64))?;
        let dim = 1 << mapping.n_qubits;
        let mut h_dense = CMatrix::zeros(dim, dim);
        for term in &h.terms {
            h_dense += mapping.monomial_to_pauli(term.support)?.dense()?
                * Complex64::new(term.coefficient, 0.0);
        }
        for a in 1..=2 * n_modes {
            let mut nested = mapping.majorana(a)?.dense()?;
            for q in 0..=3usize {
                let expansion = lie_expand(&h, a, q)?;
                let mut symbolic = CMatrix::zeros(dim, dim);
                for (&support, &coeff) in &expansion.terms {
                    symbolic +=
                        mapping.monomial_to_pauli(support)?.dense()? * Complex64::new(coeff, 0.0);
                }
                if max_abs_diff(&symbolic, &nested) > tol {
                    return Ok((
                        false,
                        format!("expansion mismatch at {n_modes} modes, a={a}, q={q}"),
                    ));
                }
                nested = (&h_dense * &nested - &nested * &h_dense) * Complex64::new(0.0, 1.0);
            }
        }
    }
    let mut stream = streams.stream("counts");
    for trial in 0..100usize {
        let k = 1 + trial % 2;
        let s = 1 + trial % 3;
        let h = random_sparse(4, k, s, &mut stream)?;
        for a in 1..=8usize {
            for q in 0..=3usize {
                let expansion = lie_expand(&h, a, q)?;
                let terms = expansion.terms.len() as f64;
                if terms > GreensExpansion::term_bound(h.s, h.k, q) {
                    return Ok((
                        false,
                        format!("{terms} terms above the cap (trial {trial}, a={a}, q={q})"),
                    ));
                }
                if expansion.max_degree() > GreensExpansion::degree_bound(h.k, q) {
                    return Ok((false, format!("degree cap broken (trial {trial}, q={q})")));
                }
            }
        }
    }
    let epsilon = 0.3;
    let mapping = FermionMapping::new(MappingKind::TernaryTree, 3)?;
    let mut ok = 0usize;
    for trial in 0..100u64 {
        let trial_streams = streams.child("learned", trial);
        let h = random_sparse(3, 1, 1, &mut trial_streams.stream("hamiltonian"))?;
        let rho = haar_random(mapping.n_qubits, &mut trial_streams.stream("state"))?;
        let mut within = true;
        for q in 0..=1usize {
            let exact = greens_derivative_exact(&rho, &h, q, &mapping)?;
            let learned = learn_greens_derivative(&rho, &h, q, epsilon, &mapping, &trial_streams)?;
            let d = 2 * h.n_modes;
            for a in 0..d {
                for b in 0..d {
                    let dre = (learned.matrix.real[(a, b)] - exact.real[(a, b)]).abs();
                    let dim_err = (learned.matrix.imag[(a, b)] - exact.imag[(a, b)]).abs();
                    if dre > epsilon || dim_err > epsilon {
                        within = false;
                    }
                }
            }
        }
        if within {
            ok += 1;
        }
    }
    Ok((
        ok >= 95,
        format!("expansions and caps exact; learned matrices within eps in {ok}/100 trials"),
    ))
}
