//! End-to-end learning pipelines.
//!
//! Three building blocks are composed into the shipped protocols:
//!
//! * a Bell-sampling magnitude stage that estimates `|Tr(P rho)|` for every
//!   target and keeps the surviving set `s_eps = {P : u_P >= 3 eps / 4}`,
//! * a single-copy stage that draws independent sets from a fractional
//!   coloring, measures them jointly, and aggregates a median-of-means
//!   estimate per operator,
//! * a sign-recovery stage that Bell-samples `rho (x) sigma` against a
//!   known mimicking state `sigma`.
//!
//! The two-copy template runs magnitude + single-copy; the all-Paulis
//! pipeline runs magnitude + multiplicative weights + sign recovery; the
//! fermionic pipelines are the template instantiated with the edge-coloring
//! (one-body) or recursive fractional-coloring (two-body) engines.
//!
//! Every consumed copy of `rho` is counted exactly once in the report
//! ledger. Copies of the mimicking state are classically simulated and
//! free. All loop constants are fixed here rather than hidden in call
//! sites, so budgets are auditable.

use crate::error::{Error, Result};
use crate::fermion::{FermionMapping, MajoranaMonomial};
use crate::graph::clique::{max_clique, CliqueResult};
use crate::graph::kbody::{kbody_fractional_coloring, FractionalColoring};
use crate::graph::misra_gries::misra_gries_one_body;
use crate::graph::nfs::gyarfas_color;
use crate::graph::{greedy_color, CommutationGraph, OperatorSet};
use crate::mmw::{self, MmwConfig, Probe};
use crate::pauli::{enumerate_all, PauliOp};
use crate::rng::{Stream, Streams};
use crate::sim::{self, BellSample, BellSampler, QuantumState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Per-batch shot multiplier: `N = ceil(100 C chi / eps^2)`.
pub const BATCH_CONSTANT: f64 = 4.0;
/// Median batches: `L = ceil(8 ln(|S| / delta))`.
pub const MEDIAN_BATCH_FACTOR: f64 = 8.0;
/// Bell-stage samples: `M = ceil(32 ln(2|S| / delta) / tau^2)`.
pub const BELL_CONSTANT: f64 = 32.0;
/// Overall failure budget, split evenly across a pipeline's stages.
pub const FAILURE_BUDGET: f64 = 0.01;

/// The operators a pipeline estimates. Fermionic target sets carry the
/// Majorana supports alongside the mapped Pauli images so coloring engines
/// can work on the monomial structure directly.
#[derive(Clone, Debug)]
pub struct Targets {
    n: usize,
    ops: Vec<PauliOp>,
    supports: Option<(usize, Vec<u128>)>,
}

impl Targets {
    pub fn paulis(ops: Vec<PauliOp>) -> Result<Self> {
        let n = ops
            .first()
            .ok_or_else(|| Error::invalid("empty target set"))?
            .num_qubits();
        let mut seen = std::collections::HashSet::new();
        for op in &ops {
            if op.num_qubits() != n {
                return Err(Error::DimensionMismatch(format!(
                    "target {op} does not act on {n} qubits"
                )));
            }
            if !op.is_hermitian() {
                return Err(Error::NonHermitian(op.to_string()));
            }
            if !seen.insert(op.canonical_index()) {
                return Err(Error::invalid(format!("duplicate target {op}")));
            }
        }
        Ok(Targets {
            n,
            ops,
            supports: None,
        })
    }

    /// All `4^n` positively signed Pauli strings, canonical order.
    pub fn all_paulis(n: usize) -> Result<Self> {
        Targets::paulis(enumerate_all(n)?)
    }

    /// Majorana monomials under a concrete fermion-to-qubit mapping.
    pub fn fermionic(mapping: &FermionMapping, monomials: &[MajoranaMonomial]) -> Result<Self> {
        if monomials.is_empty() {
            return Err(Error::invalid("empty target set"));
        }
        let mut ops = Vec::with_capacity(monomials.len());
        let mut supports = Vec::with_capacity(monomials.len());
        let mut seen = std::collections::HashSet::new();
        for m in monomials {
            if m.n_modes != mapping.n_modes {
                return Err(Error::DimensionMismatch(format!(
                    "monomial over {} modes, mapping over {}",
                    m.n_modes, mapping.n_modes
                )));
            }
            if !seen.insert(m.support) {
                return Err(Error::invalid(format!("duplicate target {m}")));
            }
            ops.push(mapping.monomial_to_pauli(m.support)?);
            supports.push(m.support);
        }
        Ok(Targets {
            n: mapping.n_qubits,
            ops,
            supports: Some((mapping.n_modes, supports)),
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[PauliOp] {
        &self.ops
    }

    pub fn supports(&self) -> Option<(usize, &[u128])> {
        self.supports.as_ref().map(|(m, s)| (*m, s.as_slice()))
    }

    /// Display label: monomial text for fermionic targets, Pauli string
    /// otherwise.
    pub fn label(&self, i: usize) -> String {
        match &self.supports {
            Some((n_modes, supports)) => MajoranaMonomial::new(*n_modes, supports[i], 1.0)
                .expect("stored support is valid")
                .to_string(),
            None => self.ops[i].to_string(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Targets {
        Targets {
            n: self.n,
            ops: indices.iter().map(|&i| self.ops[i]).collect(),
            supports: self
                .supports
                .as_ref()
                .map(|(m, s)| (*m, indices.iter().map(|&i| s[i]).collect())),
        }
    }

    fn commutation_graph(&self) -> Result<CommutationGraph> {
        let set = match &self.supports {
            Some((n_modes, supports)) => OperatorSet::from_supports(*n_modes, supports.clone())?,
            None => OperatorSet::from_paulis(self.ops.clone())?,
        };
        CommutationGraph::build(set)
    }
}

/// Coloring strategy for the single-copy stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// First-fit proper coloring of the commutation graph.
    Greedy,
    /// Level decomposition via neighbour-first search trees.
    Gyarfas,
    /// Edge coloring of the one-body index graph; degree-2 monomials only.
    MisraGries,
    /// Recursive fractional coloring; uniform-degree monomials only.
    Kbody,
}

impl Engine {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "greedy" => Ok(Engine::Greedy),
            "gyarfas" => Ok(Engine::Gyarfas),
            "misra-gries" => Ok(Engine::MisraGries),
            "kbody" => Ok(Engine::Kbody),
            other => Err(Error::parse(format!(
                "unknown engine {other:?}; expected greedy, gyarfas, misra-gries or kbody"
            ))),
        }
    }

    pub fn fractional_coloring(self, targets: &Targets) -> Result<FractionalColoring> {
        match self {
            Engine::Greedy => {
                let g = targets.commutation_graph()?;
                Ok(FractionalColoring::from_coloring(&greedy_color(
                    g.adjacency(),
                )))
            }
            Engine::Gyarfas => {
                let g = targets.commutation_graph()?;
                Ok(FractionalColoring::from_coloring(&gyarfas_color(
                    g.adjacency(),
                )))
            }
            Engine::MisraGries => {
                let (n_modes, supports) = targets
                    .supports()
                    .ok_or_else(|| Error::invalid("edge-coloring engine needs Majorana targets"))?;
                let coloring = misra_gries_one_body(n_modes, supports)?;
                Ok(FractionalColoring::from_coloring(&coloring))
            }
            Engine::Kbody => {
                let (n_modes, supports) = targets.supports().ok_or_else(|| {
                    Error::invalid("fractional-coloring engine needs Majorana targets")
                })?;
                kbody_fractional_coloring(n_modes, supports)
            }
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Engine::Greedy => "greedy",
            Engine::Gyarfas => "gyarfas",
            Engine::MisraGries => "misra-gries",
            Engine::Kbody => "kbody",
        };
        write!(f, "{name}")
    }
}

/// Stage-one output: magnitude estimates and the surviving set.
#[derive(Clone, Debug)]
pub struct MagnitudeTable {
    pub epsilon: f64,
    /// `u_P` per target, aligned with the target order.
    pub u: Vec<f64>,
    /// Raw integer sums of Bell signs, one per target. The float estimates
    /// derive from these, so serialized runs reproduce them bit-exactly.
    pub sign_sums: Vec<i64>,
    /// Indices of targets with `u_P >= 3 eps / 4`.
    pub s_eps: Vec<usize>,
    pub num_samples: u64,
    /// Two copies of `rho` per Bell sample.
    pub copies_used: u64,
    /// Raw samples when recording was requested (needed for compression).
    pub samples: Option<Vec<BellSample>>,
}

/// `u_P` from an integer sign sum: sqrt of the clamped empirical mean.
pub(crate) fn magnitude_from_sum(sign_sum: i64, num_samples: u64) -> f64 {
    if num_samples == 0 {
        return 0.0;
    }
    (sign_sum as f64 / num_samples as f64).max(0.0).sqrt()
}

pub(crate) fn survives(u: f64, epsilon: f64) -> bool {
    u >= 0.75 * epsilon
}

/// Number of Bell samples for a target-set size and failure budget, at
/// additive accuracy `tau` on the mean of Bell signs.
pub(crate) fn bell_sample_count(num_targets: usize, delta_fail: f64, tau: f64) -> u64 {
    let m = BELL_CONSTANT * (2.0 * num_targets as f64 / delta_fail).ln() / (tau * tau);
    m.ceil() as u64
}

/// Integer sum of `bell_sign(op, s)` over a histogram of outcomes indexed
/// by `bitflip | (phaseflip << n)`.
pub(crate) fn sign_sum_from_histogram(op: &PauliOp, histogram: &[u64], n: usize) -> Result<i64> {
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut sum = 0i64;
    for (bin, &count) in histogram.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let sample = BellSample {
            bitflip: bin as u64 & mask,
            phaseflip: (bin as u64) >> n,
        };
        sum += i64::from(sim::bell_sign(op, &sample)?) * count as i64;
    }
    Ok(sum)
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::invalid(format!(
            "{name} must lie in (0, 1), got {value}"
        )));
    }
    Ok(())
}

/// Estimate `|Tr(P rho)|` for every target by Bell-sampling two copies of
/// `rho` per shot.
pub fn learn_magnitudes(
    rho: &QuantumState,
    targets: &Targets,
    epsilon: f64,
    delta_fail: f64,
    stream: &mut Stream,
    record_samples: bool,
) -> Result<MagnitudeTable> {
    check_probability("precision", epsilon)?;
    check_probability("failure budget", delta_fail)?;
    if targets.n != rho.num_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "targets on {} qubits, state on {}",
            targets.n,
            rho.num_qubits()
        )));
    }
    let delta = epsilon * epsilon / 16.0;
    let num_samples = bell_sample_count(targets.len(), delta_fail, delta);
    let n = targets.n;
    let mut samples = None;
    let histogram = if record_samples {
        let mut sampler = BellSampler::new(rho, rho)?;
        let mut histogram = vec![0u64; 1usize << (2 * n)];
        let mut rec = Vec::with_capacity(num_samples as usize);
        for _ in 0..num_samples {
            let s = sampler.sample(stream);
            histogram[s.bitflip as usize | ((s.phaseflip as usize) << n)] += 1;
            rec.push(s);
        }
        samples = Some(rec);
        histogram
    } else {
        sim::sample_bell_histogram(rho, rho, num_samples, stream)?
    };
    let mut sign_sums = Vec::with_capacity(targets.len());
    for op in &targets.ops {
        sign_sums.push(sign_sum_from_histogram(op, &histogram, n)?);
    }
    let u: Vec<f64> = sign_sums
        .iter()
        .map(|&s| magnitude_from_sum(s, num_samples))
        .collect();
    let s_eps = (0..targets.len())
        .filter(|&i| survives(u[i], epsilon))
        .collect();
    Ok(MagnitudeTable {
        epsilon,
        u,
        sign_sums,
        s_eps,
        num_samples,
        copies_used: 2 * num_samples,
        samples,
    })
}

/// Exact clique number of the commutation graph restricted to the
/// surviving set.
pub fn clique_audit(table: &MagnitudeTable, targets: &Targets) -> Result<usize> {
    if table.s_eps.is_empty() {
        return Ok(0);
    }
    let sub = targets.subset(&table.s_eps);
    let g = sub.commutation_graph()?;
    match max_clique(g.adjacency()) {
        CliqueResult::Exact { witness } => Ok(witness.len()),
        CliqueResult::Bounded { .. } => Err(Error::Unsupported(format!(
            "exact clique audit caps at 128 vertices, got {}",
            sub.len()
        ))),
    }
}

/// One joint measurement: the sampled independent set (indices into the
/// stage's target list) and the observed eigenvalue per member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisRecord {
    pub set: Vec<u32>,
    pub outcomes: Vec<i8>,
}

/// Raw single-copy stage data, grouped as `batches` blocks of `per_batch`
/// consecutive records.
#[derive(Clone, Debug)]
pub struct SingleCopyData {
    pub batches: usize,
    pub per_batch: usize,
    pub records: Vec<BasisRecord>,
    pub copies_used: u64,
}

/// Single-copy stage output.
#[derive(Clone, Debug)]
pub struct FractionalReport {
    pub estimates: Vec<f64>,
    /// Total number of recorded outcomes per operator.
    pub counts: Vec<u64>,
    pub size_chi: f64,
    pub data: SingleCopyData,
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("batch means are finite"));
    let l = values.len();
    if l % 2 == 1 {
        values[l / 2]
    } else {
        0.5 * (values[l / 2 - 1] + values[l / 2])
    }
}

/// Median-of-means over recorded joint measurements: per batch the
/// conditional mean of each operator's outcomes (zero when the operator was
/// never measured in the batch), then the median across batches. This is
/// the single code path behind both the live pipelines and compressed-file
/// queries, which is what makes their outputs bit-identical.
pub(crate) fn median_of_means_from_records(
    num_ops: usize,
    records: &[BasisRecord],
    batches: usize,
    per_batch: usize,
) -> (Vec<f64>, Vec<u64>) {
    debug_assert_eq!(records.len(), batches * per_batch);
    let mut batch_sums = vec![0i64; num_ops];
    let mut batch_counts = vec![0u64; num_ops];
    let mut batch_means: Vec<Vec<f64>> = vec![Vec::with_capacity(batches); num_ops];
    let mut totals = vec![0u64; num_ops];
    for (j, record) in records.iter().enumerate() {
        for (slot, &op) in record.set.iter().enumerate() {
            batch_sums[op as usize] += i64::from(record.outcomes[slot]);
            batch_counts[op as usize] += 1;
        }
        if (j + 1) % per_batch == 0 {
            for p in 0..num_ops {
                let mean = if batch_counts[p] == 0 {
                    0.0
                } else {
                    batch_sums[p] as f64 / batch_counts[p] as f64
                };
                batch_means[p].push(mean);
                totals[p] += batch_counts[p];
                batch_sums[p] = 0;
                batch_counts[p] = 0;
            }
        }
    }
    let estimates = batch_means
        .into_iter()
        .map(|m| median(m).clamp(-1.0, 1.0))
        .collect();
    (estimates, totals)
}

/// Learn every target expectation by repeatedly sampling an independent
/// set from the fractional coloring and measuring it jointly on one copy.
pub fn learn_single_copy_fractional(
    rho: &QuantumState,
    targets: &Targets,
    fc: &FractionalColoring,
    epsilon: f64,
    delta_fail: f64,
    stream: &mut Stream,
) -> Result<FractionalReport> {
    check_probability("precision", epsilon)?;
    check_probability("failure budget", delta_fail)?;
    if targets.n != rho.num_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "targets on {} qubits, state on {}",
            targets.n,
            rho.num_qubits()
        )));
    }
    if fc.num_vertices() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "coloring over {} vertices, {} targets",
            fc.num_vertices(),
            targets.len()
        )));
    }
    if !(fc.size_chi() >= 1.0) {
        return Err(Error::invalid(format!(
            "fractional coloring size {} is below 1",
            fc.size_chi()
        )));
    }
    let per_batch = (100.0 * BATCH_CONSTANT * fc.size_chi() / (epsilon * epsilon)).ceil() as usize;
    let batches = (MEDIAN_BATCH_FACTOR * (targets.len() as f64 / delta_fail).ln())
        .ceil()
        .max(1.0) as usize;
    let mut records = Vec::with_capacity(batches * per_batch);
    let mut scratch_ops: Vec<PauliOp> = Vec::new();
    // The coloring draws from a fixed family of independent sets, so each
    // set's joint outcome law is computed once and then sampled by CDF
    // lookup; oversized sets fall back to collapse measurement.
    let mut cdf_cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    for _ in 0..batches {
        for _ in 0..per_batch {
            let set = fc.sample(stream);
            let outcomes = if set.len() <= sim::JOINT_OUTCOME_CAP {
                if !cdf_cache.contains_key(&set) {
                    scratch_ops.clear();
                    scratch_ops.extend(set.iter().map(|&v| targets.ops[v]));
                    let mut cdf = sim::joint_outcome_distribution(rho, &scratch_ops)?;
                    let mut acc = 0.0;
                    for p in cdf.iter_mut() {
                        acc += *p;
                        *p = acc;
                    }
                    cdf_cache.insert(set.clone(), cdf);
                }
                let cdf = &cdf_cache[&set];
                let target = stream.gen::<f64>() * *cdf.last().unwrap();
                let drawn = cdf.partition_point(|&p| p < target).min(cdf.len() - 1);
                (0..set.len())
                    .map(|j| if (drawn >> j) & 1 == 1 { -1i8 } else { 1 })
                    .collect()
            } else {
                scratch_ops.clear();
                scratch_ops.extend(set.iter().map(|&v| targets.ops[v]));
                sim::measure_commuting_set(rho, &scratch_ops, stream)?
            };
            records.push(BasisRecord {
                set: set.into_iter().map(|v| v as u32).collect(),
                outcomes,
            });
        }
    }
    let (estimates, counts) =
        median_of_means_from_records(targets.len(), &records, batches, per_batch);
    let copies_used = records.len() as u64;
    Ok(FractionalReport {
        estimates,
        counts,
        size_chi: fc.size_chi(),
        data: SingleCopyData {
            batches,
            per_batch,
            records,
            copies_used,
        },
    })
}

/// Stage-three output: recovered signs for the surviving set.
#[derive(Clone, Debug)]
pub struct SignRecovery {
    pub signs: Vec<i8>,
    /// Estimated `Tr(P rho) Tr(P sigma)` products.
    pub products: Vec<f64>,
    /// Flagged when a product estimate sits under the resolution threshold;
    /// should not occur when the mimicking condition holds.
    pub ambiguous: Vec<bool>,
    pub num_samples: u64,
    /// One copy of `rho` per Bell sample; `sigma` is simulated.
    pub copies_used: u64,
}

/// Recover `sign(Tr(P rho))` for each listed operator by Bell-sampling
/// `rho (x) sigma` and dividing out the exactly known `sign(Tr(P sigma))`.
pub fn recover_signs(
    rho: &QuantumState,
    sigma: &QuantumState,
    ops: &[PauliOp],
    epsilon: f64,
    delta_fail: f64,
    stream: &mut Stream,
) -> Result<SignRecovery> {
    check_probability("precision", epsilon)?;
    check_probability("failure budget", delta_fail)?;
    if ops.is_empty() {
        return Ok(SignRecovery {
            signs: Vec::new(),
            products: Vec::new(),
            ambiguous: Vec::new(),
            num_samples: 0,
            copies_used: 0,
        });
    }
    let tau = epsilon * epsilon / 16.0;
    let num_samples = bell_sample_count(ops.len(), delta_fail, tau);
    let n = rho.num_qubits();
    let histogram = sim::sample_bell_histogram(rho, sigma, num_samples, stream)?;
    let mut signs = Vec::with_capacity(ops.len());
    let mut products = Vec::with_capacity(ops.len());
    let mut ambiguous = Vec::with_capacity(ops.len());
    for op in ops {
        let sum = sign_sum_from_histogram(op, &histogram, n)?;
        let product = sum as f64 / num_samples as f64;
        let sigma_value = sigma.expectation(op)?;
        let sign = if (product < 0.0) != (sigma_value < 0.0) {
            -1
        } else {
            1
        };
        signs.push(sign);
        products.push(product);
        ambiguous.push(product.abs() < tau);
    }
    Ok(SignRecovery {
        signs,
        products,
        ambiguous,
        num_samples,
        copies_used: num_samples,
    })
}

/// One ledger row: copies of `rho` consumed by a named stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageLedger {
    pub stage: String,
    pub copies: u64,
}

/// Final pipeline output: one estimate per requested operator plus the
/// exact sample accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimationReport {
    pub epsilon: f64,
    pub seed: u64,
    pub operators: Vec<String>,
    pub estimates: Vec<f64>,
    /// Recorded measurement outcomes per operator (zero-default operators
    /// have zero counts).
    pub counts: Vec<u64>,
    pub in_s_eps: Vec<bool>,
    pub stages: Vec<StageLedger>,
    pub total_copies: u64,
    pub notes: Vec<String>,
}

impl EstimationReport {
    fn new(epsilon: f64, seed: u64, targets: &Targets) -> Self {
        EstimationReport {
            epsilon,
            seed,
            operators: (0..targets.len()).map(|i| targets.label(i)).collect(),
            estimates: vec![0.0; targets.len()],
            counts: vec![0; targets.len()],
            in_s_eps: vec![false; targets.len()],
            stages: Vec::new(),
            total_copies: 0,
            notes: Vec::new(),
        }
    }

    fn push_stage(&mut self, stage: &str, copies: u64) {
        self.stages.push(StageLedger {
            stage: stage.to_string(),
            copies,
        });
        self.total_copies += copies;
    }
}

/// Everything a two-copy run produces, including the raw data needed to
/// build a compressed representation.
#[derive(Clone, Debug)]
pub struct TwoCopyArtifacts {
    pub report: EstimationReport,
    pub targets: Targets,
    pub magnitudes: MagnitudeTable,
    pub stage2: Option<FractionalReport>,
}

/// Magnitude stage, then single-copy learning of the surviving set under
/// the chosen coloring engine. Operators outside `s_eps` report zero.
pub fn learn_two_copy_template(
    rho: &QuantumState,
    targets: &Targets,
    engine: Engine,
    epsilon: f64,
    streams: &Streams,
    record_raw: bool,
) -> Result<TwoCopyArtifacts> {
    let delta_stage = FAILURE_BUDGET / 2.0;
    let mut stream1 = streams.stream("stage1.bell");
    let magnitudes =
        learn_magnitudes(rho, targets, epsilon, delta_stage, &mut stream1, record_raw)?;
    let mut report = EstimationReport::new(epsilon, streams.root_seed(), targets);
    report.push_stage("stage1.bell", magnitudes.copies_used);
    let stage2 = if magnitudes.s_eps.is_empty() {
        report.push_stage("stage2.single_copy", 0);
        None
    } else {
        let sub = targets.subset(&magnitudes.s_eps);
        let fc = engine.fractional_coloring(&sub)?;
        let mut stream2 = streams.stream("stage2.single_copy");
        let stage2 =
            learn_single_copy_fractional(rho, &sub, &fc, epsilon, delta_stage, &mut stream2)?;
        for (k, &idx) in magnitudes.s_eps.iter().enumerate() {
            report.estimates[idx] = stage2.estimates[k];
            report.counts[idx] = stage2.counts[k];
            report.in_s_eps[idx] = true;
        }
        report.push_stage("stage2.single_copy", stage2.data.copies_used);
        Some(stage2)
    };
    Ok(TwoCopyArtifacts {
        report,
        targets: targets.clone(),
        magnitudes,
        stage2,
    })
}

/// All-Paulis run details beyond the report itself.
#[derive(Clone, Debug)]
pub struct AllPauliRun {
    pub report: EstimationReport,
    pub magnitudes: MagnitudeTable,
    pub mmw_iterations: usize,
    pub mmw_early_exit: bool,
    pub mmw_steps: Vec<mmw::MmwStep>,
    pub recovery: SignRecovery,
}

const ALL_PAULI_CAP: usize = 6;

/// Learn every Pauli expectation: magnitudes, a mimicking state via
/// multiplicative weights with sampled sign probes, then sign recovery.
/// `y_P = u_P * sign` on the surviving set, zero elsewhere.
pub fn learn_all_paulis(
    rho: &QuantumState,
    epsilon: f64,
    streams: &Streams,
) -> Result<AllPauliRun> {
    let n = rho.num_qubits();
    if n > ALL_PAULI_CAP {
        return Err(Error::Unsupported(format!(
            "all-Paulis pipeline enumerates 4^n targets and caps at {ALL_PAULI_CAP} qubits, got {n}"
        )));
    }
    let targets = Targets::all_paulis(n)?;
    let delta_stage = FAILURE_BUDGET / 3.0;
    let mut stream1 = streams.stream("stage1.bell");
    let magnitudes = learn_magnitudes(rho, &targets, epsilon, delta_stage, &mut stream1, false)?;

    let cfg = MmwConfig::new(n, epsilon)?;
    let u_entries: Vec<(PauliOp, f64)> = targets
        .ops
        .iter()
        .copied()
        .zip(magnitudes.u.iter().copied())
        .collect();
    let mut stream2 = streams.stream("stage2.probe");
    let mut probe = Probe::Sampled {
        state: rho,
        stream: &mut stream2,
    };
    let run = mmw::compute_mimicking_state(&u_entries, &mut probe, &cfg)?;
    let sigma = QuantumState::from_density_matrix(&run.sigma)?;

    let s_eps_ops: Vec<PauliOp> = magnitudes.s_eps.iter().map(|&i| targets.ops[i]).collect();
    let mut stream3 = streams.stream("stage3.bell");
    let recovery = recover_signs(rho, &sigma, &s_eps_ops, epsilon, delta_stage, &mut stream3)?;

    let mut report = EstimationReport::new(epsilon, streams.root_seed(), &targets);
    for (k, &idx) in magnitudes.s_eps.iter().enumerate() {
        report.estimates[idx] = (magnitudes.u[idx] * f64::from(recovery.signs[k])).clamp(-1.0, 1.0);
        report.counts[idx] = recovery.num_samples;
        report.in_s_eps[idx] = true;
        if recovery.ambiguous[k] {
            report
                .notes
                .push(format!("ambiguous sign for {}", targets.ops[idx]));
        }
    }
    if !run.early_exit {
        report
            .notes
            .push("mimicking-state loop hit its iteration cap".to_string());
    }
    if !run.output_condition_ok {
        report
            .notes
            .push("mimicking state failed dense re-verification".to_string());
    }
    report.push_stage("stage1.bell", magnitudes.copies_used);
    report.push_stage("stage2.probe", run.copies_used);
    report.push_stage("stage3.bell", recovery.copies_used);
    Ok(AllPauliRun {
        report,
        magnitudes,
        mmw_iterations: run.iterations,
        mmw_early_exit: run.early_exit,
        mmw_steps: run.steps,
        recovery,
    })
}

/// Fermionic pipelines: all degree-`2k` Majorana monomials under the given
/// mapping, learned with the engine matched to the body order.
pub fn learn_fermionic(
    rho: &QuantumState,
    mapping: &FermionMapping,
    k: usize,
    epsilon: f64,
    streams: &Streams,
) -> Result<TwoCopyArtifacts> {
    let engine = match k {
        1 => Engine::MisraGries,
        2 => Engine::Kbody,
        _ => {
            return Err(Error::Unsupported(format!(
                "fermionic pipelines support k in {{1, 2}}, got {k}"
            )))
        }
    };
    let monomials = crate::fermion::enumerate_even(mapping.n_modes, k)?;
    let targets = Targets::fermionic(mapping, &monomials)?;
    learn_two_copy_template(rho, &targets, engine, epsilon, streams, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermion::MappingKind;
    use crate::graph::Coloring;
    use crate::sim::{maximally_mixed, random_product, StateVector};

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

    fn ops(strings: &[&str]) -> Vec<PauliOp> {
        strings.iter().map(|s| PauliOp::parse(s).unwrap()).collect()
    }

    #[test]
    fn magnitudes_are_exact_for_stabilizer_observables() {
        let rho = pure("0");
        let targets = Targets::paulis(ops(&["I", "X", "Y", "Z"])).unwrap();
        let mut stream = Streams::new(11).stream("bell");
        let table = learn_magnitudes(&rho, &targets, 0.8, 0.01, &mut stream, false).unwrap();
        assert_eq!(table.u[0], 1.0);
        assert_eq!(table.u[3], 1.0);
        assert!(table.u[1] < 0.2 && table.u[2] < 0.2);
        assert_eq!(table.s_eps, vec![0, 3]);
        assert_eq!(table.copies_used, 2 * table.num_samples);
    }

    #[test]
    fn mixed_state_survivor_set_is_empty() {
        let rho = maximally_mixed(2).unwrap();
        let targets = Targets::paulis(
            enumerate_all(2)
                .unwrap()
                .into_iter()
                .filter(|p| !p.is_identity_support())
                .collect(),
        )
        .unwrap();
        let mut stream = Streams::new(5).stream("bell");
        let table = learn_magnitudes(&rho, &targets, 0.6, 0.01, &mut stream, false).unwrap();
        assert!(table.s_eps.is_empty(), "survivors: {:?}", table.s_eps);
    }

    #[test]
    fn surviving_operators_have_large_true_magnitudes() {
        // The survival event: everything in s_eps has |Tr(P rho)| >= eps/2,
        // and everything dropped has |Tr(P rho)| <= eps.
        let streams = Streams::new(23);
        let targets = Targets::all_paulis(3).unwrap();
        for trial in 0..5 {
            let mut state_stream = streams.indexed("state", trial);
            let rho = sim::haar_random(3, &mut state_stream).unwrap();
            let mut stream = streams.indexed("bell", trial);
            let epsilon = 0.5;
            let table =
                learn_magnitudes(&rho, &targets, epsilon, 0.01, &mut stream, false).unwrap();
            for (i, op) in targets.ops().iter().enumerate() {
                let exact = rho.expectation(op).unwrap().abs();
                if table.s_eps.contains(&i) {
                    assert!(exact >= epsilon / 2.0, "{op}: |{exact}| survived");
                } else {
                    assert!(exact <= epsilon, "{op}: |{exact}| was dropped");
                }
            }
        }
    }

    #[test]
    fn clique_audit_handles_trivial_sets() {
        let rho = pure("00");
        let targets = Targets::paulis(ops(&["ZI", "IZ", "XI"])).unwrap();
        let mut stream = Streams::new(3).stream("bell");
        let table = learn_magnitudes(&rho, &targets, 0.8, 0.01, &mut stream, false).unwrap();
        // Survivors are the two commuting Z observables.
        assert_eq!(table.s_eps, vec![0, 1]);
        assert_eq!(clique_audit(&table, &targets).unwrap(), 1);
        let empty = MagnitudeTable {
            s_eps: Vec::new(),
            ..table
        };
        assert_eq!(clique_audit(&empty, &targets).unwrap(), 0);
    }

    #[test]
    fn single_copy_stage_is_exact_on_stabilizers() {
        let rho = pure("0");
        let targets = Targets::paulis(ops(&["Z"])).unwrap();
        let fc = FractionalColoring::from_coloring(&Coloring::new(vec![0]));
        let mut stream = Streams::new(9).stream("sc");
        let report =
            learn_single_copy_fractional(&rho, &targets, &fc, 0.4, 0.01, &mut stream).unwrap();
        assert_eq!(report.estimates, vec![1.0]);
        assert_eq!(report.counts[0], report.data.copies_used);
        assert_eq!(
            report.data.records.len(),
            report.data.batches * report.data.per_batch
        );
    }

    #[test]
    fn single_copy_stage_learns_anticommuting_triples() {
        let streams = Streams::new(31);
        let targets = Targets::paulis(ops(&["X", "Y", "Z"])).unwrap();
        let fc = FractionalColoring::from_coloring(&Coloring::new(vec![0, 1, 2]));
        assert_eq!(fc.size_chi(), 3.0);
        for trial in 0..3 {
            let mut state_stream = streams.indexed("state", trial);
            let rho = sim::haar_random(1, &mut state_stream).unwrap();
            let mut stream = streams.indexed("sc", trial);
            let report =
                learn_single_copy_fractional(&rho, &targets, &fc, 0.2, 0.01, &mut stream).unwrap();
            for (i, op) in targets.ops().iter().enumerate() {
                let exact = rho.expectation(op).unwrap();
                assert!(
                    (report.estimates[i] - exact).abs() <= 0.2,
                    "trial {trial} {op}: {} vs {exact}",
                    report.estimates[i]
                );
            }
        }
    }

    #[test]
    fn batch_counts_concentrate_at_the_coverage_floor() {
        let rho = maximally_mixed(1).unwrap();
        let targets = Targets::paulis(ops(&["X", "Y", "Z"])).unwrap();
        let fc = FractionalColoring::from_coloring(&Coloring::new(vec![0, 1, 2]));
        let mut stream = Streams::new(17).stream("sc");
        let report =
            learn_single_copy_fractional(&rho, &targets, &fc, 0.4, 0.01, &mut stream).unwrap();
        let shots = report.data.copies_used as f64;
        for &count in &report.counts {
            let rate = count as f64 / shots;
            assert!((rate - 1.0 / 3.0).abs() < 0.05, "rate {rate}");
        }
    }

    #[test]
    fn median_of_means_ignores_empty_batches_and_clamps() {
        let records = vec![
            BasisRecord {
                set: vec![0],
                outcomes: vec![1],
            },
            BasisRecord {
                set: vec![],
                outcomes: vec![],
            },
            BasisRecord {
                set: vec![0],
                outcomes: vec![-1],
            },
            BasisRecord {
                set: vec![0],
                outcomes: vec![-1],
            },
        ];
        let (estimates, counts) = median_of_means_from_records(1, &records, 2, 2);
        // Batch means: +1 (one observation) and -1 (two observations).
        assert_eq!(estimates, vec![0.0]);
        assert_eq!(counts, vec![3]);
        let (single, _) = median_of_means_from_records(1, &records[..2], 1, 2);
        assert_eq!(single, vec![1.0]);
    }

    #[test]
    fn sign_recovery_matches_direct_evaluation() {
        let rho = pure("0");
        let z = ops(&["Z"]);
        let mut stream = Streams::new(2).stream("signs");
        let rec = recover_signs(&rho, &rho.clone(), &z, 0.5, 0.01, &mut stream).unwrap();
        assert_eq!(rec.signs, vec![1]);
        assert!(!rec.ambiguous[0]);
        assert_eq!(rec.copies_used, rec.num_samples);

        // rho = |1>, sigma with Tr(Z sigma) = -0.3: the product estimate is
        // near +0.3 and the recovered sign is -1.
        let rho1 = pure("1");
        let sigma = QuantumState::ensemble(vec![
            sim::EnsembleMember {
                weight: 0.35,
                vector: StateVector::computational(1, 0).unwrap(),
                factors: None,
            },
            sim::EnsembleMember {
                weight: 0.65,
                vector: StateVector::computational(1, 1).unwrap(),
                factors: None,
            },
        ])
        .unwrap();
        let mut stream = Streams::new(4).stream("signs");
        let rec = recover_signs(&rho1, &sigma, &z, 0.5, 0.01, &mut stream).unwrap();
        assert!((rec.products[0] - 0.3).abs() < 0.05, "{}", rec.products[0]);
        assert_eq!(rec.signs, vec![-1]);

        let empty = recover_signs(&rho, &rho.clone(), &[], 0.5, 0.01, &mut stream).unwrap();
        assert_eq!(empty.num_samples, 0);
    }

    #[test]
    fn template_zeroes_non_survivors_and_learns_the_rest() {
        let rho = pure("00");
        let targets = Targets::all_paulis(2).unwrap();
        let streams = Streams::new(7);
        let run =
            learn_two_copy_template(&rho, &targets, Engine::Greedy, 0.5, &streams, false).unwrap();
        for (i, op) in targets.ops().iter().enumerate() {
            let exact = rho.expectation(op).unwrap();
            if run.report.in_s_eps[i] {
                assert!(
                    (run.report.estimates[i] - exact).abs() <= 0.5,
                    "{op}: {} vs {exact}",
                    run.report.estimates[i]
                );
            } else {
                assert_eq!(run.report.estimates[i], 0.0);
                assert!(exact.abs() <= 0.5, "{op} with |{exact}| was zeroed");
                assert_eq!(run.report.counts[i], 0);
            }
        }
        let ledger_total: u64 = run.report.stages.iter().map(|s| s.copies).sum();
        assert_eq!(run.report.total_copies, ledger_total);
        assert_eq!(run.report.stages[0].copies, run.magnitudes.copies_used);
        assert_eq!(
            run.report.stages[1].copies,
            run.stage2.as_ref().unwrap().data.copies_used
        );
    }

    #[test]
    fn template_skips_stage_two_for_featureless_states() {
        let rho = maximally_mixed(2).unwrap();
        let targets = Targets::paulis(
            enumerate_all(2)
                .unwrap()
                .into_iter()
                .filter(|p| !p.is_identity_support())
                .collect(),
        )
        .unwrap();
        let streams = Streams::new(13);
        let run =
            learn_two_copy_template(&rho, &targets, Engine::Gyarfas, 0.6, &streams, false).unwrap();
        assert!(run.stage2.is_none());
        assert!(run.report.estimates.iter().all(|&y| y == 0.0));
        assert_eq!(run.report.stages[1].copies, 0);
    }

    #[test]
    fn all_pauli_pipeline_learns_a_ghz_state() {
        let rho = sim::ghz(3).unwrap();
        let streams = Streams::new(29);
        let run = learn_all_paulis(&rho, 0.4, &streams).unwrap();
        assert!(run.mmw_early_exit);
        let targets = Targets::all_paulis(3).unwrap();
        for (i, op) in targets.ops().iter().enumerate() {
            let exact = rho.expectation(op).unwrap();
            assert!(
                (run.report.estimates[i] - exact).abs() <= 0.4,
                "{op}: {} vs {exact}",
                run.report.estimates[i]
            );
        }
        for s in ["XXX", "ZZI", "IZZ", "ZIZ"] {
            let i = targets
                .ops()
                .iter()
                .position(|p| *p == PauliOp::parse(s).unwrap())
                .unwrap();
            assert_eq!(run.report.estimates[i], 1.0, "{s}");
        }
        assert_eq!(run.report.stages.len(), 3);
        assert!(run.report.notes.is_empty(), "{:?}", run.report.notes);
    }

    #[test]
    fn all_pauli_pipeline_zeroes_the_mixed_state() {
        let rho = maximally_mixed(2).unwrap();
        let streams = Streams::new(37);
        let run = learn_all_paulis(&rho, 0.5, &streams).unwrap();
        let targets = Targets::all_paulis(2).unwrap();
        for (i, op) in targets.ops().iter().enumerate() {
            if op.is_identity_support() {
                assert_eq!(run.report.estimates[i], 1.0);
            } else {
                assert_eq!(run.report.estimates[i], 0.0, "{op}");
            }
        }
    }

    #[test]
    fn fermionic_one_body_pipeline_meets_precision() {
        let mapping = FermionMapping::new(MappingKind::JordanWigner, 3).unwrap();
        let streams = Streams::new(43);
        let mut state_stream = streams.stream("state");
        let rho = random_product(3, &mut state_stream).unwrap();
        let run = learn_fermionic(&rho, &mapping, 1, 0.4, &streams).unwrap();
        assert_eq!(run.report.operators.len(), 15);
        assert!(run.report.operators[0].starts_with("G["));
        for (i, op) in run.targets.ops().iter().enumerate() {
            let exact = rho.expectation(op).unwrap();
            assert!(
                (run.report.estimates[i] - exact).abs() <= 0.4,
                "{}: {} vs {exact}",
                run.report.operators[i],
                run.report.estimates[i]
            );
        }
    }

    #[test]
    fn fermionic_two_body_pipeline_meets_precision() {
        let mapping = FermionMapping::new(MappingKind::TernaryTree, 3).unwrap();
        let streams = Streams::new(47);
        let mut state_stream = streams.stream("state");
        let rho = random_product(mapping.n_qubits, &mut state_stream).unwrap();
        let run = learn_fermionic(&rho, &mapping, 2, 0.5, &streams).unwrap();
        assert_eq!(run.report.operators.len(), 15);
        for (i, op) in run.targets.ops().iter().enumerate() {
            let exact = rho.expectation(op).unwrap();
            assert!(
                (run.report.estimates[i] - exact).abs() <= 0.5,
                "{}: {} vs {exact}",
                run.report.operators[i],
                run.report.estimates[i]
            );
        }
        assert!(learn_fermionic(&rho, &mapping, 3, 0.5, &streams).is_err());
    }

    #[test]
    fn engine_parsing_round_trips() {
        for engine in [
            Engine::Greedy,
            Engine::Gyarfas,
            Engine::MisraGries,
            Engine::Kbody,
        ] {
            assert_eq!(Engine::parse(&engine.to_string()).unwrap(), engine);
        }
        assert!(Engine::parse("quantum").is_err());
        let pauli_targets = Targets::paulis(ops(&["XX", "ZZ"])).unwrap();
        assert!(Engine::MisraGries
            .fractional_coloring(&pauli_targets)
            .is_err());
        assert!(Engine::Kbody.fractional_coloring(&pauli_targets).is_err());
    }

    #[test]
    fn target_construction_rejects_bad_inputs() {
        assert!(Targets::paulis(vec![]).is_err());
        assert!(Targets::paulis(ops(&["X", "X"])).is_err());
        assert!(Targets::paulis(ops(&["X", "XX"])).is_err());
        let mapping = FermionMapping::new(MappingKind::JordanWigner, 2).unwrap();
        let wrong = MajoranaMonomial::new(3, 0b11, 1.0).unwrap();
        assert!(Targets::fermionic(&mapping, &[wrong]).is_err());
        let rho = pure("00");
        let targets = Targets::paulis(ops(&["ZI"])).unwrap();
        let fc = FractionalColoring::from_coloring(&Coloring::new(vec![0, 1]));
        let mut stream = Streams::new(1).stream("x");
        assert!(learn_single_copy_fractional(&rho, &targets, &fc, 0.4, 0.01, &mut stream).is_err());
    }
}
