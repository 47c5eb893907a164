//! Compressed classical representation of a two-copy run.
//!
//! A completed pipeline run is boiled down to its raw measurement record:
//! the Bell samples from the magnitude stage, the jointly measured operator
//! sets from the single-copy stage, and their outcomes. No estimates are
//! stored; any `Tr(P rho)` query is answered by replaying the shared
//! estimator over the record in one pass, so a query on the original target
//! set reproduces the pipeline's reported value bit for bit.
//!
//! # File layout (`STDR1`)
//!
//! All integers are little-endian; bit-packed fields fill bytes LSB-first
//! and pad the final byte of each region with zeros.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "STDR1"
//! 5       1     format version (1)
//! 6       1     qubit count n
//! 7       1     reserved (0)
//! 8       8     f64 epsilon
//! 16      8     u64 root seed
//! 24      8     u64 M, number of Bell rows
//! 32      4     u32 L, median batches
//! 36      4     u32 N, shots per batch
//! 40      4     u32 |S|, number of targets
//! 44      17|S| target table: x u64, z u64, sign byte (0 = +1, 1 = -1)
//! ...           Bell block: M rows of 2n bits (bitflip then phaseflip)
//! ...     8     u64 number of basis records (must equal L*N)
//! ...           basis block, per record: u16 set size m, then m
//!               operators of 2n bits each (x then z), byte-aligned
//! ...           outcome block, per record: m bits (1 = eigenvalue -1),
//!               byte-aligned
//! ```
//!
//! The basis sets are stored as explicit operator lists rather than
//! compiled measurement circuits; both carry the same information and the
//! list form keeps the query engine a direct replay.

use crate::error::{Error, Result};
use crate::pauli::PauliOp;
use crate::protocols::{
    magnitude_from_sum, median_of_means_from_records, survives, BasisRecord, TwoCopyArtifacts,
};
use crate::sim::{self, BellSample};
use serde::Serialize;

const MAGIC: &[u8; 5] = b"STDR1";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 44;
const TARGET_ENTRY_LEN: usize = 17;

/// One stored joint measurement: the operators (canonical positive
/// representatives) and the eigenvalue observed for each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredBasis {
    pub ops: Vec<PauliOp>,
    pub outcomes: Vec<i8>,
}

/// In-memory form of a compressed run.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedRep {
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// The target set, signs included.
    pub targets: Vec<PauliOp>,
    pub bell: Vec<BellSample>,
    pub batches: u32,
    pub per_batch: u32,
    pub records: Vec<StoredBasis>,
}

/// Answer to a single query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QueryResult {
    pub estimate: f64,
    pub in_s_eps: bool,
    /// Set when the queried operator was not in the compressed target set,
    /// so no accuracy guarantee attaches to the estimate.
    pub extrapolated: bool,
}

/// Build the compressed representation of a finished two-copy run. The run
/// must have been executed with raw-sample recording enabled.
pub fn compress(artifacts: &TwoCopyArtifacts) -> Result<CompressedRep> {
    let samples = artifacts
        .magnitudes
        .samples
        .as_ref()
        .ok_or_else(|| Error::invalid("run was not executed with raw-sample recording"))?;
    let targets = artifacts.targets.ops().to_vec();
    let (batches, per_batch, records) = match &artifacts.stage2 {
        None => (0, 0, Vec::new()),
        Some(stage2) => {
            let survivors = &artifacts.magnitudes.s_eps;
            let mut records = Vec::with_capacity(stage2.data.records.len());
            for record in &stage2.data.records {
                let mut ops = Vec::with_capacity(record.set.len());
                let mut outcomes = Vec::with_capacity(record.set.len());
                for (slot, &local) in record.set.iter().enumerate() {
                    let op = targets[survivors[local as usize]];
                    let sign = op.sign()? as i8;
                    ops.push(op.abs());
                    outcomes.push(record.outcomes[slot] * sign);
                }
                records.push(StoredBasis { ops, outcomes });
            }
            (
                stage2.data.batches as u32,
                stage2.data.per_batch as u32,
                records,
            )
        }
    };
    Ok(CompressedRep {
        n: artifacts.targets.num_qubits(),
        epsilon: artifacts.report.epsilon,
        seed: artifacts.report.seed,
        targets,
        bell: samples.clone(),
        batches,
        per_batch,
        records,
    })
}

/// Estimate `Tr(P rho)` from the record alone: recompute survival from the
/// Bell block, then replay the median-of-means estimator over the basis
/// records that measured `P`. Runs in one pass over the record.
pub fn query(rep: &CompressedRep, op: &PauliOp) -> Result<QueryResult> {
    if op.num_qubits() != rep.n {
        return Err(Error::DimensionMismatch(format!(
            "query on {} qubits against a {}-qubit record",
            op.num_qubits(),
            rep.n
        )));
    }
    let sign = op.sign()?;
    let extrapolated = !rep.targets.contains(op);
    if op.is_identity_support() {
        return Ok(QueryResult {
            estimate: sign,
            in_s_eps: true,
            extrapolated,
        });
    }
    let mut sum = 0i64;
    for s in &rep.bell {
        sum += i64::from(sim::bell_sign(op, s)?);
    }
    let u = magnitude_from_sum(sum, rep.bell.len() as u64);
    let in_s_eps = survives(u, rep.epsilon);
    if !in_s_eps {
        return Ok(QueryResult {
            estimate: 0.0,
            in_s_eps,
            extrapolated,
        });
    }
    let positive = op.abs();
    let projected: Vec<BasisRecord> = rep
        .records
        .iter()
        .map(|r| match r.ops.iter().position(|q| *q == positive) {
            Some(slot) => BasisRecord {
                set: vec![0],
                outcomes: vec![r.outcomes[slot]],
            },
            None => BasisRecord {
                set: Vec::new(),
                outcomes: Vec::new(),
            },
        })
        .collect();
    let (estimates, _) =
        median_of_means_from_records(1, &projected, rep.batches as usize, rep.per_batch as usize);
    Ok(QueryResult {
        estimate: sign * estimates[0],
        in_s_eps,
        extrapolated,
    })
}

/// The two leading terms of the record-size bound, in bits: one Bell row
/// costs order-n bits, one basis record order-n^2.
pub fn predicted_bits(n: usize, bell_rows: usize, basis_records: usize) -> f64 {
    let n = n as f64;
    n * bell_rows as f64 + n * n * basis_records as f64
}

struct BitWriter {
    bytes: Vec<u8>,
    filled: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            filled: 0,
        }
    }

    fn push(&mut self, value: u64, width: usize) {
        for i in 0..width {
            if self.filled == 0 {
                self.bytes.push(0);
            }
            let bit = ((value >> i) & 1) as u8;
            *self.bytes.last_mut().expect("byte pushed above") |= bit << self.filled;
            self.filled = (self.filled + 1) % 8;
        }
    }

    fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, bit: 0 }
    }

    fn read(&mut self, width: usize) -> u64 {
        let mut value = 0u64;
        for i in 0..width {
            let byte = self.bytes[self.bit / 8];
            let bit = (byte >> (self.bit % 8)) & 1;
            value |= u64::from(bit) << i;
            self.bit += 1;
        }
        value
    }

    /// Every unread bit must be zero padding.
    fn check_padding(&self, base_offset: usize) -> Result<()> {
        for b in self.bit..self.bytes.len() * 8 {
            if (self.bytes[b / 8] >> (b % 8)) & 1 != 0 {
                return Err(Error::format(
                    (base_offset + b / 8) as u64,
                    "nonzero padding bits",
                ));
            }
        }
        Ok(())
    }
}

fn packed_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// Deterministic byte serialization of a compressed run.
pub fn serialize(rep: &CompressedRep) -> Vec<u8> {
    let n = rep.n;
    let mut out = Vec::with_capacity(
        HEADER_LEN
            + rep.targets.len() * TARGET_ENTRY_LEN
            + packed_len(rep.bell.len() * 2 * n)
            + 8
            + rep.records.len() * 8,
    );
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(n as u8);
    out.push(0);
    out.extend_from_slice(&rep.epsilon.to_le_bytes());
    out.extend_from_slice(&rep.seed.to_le_bytes());
    out.extend_from_slice(&(rep.bell.len() as u64).to_le_bytes());
    out.extend_from_slice(&rep.batches.to_le_bytes());
    out.extend_from_slice(&rep.per_batch.to_le_bytes());
    out.extend_from_slice(&(rep.targets.len() as u32).to_le_bytes());
    for op in &rep.targets {
        out.extend_from_slice(&op.x_bits().to_le_bytes());
        out.extend_from_slice(&op.z_bits().to_le_bytes());
        out.push(u8::from(op.sign().expect("targets are Hermitian") < 0.0));
    }
    let mut bell = BitWriter::new();
    for s in &rep.bell {
        bell.push(s.bitflip, n);
        bell.push(s.phaseflip, n);
    }
    out.extend_from_slice(&bell.into_bytes());
    out.extend_from_slice(&(rep.records.len() as u64).to_le_bytes());
    for record in &rep.records {
        out.extend_from_slice(&(record.ops.len() as u16).to_le_bytes());
        let mut bits = BitWriter::new();
        for op in &record.ops {
            bits.push(op.x_bits(), n);
            bits.push(op.z_bits(), n);
        }
        out.extend_from_slice(&bits.into_bytes());
    }
    for record in &rep.records {
        let mut bits = BitWriter::new();
        for &o in &record.outcomes {
            bits.push(u64::from(o < 0), 1);
        }
        out.extend_from_slice(&bits.into_bytes());
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn slice(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.slice(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.slice(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.slice(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.slice(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.slice(8, what)?.try_into().unwrap()))
    }
}

/// Parse a serialized record, reporting the byte offset of any corruption.
pub fn deserialize(bytes: &[u8]) -> Result<CompressedRep> {
    let mut r = ByteReader { bytes, pos: 0 };
    if r.slice(5, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected STDR1"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::format(5, format!("unsupported version {version}")));
    }
    let n = r.u8("qubit count")? as usize;
    if n == 0 || n > crate::pauli::MAX_QUBITS {
        return Err(Error::format(6, format!("qubit count {n} out of range")));
    }
    let reserved = r.u8("reserved byte")?;
    if reserved != 0 {
        return Err(Error::format(7, "nonzero reserved byte"));
    }
    let epsilon = r.f64("epsilon")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::format(8, format!("epsilon {epsilon} out of range")));
    }
    let seed = r.u64("seed")?;
    let m_bell = r.u64("Bell row count")?;
    let batches = r.u32("batch count")?;
    let per_batch = r.u32("batch size")?;
    let num_targets = r.u32("target count")? as usize;
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut targets = Vec::with_capacity(num_targets.min(1 << 20));
    for _ in 0..num_targets {
        let entry_offset = r.pos as u64;
        let x = r.u64("target x bits")?;
        let z = r.u64("target z bits")?;
        let sign = r.u8("target sign")?;
        if x & !mask != 0 || z & !mask != 0 {
            return Err(Error::format(entry_offset, "target bits outside register"));
        }
        if sign > 1 {
            return Err(Error::format(entry_offset + 16, "sign byte must be 0 or 1"));
        }
        targets.push(PauliOp::observable(n, x, z, sign == 1).expect("bits masked above"));
    }
    let bell_offset = r.pos;
    let bell_bytes = r.slice(packed_len(m_bell as usize * 2 * n), "Bell sample block")?;
    let mut bits = BitReader::new(bell_bytes);
    let mut bell = Vec::with_capacity(m_bell as usize);
    for _ in 0..m_bell {
        let bitflip = bits.read(n);
        let phaseflip = bits.read(n);
        bell.push(BellSample { bitflip, phaseflip });
    }
    bits.check_padding(bell_offset)?;
    let count_offset = r.pos as u64;
    let num_records = r.u64("basis record count")?;
    if num_records != u64::from(batches) * u64::from(per_batch) {
        return Err(Error::format(
            count_offset,
            format!("{num_records} basis records but {batches} batches of {per_batch}"),
        ));
    }
    let mut records = Vec::with_capacity(num_records.min(1 << 24) as usize);
    for _ in 0..num_records {
        let m = r.u16("basis set size")? as usize;
        let block_offset = r.pos;
        let block = r.slice(packed_len(m * 2 * n), "basis operator block")?;
        let mut bits = BitReader::new(block);
        let mut ops = Vec::with_capacity(m);
        for _ in 0..m {
            let x = bits.read(n);
            let z = bits.read(n);
            ops.push(PauliOp::observable(n, x, z, false).expect("widths masked by reader"));
        }
        bits.check_padding(block_offset)?;
        records.push(StoredBasis {
            ops,
            outcomes: Vec::new(),
        });
    }
    for record in &mut records {
        let block_offset = r.pos;
        let block = r.slice(packed_len(record.ops.len()), "outcome block")?;
        let mut bits = BitReader::new(block);
        record.outcomes = (0..record.ops.len())
            .map(|_| if bits.read(1) == 1 { -1 } else { 1 })
            .collect();
        bits.check_padding(block_offset)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing data after record"));
    }
    Ok(CompressedRep {
        n,
        epsilon,
        seed,
        targets,
        bell,
        batches,
        per_batch,
        records,
    })
}
