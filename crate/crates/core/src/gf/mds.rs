// SPDX-License-Identifier: Apache-2.0

//! 4x4 diffusion matrices over the ring, their 32x32 binary expansion and an
//! XOR-only circuit that realizes them.
//!
//! Vectors are packed as `u32`: byte lane `i` (bits `8i..8i+8`) holds the
//! ring element `x_i`, and output lane `r` is `sum_j M[r][j] * x_j`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gf2::{BitMatrix, BitVec};
use super::ring::RingElem;
use crate::par::{self, Execution};

pub type Entries = [[RingElem; 4]; 4];

/// Minimum branch number accepted for a registered diffusion matrix.
pub const REQUIRED_BRANCH_NUMBER: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MdsError {
    #[error("matrix {name} has branch number {found}, need at least {REQUIRED_BRANCH_NUMBER}")]
    WeakDiffusion { name: String, found: u32 },
    #[error("unknown diffusion matrix {0:?}")]
    Unknown(String),
}

/// One node of the bit-level XOR network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum XorNode {
    Input { bit: u8 },
    Xor { a: usize, b: usize, layer: u8 },
}

/// Bit-level DAG of two-input XORs. Nodes are stored in topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XorCircuit {
    pub nodes: Vec<XorNode>,
    /// Node driving each of the 32 output bits.
    pub outputs: Vec<usize>,
}

impl XorCircuit {
    pub fn xor_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, XorNode::Xor { .. }))
            .count()
    }

    pub fn depth(&self) -> u8 {
        self.nodes
            .iter()
            .map(|n| match n {
                XorNode::Xor { layer, .. } => *layer,
                XorNode::Input { .. } => 0,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, v: u32) -> u32 {
        let mut vals = vec![false; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            vals[i] = match *n {
                XorNode::Input { bit } => v >> bit & 1 == 1,
                XorNode::Xor { a, b, .. } => vals[a] ^ vals[b],
            };
        }
        self.outputs
            .iter()
            .enumerate()
            .fold(0u32, |acc, (bit, &n)| acc | ((vals[n] as u32) << bit))
    }
}

/// A registered diffusion matrix with all three of its representations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdsSpec {
    name: String,
    entries: Entries,
    /// Row `r` is output bit `r`; bit `c` of a row is the coefficient of
    /// input bit `c`.
    binary_form: [u32; 32],
    circuit: XorCircuit,
}

/// The lightweight 4x4 matrix from the depth-3, 8-XOR / 3-multiplication
/// family, with a = X^8 + X^2 + 1.
pub fn reference_entries() -> Entries {
    let e = |v: u8| RingElem(v);
    [
        [e(2), e(2), e(3), e(1)],
        [e(1), e(3), e(6), e(4)],
        [e(3), e(1), e(4), e(4)],
        [e(3), e(2), e(1), e(3)],
    ]
}

pub const REFERENCE_NAME: &str = "M8_3_4_6";

impl MdsSpec {
    pub fn reference() -> MdsSpec {
        Self::new(REFERENCE_NAME, reference_entries()).expect("reference matrix is MDS")
    }

    /// Look up a built-in matrix by name.
    pub fn by_name(name: &str) -> Result<MdsSpec, MdsError> {
        match name {
            REFERENCE_NAME | "reference" => Ok(Self::reference()),
            other => Err(MdsError::Unknown(other.to_string())),
        }
    }

    /// Register an alternative matrix. Rejected unless its branch number is
    /// at least [`REQUIRED_BRANCH_NUMBER`].
    pub fn new(name: &str, entries: Entries) -> Result<MdsSpec, MdsError> {
        let spec = Self::new_unchecked(name, entries);
        let found = single_byte_branch_number(&spec);
        if found < REQUIRED_BRANCH_NUMBER || !spec.is_mds() {
            return Err(MdsError::WeakDiffusion {
                name: name.to_string(),
                found,
            });
        }
        Ok(spec)
    }

    /// Build without the diffusion check. Meant for negative controls.
    pub fn new_unchecked(name: &str, entries: Entries) -> MdsSpec {
        let binary_form = expand_binary(&entries);
        let circuit = synthesize_circuit(&entries);
        MdsSpec {
            name: name.to_string(),
            entries,
            binary_form,
            circuit,
        }
    }

    pub fn identity() -> MdsSpec {
        let mut e = [[RingElem::ZERO; 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = RingElem::ONE;
        }
        Self::new_unchecked("identity", e)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &Entries {
        &self.entries
    }

    pub fn binary_rows(&self) -> &[u32; 32] {
        &self.binary_form
    }

    pub fn circuit(&self) -> &XorCircuit {
        &self.circuit
    }

    pub fn binary_matrix(&self) -> BitMatrix {
        let rows = self
            .binary_form
            .iter()
            .map(|&r| BitVec::from_u64(r as u64, 32))
            .collect();
        BitMatrix::from_rows(32, rows)
    }

    /// Byte-level product over the ring.
    pub fn apply(&self, v: u32) -> u32 {
        let x: [RingElem; 4] = std::array::from_fn(|j| RingElem((v >> (8 * j)) as u8));
        let mut out = 0u32;
        for (r, row) in self.entries.iter().enumerate() {
            let mut acc = RingElem::ZERO;
            for (m, xj) in row.iter().zip(&x) {
                acc += *m * *xj;
            }
            out |= (acc.0 as u32) << (8 * r);
        }
        out
    }

    /// Product through the 32x32 binary expansion.
    pub fn apply_binary(&self, v: u32) -> u32 {
        self.binary_form
            .iter()
            .enumerate()
            .fold(0u32, |acc, (bit, row)| {
                acc | (((row & v).count_ones() & 1) << bit)
            })
    }

    pub fn apply_circuit(&self, v: u32) -> u32 {
        self.circuit.eval(v)
    }

    /// Exact MDS test: every square sub-matrix is non-singular over GF(2)
    /// after binary expansion.
    pub fn is_mds(&self) -> bool {
        let full = self.binary_matrix();
        for size in 1..=4usize {
            for rows in subsets(size) {
                for cols in subsets(size) {
                    let r: Vec<usize> = rows.iter().flat_map(|&b| 8 * b..8 * b + 8).collect();
                    let c: Vec<usize> = cols.iter().flat_map(|&b| 8 * b..8 * b + 8).collect();
                    if full.select(&r, &c).rank() != 8 * size {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn to_json(&self) -> MdsJson {
        MdsJson {
            name: self.name.clone(),
            polynomial: "x^8+x^2+1".to_string(),
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(|e| format!("{:#04x}", e.0)).collect())
                .collect(),
            binary_form: self
                .binary_form
                .iter()
                .map(|r| format!("{r:#010x}"))
                .collect(),
            xor_count: self.circuit.xor_count(),
            depth: self.circuit.depth(),
            circuit: self.circuit.clone(),
        }
    }
}

/// Audit form of an [`MdsSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdsJson {
    pub name: String,
    pub polynomial: String,
    pub entries: Vec<Vec<String>>,
    pub binary_form: Vec<String>,
    pub xor_count: usize,
    pub depth: u8,
    pub circuit: XorCircuit,
}

fn subsets(size: usize) -> Vec<Vec<usize>> {
    (0u8..16)
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| (0..4).filter(|&i| m >> i & 1 == 1).collect())
        .collect()
}

fn expand_binary(entries: &Entries) -> [u32; 32] {
    let mut rows = [0u32; 32];
    for (r, row) in entries.iter().enumerate() {
        for (j, m) in row.iter().enumerate() {
            let cols = m.bit_matrix();
            for (i, col) in cols.iter().enumerate() {
                for b in 0..8 {
                    if col >> b & 1 == 1 {
                        rows[8 * r + b] |= 1 << (8 * j + i);
                    }
                }
            }
        }
    }
    rows
}

fn active_bytes(v: u32) -> u32 {
    (0..4).filter(|i| (v >> (8 * i)) & 0xff != 0).count() as u32
}

fn single_byte_branch_number(m: &MdsSpec) -> u32 {
    let mut best = u32::MAX;
    for lane in 0..4 {
        for b in 1..=255u32 {
            let v = b << (8 * lane);
            best = best.min(1 + active_bytes(m.apply_binary(v)));
        }
    }
    best
}

/// Minimum of active input plus active output bytes. Exhaustive over every
/// single-active-byte input, then `samples` random multi-byte inputs to look
/// for a counterexample below that minimum.
pub fn branch_number(m: &MdsSpec, samples: u64, seed: u64, exec: Execution) -> u32 {
    const CHUNK: u64 = 1 << 16;
    let sweep = single_byte_branch_number(m);
    let chunks = samples.div_ceil(CHUNK) as usize;
    let sampled = par::map_indexed(exec, chunks, |c| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let n = CHUNK.min(samples - c as u64 * CHUNK);
        let mut best = u32::MAX;
        for _ in 0..n {
            let v: u32 = rng.random();
            if v == 0 {
                continue;
            }
            best = best.min(active_bytes(v) + active_bytes(m.apply_binary(v)));
        }
        best
    });
    sampled.into_iter().fold(sweep, u32::min)
}

// Byte-level straight-line program, lowered to bits afterwards.
#[derive(Debug, Clone, Copy)]
enum ByteOp {
    Input(usize),
    Alpha(usize),
    Xor(usize, usize),
}

/// Byte-wise synthesis: multiply inputs by powers of a as needed, share the
/// most frequent pairs of terms across output rows (greedy, lowest index wins
/// ties), then sum what is left in each row shallowest-first.
fn synthesize_circuit(entries: &Entries) -> XorCircuit {
    let mut ops: Vec<ByteOp> = (0..4).map(ByteOp::Input).collect();
    let mut depth: Vec<u8> = vec![0; 4];
    let mut powers: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    for j in 0..4 {
        powers.insert((j, 0), j);
    }

    let mut rows: Vec<Vec<usize>> = Vec::new();
    for row in entries {
        let mut terms = Vec::new();
        for (j, m) in row.iter().enumerate() {
            for d in 0..8u32 {
                if m.0 >> d & 1 == 0 {
                    continue;
                }
                let mut cur = j;
                for p in 1..=d {
                    cur = match powers.get(&(j, p)) {
                        Some(&n) => n,
                        None => {
                            ops.push(ByteOp::Alpha(cur));
                            depth.push(depth[cur] + 1);
                            let n = ops.len() - 1;
                            powers.insert((j, p), n);
                            n
                        }
                    };
                }
                terms.push(cur);
            }
        }
        terms.sort_unstable();
        rows.push(terms);
    }

    loop {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for row in &rows {
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    *counts.entry((a, b)).or_default() += 1;
                }
            }
        }
        let best = counts
            .iter()
            .filter(|(_, &c)| c >= 2)
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)));
        let Some((&(a, b), _)) = best else { break };
        ops.push(ByteOp::Xor(a, b));
        depth.push(depth[a].max(depth[b]) + 1);
        let n = ops.len() - 1;
        for row in rows.iter_mut() {
            if row.contains(&a) && row.contains(&b) {
                row.retain(|&t| t != a && t != b);
                row.push(n);
                row.sort_unstable();
            }
        }
    }

    let mut row_out = Vec::with_capacity(4);
    for mut row in rows {
        while row.len() > 1 {
            row.sort_by_key(|&t| (depth[t], t));
            let (a, b) = (row[0], row[1]);
            ops.push(ByteOp::Xor(a, b));
            depth.push(depth[a].max(depth[b]) + 1);
            row.drain(0..2);
            row.push(ops.len() - 1);
        }
        row_out.push(row[0]);
    }

    lower_to_bits(&ops, &depth, &row_out)
}

fn lower_to_bits(ops: &[ByteOp], depth: &[u8], row_out: &[usize]) -> XorCircuit {
    let mut nodes: Vec<XorNode> = (0..32).map(|bit| XorNode::Input { bit }).collect();
    let mut lanes: Vec<[usize; 8]> = Vec::with_capacity(ops.len());
    for (idx, op) in ops.iter().enumerate() {
        let layer = depth[idx];
        let lane = match *op {
            ByteOp::Input(j) => std::array::from_fn(|i| 8 * j + i),
            ByteOp::Alpha(src) => {
                // a * x: rotate up one position, the carried-out bit also
                // lands on position 2.
                let s = lanes[src];
                nodes.push(XorNode::Xor {
                    a: s[1],
                    b: s[7],
                    layer,
                });
                let x = nodes.len() - 1;
                [s[7], s[0], x, s[2], s[3], s[4], s[5], s[6]]
            }
            ByteOp::Xor(a, b) => {
                let (la, lb) = (lanes[a], lanes[b]);
                std::array::from_fn(|i| {
                    nodes.push(XorNode::Xor {
                        a: la[i],
                        b: lb[i],
                        layer,
                    });
                    nodes.len() - 1
                })
            }
        };
        lanes.push(lane);
    }
    let outputs = row_out.iter().flat_map(|&r| lanes[r]).collect();
    XorCircuit { nodes, outputs }
}
