// SPDX-License-Identifier: Apache-2.0

//! Placement of state, control and modifier bits into the 32-bit diffusion
//! blocks, and the per-edge modifier solve.

use serde::{Deserialize, Serialize};

use super::HardenError;
use crate::gf::{solve_gf2, BitVec, MdsSpec, SolveError};

/// Bit position inside one block: `(block, bit)`.
pub type Slot = (usize, u8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub blocks: usize,
    pub error_bits: usize,
    /// Input slot of each current-state bit.
    pub state_in: Vec<Slot>,
    /// Input slot of each control bit.
    pub control_in: Vec<Slot>,
    /// Input slot of each modifier bit.
    pub modifier_in: Vec<Slot>,
    /// Output slot carrying each next-state bit.
    pub state_out: Vec<Slot>,
    /// Output slots that must read 1; the top `error_bits` of every block.
    pub error_out: Vec<Slot>,
    /// Byte lanes reserved for the modifier, per block.
    pub modifier_lanes: Vec<Vec<u8>>,
}

impl BlockLayout {
    pub fn modifier_width(&self) -> usize {
        self.modifier_in.len()
    }

    /// Pack one input triple into per-block 32-bit words.
    pub fn pack(&self, state: &BitVec, control: &BitVec, modifier: &BitVec) -> Vec<u32> {
        let mut words = vec![0u32; self.blocks];
        for (slots, v) in [
            (&self.state_in, state),
            (&self.control_in, control),
            (&self.modifier_in, modifier),
        ] {
            assert_eq!(slots.len(), v.len());
            for (i, &(b, bit)) in slots.iter().enumerate() {
                if v.get(i) {
                    words[b] |= 1 << bit;
                }
            }
        }
        words
    }

    /// Next-state bits and error bits read back from per-block outputs.
    pub fn unpack(&self, out: &[u32]) -> (BitVec, BitVec) {
        let read = |slots: &[Slot]| {
            let bits: Vec<bool> = slots
                .iter()
                .map(|&(b, bit)| out[b] >> bit & 1 == 1)
                .collect();
            BitVec::from_bits(&bits)
        };
        (read(&self.state_out), read(&self.error_out))
    }
}

fn state_share(state_width: usize, blocks: usize, b: usize) -> usize {
    state_width / blocks + usize::from(b < state_width % blocks)
}

fn lanes_needed(error_bits: usize, share: usize) -> usize {
    (error_bits + share).div_ceil(8)
}

/// Smallest block count, or `blocks` if given, that fits the widths.
///
/// In every block the error bits are the topmost output bits and the
/// block's share of next-state bits sits directly below them; the modifier
/// gets as many whole byte lanes as those constrained bits span, which
/// keeps the modifier equation square and invertible. The remaining lanes
/// take the current-state and control bits, dealt round-robin.
pub fn plan_layout(
    state_width: usize,
    control_width: usize,
    error_bits: usize,
    blocks: Option<usize>,
) -> Result<BlockLayout, HardenError> {
    if state_width == 0 {
        return Err(HardenError::Infeasible("state width is zero".into()));
    }
    let fits = |k: usize| {
        let mut cap = 0;
        for b in 0..k {
            let share = state_share(state_width, k, b);
            if error_bits + share > 32 {
                return false;
            }
            cap += 32 - 8 * lanes_needed(error_bits, share);
        }
        cap >= state_width + control_width
    };
    let k = match blocks {
        Some(k) if k == 0 || !fits(k) => {
            return Err(HardenError::Infeasible(format!(
                "{state_width} state bits, {control_width} control bits and {error_bits} error bits per block do not fit {k} block(s)"
            )))
        }
        Some(k) => k,
        None => (1..=64).find(|&k| fits(k)).ok_or_else(|| {
            HardenError::Infeasible(format!(
                "{state_width} state bits, {control_width} control bits and {error_bits} error bits per block exceed 64 blocks"
            ))
        })?,
    };

    let mut modifier_lanes = Vec::with_capacity(k);
    let mut modifier_in = Vec::new();
    let mut error_out = Vec::new();
    let mut free: Vec<Vec<u8>> = Vec::with_capacity(k);
    let mut state_out = vec![(0, 0); state_width];
    for b in 0..k {
        let share = state_share(state_width, k, b);
        let m = lanes_needed(error_bits, share);
        let lanes: Vec<u8> = (4 - m as u8..4).collect();
        for &l in &lanes {
            modifier_in.extend((0..8).map(|i| (b, 8 * l + i)));
        }
        modifier_lanes.push(lanes);
        error_out.extend((0..error_bits).map(|i| (b, 31 - i as u8)));
        free.push((0..8 * (4 - m) as u8).collect());
        // State bit i goes to block i mod k, at the i/k-th slot below the
        // error bits.
        for j in 0..share {
            state_out[j * k + b] = (b, (31 - error_bits - j) as u8);
        }
    }

    let mut cursor = vec![0usize; k];
    let mut next_block = 0usize;
    let mut take = || -> Slot {
        loop {
            let b = next_block;
            next_block = (next_block + 1) % k;
            if cursor[b] < free[b].len() {
                cursor[b] += 1;
                return (b, free[b][cursor[b] - 1]);
            }
        }
    };
    let state_in: Vec<Slot> = (0..state_width).map(|_| take()).collect();
    let control_in: Vec<Slot> = (0..control_width).map(|_| take()).collect();

    Ok(BlockLayout {
        blocks: k,
        error_bits,
        state_in,
        control_in,
        modifier_in,
        state_out,
        error_out,
        modifier_lanes,
    })
}

/// Solve for the modifier that maps `(state, control)` to `next` with every
/// error bit set. Free variables are fixed to zero.
pub fn solve_modifier(
    layout: &BlockLayout,
    m: &MdsSpec,
    state: &BitVec,
    control: &BitVec,
    next: &BitVec,
    edge: &str,
) -> Result<BitVec, HardenError> {
    let base = layout.pack(state, control, &BitVec::zeros(layout.modifier_width()));
    let rows = m.binary_rows();
    let mut modifier = BitVec::zeros(layout.modifier_width());
    for (b, &word) in base.iter().enumerate() {
        let out = m.apply_binary(word);
        let mut constrained: Vec<(u8, bool)> = Vec::new();
        for &(blk, bit) in &layout.error_out {
            if blk == b {
                constrained.push((bit, true));
            }
        }
        for (i, &(blk, bit)) in layout.state_out.iter().enumerate() {
            if blk == b {
                constrained.push((bit, next.get(i)));
            }
        }
        let cols: Vec<usize> = layout
            .modifier_in
            .iter()
            .enumerate()
            .filter(|(_, s)| s.0 == b)
            .map(|(i, _)| i)
            .collect();
        let a_rows: Vec<BitVec> = constrained
            .iter()
            .map(|&(bit, _)| {
                let bits: Vec<bool> = cols
                    .iter()
                    .map(|&c| rows[bit as usize] >> layout.modifier_in[c].1 & 1 == 1)
                    .collect();
                BitVec::from_bits(&bits)
            })
            .collect();
        let rhs: Vec<bool> = constrained
            .iter()
            .map(|&(bit, want)| want ^ (out >> bit & 1 == 1))
            .collect();
        let a = crate::gf::BitMatrix::from_rows(cols.len(), a_rows);
        let x = solve_gf2(&a, &BitVec::from_bits(&rhs)).map_err(|e| match e {
            SolveError::NoSolution { rank, rows, .. } => HardenError::NoSolution {
                edge: edge.to_string(),
                block: b,
                rank,
                rows,
            },
            other => HardenError::Infeasible(other.to_string()),
        })?;
        for (j, &c) in cols.iter().enumerate() {
            modifier.set(c, x.get(j));
        }
    }
    Ok(modifier)
}

/// Evaluate the diffusion for one input triple.
pub fn diffuse(
    layout: &BlockLayout,
    m: &MdsSpec,
    state: &BitVec,
    control: &BitVec,
    modifier: &BitVec,
) -> Vec<u32> {
    layout
        .pack(state, control, modifier)
        .into_iter()
        .map(|w| m.apply(w))
        .collect()
}
