// SPDX-License-Identifier: Apache-2.0

//! Hardened next-state logic.
//!
//! States and control-flow edges get minimum-distance codes. Each cycle the
//! current state codeword, the control codeword and a per-edge modifier are
//! spread over `k` 32-bit blocks, diffused through the MDS matrix, and the
//! next state is read from the outputs. The top `e` output bits of every
//! block must come out as 1; if any does not, or no edge matches, the next
//! state collapses to the all-zeros ERROR word and the alert latches.
//!
//! The control word is one codeword per edge: the environment (see
//! [`HardenedDesign::encode_trace`]) presents the codeword of the edge the
//! plain machine would take.

mod build;
mod check;
mod layout;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use build::{build_hardened_netlist, ALERT_PORT, CONTROL_PORT, STATE_PORT};
pub use check::{check_bisimulation, check_traces, random_traces, BisimError};
pub use layout::{diffuse, plan_layout, solve_modifier, BlockLayout, Slot};

use crate::coding::{CodeBook, CodeBookJson, CodingError, ERROR_SYMBOL};
use crate::fsm::{self, Assignment, CfgEdge, FsmSpec, SimError};
use crate::gf::{BitVec, MdsError, MdsSpec};
use crate::netlist::{Netlist, NetlistError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HardenError {
    #[error("protection level {0} gives no redundancy; use N >= 2")]
    LevelTooLow(u32),
    #[error("infeasible layout: {0}")]
    Infeasible(String),
    #[error("edge {edge}: modifier equation in block {block} has no solution (rank {rank} of {rows} constraints)")]
    NoSolution {
        edge: String,
        block: usize,
        rank: usize,
        rows: usize,
    },
    #[error("modifier for edge {0} fails verification")]
    Verification(String),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Mds(#[from] MdsError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardeningConfig {
    pub protection_level: u32,
    /// Error bits per block; defaults to the protection level.
    #[serde(default)]
    pub error_bits: Option<u32>,
    /// Force the number of diffusion blocks.
    #[serde(default)]
    pub blocks: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoded_mux_selectors: bool,
    #[serde(default = "default_mds")]
    pub mds: String,
}

fn default_mds() -> String {
    crate::gf::mds::REFERENCE_NAME.to_string()
}

impl HardeningConfig {
    pub fn new(protection_level: u32, seed: u64) -> Self {
        HardeningConfig {
            protection_level,
            error_bits: None,
            blocks: None,
            seed,
            encoded_mux_selectors: false,
            mds: default_mds(),
        }
    }

    pub fn error_bits_per_block(&self) -> u32 {
        self.error_bits.unwrap_or(self.protection_level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBooks {
    /// Machine states plus the all-zeros ERROR word.
    pub state: CodeBook,
    /// One word per edge label plus an all-zeros reserved word.
    pub control: CodeBook,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBooksJson {
    pub state: CodeBookJson,
    pub control: CodeBookJson,
}

impl CodeBooks {
    pub fn generate(fsm: &FsmSpec, level: u32, seed: u64) -> Result<CodeBooks, CodingError> {
        let state = CodeBook::for_symbols(ERROR_SYMBOL, fsm.states(), level, seed)?;
        let labels: Vec<String> = fsm.extract_cfg().iter().map(CfgEdge::label).collect();
        let control =
            CodeBook::for_symbols(ERROR_SYMBOL, &labels, level, seed ^ 0x6374_726c_636f_6465)?;
        Ok(CodeBooks { state, control })
    }

    pub fn to_json(&self) -> CodeBooksJson {
        CodeBooksJson {
            state: self.state.to_json(),
            control: self.control.to_json(),
        }
    }

    pub fn from_json(j: &CodeBooksJson) -> Result<CodeBooks, CodingError> {
        Ok(CodeBooks {
            state: CodeBook::from_json(&j.state)?,
            control: CodeBook::from_json(&j.control)?,
        })
    }
}

/// One edge with its codewords and solved modifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionPlan {
    pub index: usize,
    pub label: String,
    pub from: String,
    pub to: String,
    pub state_code: BitVec,
    pub control_code: BitVec,
    pub next_code: BitVec,
    pub modifier: BitVec,
}

impl TransitionPlan {
    /// Diffusion of the packed triple yields the next-state word with every
    /// error bit set.
    pub fn verify(&self, layout: &BlockLayout, m: &MdsSpec) -> bool {
        let out = diffuse(
            layout,
            m,
            &self.state_code,
            &self.control_code,
            &self.modifier,
        );
        let (next, err) = layout.unpack(&out);
        next == self.next_code && err.count_ones() as usize == err.len()
    }
}

pub fn solve_modifiers(
    layout: &BlockLayout,
    edges: &[CfgEdge],
    codes: &CodeBooks,
    m: &MdsSpec,
) -> Result<Vec<TransitionPlan>, HardenError> {
    edges
        .iter()
        .map(|e| {
            let label = e.label();
            let state_code = codes
                .state
                .codeword(&e.from)
                .expect("state encoded")
                .clone();
            let next_code = codes.state.codeword(&e.to).expect("state encoded").clone();
            let control_code = codes
                .control
                .codeword(&label)
                .expect("edge encoded")
                .clone();
            let modifier =
                solve_modifier(layout, m, &state_code, &control_code, &next_code, &label)?;
            let plan = TransitionPlan {
                index: e.index,
                label,
                from: e.from.clone(),
                to: e.to.clone(),
                state_code,
                control_code,
                next_code,
                modifier,
            };
            if !plan.verify(layout, m) {
                return Err(HardenError::Verification(plan.label));
            }
            Ok(plan)
        })
        .collect()
}

/// Estimated chance that a blind hit lands on a valid constrained output:
/// `(s + e) / (k * 2^(32 - (s + e)))`. Returns the value and whether the
/// formula is outside its meaningful range (`s + e >= 32`).
pub fn theoretical_success_probability(
    state_bits: usize,
    error_bits: usize,
    k: usize,
) -> (f64, bool) {
    let c = (state_bits + error_bits) as f64;
    let p = c / (k as f64 * 2f64.powf(32.0 - c));
    let degenerate = state_bits + error_bits >= 32;
    if degenerate {
        log::warn!(
            "success-probability formula degenerates for {} constrained bits (>= 32); reporting it as is",
            state_bits + error_bits
        );
    }
    (p, degenerate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub index: usize,
    pub label: String,
    pub from: String,
    pub to: String,
    pub state_code: String,
    pub control_code: String,
    pub next_code: String,
    pub modifier: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardeningReport {
    pub fsm: String,
    pub config: HardeningConfig,
    pub fingerprint: String,
    pub protection_level: u32,
    pub error_bits_per_block: usize,
    pub blocks: usize,
    pub state_width: usize,
    pub control_width: usize,
    pub modifier_width: usize,
    pub mds: String,
    pub mds_xor_count: usize,
    /// How the matrix's XOR network was obtained.
    pub mds_circuit: String,
    pub states: usize,
    pub edges: Vec<EdgeReport>,
    pub gate_counts: BTreeMap<String, usize>,
    pub total_gates: usize,
    pub flops: usize,
    pub theoretical_p: f64,
    pub theoretical_p_degenerate: bool,
    pub layout: BlockLayout,
}

/// Everything produced by one hardening run.
#[derive(Debug, Clone)]
pub struct HardenedDesign {
    pub fsm: FsmSpec,
    pub config: HardeningConfig,
    pub codes: CodeBooks,
    pub mds: MdsSpec,
    pub layout: BlockLayout,
    pub plans: Vec<TransitionPlan>,
    pub netlist: Netlist,
}

/// SHA-256 over the normalized machine and the configuration.
pub fn fingerprint(fsm: &FsmSpec, cfg: &HardeningConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&fsm::to_json(fsm)).expect("serializable"));
    h.update([0]);
    h.update(serde_json::to_vec(cfg).expect("serializable"));
    hex::encode(h.finalize())
}

pub fn harden(fsm: &FsmSpec, cfg: &HardeningConfig) -> Result<HardenedDesign, HardenError> {
    if cfg.protection_level < 2 {
        return Err(HardenError::LevelTooLow(cfg.protection_level));
    }
    let mds = MdsSpec::by_name(&cfg.mds)?;
    let codes = CodeBooks::generate(fsm, cfg.protection_level, cfg.seed)?;
    let layout = plan_layout(
        codes.state.width(),
        codes.control.width(),
        cfg.error_bits_per_block() as usize,
        cfg.blocks,
    )?;
    let plans = solve_modifiers(&layout, &fsm.extract_cfg(), &codes, &mds)?;
    let mut netlist = build_hardened_netlist(fsm, &plans, cfg, &codes, &layout, &mds)?;
    netlist.set_metadata("fingerprint", fingerprint(fsm, cfg));
    log::info!(
        "{}: {} states, {} edges, k={}, {} gates",
        fsm.name(),
        fsm.states().len(),
        plans.len(),
        layout.blocks,
        netlist.gates().len()
    );
    Ok(HardenedDesign {
        fsm: fsm.clone(),
        config: cfg.clone(),
        codes,
        mds,
        layout,
        plans,
        netlist,
    })
}

/// Codeword of the edge `fsm` takes from `state` on `inputs`, or the
/// reserved all-zeros word if no edge fires.
pub fn encode_control(
    fsm: &FsmSpec,
    codes: &CodeBooks,
    state: &str,
    step: usize,
    inputs: &Assignment,
) -> Result<(u64, Option<usize>), SimError> {
    let bits = fsm.pack_inputs(step, inputs)?;
    match fsm.fire(state, bits) {
        Some(t) => {
            let edge = &fsm.extract_cfg()[t];
            let w = codes.control.codeword(&edge.label()).expect("edge encoded");
            Ok((w.to_u64(), Some(t)))
        }
        None => Ok((codes.control.error_codeword().to_u64(), None)),
    }
}

impl HardenedDesign {
    /// Port values driving the hardened netlist along the golden run of
    /// `trace`.
    pub fn encode_trace(
        &self,
        trace: &[Assignment],
    ) -> Result<Vec<BTreeMap<String, u64>>, SimError> {
        encode_trace(&self.fsm, &self.codes, trace)
    }

    pub fn report(&self) -> HardeningReport {
        let state_width = self.codes.state.width();
        let (theoretical_p, degenerate) = theoretical_success_probability(
            state_width,
            self.layout.error_out.len(),
            self.layout.blocks,
        );
        HardeningReport {
            fsm: self.fsm.name().to_string(),
            config: self.config.clone(),
            fingerprint: fingerprint(&self.fsm, &self.config),
            protection_level: self.config.protection_level,
            error_bits_per_block: self.layout.error_bits,
            blocks: self.layout.blocks,
            state_width,
            control_width: self.codes.control.width(),
            modifier_width: self.layout.modifier_width(),
            mds: self.mds.name().to_string(),
            mds_xor_count: self.mds.circuit().xor_count(),
            mds_circuit: format!(
                "greedy common-subexpression network, depth {}; not the published minimal circuit",
                self.mds.circuit().depth()
            ),
            states: self.fsm.states().len(),
            edges: self
                .plans
                .iter()
                .map(|p| EdgeReport {
                    index: p.index,
                    label: p.label.clone(),
                    from: p.from.clone(),
                    to: p.to.clone(),
                    state_code: p.state_code.to_hex(),
                    control_code: p.control_code.to_hex(),
                    next_code: p.next_code.to_hex(),
                    modifier: p.modifier.to_hex(),
                })
                .collect(),
            gate_counts: self
                .netlist
                .gate_counts()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            total_gates: self.netlist.gates().len(),
            flops: self.netlist.flops().len(),
            theoretical_p,
            theoretical_p_degenerate: degenerate,
            layout: self.layout.clone(),
        }
    }
}

pub fn encode_trace(
    fsm: &FsmSpec,
    codes: &CodeBooks,
    trace: &[Assignment],
) -> Result<Vec<BTreeMap<String, u64>>, SimError> {
    let mut state = fsm.reset_state().to_string();
    let cfg = fsm.extract_cfg();
    let mut out = Vec::with_capacity(trace.len());
    for (step, a) in trace.iter().enumerate() {
        let (word, taken) = encode_control(fsm, codes, &state, step, a)?;
        out.push(BTreeMap::from([(CONTROL_PORT.to_string(), word)]));
        if let Some(t) = taken {
            state = cfg[t].to.clone();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
