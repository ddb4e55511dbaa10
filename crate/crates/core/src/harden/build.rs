// SPDX-License-Identifier: Apache-2.0

//! Netlist generation for the hardened machine.

use super::{CodeBooks, HardenError, HardeningConfig, TransitionPlan};
use crate::fsm::FsmSpec;
use crate::gf::{MdsSpec, XorNode};
use crate::harden::layout::BlockLayout;
use crate::netlist::{NetId, Netlist, NetlistBuilder, Stage};

pub const STATE_PORT: &str = "state_e";
pub const CONTROL_PORT: &str = "ctrl_e";
pub const ALERT_PORT: &str = "fsm_alert";

pub fn build_hardened_netlist(
    fsm: &FsmSpec,
    plans: &[TransitionPlan],
    cfg: &HardeningConfig,
    codes: &CodeBooks,
    layout: &BlockLayout,
    m: &MdsSpec,
) -> Result<Netlist, HardenError> {
    for sig in fsm.outputs() {
        if [STATE_PORT, CONTROL_PORT, ALERT_PORT].contains(&sig.name.as_str()) {
            return Err(HardenError::Infeasible(format!(
                "output signal name {:?} is reserved",
                sig.name
            )));
        }
    }
    let mut b = NetlistBuilder::new(format!("{}_hardened", fsm.name()));
    let sw = codes.state.width();
    let reset_word = codes
        .state
        .codeword(fsm.reset_state())
        .expect("reset state is encoded")
        .clone();

    let ctrl = b.input_port(CONTROL_PORT, codes.control.width());

    b.set_stage(Stage::StateReg);
    let mut state_flops = Vec::with_capacity(sw);
    let mut q = Vec::with_capacity(sw);
    for i in 0..sw {
        let (h, n) = b.flop(&format!("state_q_{i}"), reset_word.get(i));
        state_flops.push(h);
        q.push(n);
    }
    b.set_stage(Stage::ErrorLogic);
    let (alert_flop, alert_q) = b.flop("alert_q", false);

    // (1) match lines, one independent copy per selector share
    b.set_stage(Stage::Match);
    let copies = if cfg.encoded_mux_selectors {
        cfg.protection_level as usize
    } else {
        1
    };
    let mut sel: Vec<Vec<NetId>> = Vec::with_capacity(copies);
    for c in 0..copies {
        let st: Vec<NetId> = fsm
            .states()
            .iter()
            .map(|s| {
                let w = codes.state.codeword(s).expect("state is encoded").clone();
                b.eq_const(&q, &w, &format!("st_match_{s}_c{c}"))
            })
            .collect();
        let lines = plans
            .iter()
            .map(|p| {
                let cm = b.eq_const(
                    &ctrl,
                    &p.control_code,
                    &format!("ctrl_match_{}_c{c}", p.index),
                );
                let from = fsm.state_index(&p.from).expect("edge source exists");
                b.and(st[from], cm, &format!("edge_sel_{}_c{c}", p.index))
            })
            .collect();
        sel.push(lines);
    }

    // (2) modifier selection
    b.set_stage(Stage::ModSelect);
    let mw = layout.modifier_width();
    let mut modifier = Vec::with_capacity(mw);
    for j in 0..mw {
        let mut cur = b.constant(false);
        for (e, p) in plans.iter().enumerate() {
            let want = b.constant(p.modifier.get(j));
            if want == cur {
                continue;
            }
            // With shared selectors the constant is reached only when all
            // copies agree.
            let mut inner = want;
            for c in (1..copies).rev() {
                inner = b.mux(sel[c][e], cur, inner, &format!("mod_{j}_e{e}_c{c}"));
            }
            cur = b.mux(sel[0][e], cur, inner, &format!("mod_{j}_e{e}"));
        }
        modifier.push(cur);
    }

    // (3) mix: wiring only
    let zero = b.constant(false);
    let mut block_in = vec![[zero; 32]; layout.blocks];
    for (bits, slots) in [
        (&q, &layout.state_in),
        (&ctrl, &layout.control_in),
        (&modifier, &layout.modifier_in),
    ] {
        for (&n, &(blk, bit)) in bits.iter().zip(slots) {
            block_in[blk][bit as usize] = n;
        }
    }

    // (4) diffusion
    b.set_stage(Stage::Diffusion);
    let circuit = m.circuit();
    let mut block_out = Vec::with_capacity(layout.blocks);
    for (blk, inputs) in block_in.iter().enumerate() {
        let mut node_net = Vec::with_capacity(circuit.nodes.len());
        for (i, node) in circuit.nodes.iter().enumerate() {
            let n = match *node {
                XorNode::Input { bit } => inputs[bit as usize],
                XorNode::Xor { a, b: c, .. } => {
                    b.xor(node_net[a], node_net[c], &format!("dif{blk}_n{i}"))
                }
            };
            node_net.push(n);
        }
        let outs: Vec<NetId> = circuit.outputs.iter().map(|&o| node_net[o]).collect();
        block_out.push(outs);
    }

    // (5) unmix: wiring only
    let ns_raw: Vec<NetId> = layout
        .state_out
        .iter()
        .map(|&(blk, bit)| block_out[blk][bit as usize])
        .collect();
    let errs: Vec<NetId> = layout
        .error_out
        .iter()
        .map(|&(blk, bit)| block_out[blk][bit as usize])
        .collect();

    // (6) infection
    b.set_stage(Stage::ErrorLogic);
    let any_edge = b.or_tree(&sel[0], "any_edge");
    b.set_stage(Stage::Infect);
    let err_ok = b.and_tree(&errs, "err_ok");
    let valid = b.and(err_ok, any_edge, "step_ok");
    for (i, (&raw, h)) in ns_raw.iter().zip(state_flops).enumerate() {
        let d = b.and(raw, valid, &format!("state_d_{i}"));
        b.connect_d(h, d);
    }
    b.set_stage(Stage::ErrorLogic);
    let bad = b.not(valid, "step_bad");
    let alert_d = b.or(alert_q, bad, "alert_d");
    b.connect_d(alert_flop, alert_d);

    // FSM outputs decoded from the taken edge
    b.set_stage(Stage::Output);
    let mut out_ports = Vec::new();
    for sig in fsm.outputs() {
        let mut bits = Vec::with_capacity(sig.width as usize);
        for bit in 0..sig.width {
            let on: Vec<NetId> = plans
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    fsm.output_values(&p.from, p.index)
                        .get(&sig.name)
                        .is_some_and(|v| v >> bit & 1 == 1)
                })
                .map(|(e, _)| sel[0][e])
                .collect();
            bits.push(b.or_tree(&on, &format!("{}_{bit}", sig.name)));
        }
        out_ports.push((sig.name.clone(), bits));
    }

    b.output_port(STATE_PORT, &q);
    b.output_port(ALERT_PORT, &[alert_q]);
    for (name, bits) in out_ports {
        b.output_port(&name, &bits);
    }
    let mut n = b.finish()?;
    n.set_metadata("protection_level", cfg.protection_level.to_string());
    n.set_metadata("blocks", layout.blocks.to_string());
    n.set_metadata("error_bits", layout.error_bits.to_string());
    n.set_metadata("mds", m.name());
    Ok(n)
}
