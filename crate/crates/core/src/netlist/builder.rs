// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use super::{Flop, Gate, GateKind, NetId, Netlist, NetlistError, Port, Stage};
use crate::gf::BitVec;

/// Incremental netlist construction. Every gate created is tagged with the
/// current stage.
#[derive(Debug)]
pub struct NetlistBuilder {
    name: String,
    nets: Vec<String>,
    taken: HashMap<String, usize>,
    gates: Vec<Gate>,
    flops: Vec<(Option<NetId>, NetId, bool, Stage)>,
    inputs: Vec<Port>,
    outputs: Vec<Port>,
    stage: Stage,
    consts: HashMap<(Stage, bool), NetId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopHandle(usize);

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            nets: Vec::new(),
            taken: HashMap::new(),
            gates: Vec::new(),
            flops: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            stage: Stage::Other,
            consts: HashMap::new(),
        }
    }

    pub fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    /// Fresh net; whitespace becomes `_` and the name is made unique with
    /// a numeric suffix if needed.
    pub fn net(&mut self, name: &str) -> NetId {
        let name: String = name
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        let name = if name.is_empty() {
            "n".to_string()
        } else {
            name
        };
        let name = name.as_str();
        let name = match self.taken.get(name).copied() {
            None => {
                self.taken.insert(name.to_string(), 1);
                name.to_string()
            }
            Some(mut k) => loop {
                let candidate = format!("{name}_{k}");
                k += 1;
                if !self.taken.contains_key(&candidate) {
                    self.taken.insert(name.to_string(), k);
                    self.taken.insert(candidate.clone(), 1);
                    break candidate;
                }
            },
        };
        self.nets.push(name);
        NetId(self.nets.len() as u32 - 1)
    }

    pub fn gate(&mut self, kind: GateKind, inputs: &[NetId], name: &str) -> NetId {
        let out = self.net(name);
        self.gates.push(Gate {
            kind,
            inputs: inputs.to_vec(),
            output: out,
            tag: self.stage,
        });
        out
    }

    pub fn xor(&mut self, a: NetId, b: NetId, name: &str) -> NetId {
        self.gate(GateKind::Xor, &[a, b], name)
    }

    pub fn and(&mut self, a: NetId, b: NetId, name: &str) -> NetId {
        self.gate(GateKind::And, &[a, b], name)
    }

    pub fn or(&mut self, a: NetId, b: NetId, name: &str) -> NetId {
        self.gate(GateKind::Or, &[a, b], name)
    }

    pub fn not(&mut self, a: NetId, name: &str) -> NetId {
        self.gate(GateKind::Not, &[a], name)
    }

    pub fn buf(&mut self, a: NetId, name: &str) -> NetId {
        self.gate(GateKind::Buf, &[a], name)
    }

    /// `sel ? when_1 : when_0`.
    pub fn mux(&mut self, sel: NetId, when_0: NetId, when_1: NetId, name: &str) -> NetId {
        self.gate(GateKind::Mux, &[sel, when_0, when_1], name)
    }

    /// Constant net, shared per stage.
    pub fn constant(&mut self, value: bool) -> NetId {
        let key = (self.stage, value);
        if let Some(&n) = self.consts.get(&key) {
            return n;
        }
        let name = format!("{}_const{}", self.stage, value as u8);
        let kind = if value {
            GateKind::Const1
        } else {
            GateKind::Const0
        };
        let n = self.gate(kind, &[], &name);
        self.consts.insert(key, n);
        n
    }

    fn tree(&mut self, kind: GateKind, nets: &[NetId], name: &str) -> NetId {
        let mut layer = nets.to_vec();
        while layer.len() > 1 {
            let mut next = Vec::with_capacity(layer.len().div_ceil(2));
            for pair in layer.chunks(2) {
                next.push(match pair {
                    [a, b] => self.gate(kind, &[*a, *b], name),
                    [a] => *a,
                    _ => unreachable!(),
                });
            }
            layer = next;
        }
        layer[0]
    }

    /// Balanced AND; the empty conjunction is constant 1.
    pub fn and_tree(&mut self, nets: &[NetId], name: &str) -> NetId {
        if nets.is_empty() {
            return self.constant(true);
        }
        self.tree(GateKind::And, nets, name)
    }

    /// Balanced OR; the empty disjunction is constant 0.
    pub fn or_tree(&mut self, nets: &[NetId], name: &str) -> NetId {
        if nets.is_empty() {
            return self.constant(false);
        }
        self.tree(GateKind::Or, nets, name)
    }

    /// 1 iff `bits` equals `value`: an AND over the bits, inverting where
    /// the constant is 0.
    pub fn eq_const(&mut self, bits: &[NetId], value: &BitVec, name: &str) -> NetId {
        assert_eq!(bits.len(), value.len());
        let lits: Vec<NetId> = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                if value.get(i) {
                    b
                } else {
                    self.not(b, &format!("{name}_n{i}"))
                }
            })
            .collect();
        self.and_tree(&lits, name)
    }

    pub fn input_port(&mut self, name: &str, width: usize) -> Vec<NetId> {
        let nets: Vec<NetId> = (0..width)
            .map(|i| self.net(&format!("{name}_{i}")))
            .collect();
        self.inputs.push(Port {
            name: name.to_string(),
            nets: nets.clone(),
        });
        nets
    }

    pub fn output_port(&mut self, name: &str, nets: &[NetId]) {
        self.outputs.push(Port {
            name: name.to_string(),
            nets: nets.to_vec(),
        });
    }

    /// Flop whose `d` is connected later with [`connect_d`](Self::connect_d).
    pub fn flop(&mut self, q_name: &str, reset: bool) -> (FlopHandle, NetId) {
        let q = self.net(q_name);
        self.flops.push((None, q, reset, self.stage));
        (FlopHandle(self.flops.len() - 1), q)
    }

    pub fn connect_d(&mut self, flop: FlopHandle, d: NetId) {
        self.flops[flop.0].0 = Some(d);
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn finish(self) -> Result<Netlist, NetlistError> {
        let mut flops = Vec::with_capacity(self.flops.len());
        for (d, q, reset, tag) in self.flops {
            let d =
                d.ok_or_else(|| NetlistError::Undriven(format!("d of {}", self.nets[q.index()])))?;
            flops.push(Flop { d, q, reset, tag });
        }
        Netlist::new(
            self.name,
            self.nets,
            self.gates,
            flops,
            self.inputs,
            self.outputs,
        )
    }
}
