// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlist IR.
//!
//! A netlist is a set of named single-bit nets, combinational gates, D
//! flip-flops and named input/output ports. Every net has exactly one driver
//! (a gate, a flop output or an input-port bit) and the gate graph must be
//! acyclic once flops are cut. Gates and flops carry a [`Stage`] tag naming
//! the part of the hardened design they belong to.

mod builder;
mod sim;
mod verilog;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use builder::{FlopHandle, NetlistBuilder};
pub use sim::{
    enumerate_fault_sites, FaultEffect, FaultScope, FaultSite, FaultTime, InputFrame, LaneFault,
    SimTrace, Simulator, TraceError,
};
pub use verilog::{emit_verilog, parse_verilog, VerilogError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetId(pub u32);

impl NetId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Xor,
    And,
    Or,
    Not,
    /// Inputs are `[select, when_0, when_1]`.
    Mux,
    Const0,
    Const1,
    Buf,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Xor | GateKind::And | GateKind::Or => 2,
            GateKind::Not | GateKind::Buf => 1,
            GateKind::Mux => 3,
            GateKind::Const0 | GateKind::Const1 => 0,
        }
    }
}

/// Which part of the hardened design a gate or flop implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Pattern match of current state and control word.
    Match,
    /// Modifier multiplexers.
    ModSelect,
    Mix,
    Diffusion,
    Unmix,
    /// Error-bit conjunction and next-state infection.
    Infect,
    StateReg,
    ErrorLogic,
    Output,
    Other,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Match,
        Stage::ModSelect,
        Stage::Mix,
        Stage::Diffusion,
        Stage::Unmix,
        Stage::Infect,
        Stage::StateReg,
        Stage::ErrorLogic,
        Stage::Output,
        Stage::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Match => "match",
            Stage::ModSelect => "mod_select",
            Stage::Mix => "mix",
            Stage::Diffusion => "diffusion",
            Stage::Unmix => "unmix",
            Stage::Infect => "infect",
            Stage::StateReg => "state_reg",
            Stage::ErrorLogic => "error_logic",
            Stage::Output => "output",
            Stage::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    #[serde(rename = "in")]
    pub inputs: Vec<NetId>,
    #[serde(rename = "out")]
    pub output: NetId,
    pub tag: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flop {
    pub d: NetId,
    pub q: NetId,
    pub reset: bool,
    pub tag: Stage,
}

/// Named bit vector, least significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub nets: Vec<NetId>,
}

impl Port {
    pub fn width(&self) -> usize {
        self.nets.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetlistError {
    #[error("gate {gate} ({kind:?}) has {found} inputs, expected {expected}")]
    Arity {
        gate: usize,
        kind: GateKind,
        found: usize,
        expected: usize,
    },
    #[error("reference to net #{0} which does not exist")]
    NoSuchNet(u32),
    #[error("net {0:?} has more than one driver")]
    MultipleDrivers(String),
    #[error("net {0:?} has no driver")]
    Undriven(String),
    #[error("combinational cycle through net {0:?}")]
    CombinationalCycle(String),
    #[error("duplicate net name {0:?}")]
    DuplicateName(String),
    #[error("net or port name {0:?} is empty or contains whitespace")]
    BadName(String),
    #[error("duplicate port {0:?}")]
    DuplicatePort(String),
    #[error("port {0:?} is wider than 64 bits")]
    PortTooWide(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    name: String,
    nets: Vec<String>,
    gates: Vec<Gate>,
    flops: Vec<Flop>,
    inputs: Vec<Port>,
    outputs: Vec<Port>,
    metadata: BTreeMap<String, String>,
    /// Gate indices in evaluation order.
    order: Vec<usize>,
}

impl Netlist {
    pub fn new(
        name: impl Into<String>,
        nets: Vec<String>,
        gates: Vec<Gate>,
        flops: Vec<Flop>,
        inputs: Vec<Port>,
        outputs: Vec<Port>,
    ) -> Result<Netlist, NetlistError> {
        let mut n = Netlist {
            name: name.into(),
            nets,
            gates,
            flops,
            inputs,
            outputs,
            metadata: BTreeMap::new(),
            order: Vec::new(),
        };
        n.order = n.validate()?;
        Ok(n)
    }

    fn validate(&self) -> Result<Vec<usize>, NetlistError> {
        let count = self.nets.len();
        let check = |id: NetId| {
            if id.index() < count {
                Ok(())
            } else {
                Err(NetlistError::NoSuchNet(id.0))
            }
        };
        let mut names = HashMap::with_capacity(count);
        for n in &self.nets {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(NetlistError::BadName(n.clone()));
            }
            if names.insert(n.as_str(), ()).is_some() {
                return Err(NetlistError::DuplicateName(n.clone()));
            }
        }
        let mut port_names = HashMap::new();
        for p in self.inputs.iter().chain(&self.outputs) {
            if p.name.is_empty() || p.name.chars().any(char::is_whitespace) {
                return Err(NetlistError::BadName(p.name.clone()));
            }
            if port_names.insert(p.name.as_str(), ()).is_some() {
                return Err(NetlistError::DuplicatePort(p.name.clone()));
            }
            if p.nets.len() > 64 {
                return Err(NetlistError::PortTooWide(p.name.clone()));
            }
            for &id in &p.nets {
                check(id)?;
            }
        }

        // driver[net] = Some(gate index) for gate-driven nets.
        let mut driver: Vec<Option<usize>> = vec![None; count];
        let mut driven = vec![0u8; count];
        for (gi, g) in self.gates.iter().enumerate() {
            if g.inputs.len() != g.kind.arity() {
                return Err(NetlistError::Arity {
                    gate: gi,
                    kind: g.kind,
                    found: g.inputs.len(),
                    expected: g.kind.arity(),
                });
            }
            for &i in &g.inputs {
                check(i)?;
            }
            check(g.output)?;
            driven[g.output.index()] += 1;
            driver[g.output.index()] = Some(gi);
        }
        for f in &self.flops {
            check(f.d)?;
            check(f.q)?;
            driven[f.q.index()] += 1;
        }
        for p in &self.inputs {
            for &id in &p.nets {
                driven[id.index()] += 1;
            }
        }
        for (i, &d) in driven.iter().enumerate() {
            match d {
                1 => {}
                0 => return Err(NetlistError::Undriven(self.nets[i].clone())),
                _ => return Err(NetlistError::MultipleDrivers(self.nets[i].clone())),
            }
        }

        // Kahn's algorithm over gate-to-gate dependencies.
        let mut pending = vec![0usize; self.gates.len()];
        let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); self.gates.len()];
        for (gi, g) in self.gates.iter().enumerate() {
            for &i in &g.inputs {
                if let Some(src) = driver[i.index()] {
                    pending[gi] += 1;
                    fanout[src].push(gi);
                }
            }
        }
        let mut ready: Vec<usize> = (0..self.gates.len()).filter(|&g| pending[g] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.gates.len());
        while let Some(g) = ready.pop() {
            order.push(g);
            for &h in fanout[g].iter().rev() {
                pending[h] -= 1;
                if pending[h] == 0 {
                    ready.push(h);
                }
            }
        }
        if order.len() != self.gates.len() {
            let stuck = (0..self.gates.len()).find(|&g| pending[g] > 0).unwrap();
            return Err(NetlistError::CombinationalCycle(
                self.nets[self.gates[stuck].output.index()].clone(),
            ));
        }
        Ok(order)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nets(&self) -> &[String] {
        &self.nets
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.nets[id.index()]
    }

    pub fn net_by_name(&self, name: &str) -> Option<NetId> {
        self.nets
            .iter()
            .position(|n| n == name)
            .map(|i| NetId(i as u32))
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn flops(&self) -> &[Flop] {
        &self.flops
    }

    pub fn inputs(&self) -> &[Port] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Port] {
        &self.outputs
    }

    pub fn input(&self, name: &str) -> Option<&Port> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&Port> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn evaluation_order(&self) -> &[usize] {
        &self.order
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    /// Gate count per stage tag.
    pub fn gate_counts(&self) -> BTreeMap<Stage, usize> {
        let mut out = BTreeMap::new();
        for g in &self.gates {
            *out.entry(g.tag).or_default() += 1;
        }
        out
    }

    /// Indices of flops whose `q` drives the given output port, in port bit
    /// order. `None` if some bit is not a flop output.
    pub fn flops_behind_output(&self, port: &str) -> Option<Vec<usize>> {
        let p = self.output(port)?;
        p.nets
            .iter()
            .map(|n| self.flops.iter().position(|f| f.q == *n))
            .collect()
    }

    pub fn to_json(&self) -> NetlistJson {
        NetlistJson {
            name: self.name.clone(),
            nets: self.nets.clone(),
            gates: self.gates.clone(),
            flops: self.flops.clone(),
            ports: PortsJson {
                inputs: self.inputs.clone(),
                outputs: self.outputs.clone(),
            },
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_json(j: NetlistJson) -> Result<Netlist, NetlistError> {
        let mut n = Netlist::new(
            j.name,
            j.nets,
            j.gates,
            j.flops,
            j.ports.inputs,
            j.ports.outputs,
        )?;
        n.metadata = j.metadata;
        Ok(n)
    }
}

/// Stable JSON IR: `{name, nets, gates:[{kind,in,out,tag}], flops, ports, metadata}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetlistJson {
    pub name: String,
    pub nets: Vec<String>,
    pub gates: Vec<Gate>,
    pub flops: Vec<Flop>,
    pub ports: PortsJson,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortsJson {
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn port(name: &str, ids: &[u32]) -> Port {
        Port {
            name: name.into(),
            nets: ids.iter().map(|&i| NetId(i)).collect(),
        }
    }

    fn gate(kind: GateKind, ins: &[u32], out: u32) -> Gate {
        Gate {
            kind,
            inputs: ins.iter().map(|&i| NetId(i)).collect(),
            output: NetId(out),
            tag: Stage::Other,
        }
    }

    #[test]
    fn single_xor() {
        let n = Netlist::new(
            "x",
            names(3),
            vec![gate(GateKind::Xor, &[0, 1], 2)],
            vec![],
            vec![port("a", &[0]), port("b", &[1])],
            vec![port("y", &[2])],
        )
        .unwrap();
        assert_eq!(n.evaluation_order(), &[0]);
    }

    #[test]
    fn rejects_cycle() {
        let err = Netlist::new(
            "c",
            names(3),
            vec![
                gate(GateKind::Xor, &[0, 2], 1),
                gate(GateKind::Not, &[1], 2),
            ],
            vec![],
            vec![port("a", &[0])],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, NetlistError::CombinationalCycle(_)));
    }

    #[test]
    fn cycle_through_flop_is_fine() {
        let n = Netlist::new(
            "t",
            names(2),
            vec![gate(GateKind::Not, &[0], 1)],
            vec![Flop {
                d: NetId(1),
                q: NetId(0),
                reset: false,
                tag: Stage::Other,
            }],
            vec![],
            vec![port("q", &[0])],
        );
        assert!(n.is_ok());
    }

    #[test]
    fn driver_checks() {
        let err = Netlist::new(
            "d",
            names(3),
            vec![gate(GateKind::Not, &[0], 1), gate(GateKind::Buf, &[0], 1)],
            vec![],
            vec![port("a", &[0])],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, NetlistError::MultipleDrivers("n1".into()));
        let err =
            Netlist::new("u", names(2), vec![], vec![], vec![port("a", &[0])], vec![]).unwrap_err();
        assert_eq!(err, NetlistError::Undriven("n1".into()));
        let err = Netlist::new(
            "r",
            names(2),
            vec![gate(GateKind::Not, &[7], 1)],
            vec![],
            vec![port("a", &[0])],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, NetlistError::NoSuchNet(7));
        let err = Netlist::new(
            "ar",
            names(2),
            vec![gate(GateKind::And, &[0], 1)],
            vec![],
            vec![port("a", &[0])],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, NetlistError::Arity { .. }));
    }

    #[test]
    fn json_roundtrip() {
        let mut n = Netlist::new(
            "x",
            names(3),
            vec![gate(GateKind::Xor, &[0, 1], 2)],
            vec![],
            vec![port("a", &[0]), port("b", &[1])],
            vec![port("y", &[2])],
        )
        .unwrap();
        n.set_metadata("k", "v");
        let text = serde_json::to_string(&n.to_json()).unwrap();
        assert!(text.contains(r#""kind":"XOR","in":[0,1],"out":2,"tag":"other""#));
        let back = Netlist::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, n);
    }

    #[test]
    fn stage_names_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(Stage::parse(s.as_str()), Some(s));
        }
    }
}
