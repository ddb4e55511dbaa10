// SPDX-License-Identifier: Apache-2.0

//! Cycle-accurate two-valued simulator.
//!
//! Values are bit-sliced: every net holds a `u64` whose bit `l` is the
//! net's value in lane `l`, so one pass simulates 64 independent copies of
//! the circuit. Lanes share the netlist but may receive different inputs
//! and different faults.
//!
//! In cycle `c` the flops present their state, inputs are applied, the
//! combinational logic is evaluated in topological order and the outputs
//! are sampled; at the end of the cycle every flop loads its `d` value.
//! A fault is applied at the moment the faulted net is driven, so every
//! reader sees the faulty value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GateKind, NetId, Netlist, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultEffect {
    Flip,
    Stuck0,
    Stuck1,
}

impl FaultEffect {
    pub const ALL: [FaultEffect; 3] = [FaultEffect::Flip, FaultEffect::Stuck0, FaultEffect::Stuck1];

    pub fn parse(s: &str) -> Option<FaultEffect> {
        match s {
            "flip" => Some(FaultEffect::Flip),
            "stuck0" => Some(FaultEffect::Stuck0),
            "stuck1" => Some(FaultEffect::Stuck1),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, v: u64, mask: u64) -> u64 {
        match self {
            FaultEffect::Flip => v ^ mask,
            FaultEffect::Stuck0 => v & !mask,
            FaultEffect::Stuck1 => v | mask,
        }
    }
}

/// When a fault is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultTime {
    /// During a single cycle.
    Cycle(usize),
    /// From the given cycle onwards.
    From(usize),
}

impl FaultTime {
    #[inline]
    pub fn active(self, cycle: usize) -> bool {
        match self {
            FaultTime::Cycle(c) => c == cycle,
            FaultTime::From(c) => cycle >= c,
        }
    }

    pub fn onset(self) -> usize {
        match self {
            FaultTime::Cycle(c) | FaultTime::From(c) => c,
        }
    }
}

/// A single fault: location, effect and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultSite {
    pub net: NetId,
    pub effect: FaultEffect,
    pub time: FaultTime,
}

/// A fault restricted to the lanes set in `lanes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneFault {
    pub lanes: u64,
    pub site: FaultSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultScope {
    All,
    #[serde(alias = "diffusion")]
    DiffusionOnly,
    #[serde(alias = "inputs")]
    InputsOnly,
}

impl FaultScope {
    pub fn parse(s: &str) -> Option<FaultScope> {
        match s {
            "all" => Some(FaultScope::All),
            "diffusion" | "diffusion_only" => Some(FaultScope::DiffusionOnly),
            "inputs" | "inputs_only" => Some(FaultScope::InputsOnly),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultScope::All => "all",
            FaultScope::DiffusionOnly => "diffusion_only",
            FaultScope::InputsOnly => "inputs_only",
        }
    }
}

/// Candidate fault locations for a scope, in a fixed order.
///
/// * `All`: every gate output (gate order), then every flop output.
/// * `DiffusionOnly`: outputs of gates tagged [`Stage::Diffusion`].
/// * `InputsOnly`: state register outputs, then the bits of every input
///   port whose name ends in `_e`.
pub fn enumerate_fault_sites(netlist: &Netlist, scope: FaultScope) -> Vec<NetId> {
    match scope {
        FaultScope::All => netlist
            .gates()
            .iter()
            .map(|g| g.output)
            .chain(netlist.flops().iter().map(|f| f.q))
            .collect(),
        FaultScope::DiffusionOnly => netlist
            .gates()
            .iter()
            .filter(|g| g.tag == Stage::Diffusion)
            .map(|g| g.output)
            .collect(),
        FaultScope::InputsOnly => netlist
            .flops()
            .iter()
            .filter(|f| f.tag == Stage::StateReg)
            .map(|f| f.q)
            .chain(
                netlist
                    .inputs()
                    .iter()
                    .filter(|p| p.name.ends_with("_e"))
                    .flat_map(|p| p.nets.iter().copied()),
            )
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("cycle {cycle}: no value for input port {port:?}")]
    MissingPort { cycle: usize, port: String },
    #[error("cycle {cycle}: unknown input port {port:?}")]
    UnknownPort { cycle: usize, port: String },
    #[error("cycle {cycle}: value {value:#x} does not fit port {port:?} of width {width}")]
    TooWide {
        cycle: usize,
        port: String,
        value: u64,
        width: usize,
    },
}

/// Input values for one cycle, bit-sliced: `bits[port][bit]` is a lane mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFrame {
    bits: Vec<Vec<u64>>,
}

impl InputFrame {
    pub fn zeros(netlist: &Netlist) -> Self {
        InputFrame {
            bits: netlist
                .inputs()
                .iter()
                .map(|p| vec![0; p.width()])
                .collect(),
        }
    }

    /// The same port values in all 64 lanes. Every input port must be given.
    pub fn broadcast(
        netlist: &Netlist,
        cycle: usize,
        values: &BTreeMap<String, u64>,
    ) -> Result<Self, TraceError> {
        let mut f = InputFrame::zeros(netlist);
        for name in values.keys() {
            if netlist.input(name).is_none() {
                return Err(TraceError::UnknownPort {
                    cycle,
                    port: name.clone(),
                });
            }
        }
        for (pi, p) in netlist.inputs().iter().enumerate() {
            let &v = values.get(&p.name).ok_or_else(|| TraceError::MissingPort {
                cycle,
                port: p.name.clone(),
            })?;
            if p.width() < 64 && v >> p.width() != 0 {
                return Err(TraceError::TooWide {
                    cycle,
                    port: p.name.clone(),
                    value: v,
                    width: p.width(),
                });
            }
            for b in 0..p.width() {
                f.bits[pi][b] = if (v >> b) & 1 == 1 { !0 } else { 0 };
            }
        }
        Ok(f)
    }

    /// Set `port` (by index) to `value` in a single lane.
    pub fn set_lane(&mut self, port: usize, lane: usize, value: u64) {
        let m = 1u64 << lane;
        for (b, w) in self.bits[port].iter_mut().enumerate() {
            if (value >> b) & 1 == 1 {
                *w |= m;
            } else {
                *w &= !m;
            }
        }
    }
}

/// Per-cycle record of a run. `flops[c]` is the state seen during cycle
/// `c` (one entry more than there are cycles: the last is the state after
/// the final clock edge); `outputs[c]` holds the output port bits,
/// flattened in port order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub flops: Vec<Vec<u64>>,
    pub outputs: Vec<Vec<u64>>,
    port_offsets: Vec<(usize, usize)>,
}

impl SimTrace {
    pub fn cycles(&self) -> usize {
        self.outputs.len()
    }

    /// Word made of the given flops (first index = bit 0) in one lane.
    pub fn flop_word(&self, snapshot: usize, flops: &[usize], lane: usize) -> u64 {
        gather(&self.flops[snapshot], flops, lane)
    }

    /// Output port `port` (index into the netlist's outputs) in one lane.
    pub fn output_word(&self, cycle: usize, port: usize, lane: usize) -> u64 {
        let (off, w) = self.port_offsets[port];
        let mut v = 0u64;
        for b in 0..w {
            v |= ((self.outputs[cycle][off + b] >> lane) & 1) << b;
        }
        v
    }
}

#[inline]
fn gather(words: &[u64], idx: &[usize], lane: usize) -> u64 {
    let mut v = 0u64;
    for (b, &i) in idx.iter().enumerate() {
        v |= ((words[i] >> lane) & 1) << b;
    }
    v
}

pub struct Simulator<'a> {
    netlist: &'a Netlist,
    values: Vec<u64>,
    state: Vec<u64>,
    cycle: usize,
    /// For faulted nets, the range into `faults`.
    fault_index: Vec<Option<(u32, u32)>>,
    faults: Vec<LaneFault>,
}

impl<'a> Simulator<'a> {
    pub fn new(netlist: &'a Netlist) -> Self {
        let mut s = Simulator {
            netlist,
            values: vec![0; netlist.nets().len()],
            state: Vec::new(),
            cycle: 0,
            fault_index: vec![None; netlist.nets().len()],
            faults: Vec::new(),
        };
        s.reset();
        s
    }

    /// Back to cycle 0 with every flop at its reset value. Faults are kept.
    pub fn reset(&mut self) {
        self.state = self
            .netlist
            .flops()
            .iter()
            .map(|f| if f.reset { !0 } else { 0 })
            .collect();
        self.cycle = 0;
    }

    pub fn set_faults(&mut self, faults: &[LaneFault]) {
        for slot in self.fault_index.iter_mut() {
            *slot = None;
        }
        let mut sorted = faults.to_vec();
        sorted.sort_by_key(|f| f.site.net);
        let mut i = 0;
        while i < sorted.len() {
            let net = sorted[i].site.net;
            let mut j = i;
            while j < sorted.len() && sorted[j].site.net == net {
                j += 1;
            }
            self.fault_index[net.index()] = Some((i as u32, j as u32));
            i = j;
        }
        self.faults = sorted;
    }

    pub fn clear_faults(&mut self) {
        self.set_faults(&[]);
    }

    #[inline]
    fn drive(&mut self, net: NetId, mut v: u64) {
        if let Some((a, b)) = self.fault_index[net.index()] {
            for f in &self.faults[a as usize..b as usize] {
                if f.site.time.active(self.cycle) {
                    v = f.site.effect.apply(v, f.lanes);
                }
            }
        }
        self.values[net.index()] = v;
    }

    /// Evaluate one cycle and clock the flops. Returns the state seen
    /// during the cycle and the sampled outputs.
    pub fn step(&mut self, frame: &InputFrame) -> (Vec<u64>, Vec<u64>) {
        let nl = self.netlist;
        for (fi, f) in nl.flops().iter().enumerate() {
            self.drive(f.q, self.state[fi]);
        }
        for (pi, p) in nl.inputs().iter().enumerate() {
            for (b, &n) in p.nets.iter().enumerate() {
                self.drive(n, frame.bits[pi][b]);
            }
        }
        for &gi in nl.evaluation_order() {
            let g = &nl.gates()[gi];
            let v = &self.values;
            let x = |k: usize| v[g.inputs[k].index()];
            let out = match g.kind {
                GateKind::Xor => x(0) ^ x(1),
                GateKind::And => x(0) & x(1),
                GateKind::Or => x(0) | x(1),
                GateKind::Not => !x(0),
                GateKind::Buf => x(0),
                GateKind::Mux => (x(0) & x(2)) | (!x(0) & x(1)),
                GateKind::Const0 => 0,
                GateKind::Const1 => !0,
            };
            self.drive(g.output, out);
        }
        let seen: Vec<u64> = nl
            .flops()
            .iter()
            .map(|f| self.values[f.q.index()])
            .collect();
        let outputs: Vec<u64> = nl
            .outputs()
            .iter()
            .flat_map(|p| p.nets.iter().map(|n| self.values[n.index()]))
            .collect();
        for (fi, f) in nl.flops().iter().enumerate() {
            self.state[fi] = self.values[f.d.index()];
        }
        self.cycle += 1;
        (seen, outputs)
    }

    /// Reset, then run every frame.
    pub fn run(&mut self, frames: &[InputFrame]) -> SimTrace {
        self.reset();
        let mut flops = Vec::with_capacity(frames.len() + 1);
        let mut outputs = Vec::with_capacity(frames.len());
        for f in frames {
            let (s, o) = self.step(f);
            flops.push(s);
            outputs.push(o);
        }
        flops.push(self.state.clone());
        let mut port_offsets = Vec::new();
        let mut off = 0;
        for p in self.netlist.outputs() {
            port_offsets.push((off, p.width()));
            off += p.width();
        }
        SimTrace {
            flops,
            outputs,
            port_offsets,
        }
    }

    pub fn net_value(&self, net: NetId) -> u64 {
        self.values[net.index()]
    }

    pub fn flop_state(&self) -> &[u64] {
        &self.state
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::NetlistBuilder;

    /// 2-bit counter with enable; output is the register.
    fn counter() -> Netlist {
        let mut b = NetlistBuilder::new("cnt");
        let en = b.input_port("en", 1)[0];
        b.set_stage(Stage::StateReg);
        let (h0, q0) = b.flop("q0", false);
        let (h1, q1) = b.flop("q1", false);
        b.set_stage(Stage::Other);
        let d0 = b.xor(q0, en, "d0");
        let c = b.and(q0, en, "c");
        let d1 = b.xor(q1, c, "d1");
        b.connect_d(h0, d0);
        b.connect_d(h1, d1);
        b.output_port("q", &[q0, q1]);
        b.finish().unwrap()
    }

    fn frames(n: &Netlist, en: &[u64]) -> Vec<InputFrame> {
        en.iter()
            .enumerate()
            .map(|(c, &v)| {
                InputFrame::broadcast(n, c, &BTreeMap::from([("en".into(), v)])).unwrap()
            })
            .collect()
    }

    #[test]
    fn counts() {
        let n = counter();
        let t = Simulator::new(&n).run(&frames(&n, &[1, 1, 0, 1, 1]));
        let seq: Vec<u64> = (0..=5).map(|c| t.flop_word(c, &[0, 1], 7)).collect();
        assert_eq!(seq, [0, 1, 2, 2, 3, 0]);
        assert_eq!(t.output_word(3, 0, 0), 2);
    }

    #[test]
    fn golden_run_is_repeatable() {
        let n = counter();
        let f = frames(&n, &[1, 0, 1, 1]);
        let mut sim = Simulator::new(&n);
        assert_eq!(sim.run(&f), sim.run(&f));
    }

    #[test]
    fn lane_faults_stay_in_their_lane() {
        let n = counter();
        let d0 = n.net_by_name("d0").unwrap();
        let q1 = n.net_by_name("q1").unwrap();
        let mut sim = Simulator::new(&n);
        sim.set_faults(&[
            LaneFault {
                lanes: 1 << 3,
                site: FaultSite {
                    net: d0,
                    effect: FaultEffect::Flip,
                    time: FaultTime::Cycle(0),
                },
            },
            LaneFault {
                lanes: 1 << 5,
                site: FaultSite {
                    net: q1,
                    effect: FaultEffect::Stuck1,
                    time: FaultTime::From(2),
                },
            },
        ]);
        let t = sim.run(&frames(&n, &[1, 1, 1, 1, 1]));
        let lane = |l| {
            (0..=4)
                .map(|c| t.flop_word(c, &[0, 1], l))
                .collect::<Vec<_>>()
        };
        assert_eq!(lane(0), [0, 1, 2, 3, 0]);
        // flipped d0 in cycle 0: state 0 instead of 1, then counts on
        assert_eq!(lane(3), [0, 0, 1, 2, 3]);
        // q1 reads as 1 from cycle 2
        assert_eq!(lane(5), [0, 1, 2, 3, 2]);
    }

    #[test]
    fn stuck_at_golden_value_is_masked() {
        let n = counter();
        let c = n.net_by_name("c").unwrap();
        let f = frames(&n, &[0, 0, 0]);
        let mut sim = Simulator::new(&n);
        let golden = sim.run(&f);
        sim.set_faults(&[LaneFault {
            lanes: !0,
            site: FaultSite {
                net: c,
                effect: FaultEffect::Stuck0,
                time: FaultTime::From(0),
            },
        }]);
        assert_eq!(sim.run(&f), golden);
    }

    #[test]
    fn trace_errors() {
        let n = counter();
        assert!(matches!(
            InputFrame::broadcast(&n, 2, &BTreeMap::new()),
            Err(TraceError::MissingPort { cycle: 2, .. })
        ));
        assert!(matches!(
            InputFrame::broadcast(&n, 0, &BTreeMap::from([("en".into(), 2)])),
            Err(TraceError::TooWide { .. })
        ));
        assert!(matches!(
            InputFrame::broadcast(&n, 0, &BTreeMap::from([("en".into(), 0), ("zz".into(), 0)])),
            Err(TraceError::UnknownPort { .. })
        ));
    }

    #[test]
    fn site_enumeration() {
        let n = counter();
        assert_eq!(enumerate_fault_sites(&n, FaultScope::All).len(), 3 + 2);
        assert!(enumerate_fault_sites(&n, FaultScope::DiffusionOnly).is_empty());
        // "en" has no _e suffix
        assert_eq!(enumerate_fault_sites(&n, FaultScope::InputsOnly).len(), 2);
    }

    #[test]
    fn per_lane_inputs() {
        let n = counter();
        let mut f = InputFrame::zeros(&n);
        f.set_lane(0, 9, 1);
        let t = Simulator::new(&n).run(&[f.clone(), f]);
        assert_eq!(t.flop_word(2, &[0, 1], 9), 2);
        assert_eq!(t.flop_word(2, &[0, 1], 8), 0);
    }
}
