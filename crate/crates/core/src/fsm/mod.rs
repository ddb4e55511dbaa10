// SPDX-License-Identifier: Apache-2.0

//! Abstract finite-state machines: states, control inputs, outputs and a
//! guarded transition relation.
//!
//! Guards are conjunctions of `signal = value` literals; the empty
//! conjunction is the default edge of its state and fires only when no other
//! guard of that state matches. Internally every guard is a cube over the
//! concatenated control bits, so disjointness and coverage are exact.

mod json;
mod kiss2;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use json::{parse_json, to_json, FsmJson};
pub use kiss2::parse_kiss2;

/// Total control-input bits supported.
pub const MAX_INPUT_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FsmError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown state {name:?}{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    UnknownState { name: String, line: Option<usize> },
    #[error("unknown signal {0:?}")]
    UnknownSignal(String),
    #[error("value {value} does not fit signal {signal:?} of width {width}")]
    ValueTooWide {
        signal: String,
        value: u64,
        width: u32,
    },
    #[error("duplicate state {0:?}")]
    DuplicateState(String),
    #[error("duplicate signal {0:?}")]
    DuplicateSignal(String),
    #[error("machine has no states")]
    NoStates,
    #[error("signal {0:?} has zero width")]
    ZeroWidth(String),
    #[error("control inputs total {0} bits, at most {MAX_INPUT_BITS} supported")]
    InputTooWide(u32),
    #[error("state {state:?} has more than one default edge")]
    MultipleDefaults { state: String },
    #[error("nondeterministic guards in state {state:?}: transition {first} ({first_desc}) overlaps transition {second} ({second_desc})")]
    Nondeterministic {
        state: String,
        first: usize,
        first_desc: String,
        second: usize,
        second_desc: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("step {step}: signal {signal:?} not assigned")]
    MissingSignal { step: usize, signal: String },
    #[error("step {step}: unknown signal {signal:?}")]
    UnknownSignal { step: usize, signal: String },
    #[error("step {step}: value {value} does not fit signal {signal:?}")]
    ValueTooWide {
        step: usize,
        signal: String,
        value: u64,
    },
    #[error(
        "step {step}: no transition from state {state:?} matches and there is no default edge"
    )]
    NoTransition { step: usize, state: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signal {
    pub name: String,
    pub width: u32,
}

impl Signal {
    pub fn new(name: impl Into<String>, width: u32) -> Self {
        Signal {
            name: name.into(),
            width,
        }
    }

    fn max_value(&self) -> u64 {
        if self.width >= 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }
}

/// Conjunction of `(signal, value)` literals. Empty means "default".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ControlPredicate {
    pub literals: Vec<(String, u64)>,
}

impl ControlPredicate {
    pub fn default_edge() -> Self {
        ControlPredicate::default()
    }

    pub fn new<S: Into<String>>(literals: impl IntoIterator<Item = (S, u64)>) -> Self {
        ControlPredicate {
            literals: literals.into_iter().map(|(s, v)| (s.into(), v)).collect(),
        }
    }

    pub fn is_default(&self) -> bool {
        self.literals.is_empty()
    }
}

impl fmt::Display for ControlPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return write!(f, "else");
        }
        for (i, (s, v)) in self.literals.iter().enumerate() {
            if i > 0 {
                write!(f, "&")?;
            }
            write!(f, "{s}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub guard: ControlPredicate,
    pub to: String,
    /// Mealy outputs; `None` when the machine is Moore or the edge is silent.
    pub outputs: Option<IndexMap<String, u64>>,
}

/// One control-flow edge: `(current state, guard, next state)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgEdge {
    pub index: usize,
    pub from: String,
    pub guard: ControlPredicate,
    pub to: String,
}

impl CfgEdge {
    /// Stable human-readable label, unique within a machine.
    pub fn label(&self) -> String {
        format!("{}[{}]", self.from, self.guard)
    }
}

/// Input assignment for one step: signal name to value.
pub type Assignment = BTreeMap<String, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cube {
    mask: u64,
    value: u64,
}

impl Cube {
    fn disjoint(&self, other: &Cube) -> bool {
        (self.mask & other.mask) & (self.value ^ other.value) != 0
    }

    fn matches(&self, bits: u64) -> bool {
        bits & self.mask == self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsmSpec {
    name: String,
    states: Vec<String>,
    reset: String,
    inputs: Vec<Signal>,
    outputs: Vec<Signal>,
    transitions: Vec<Transition>,
    moore_outputs: IndexMap<String, IndexMap<String, u64>>,
    // Derived.
    state_index: BTreeMap<String, usize>,
    input_offset: Vec<u32>,
    cubes: Vec<Cube>,
}

impl FsmSpec {
    /// Validate without completing missing default edges.
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        reset: impl Into<String>,
        inputs: Vec<Signal>,
        outputs: Vec<Signal>,
        transitions: Vec<Transition>,
    ) -> Result<FsmSpec, FsmError> {
        Self::with_moore(
            name,
            states,
            reset,
            inputs,
            outputs,
            transitions,
            IndexMap::new(),
        )
    }

    pub fn with_moore(
        name: impl Into<String>,
        states: Vec<String>,
        reset: impl Into<String>,
        inputs: Vec<Signal>,
        outputs: Vec<Signal>,
        transitions: Vec<Transition>,
        moore_outputs: IndexMap<String, IndexMap<String, u64>>,
    ) -> Result<FsmSpec, FsmError> {
        let reset = reset.into();
        if states.is_empty() {
            return Err(FsmError::NoStates);
        }
        let mut state_index = BTreeMap::new();
        for (i, s) in states.iter().enumerate() {
            if state_index.insert(s.clone(), i).is_some() {
                return Err(FsmError::DuplicateState(s.clone()));
            }
        }
        if !state_index.contains_key(&reset) {
            return Err(FsmError::UnknownState {
                name: reset,
                line: None,
            });
        }
        let mut seen = BTreeMap::new();
        let mut input_offset = Vec::with_capacity(inputs.len());
        let mut total = 0u32;
        for s in inputs.iter().chain(&outputs) {
            if seen.insert(s.name.clone(), ()).is_some() {
                return Err(FsmError::DuplicateSignal(s.name.clone()));
            }
            if s.width == 0 {
                return Err(FsmError::ZeroWidth(s.name.clone()));
            }
        }
        for s in &inputs {
            input_offset.push(total);
            total += s.width;
        }
        if total > MAX_INPUT_BITS {
            return Err(FsmError::InputTooWide(total));
        }

        let mut fsm = FsmSpec {
            name: name.into(),
            states,
            reset,
            inputs,
            outputs,
            transitions: Vec::new(),
            moore_outputs,
            state_index,
            input_offset,
            cubes: Vec::new(),
        };
        for t in &transitions {
            for s in [&t.from, &t.to] {
                if !fsm.state_index.contains_key(s) {
                    return Err(FsmError::UnknownState {
                        name: s.clone(),
                        line: None,
                    });
                }
            }
            if let Some(outs) = &t.outputs {
                fsm.check_outputs(outs)?;
            }
            fsm.cubes.push(fsm.cube(&t.guard)?);
        }
        for (state, outs) in &fsm.moore_outputs {
            if !fsm.state_index.contains_key(state) {
                return Err(FsmError::UnknownState {
                    name: state.clone(),
                    line: None,
                });
            }
            fsm.check_outputs(outs)?;
        }
        fsm.transitions = transitions;
        fsm.check_determinism()?;
        for s in fsm.unreachable_states() {
            log::warn!(
                "{}: state {s:?} is unreachable from {:?}",
                fsm.name,
                fsm.reset
            );
        }
        Ok(fsm)
    }

    fn check_outputs(&self, outs: &IndexMap<String, u64>) -> Result<(), FsmError> {
        for (name, &v) in outs {
            let sig = self
                .outputs
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| FsmError::UnknownSignal(name.clone()))?;
            if v > sig.max_value() {
                return Err(FsmError::ValueTooWide {
                    signal: name.clone(),
                    value: v,
                    width: sig.width,
                });
            }
        }
        Ok(())
    }

    fn cube(&self, guard: &ControlPredicate) -> Result<Cube, FsmError> {
        let mut cube = Cube { mask: 0, value: 0 };
        for (name, v) in &guard.literals {
            let i = self
                .inputs
                .iter()
                .position(|s| &s.name == name)
                .ok_or_else(|| FsmError::UnknownSignal(name.clone()))?;
            let sig = &self.inputs[i];
            if *v > sig.max_value() {
                return Err(FsmError::ValueTooWide {
                    signal: name.clone(),
                    value: *v,
                    width: sig.width,
                });
            }
            let off = self.input_offset[i];
            let m = sig.max_value() << off;
            if cube.mask & m != 0 {
                return Err(FsmError::Syntax {
                    line: 0,
                    column: 0,
                    message: format!("guard {guard} constrains {name} twice"),
                });
            }
            cube.mask |= m;
            cube.value |= v << off;
        }
        Ok(cube)
    }

    fn check_determinism(&self) -> Result<(), FsmError> {
        for state in &self.states {
            let idx: Vec<usize> = (0..self.transitions.len())
                .filter(|&i| &self.transitions[i].from == state)
                .collect();
            let defaults = idx
                .iter()
                .filter(|&&i| self.transitions[i].guard.is_default())
                .count();
            if defaults > 1 {
                return Err(FsmError::MultipleDefaults {
                    state: state.clone(),
                });
            }
            for (a, &i) in idx.iter().enumerate() {
                for &j in &idx[a + 1..] {
                    let (ti, tj) = (&self.transitions[i], &self.transitions[j]);
                    if ti.guard.is_default() || tj.guard.is_default() {
                        continue;
                    }
                    if !self.cubes[i].disjoint(&self.cubes[j]) {
                        return Err(FsmError::Nondeterministic {
                            state: state.clone(),
                            first: i,
                            first_desc: format!("{} -> {} on {}", ti.from, ti.to, ti.guard),
                            second: j,
                            second_desc: format!("{} -> {} on {}", tj.from, tj.to, tj.guard),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Add an implicit default self-loop to every state whose guards leave
    /// part of the input space uncovered. Returns the states that were
    /// completed.
    pub fn complete(&mut self) -> Vec<String> {
        let total_bits = self.input_bits();
        let space: u128 = 1u128 << total_bits;
        let mut completed = Vec::new();
        for state in self.states.clone() {
            let mut covered: u128 = 0;
            let mut has_default = false;
            for (t, c) in self.transitions.iter().zip(&self.cubes) {
                if t.from != state {
                    continue;
                }
                if t.guard.is_default() {
                    has_default = true;
                } else {
                    covered += 1u128 << (total_bits - c.mask.count_ones());
                }
            }
            if has_default || covered == space {
                continue;
            }
            log::warn!(
                "{}: state {state:?} lacks a default edge; adding implicit self-loop",
                self.name
            );
            self.transitions.push(Transition {
                from: state.clone(),
                guard: ControlPredicate::default_edge(),
                to: state.clone(),
                outputs: None,
            });
            self.cubes.push(Cube { mask: 0, value: 0 });
            completed.push(state);
        }
        completed
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn reset_state(&self) -> &str {
        &self.reset
    }

    pub fn inputs(&self) -> &[Signal] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Signal] {
        &self.outputs
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn moore_outputs(&self) -> &IndexMap<String, IndexMap<String, u64>> {
        &self.moore_outputs
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_index.get(name).copied()
    }

    pub fn input_bits(&self) -> u32 {
        self.inputs.iter().map(|s| s.width).sum()
    }

    /// Control-flow graph in source order, one record per transition.
    pub fn extract_cfg(&self) -> Vec<CfgEdge> {
        self.transitions
            .iter()
            .enumerate()
            .map(|(index, t)| CfgEdge {
                index,
                from: t.from.clone(),
                guard: t.guard.clone(),
                to: t.to.clone(),
            })
            .collect()
    }

    pub fn unreachable_states(&self) -> Vec<String> {
        let mut seen = vec![false; self.states.len()];
        let mut queue = VecDeque::from([self.state_index[&self.reset]]);
        seen[self.state_index[&self.reset]] = true;
        while let Some(s) = queue.pop_front() {
            for t in &self.transitions {
                if t.from == self.states[s] {
                    let n = self.state_index[&t.to];
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        self.states
            .iter()
            .zip(seen)
            .filter(|(_, r)| !r)
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Pack an assignment into the concatenated control bits.
    pub fn pack_inputs(&self, step: usize, a: &Assignment) -> Result<u64, SimError> {
        for name in a.keys() {
            if !self.inputs.iter().any(|s| &s.name == name) {
                return Err(SimError::UnknownSignal {
                    step,
                    signal: name.clone(),
                });
            }
        }
        let mut bits = 0u64;
        for (sig, &off) in self.inputs.iter().zip(&self.input_offset) {
            let v = *a.get(&sig.name).ok_or_else(|| SimError::MissingSignal {
                step,
                signal: sig.name.clone(),
            })?;
            if v > sig.max_value() {
                return Err(SimError::ValueTooWide {
                    step,
                    signal: sig.name.clone(),
                    value: v,
                });
            }
            bits |= v << off;
        }
        Ok(bits)
    }

    pub fn unpack_inputs(&self, bits: u64) -> Assignment {
        self.inputs
            .iter()
            .zip(&self.input_offset)
            .map(|(s, &off)| (s.name.clone(), (bits >> off) & s.max_value()))
            .collect()
    }

    /// Index of the transition that fires from `state` on `bits`.
    pub fn fire(&self, state: &str, bits: u64) -> Option<usize> {
        let mut default = None;
        for (i, (t, c)) in self.transitions.iter().zip(&self.cubes).enumerate() {
            if t.from != state {
                continue;
            }
            if t.guard.is_default() {
                default = Some(i);
            } else if c.matches(bits) {
                return Some(i);
            }
        }
        default
    }

    /// Golden reference trajectory, starting at the reset state.
    pub fn simulate(&self, trace: &[Assignment]) -> Result<Vec<String>, SimError> {
        let mut cur = self.reset.clone();
        let mut out = vec![cur.clone()];
        for (step, a) in trace.iter().enumerate() {
            let bits = self.pack_inputs(step, a)?;
            let t = self
                .fire(&cur, bits)
                .ok_or_else(|| SimError::NoTransition {
                    step,
                    state: cur.clone(),
                })?;
            cur = self.transitions[t].to.clone();
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// Uniformly random input assignment.
    pub fn random_assignment<R: Rng>(&self, rng: &mut R) -> Assignment {
        let bits = if self.input_bits() == 0 {
            0
        } else {
            rng.random::<u64>()
        };
        self.unpack_inputs(bits)
    }

    /// Output values produced in `state` when `transition` fires: Moore
    /// values of the state overlaid with the transition's Mealy values.
    pub fn output_values(&self, state: &str, transition: usize) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> =
            self.outputs.iter().map(|s| (s.name.clone(), 0)).collect();
        if let Some(m) = self.moore_outputs.get(state) {
            for (k, v) in m {
                out.insert(k.clone(), *v);
            }
        }
        if let Some(m) = &self.transitions[transition].outputs {
            for (k, v) in m {
                out.insert(k.clone(), *v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsmFormat {
    Kiss2,
    Json,
}

impl FsmFormat {
    /// Guess from a file extension.
    pub fn from_path(path: &std::path::Path) -> FsmFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("kiss2") | Some("kiss") => FsmFormat::Kiss2,
            _ => FsmFormat::Json,
        }
    }
}

/// Parse, validate and complete a machine description.
pub fn parse_fsm(source: &str, format: FsmFormat) -> Result<FsmSpec, FsmError> {
    let mut fsm = match format {
        FsmFormat::Kiss2 => parse_kiss2(source)?,
        FsmFormat::Json => parse_json(source)?,
    };
    fsm.complete();
    Ok(fsm)
}

pub fn extract_cfg(fsm: &FsmSpec) -> Vec<CfgEdge> {
    fsm.extract_cfg()
}

pub fn simulate_spec(fsm: &FsmSpec, trace: &[Assignment]) -> Result<Vec<String>, SimError> {
    fsm.simulate(trace)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) const FIG2: &str = r#"{
        "name": "fig2",
        "states": ["S0", "S1", "S2", "S3"],
        "reset": "S0",
        "inputs": [{"name": "x0", "width": 1}, {"name": "x1", "width": 1}, {"name": "x2", "width": 1}],
        "outputs": [],
        "transitions": [
            {"from": "S0", "guard": {"x0": 1}, "to": "S1"},
            {"from": "S0", "guard": {"x0": 0, "x1": 1}, "to": "S2"},
            {"from": "S1", "guard": {"x2": 1}, "to": "S3"},
            {"from": "S2", "guard": {}, "to": "S3"}
        ]
    }"#;

    pub(crate) fn assign(pairs: &[(&str, u64)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn fig2() -> FsmSpec {
        parse_fsm(FIG2, FsmFormat::Json).unwrap()
    }

    #[test]
    fn toggle_has_four_edges() {
        let src = r#"{"name":"toggle","states":["S0","S1"],"reset":"S0",
            "inputs":[{"name":"t","width":1}],"outputs":[],
            "transitions":[
              {"from":"S0","guard":{"t":1},"to":"S1"},
              {"from":"S0","guard":{"t":0},"to":"S0"},
              {"from":"S1","guard":{"t":1},"to":"S0"},
              {"from":"S1","guard":{"t":0},"to":"S1"}]}"#;
        let fsm = parse_fsm(src, FsmFormat::Json).unwrap();
        assert_eq!(fsm.states().len(), 2);
        // Fully covered: no implicit self-loops added.
        assert_eq!(fsm.extract_cfg().len(), 4);
    }

    #[test]
    fn fig2_cfg_has_seven_edges() {
        let fsm = fig2();
        assert_eq!(fsm.states().len(), 4);
        let cfg = fsm.extract_cfg();
        assert_eq!(cfg.len(), 7);
        // Oracle: count per state = explicit guards, plus one self-loop
        // when the guards do not cover all 8 input combinations.
        let mut expected = 0;
        for s in fsm.states() {
            let explicit: Vec<&Transition> =
                fsm.transitions().iter().filter(|t| &t.from == s).collect();
            expected += explicit.len();
        }
        assert_eq!(cfg.len(), expected);
        let self_loops = cfg
            .iter()
            .filter(|e| e.from == e.to && e.guard.is_default())
            .count();
        assert_eq!(self_loops, 3);
        let labels: Vec<String> = cfg.iter().map(|e| e.label()).collect();
        assert!(labels.contains(&"S0[x0=1]".to_string()));
        assert!(labels.contains(&"S3[else]".to_string()));
    }

    #[test]
    fn single_state_no_inputs() {
        let mut fsm = FsmSpec::new("one", vec!["A".into()], "A", vec![], vec![], vec![]).unwrap();
        fsm.complete();
        assert_eq!(fsm.extract_cfg().len(), 1);
        assert_eq!(fsm.simulate(&[Assignment::new()]).unwrap(), vec!["A", "A"]);
    }

    #[test]
    fn fig2_trajectories() {
        let fsm = fig2();
        let trace = vec![
            assign(&[("x0", 1), ("x1", 0), ("x2", 0)]),
            assign(&[("x0", 0), ("x1", 0), ("x2", 1)]),
        ];
        assert_eq!(fsm.simulate(&trace).unwrap(), vec!["S0", "S1", "S3"]);
        assert_eq!(fsm.simulate(&[]).unwrap(), vec!["S0"]);
        let stay = vec![assign(&[("x0", 0), ("x1", 0), ("x2", 1)])];
        assert_eq!(fsm.simulate(&stay).unwrap(), vec!["S0", "S0"]);
    }

    #[test]
    fn trace_errors() {
        let fsm = fig2();
        assert!(matches!(
            fsm.simulate(&[assign(&[("x0", 1)])]),
            Err(SimError::MissingSignal { step: 0, .. })
        ));
        assert!(matches!(
            fsm.simulate(&[assign(&[("x0", 1), ("x1", 0), ("x2", 0), ("zz", 1)])]),
            Err(SimError::UnknownSignal { .. })
        ));
        assert!(matches!(
            fsm.simulate(&[assign(&[("x0", 2), ("x1", 0), ("x2", 0)])]),
            Err(SimError::ValueTooWide { .. })
        ));
    }

    #[test]
    fn incomplete_machine_reports_step() {
        let fsm = FsmSpec::new(
            "gap",
            vec!["A".into(), "B".into()],
            "A",
            vec![Signal::new("go", 1)],
            vec![],
            vec![Transition {
                from: "A".into(),
                guard: ControlPredicate::new([("go", 1)]),
                to: "B".into(),
                outputs: None,
            }],
        )
        .unwrap();
        let err = fsm
            .simulate(&[assign(&[("go", 1)]), assign(&[("go", 0)])])
            .unwrap_err();
        assert_eq!(
            err,
            SimError::NoTransition {
                step: 1,
                state: "B".into()
            }
        );
    }

    #[test]
    fn overlapping_guards_rejected() {
        let src = FIG2.replace(r#"{"x0": 0, "x1": 1}"#, r#"{"x1": 1}"#);
        match parse_fsm(&src, FsmFormat::Json) {
            Err(FsmError::Nondeterministic { first, second, .. }) => {
                assert_eq!((first, second), (0, 1));
            }
            other => panic!("expected nondeterminism, got {other:?}"),
        }
    }

    #[test]
    fn unknown_references() {
        let src = FIG2.replace(r#""to": "S3"}"#, r#""to": "S9"}"#);
        assert!(matches!(
            parse_fsm(&src, FsmFormat::Json),
            Err(FsmError::UnknownState { .. })
        ));
        let src = FIG2.replace(r#"{"x2": 1}"#, r#"{"x7": 1}"#);
        assert!(matches!(
            parse_fsm(&src, FsmFormat::Json),
            Err(FsmError::UnknownSignal(_))
        ));
    }

    // Exhaustive over the input space: exactly one transition fires from
    // every state once completed.
    #[test]
    fn exactly_one_transition_fires() {
        let fsm = fig2();
        for s in fsm.states() {
            for bits in 0..(1u64 << fsm.input_bits()) {
                let firing: Vec<usize> = fsm
                    .transitions()
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| &t.from == s)
                    .filter(|(i, t)| {
                        if t.guard.is_default() {
                            fsm.transitions().iter().enumerate().all(|(j, u)| {
                                u.from != *s || u.guard.is_default() || !fsm.cubes[j].matches(bits)
                            })
                        } else {
                            fsm.cubes[*i].matches(bits)
                        }
                    })
                    .map(|(i, _)| i)
                    .collect();
                assert_eq!(firing.len(), 1, "state {s} bits {bits:03b}");
                assert_eq!(fsm.fire(s, bits), Some(firing[0]));
            }
        }
    }

    #[test]
    fn random_trajectories_stay_in_states() {
        let fsm = fig2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let trace: Vec<Assignment> = (0..20).map(|_| fsm.random_assignment(&mut rng)).collect();
            let traj = fsm.simulate(&trace).unwrap();
            assert_eq!(traj.len(), 21);
            assert!(traj.iter().all(|s| fsm.states().contains(s)));
        }
    }

    #[test]
    fn unreachable_is_reported_not_fatal() {
        let fsm = FsmSpec::new(
            "island",
            vec!["A".into(), "B".into()],
            "A",
            vec![],
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(fsm.unreachable_states(), vec!["B".to_string()]);
    }

    #[test]
    fn multibit_guards() {
        let fsm = FsmSpec::new(
            "mb",
            vec!["A".into(), "B".into()],
            "A",
            vec![Signal::new("op", 3), Signal::new("en", 1)],
            vec![],
            vec![
                Transition {
                    from: "A".into(),
                    guard: ControlPredicate::new([("op", 5), ("en", 1)]),
                    to: "B".into(),
                    outputs: None,
                },
                Transition {
                    from: "A".into(),
                    guard: ControlPredicate::new([("op", 4)]),
                    to: "A".into(),
                    outputs: None,
                },
            ],
        )
        .unwrap();
        let bits = fsm
            .pack_inputs(0, &assign(&[("op", 5), ("en", 1)]))
            .unwrap();
        assert_eq!(fsm.fire("A", bits), Some(0));
        let bits = fsm
            .pack_inputs(0, &assign(&[("op", 5), ("en", 0)]))
            .unwrap();
        assert_eq!(fsm.fire("A", bits), None);
        assert_eq!(fsm.unpack_inputs(bits), assign(&[("op", 5), ("en", 0)]));
    }
}
