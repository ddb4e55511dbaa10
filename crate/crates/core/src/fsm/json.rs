// SPDX-License-Identifier: Apache-2.0

//! JSON machine descriptions.
//!
//! ```json
//! {"name": "m", "states": ["A", "B"], "reset": "A",
//!  "inputs": [{"name": "go", "width": 1}], "outputs": [{"name": "busy", "width": 1}],
//!  "transitions": [{"from": "A", "guard": {"go": 1}, "to": "B", "outputs": {"busy": 1}}],
//!  "moore_outputs": {"B": {"busy": 1}}}
//! ```
//!
//! An empty or missing `guard` is the default edge of its state.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{ControlPredicate, FsmError, FsmSpec, Signal, Transition};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmJson {
    pub name: String,
    pub states: Vec<String>,
    pub reset: String,
    #[serde(default)]
    pub inputs: Vec<Signal>,
    #[serde(default)]
    pub outputs: Vec<Signal>,
    pub transitions: Vec<TransitionJson>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub moore_outputs: IndexMap<String, IndexMap<String, u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionJson {
    pub from: String,
    #[serde(default)]
    pub guard: IndexMap<String, u64>,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<IndexMap<String, u64>>,
}

pub fn parse_json(source: &str) -> Result<FsmSpec, FsmError> {
    let doc: FsmJson = serde_json::from_str(source).map_err(|e| FsmError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let transitions = doc
        .transitions
        .into_iter()
        .map(|t| Transition {
            from: t.from,
            guard: ControlPredicate::new(t.guard),
            to: t.to,
            outputs: t.outputs,
        })
        .collect();
    FsmSpec::with_moore(
        doc.name,
        doc.states,
        doc.reset,
        doc.inputs,
        doc.outputs,
        transitions,
        doc.moore_outputs,
    )
}

/// Normalized JSON form of a machine (completed edges included).
pub fn to_json(fsm: &FsmSpec) -> FsmJson {
    FsmJson {
        name: fsm.name().to_string(),
        states: fsm.states().to_vec(),
        reset: fsm.reset_state().to_string(),
        inputs: fsm.inputs().to_vec(),
        outputs: fsm.outputs().to_vec(),
        transitions: fsm
            .transitions()
            .iter()
            .map(|t| TransitionJson {
                from: t.from.clone(),
                guard: t.guard.literals.iter().cloned().collect(),
                to: t.to.clone(),
                outputs: t.outputs.clone(),
            })
            .collect(),
        moore_outputs: fsm.moore_outputs().clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::FIG2;
    use super::*;

    #[test]
    fn syntax_error_has_position() {
        let err = parse_json("{\n  \"name\": \"x\",\n  \"states\": [,]\n}").unwrap_err();
        match err {
            FsmError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!(
            parse_json(r#"{"name":"x","states":["A"],"reset":"A","transitions":[],"bogus":1}"#),
            Err(FsmError::Syntax { .. })
        ));
    }

    #[test]
    fn normalized_form_reparses_identically() {
        let mut fsm = parse_json(FIG2).unwrap();
        fsm.complete();
        let text = serde_json::to_string(&to_json(&fsm)).unwrap();
        let again = parse_json(&text).unwrap();
        assert_eq!(again, fsm);
    }
}
