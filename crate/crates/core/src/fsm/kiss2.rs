// SPDX-License-Identifier: Apache-2.0

//! KISS2 reader.
//!
//! Headers `.i`, `.o`, `.p`, `.s`, `.r` and `.e`/`.end` are understood; a
//! non-standard `.states A B C` line may list the states explicitly. Without
//! it, the states are those appearing in the current-state column plus the
//! reset state, in order of first appearance. Input bit `k` (counting from
//! the left) becomes signal `x<k>`, output bit `k` becomes `y<k>`; `-` in an
//! input column is a don't-care, in an output column it reads as 0.

use indexmap::IndexMap;

use super::{ControlPredicate, FsmError, FsmSpec, Signal, Transition};

struct Line<'a> {
    no: usize,
    fields: Vec<(usize, &'a str)>,
}

fn tokenize(source: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let text = raw.split('#').next().unwrap_or("");
        let mut fields = Vec::new();
        let mut start = None;
        for (col, ch) in text.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(col),
                (true, Some(s)) => {
                    fields.push((s + 1, &text[s..col]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            fields.push((s + 1, &text[s..]));
        }
        if !fields.is_empty() {
            out.push(Line { no: i + 1, fields });
        }
    }
    out
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FsmError {
    FsmError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn header_number(line: &Line<'_>) -> Result<usize, FsmError> {
    let (col, text) = line
        .fields
        .get(1)
        .ok_or_else(|| syntax(line.no, 1, format!("{} needs a value", line.fields[0].1)))?;
    text.parse()
        .map_err(|_| syntax(line.no, *col, format!("expected a number, found {text:?}")))
}

pub fn parse_kiss2(source: &str) -> Result<FsmSpec, FsmError> {
    let mut n_in: Option<usize> = None;
    let mut n_out: Option<usize> = None;
    let mut n_terms: Option<usize> = None;
    let mut n_states: Option<usize> = None;
    let mut reset: Option<String> = None;
    let mut declared: Option<Vec<String>> = None;
    let mut rows = Vec::new();

    for line in tokenize(source) {
        let (col, head) = line.fields[0];
        if let Some(directive) = head.strip_prefix('.') {
            match directive {
                "i" => n_in = Some(header_number(&line)?),
                "o" => n_out = Some(header_number(&line)?),
                "p" => n_terms = Some(header_number(&line)?),
                "s" => n_states = Some(header_number(&line)?),
                "r" => {
                    let (_, name) = line
                        .fields
                        .get(1)
                        .ok_or_else(|| syntax(line.no, col, ".r needs a state name"))?;
                    reset = Some(name.to_string());
                }
                "states" => {
                    declared = Some(
                        line.fields[1..]
                            .iter()
                            .map(|(_, s)| s.to_string())
                            .collect(),
                    )
                }
                "e" | "end" => break,
                "ilb" | "ob" | "start_kiss" | "end_kiss" | "type" => {}
                other => return Err(syntax(line.no, col, format!("unknown directive .{other}"))),
            }
            continue;
        }
        if line.fields.len() != 4 {
            return Err(syntax(
                line.no,
                col,
                format!("expected 4 fields, found {}", line.fields.len()),
            ));
        }
        rows.push(line);
    }

    let n_in = n_in.ok_or_else(|| syntax(1, 1, "missing .i header"))?;
    let n_out = n_out.ok_or_else(|| syntax(1, 1, "missing .o header"))?;

    let mut states: Vec<String> = Vec::new();
    let push_state = |s: &str, states: &mut Vec<String>| {
        if !states.iter().any(|x| x == s) {
            states.push(s.to_string());
        }
    };
    if let Some(d) = &declared {
        for s in d {
            push_state(s, &mut states);
        }
    } else {
        if let Some(r) = &reset {
            push_state(r, &mut states);
        }
        for row in &rows {
            push_state(row.fields[1].1, &mut states);
        }
    }

    let mut transitions = Vec::with_capacity(rows.len());
    for row in &rows {
        let (icol, ins) = row.fields[0];
        let (_, from) = row.fields[1];
        let (_, to) = row.fields[2];
        let (ocol, outs) = row.fields[3];
        if ins.len() != n_in {
            return Err(syntax(
                row.no,
                icol,
                format!("input pattern has {} bits, .i says {n_in}", ins.len()),
            ));
        }
        if outs.len() != n_out {
            return Err(syntax(
                row.no,
                ocol,
                format!("output pattern has {} bits, .o says {n_out}", outs.len()),
            ));
        }
        for name in [from, to] {
            if !states.iter().any(|s| s == name) {
                return Err(FsmError::UnknownState {
                    name: name.to_string(),
                    line: Some(row.no),
                });
            }
        }
        let mut literals = Vec::new();
        for (k, ch) in ins.chars().enumerate() {
            match ch {
                '0' => literals.push((format!("x{k}"), 0)),
                '1' => literals.push((format!("x{k}"), 1)),
                '-' => {}
                other => {
                    return Err(syntax(
                        row.no,
                        icol + k,
                        format!("bad input character {other:?}"),
                    ))
                }
            }
        }
        let mut outputs = IndexMap::new();
        for (k, ch) in outs.chars().enumerate() {
            let v = match ch {
                '1' => 1,
                '0' | '-' => 0,
                other => {
                    return Err(syntax(
                        row.no,
                        ocol + k,
                        format!("bad output character {other:?}"),
                    ))
                }
            };
            outputs.insert(format!("y{k}"), v);
        }
        transitions.push(Transition {
            from: from.to_string(),
            guard: ControlPredicate::new(literals),
            to: to.to_string(),
            outputs: (n_out > 0).then_some(outputs),
        });
    }

    if let Some(p) = n_terms {
        if p != rows.len() {
            log::warn!(".p declares {p} terms, found {}", rows.len());
        }
    }
    if let Some(s) = n_states {
        if s != states.len() {
            log::warn!(".s declares {s} states, found {}", states.len());
        }
    }
    let reset = reset
        .or_else(|| states.first().cloned())
        .ok_or(FsmError::NoStates)?;
    let inputs = (0..n_in).map(|k| Signal::new(format!("x{k}"), 1)).collect();
    let outputs = (0..n_out)
        .map(|k| Signal::new(format!("y{k}"), 1))
        .collect();
    FsmSpec::new("kiss2", states, reset, inputs, outputs, transitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::{parse_fsm, FsmFormat};

    const TOGGLE: &str = "\
# two-state toggle
.i 1
.o 1
.p 4
.s 2
.r S0
1 S0 S1 1
0 S0 S0 0
1 S1 S0 0
0 S1 S1 1
.e
";

    #[test]
    fn toggle() {
        let fsm = parse_fsm(TOGGLE, FsmFormat::Kiss2).unwrap();
        assert_eq!(fsm.states(), ["S0", "S1"]);
        assert_eq!(fsm.extract_cfg().len(), 4);
        assert_eq!(fsm.inputs()[0].name, "x0");
        assert_eq!(fsm.transitions()[0].outputs.as_ref().unwrap()["y0"], 1);
    }

    #[test]
    fn dont_care_bits() {
        let src = ".i 3\n.o 0\n.r A\n1-- A B \n01- A A \n00- A A \n--- B B \n";
        // Four fields are required even with zero outputs.
        assert!(parse_kiss2(src).is_err());
        let src = ".i 3\n.o 1\n.r A\n1-- A B 0\n01- A A 0\n00- A A 1\n--- B B 0\n";
        let fsm = parse_fsm(src, FsmFormat::Kiss2).unwrap();
        assert_eq!(
            fsm.transitions()[0].guard.literals,
            vec![("x0".to_string(), 1)]
        );
        assert!(fsm.transitions()[3].guard.is_default());
        assert_eq!(fsm.extract_cfg().len(), 4);
    }

    #[test]
    fn undeclared_state_is_unknown() {
        let src = ".i 1\n.o 1\n.r S0\n1 S0 S9 1\n0 S0 S0 0\n";
        match parse_kiss2(src) {
            Err(FsmError::UnknownState { name, line }) => {
                assert_eq!(name, "S9");
                assert_eq!(line, Some(4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_state_list() {
        let src = ".i 1\n.o 1\n.states S0 S9\n.r S0\n1 S0 S9 1\n";
        let fsm = parse_fsm(src, FsmFormat::Kiss2).unwrap();
        assert_eq!(fsm.states(), ["S0", "S9"]);
        // S0 gets an implicit self-loop, S9 too.
        assert_eq!(fsm.extract_cfg().len(), 3);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let src = ".i 2\n.o 1\n10 A A 1\n1x A A 0\n";
        match parse_kiss2(src) {
            Err(FsmError::Syntax { line, column, .. }) => assert_eq!((line, column), (4, 2)),
            other => panic!("{other:?}"),
        }
        let src = ".i 2\n.o 1\n101 A A 1\n";
        assert!(matches!(
            parse_kiss2(src),
            Err(FsmError::Syntax {
                line: 3,
                column: 1,
                ..
            })
        ));
        assert!(matches!(
            parse_kiss2(".i x\n"),
            Err(FsmError::Syntax {
                line: 1,
                column: 4,
                ..
            })
        ));
    }

    #[test]
    fn overlapping_cubes_rejected() {
        let src = ".i 2\n.o 1\n1- A B 1\n-1 A A 0\n-- B B 0\n";
        assert!(matches!(
            parse_kiss2(src),
            Err(FsmError::Nondeterministic { .. })
        ));
    }

    #[test]
    fn deterministic_edge_order() {
        let a = parse_fsm(TOGGLE, FsmFormat::Kiss2).unwrap().extract_cfg();
        let b = parse_fsm(TOGGLE, FsmFormat::Kiss2).unwrap().extract_cfg();
        assert_eq!(a, b);
    }
}
