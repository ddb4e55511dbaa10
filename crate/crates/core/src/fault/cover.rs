// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fsm::{Assignment, FsmSpec};

/// Input bits that make transition `t` fire, if any exist.
fn firing_input(fsm: &FsmSpec, t: usize) -> Option<u64> {
    let tr = &fsm.transitions()[t];
    if !tr.guard.is_default() {
        let mut a: Assignment = fsm.inputs().iter().map(|s| (s.name.clone(), 0)).collect();
        for (k, v) in &tr.guard.literals {
            a.insert(k.clone(), *v);
        }
        let bits = fsm.pack_inputs(0, &a).ok()?;
        return (fsm.fire(&tr.from, bits) == Some(t)).then_some(bits);
    }
    let n = fsm.input_bits();
    let exhaustive = if n < 16 { 1u64 << n } else { 1 << 16 };
    if let Some(b) = (0..exhaustive).find(|&b| fsm.fire(&tr.from, b) == Some(t)) {
        return Some(b);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
    let mask = if n >= 64 { !0 } else { (1u64 << n) - 1 };
    (0..1 << 16)
        .map(|_| rng.random::<u64>() & mask)
        .find(|&b| fsm.fire(&tr.from, b) == Some(t))
}

/// Walks from the reset state that together take every reachable edge at
/// least once. A walk is cut and a new one started from reset when the
/// remaining edges cannot be reached from where it stands. Each walk ends
/// with one extra step so its last covering edge is not the final cycle.
pub fn edge_cover_traces(fsm: &FsmSpec) -> Vec<Vec<Assignment>> {
    let ts = fsm.transitions();
    let inputs: Vec<Option<u64>> = (0..ts.len()).map(|t| firing_input(fsm, t)).collect();
    for (t, i) in inputs.iter().enumerate() {
        if i.is_none() {
            log::warn!(
                "transition {t} ({} -> {}) can never fire",
                ts[t].from,
                ts[t].to
            );
        }
    }
    let idx = |s: &str| fsm.state_index(s).expect("known state");
    let mut covered: Vec<bool> = inputs.iter().map(Option::is_none).collect();

    // Shortest path (as transition indices) from `from` ending with an
    // uncovered transition.
    let find = |from: usize, covered: &[bool]| -> Option<Vec<usize>> {
        let n = fsm.states().len();
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut q = VecDeque::from([from]);
        while let Some(s) = q.pop_front() {
            let out: Vec<usize> = (0..ts.len())
                .filter(|&t| idx(&ts[t].from) == s && inputs[t].is_some())
                .collect();
            if let Some(&t) = out.iter().find(|&&t| !covered[t]) {
                let mut path = vec![t];
                let mut cur = s;
                while let Some((p, via)) = prev[cur] {
                    path.push(via);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for t in out {
                let d = idx(&ts[t].to);
                if !seen[d] {
                    seen[d] = true;
                    prev[d] = Some((s, t));
                    q.push_back(d);
                }
            }
        }
        None
    };

    let reset = idx(fsm.reset_state());
    let mut traces = Vec::new();
    loop {
        let mut cur = reset;
        let mut steps: Vec<usize> = Vec::new();
        while let Some(path) = find(cur, &covered) {
            for t in path {
                covered[t] = true;
                steps.push(t);
                cur = idx(&ts[t].to);
            }
        }
        if steps.is_empty() {
            break;
        }
        if let Some(t) = (0..ts.len()).find(|&t| idx(&ts[t].from) == cur && inputs[t].is_some()) {
            steps.push(t);
        }
        traces.push(
            steps
                .iter()
                .map(|&t| fsm.unpack_inputs(inputs[t].expect("fireable")))
                .collect(),
        );
    }
    traces
}
