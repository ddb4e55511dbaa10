// SPDX-License-Identifier: Apache-2.0

//! Golden-model comparison of a hardened netlist against its machine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HardenedDesign, ALERT_PORT, CONTROL_PORT, STATE_PORT};
use crate::fsm::Assignment;
use crate::netlist::{InputFrame, Simulator};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BisimError {
    #[error("trace {trace}, cycle {cycle}: expected {expected}, netlist holds {found}")]
    StateMismatch {
        trace: usize,
        cycle: usize,
        expected: String,
        found: String,
    },
    #[error("trace {trace}, cycle {cycle}: alert raised in a fault-free run")]
    Alert { trace: usize, cycle: usize },
    #[error("trace {trace}: {message}")]
    Spec { trace: usize, message: String },
}

/// Run `traces` side by side (64 per simulation pass) on the netlist and
/// compare the decoded state sequence with the machine's.
pub fn check_traces(
    d: &HardenedDesign,
    traces: &[Vec<Assignment>],
    exec: Execution,
) -> Result<(), BisimError> {
    let n = &d.netlist;
    let sf = n.flops_behind_output(STATE_PORT).expect("state port");
    let af = n.flops_behind_output(ALERT_PORT).expect("alert port")[0];
    let port = n
        .inputs()
        .iter()
        .position(|p| p.name == CONTROL_PORT)
        .expect("control port");
    let batches = traces.len().div_ceil(64);
    let results = par::map_indexed(exec, batches, |b| -> Result<(), BisimError> {
        let chunk = &traces[64 * b..(64 * b + 64).min(traces.len())];
        let len = chunk.iter().map(Vec::len).max().unwrap_or(0);
        let mut frames = vec![InputFrame::zeros(n); len];
        let mut expected = Vec::with_capacity(chunk.len());
        for (lane, t) in chunk.iter().enumerate() {
            let trace = 64 * b + lane;
            let spec_err = |e: crate::fsm::SimError| BisimError::Spec {
                trace,
                message: e.to_string(),
            };
            expected.push(d.fsm.simulate(t).map_err(spec_err)?);
            for (c, v) in d.encode_trace(t).map_err(spec_err)?.iter().enumerate() {
                frames[c].set_lane(port, lane, v[CONTROL_PORT]);
            }
        }
        let run = Simulator::new(n).run(&frames);
        for (lane, want) in expected.iter().enumerate() {
            let trace = 64 * b + lane;
            for (c, s) in want.iter().enumerate() {
                let word = run.flop_word(c, &sf, lane);
                let found = d.codes.state.decode_u64(word);
                if found != Some(s.as_str()) {
                    return Err(BisimError::StateMismatch {
                        trace,
                        cycle: c,
                        expected: s.clone(),
                        found: found.map_or_else(|| format!("{word:#x}"), str::to_string),
                    });
                }
                if run.flop_word(c, &[af], lane) != 0 {
                    return Err(BisimError::Alert { trace, cycle: c });
                }
            }
        }
        Ok(())
    });
    results.into_iter().collect()
}

/// `count` random traces with lengths in `0..=max_len`.
pub fn random_traces(
    d: &HardenedDesign,
    count: usize,
    max_len: usize,
    seed: u64,
) -> Vec<Vec<Assignment>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            (0..len)
                .map(|_| d.fsm.random_assignment(&mut rng))
                .collect()
        })
        .collect()
}

/// Random-trace bisimulation check.
pub fn check_bisimulation(
    d: &HardenedDesign,
    count: usize,
    max_len: usize,
    seed: u64,
    exec: Execution,
) -> Result<(), BisimError> {
    check_traces(d, &random_traces(d, count, max_len, seed), exec)
}
