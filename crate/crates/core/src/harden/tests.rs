// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fsm::{parse_fsm, FsmFormat};
use crate::netlist::{
    FaultEffect, FaultSite, FaultTime, InputFrame, LaneFault, SimTrace, Simulator,
};

const FIG2: &str = include_str!("../../fsms/fig2.json");
const REF14: &str = include_str!("../../fsms/reference14.json");

fn load(src: &str) -> FsmSpec {
    parse_fsm(src, FsmFormat::Json).unwrap()
}

fn state_flops(n: &Netlist) -> Vec<usize> {
    n.flops_behind_output(STATE_PORT).unwrap()
}

fn alert_flop(n: &Netlist) -> usize {
    n.flops_behind_output(ALERT_PORT).unwrap()[0]
}

/// Run up to 64 traces side by side, one per lane.
fn run_lanes(d: &HardenedDesign, traces: &[Vec<Assignment>]) -> SimTrace {
    let n = &d.netlist;
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    let port = n
        .inputs()
        .iter()
        .position(|p| p.name == CONTROL_PORT)
        .unwrap();
    let mut frames = vec![InputFrame::zeros(n); len];
    for (lane, t) in traces.iter().enumerate() {
        for (c, v) in d.encode_trace(t).unwrap().iter().enumerate() {
            frames[c].set_lane(port, lane, v[CONTROL_PORT]);
        }
    }
    Simulator::new(n).run(&frames)
}

fn random_trace(fsm: &FsmSpec, rng: &mut ChaCha8Rng, len: usize) -> Vec<Assignment> {
    (0..len).map(|_| fsm.random_assignment(rng)).collect()
}

fn bisimulates(src: &str, level: u32, traces: usize) {
    let fsm = load(src);
    let d = harden(&fsm, &HardeningConfig::new(level, 7)).unwrap();
    let sf = state_flops(&d.netlist);
    let af = alert_flop(&d.netlist);
    let mut rng = ChaCha8Rng::seed_from_u64(level as u64);
    let mut done = 0;
    while done < traces {
        let batch: Vec<Vec<Assignment>> = (0..64.min(traces - done))
            .map(|_| {
                let len = rng.random_range(0..=64);
                random_trace(&fsm, &mut rng, len)
            })
            .collect();
        let t = run_lanes(&d, &batch);
        for (lane, tr) in batch.iter().enumerate() {
            let want = fsm.simulate(tr).unwrap();
            for (c, s) in want.iter().enumerate() {
                let word = t.flop_word(c, &sf, lane);
                assert_eq!(
                    d.codes.state.decode_u64(word),
                    Some(s.as_str()),
                    "cycle {c}"
                );
                assert_eq!(t.flop_word(c, &[af], lane), 0);
            }
        }
        done += batch.len();
    }
}

#[test]
fn fig2_bisimulation() {
    bisimulates(FIG2, 2, 200);
}

#[test]
fn reference_bisimulation_levels() {
    for n in [2, 3, 4] {
        bisimulates(REF14, n, 128);
    }
}

#[test]
fn library_check_matches() {
    let d = harden(&load(REF14), &HardeningConfig::new(2, 3)).unwrap();
    check_bisimulation(&d, 200, 40, 1, crate::par::Execution::Parallel).unwrap();
    // A design whose codes disagree with its netlist fails.
    let mut broken = d.clone();
    broken.codes = harden(&load(REF14), &HardeningConfig::new(2, 4))
        .unwrap()
        .codes;
    assert!(check_bisimulation(&broken, 10, 10, 1, crate::par::Execution::Sequential).is_err());
}

#[test]
fn fig2_path() {
    let fsm = load(FIG2);
    let d = harden(&fsm, &HardeningConfig::new(2, 1)).unwrap();
    let a = |x0, x1, x2| BTreeMap::from([("x0".into(), x0), ("x1".into(), x1), ("x2".into(), x2)]);
    let t = run_lanes(&d, &[vec![a(1, 0, 0), a(0, 0, 1)]]);
    let sf = state_flops(&d.netlist);
    let got: Vec<&str> = (0..3)
        .map(|c| d.codes.state.decode_u64(t.flop_word(c, &sf, 0)).unwrap())
        .collect();
    assert_eq!(got, ["S0", "S1", "S3"]);
}

#[test]
fn reference_widths_at_level_two() {
    let fsm = load(REF14);
    assert_eq!(fsm.extract_cfg().len(), 14);
    let d = harden(&fsm, &HardeningConfig::new(2, 1)).unwrap();
    assert_eq!(d.codes.state.width(), 4);
    assert_eq!(d.codes.control.width(), 5);
    assert_eq!(d.layout.blocks, 1);
    assert_eq!(d.plans.len(), 14);
    for p in &d.plans {
        assert!(p.verify(&d.layout, &d.mds));
    }
}

#[test]
fn merging_edges_get_distinct_modifiers() {
    let fsm = load(FIG2);
    let d = harden(&fsm, &HardeningConfig::new(2, 3)).unwrap();
    let into_s3: Vec<&TransitionPlan> = d
        .plans
        .iter()
        .filter(|p| p.to == "S3" && p.from != "S3")
        .collect();
    assert_eq!(into_s3.len(), 2);
    assert_eq!(into_s3[0].next_code, into_s3[1].next_code);
    assert_ne!(into_s3[0].modifier, into_s3[1].modifier);
}

#[test]
fn level_one_rejected() {
    let fsm = load(FIG2);
    assert_eq!(
        harden(&fsm, &HardeningConfig::new(1, 0)).unwrap_err(),
        HardenError::LevelTooLow(1)
    );
}

#[test]
fn reset_holds_reset_codeword() {
    let fsm = load(REF14);
    let d = harden(&fsm, &HardeningConfig::new(3, 9)).unwrap();
    let t = run_lanes(&d, &[vec![]]);
    let sf = state_flops(&d.netlist);
    assert_eq!(
        t.flop_word(0, &sf, 0),
        d.codes.state.codeword("IDLE").unwrap().to_u64()
    );
}

fn flip_state_bits(d: &HardenedDesign, mask: u64, cycle: usize) -> Vec<LaneFault> {
    let sf = state_flops(&d.netlist);
    (0..sf.len())
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| LaneFault {
            lanes: !0,
            site: FaultSite {
                net: d.netlist.flops()[sf[i]].q,
                effect: FaultEffect::Flip,
                time: FaultTime::Cycle(cycle),
            },
        })
        .collect()
}

#[test]
fn non_codeword_goes_to_error_and_stays() {
    let fsm = load(REF14);
    let d = harden(&fsm, &HardeningConfig::new(2, 5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let traces: Vec<Vec<Assignment>> = (0..64).map(|_| random_trace(&fsm, &mut rng, 20)).collect();
    let sf = state_flops(&d.netlist);
    let af = alert_flop(&d.netlist);
    let n = &d.netlist;
    let port = n
        .inputs()
        .iter()
        .position(|p| p.name == CONTROL_PORT)
        .unwrap();
    let mut frames = vec![InputFrame::zeros(n); 20];
    let mut rng2 = ChaCha8Rng::seed_from_u64(4);
    for (lane, t) in traces.iter().enumerate() {
        for (c, v) in d.encode_trace(t).unwrap().iter().enumerate() {
            // after the fault, drive arbitrary valid control words
            let w = if c > 3 {
                let k = rng2.random_range(0..d.codes.control.len());
                d.codes.control.entries().nth(k).unwrap().1.to_u64()
            } else {
                v[CONTROL_PORT]
            };
            frames[c].set_lane(port, lane, w);
        }
    }
    let mut sim = Simulator::new(n);
    sim.set_faults(&flip_state_bits(&d, 1, 3));
    let t = sim.run(&frames);
    for lane in 0..64 {
        let seen = t.flop_word(3, &sf, lane);
        assert!(d.codes.state.decode_u64(seen).is_none());
        for c in 4..=20 {
            assert_eq!(t.flop_word(c, &sf, lane), 0, "lane {lane} cycle {c}");
            assert_eq!(t.flop_word(c, &[af], lane), 1);
        }
    }
}

#[test]
fn golden_error_bits_are_all_ones() {
    let fsm = load(REF14);
    let d = harden(&fsm, &HardeningConfig::new(2, 5)).unwrap();
    let err_ok = d.netlist.net_by_name("err_ok").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tr = random_trace(&fsm, &mut rng, 40);
    let frames: Vec<InputFrame> = d
        .encode_trace(&tr)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(c, v)| InputFrame::broadcast(&d.netlist, c, v).unwrap())
        .collect();
    let mut sim = Simulator::new(&d.netlist);
    for f in &frames {
        sim.step(f);
        assert_eq!(sim.net_value(err_ok), !0);
    }
}

/// Every flip of fewer than N encoded input bits is masked or leads to ERROR.
fn input_flips_never_hijack(level: u32, max_flips: u32) {
    let fsm = load(REF14);
    let d = harden(&fsm, &HardeningConfig::new(level, 1)).unwrap();
    let sw = d.codes.state.width();
    let cw = d.codes.control.width();
    let total = sw + cw;
    let masks: Vec<u64> = (1u64..1 << total)
        .filter(|m| m.count_ones() <= max_flips)
        .collect();
    for p in &d.plans {
        for &mask in &masks {
            let s = p.state_code.to_u64() ^ (mask & ((1 << sw) - 1));
            let x = p.control_code.to_u64() ^ (mask >> sw);
            let sv = BitVec::from_u64(s, sw);
            let xv = BitVec::from_u64(x, cw);
            // Only an exact edge match selects a modifier.
            let sel = d
                .plans
                .iter()
                .find(|q| q.state_code == sv && q.control_code == xv);
            assert!(sel.is_none());
        }
    }
}

#[test]
fn single_input_flips_never_select_an_edge() {
    input_flips_never_hijack(2, 1);
    input_flips_never_hijack(3, 2);
}

#[test]
fn gate_count_grows_with_level() {
    let fsm = load(REF14);
    let totals: Vec<usize> = [2, 3, 4]
        .iter()
        .map(|&n| {
            harden(&fsm, &HardeningConfig::new(n, 1))
                .unwrap()
                .netlist
                .gates()
                .len()
        })
        .collect();
    assert!(totals.windows(2).all(|w| w[0] <= w[1]), "{totals:?}");
}

#[test]
fn encoded_selectors_bisimulate() {
    let fsm = load(REF14);
    let mut cfg = HardeningConfig::new(2, 7);
    cfg.encoded_mux_selectors = true;
    let d = harden(&fsm, &cfg).unwrap();
    let plain = harden(&fsm, &HardeningConfig::new(2, 7)).unwrap();
    assert!(d.netlist.gates().len() > plain.netlist.gates().len());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch: Vec<Vec<Assignment>> = (0..64).map(|_| random_trace(&fsm, &mut rng, 32)).collect();
    let t = run_lanes(&d, &batch);
    let sf = state_flops(&d.netlist);
    for (lane, tr) in batch.iter().enumerate() {
        for (c, s) in fsm.simulate(tr).unwrap().iter().enumerate() {
            assert_eq!(
                d.codes.state.decode_u64(t.flop_word(c, &sf, lane)),
                Some(s.as_str())
            );
        }
    }
}

#[test]
fn outputs_follow_the_machine() {
    let fsm = load(REF14);
    let d = harden(&fsm, &HardeningConfig::new(2, 7)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tr = random_trace(&fsm, &mut rng, 50);
    let t = run_lanes(&d, std::slice::from_ref(&tr));
    let states = fsm.simulate(&tr).unwrap();
    let busy = d
        .netlist
        .outputs()
        .iter()
        .position(|p| p.name == "busy")
        .unwrap();
    let ack = d
        .netlist
        .outputs()
        .iter()
        .position(|p| p.name == "ack")
        .unwrap();
    for (c, a) in tr.iter().enumerate() {
        let tidx = fsm
            .fire(&states[c], fsm.pack_inputs(c, a).unwrap())
            .unwrap();
        let want = fsm.output_values(&states[c], tidx);
        assert_eq!(t.output_word(c, busy, 0), want["busy"]);
        assert_eq!(t.output_word(c, ack, 0), want["ack"]);
    }
}

#[test]
fn report_and_fingerprint_are_stable() {
    let fsm = load(REF14);
    let a = harden(&fsm, &HardeningConfig::new(2, 7)).unwrap().report();
    let b = harden(&fsm, &HardeningConfig::new(2, 7)).unwrap().report();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let c = harden(&fsm, &HardeningConfig::new(2, 8)).unwrap().report();
    assert_ne!(a.fingerprint, c.fingerprint);
    assert_eq!(a.edges.len(), 14);
    assert_eq!(a.gate_counts.get("mix"), None);
    assert!(a.gate_counts["diffusion"] > 0);
}

#[test]
fn probability_formula() {
    let (p, deg) = theoretical_success_probability(8, 2, 1);
    assert_eq!(p, 10.0 / (1u64 << 22) as f64);
    assert!(!deg);
    let (p2, _) = theoretical_success_probability(8, 2, 2);
    assert_eq!(p2 * 2.0, p);
    let (p3, deg) = theoretical_success_probability(30, 2, 1);
    assert_eq!(p3, 32.0);
    assert!(deg);
}
