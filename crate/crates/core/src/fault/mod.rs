// SPDX-License-Identifier: Apache-2.0

//! Fault-injection campaigns.
//!
//! An experiment is a set of faults applied during one run of a golden
//! input trace. Its outcome is read off the state register and the alert
//! flop, cycle by cycle:
//!
//! * alert high or the register at the ERROR word: **detected**;
//! * the register at a valid codeword other than the golden one with the
//!   alert low: **hijack**;
//! * otherwise **masked**. Masked runs whose register held a non-codeword
//!   at some point without ever reaching ERROR are also counted as
//!   `masked_corrupt`.
//!
//! The first detected or hijack event decides. Experiments are packed 64 to
//! a simulation pass, one per lane.

mod cover;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cover::edge_cover_traces;

use crate::coding::CodeBook;
use crate::harden::{theoretical_success_probability, ALERT_PORT, STATE_PORT};
use crate::netlist::{
    enumerate_fault_sites, FaultEffect, FaultScope, FaultSite, FaultTime, InputFrame, LaneFault,
    NetId, Netlist, SimTrace, Simulator, TraceError,
};
use crate::par::{self, Execution};

pub const DEFAULT_EXHAUSTIVE_BOUND: u64 = 10_000_000;
/// Witnesses kept per report.
pub const MAX_WITNESSES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CampaignError {
    #[error("netlist has no {0:?} output driven by flops")]
    MissingPort(&'static str),
    #[error("netlist has no gates tagged for scope {0}")]
    NoStageTags(&'static str),
    #[error("state port is {port} bits wide but the codebook has width {code}")]
    WidthMismatch { port: usize, code: usize },
    #[error("golden run of trace {trace} already deviates at cycle {cycle}: {what}")]
    BadGolden {
        trace: usize,
        cycle: usize,
        what: String,
    },
    #[error("exhaustive campaign needs {needed} experiments, bound is {bound}")]
    TooLarge { needed: u128, bound: u64 },
    #[error("max_faults must be at least 1")]
    NoFaults,
    #[error("no fault sites in scope {0}")]
    EmptyScope(&'static str),
    #[error("cycle window {start}..{end} is empty for trace {trace}")]
    EmptyWindow {
        trace: usize,
        start: usize,
        end: usize,
    },
    #[error("unknown net {0:?} in witness")]
    UnknownNet(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CampaignMode {
    Exhaustive,
    Sampled { count: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub scope: FaultScope,
    pub max_faults: usize,
    pub effects: Vec<FaultEffect>,
    /// Half-open cycle window for fault onsets. Default: every cycle but
    /// the last, so each fault is followed by at least one state check.
    pub cycles: Option<(usize, usize)>,
    /// Faults persist from their onset instead of lasting one cycle.
    pub permanent: bool,
    pub mode: CampaignMode,
    pub exhaustive_bound: u64,
}

impl CampaignSpec {
    pub fn new(scope: FaultScope, max_faults: usize) -> Self {
        CampaignSpec {
            scope,
            max_faults,
            effects: vec![FaultEffect::Flip],
            cycles: None,
            permanent: false,
            mode: CampaignMode::Exhaustive,
            exhaustive_bound: DEFAULT_EXHAUSTIVE_BOUND,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Masked,
    MaskedCorrupt,
    Detected,
    Hijack,
}

/// A fault in serializable form, naming its net.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub net: String,
    pub effect: FaultEffect,
    pub time: FaultTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub experiment: u64,
    pub trace: usize,
    pub faults: Vec<FaultRecord>,
    pub cycle: usize,
    pub expected: String,
    pub reached: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub masked: f64,
    pub detected: f64,
    pub hijack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultCampaignReport {
    pub netlist: String,
    pub fingerprint: Option<String>,
    pub scope: FaultScope,
    pub effects: Vec<FaultEffect>,
    pub max_faults: usize,
    pub permanent: bool,
    pub mode: CampaignMode,
    pub protection_level: Option<u32>,
    pub traces: usize,
    pub trace_cycles: Vec<usize>,
    pub sites: usize,
    /// Size of the (trace, site, effect, cycle) single-fault universe.
    pub universe: u64,
    pub total: u64,
    pub masked: u64,
    pub masked_corrupt: u64,
    pub detected: u64,
    pub hijack: u64,
    pub rates: Rates,
    /// Wilson 95 % interval on the hijack rate.
    pub hijack_ci95: (f64, f64),
    pub theoretical_p: Option<f64>,
    pub theoretical_p_degenerate: bool,
    pub witnesses: Vec<Witness>,
    pub witnesses_truncated: bool,
}

impl FaultCampaignReport {
    /// Hijacks with no more simultaneous faults than the design tolerates.
    pub fn within_design_budget(&self) -> bool {
        self.protection_level
            .is_some_and(|n| (self.max_faults as u32) < n)
    }

    pub fn to_table(&self) -> String {
        let pct = |x: f64| format!("{:.4} %", 100.0 * x);
        let mut rows = vec![
            ("netlist", self.netlist.clone()),
            ("scope", self.scope.as_str().to_string()),
            (
                "effects",
                self.effects
                    .iter()
                    .map(|e| format!("{e:?}").to_lowercase())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("max faults", self.max_faults.to_string()),
            (
                "mode",
                match self.mode {
                    CampaignMode::Exhaustive => "exhaustive".to_string(),
                    CampaignMode::Sampled { count, seed } => {
                        format!("sampled {count} (seed {seed})")
                    }
                },
            ),
            ("sites", self.sites.to_string()),
            ("experiments", self.total.to_string()),
            (
                "masked",
                format!("{} ({})", self.masked, pct(self.rates.masked)),
            ),
            ("  of which corrupt", self.masked_corrupt.to_string()),
            (
                "detected",
                format!("{} ({})", self.detected, pct(self.rates.detected)),
            ),
            (
                "hijack",
                format!("{} ({})", self.hijack, pct(self.rates.hijack)),
            ),
            (
                "hijack 95% CI",
                format!("[{}, {}]", pct(self.hijack_ci95.0), pct(self.hijack_ci95.1)),
            ),
        ];
        if let Some(p) = self.theoretical_p {
            rows.push(("theoretical P", format!("{p:.3e}")));
        }
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<w$}  {v}\n"));
        }
        for wit in self.witnesses.iter().take(20) {
            let faults: Vec<String> = wit
                .faults
                .iter()
                .map(|f| format!("{}:{:?}@{:?}", f.net, f.effect, f.time))
                .collect();
            out.push_str(&format!(
                "witness #{} trace {} cycle {}: {} -> {} instead of {}\n",
                wit.experiment,
                wit.trace,
                wit.cycle,
                faults.join(" "),
                wit.reached,
                wit.expected
            ));
        }
        if self.witnesses.len() > 20 {
            out.push_str(&format!(
                "... {} more witnesses\n",
                self.witnesses.len() - 20
            ));
        }
        out
    }
}

/// Two-sided Wilson score interval at 95 %.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Port values per cycle, one list per golden trace.
pub type PortTrace = Vec<BTreeMap<String, u64>>;

struct Prepared<'a> {
    netlist: &'a Netlist,
    codes: &'a CodeBook,
    state_flops: Vec<usize>,
    alert_flop: usize,
    frames: Vec<Vec<InputFrame>>,
    golden: Vec<Vec<u64>>,
    sites: Vec<NetId>,
    effects: Vec<FaultEffect>,
    windows: Vec<(usize, usize)>,
    permanent: bool,
}

impl Prepared<'_> {
    fn universe(&self, trace: usize) -> u64 {
        let (a, b) = self.windows[trace];
        (self.sites.len() * self.effects.len() * (b - a)) as u64
    }

    fn fault(&self, trace: usize, idx: u64) -> FaultSite {
        let (a, b) = self.windows[trace];
        let cycles = (b - a) as u64;
        let e = self.effects.len() as u64;
        let cycle = a + (idx % cycles) as usize;
        let effect = self.effects[((idx / cycles) % e) as usize];
        let net = self.sites[(idx / cycles / e) as usize];
        FaultSite {
            net,
            effect,
            time: if self.permanent {
                FaultTime::From(cycle)
            } else {
                FaultTime::Cycle(cycle)
            },
        }
    }

    fn classify(&self, trace: usize, t: &SimTrace, lane: usize) -> (Outcome, Option<(usize, u64)>) {
        let err = self.codes.error_codeword().to_u64();
        let mut corrupt = false;
        for (c, &g) in self.golden[trace].iter().enumerate() {
            let s = t.flop_word(c, &self.state_flops, lane);
            let alert = t.flop_word(c, &[self.alert_flop], lane);
            if alert == 1 || s == err {
                return (Outcome::Detected, None);
            }
            if s != g {
                if self.codes.decode_u64(s).is_some() {
                    return (Outcome::Hijack, Some((c, s)));
                }
                corrupt = true;
            }
        }
        if corrupt {
            (Outcome::MaskedCorrupt, None)
        } else {
            (Outcome::Masked, None)
        }
    }

    fn record(&self, f: &FaultSite) -> FaultRecord {
        FaultRecord {
            net: self.netlist.net_name(f.net).to_string(),
            effect: f.effect,
            time: f.time,
        }
    }

    /// Simulate up to 64 experiments on one trace.
    fn run_batch(
        &self,
        trace: usize,
        batch: &[Vec<FaultSite>],
    ) -> Vec<(Outcome, Option<(usize, u64)>)> {
        let mut faults = Vec::new();
        for (lane, set) in batch.iter().enumerate() {
            for f in set {
                faults.push(LaneFault {
                    lanes: 1 << lane,
                    site: *f,
                });
            }
        }
        let mut sim = Simulator::new(self.netlist);
        sim.set_faults(&faults);
        let t = sim.run(&self.frames[trace]);
        (0..batch.len())
            .map(|l| self.classify(trace, &t, l))
            .collect()
    }
}

fn prepare<'a>(
    netlist: &'a Netlist,
    traces: &[PortTrace],
    spec: &CampaignSpec,
    codes: &'a CodeBook,
) -> Result<Prepared<'a>, CampaignError> {
    if spec.max_faults == 0 {
        return Err(CampaignError::NoFaults);
    }
    let state_flops = netlist
        .flops_behind_output(STATE_PORT)
        .ok_or(CampaignError::MissingPort(STATE_PORT))?;
    let alert_flop = netlist
        .flops_behind_output(ALERT_PORT)
        .and_then(|v| v.first().copied())
        .ok_or(CampaignError::MissingPort(ALERT_PORT))?;
    if state_flops.len() != codes.width() {
        return Err(CampaignError::WidthMismatch {
            port: state_flops.len(),
            code: codes.width(),
        });
    }
    let sites = enumerate_fault_sites(netlist, spec.scope);
    if sites.is_empty() {
        return Err(match spec.scope {
            FaultScope::DiffusionOnly => CampaignError::NoStageTags(spec.scope.as_str()),
            _ => CampaignError::EmptyScope(spec.scope.as_str()),
        });
    }
    let mut frames = Vec::with_capacity(traces.len());
    let mut golden = Vec::with_capacity(traces.len());
    let mut windows = Vec::with_capacity(traces.len());
    for (ti, tr) in traces.iter().enumerate() {
        let f: Vec<InputFrame> = tr
            .iter()
            .enumerate()
            .map(|(c, v)| InputFrame::broadcast(netlist, c, v))
            .collect::<Result<_, _>>()?;
        let t = Simulator::new(netlist).run(&f);
        let mut g = Vec::with_capacity(f.len() + 1);
        for c in 0..=f.len() {
            let s = t.flop_word(c, &state_flops, 0);
            let what = if t.flop_word(c, &[alert_flop], 0) == 1 {
                Some("alert is high".to_string())
            } else if codes.decode_u64(s).is_none() || s == codes.error_codeword().to_u64() {
                Some(format!("state word {s:#x} is not a valid state"))
            } else {
                None
            };
            if let Some(what) = what {
                return Err(CampaignError::BadGolden {
                    trace: ti,
                    cycle: c,
                    what,
                });
            }
            g.push(s);
        }
        let (a, b) = spec
            .cycles
            .map(|(a, b)| (a, b.min(f.len())))
            .unwrap_or((0, f.len().saturating_sub(1)));
        if a >= b {
            return Err(CampaignError::EmptyWindow {
                trace: ti,
                start: a,
                end: b,
            });
        }
        frames.push(f);
        golden.push(g);
        windows.push((a, b));
    }
    Ok(Prepared {
        netlist,
        codes,
        state_flops,
        alert_flop,
        frames,
        golden,
        sites,
        effects: spec.effects.clone(),
        windows,
        permanent: spec.permanent,
    })
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k as u128 {
        r = r * (n as u128 - i) / (i + 1);
    }
    r
}

/// Next k-combination of 0..n in lexicographic order.
fn next_combination(c: &mut [u64], n: u64) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - (k - i) as u64 {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

// Experiments handed to the thread pool at once.
const WAVE: usize = 64 * 256;

struct Tally {
    total: u64,
    masked: u64,
    masked_corrupt: u64,
    detected: u64,
    hijack: u64,
    witnesses: Vec<Witness>,
    truncated: bool,
}

impl Tally {
    fn new() -> Self {
        Tally {
            total: 0,
            masked: 0,
            masked_corrupt: 0,
            detected: 0,
            hijack: 0,
            witnesses: Vec::new(),
            truncated: false,
        }
    }

    /// Run a wave of `(experiment, trace, faults)` records. Experiments are
    /// grouped per trace into 64-lane batches; counts do not depend on the
    /// order and witnesses are kept in experiment order.
    fn wave(
        &mut self,
        p: &Prepared<'_>,
        exps: &mut [(u64, usize, Vec<FaultSite>)],
        exec: Execution,
    ) {
        exps.sort_by_key(|e| (e.1, e.0));
        let mut batches: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < exps.len() {
            let mut j = i;
            while j < exps.len() && j - i < 64 && exps[j].1 == exps[i].1 {
                j += 1;
            }
            batches.push((i, j));
            i = j;
        }
        let results = par::map_indexed(exec, batches.len(), |b| {
            let (lo, hi) = batches[b];
            let sets: Vec<Vec<FaultSite>> = exps[lo..hi].iter().map(|e| e.2.clone()).collect();
            p.run_batch(exps[lo].1, &sets)
        });
        let mut found = Vec::new();
        for (&(lo, _), res) in batches.iter().zip(results) {
            for (k, (outcome, hit)) in res.into_iter().enumerate() {
                let (id, t, ref faults) = exps[lo + k];
                self.total += 1;
                match outcome {
                    Outcome::Masked => self.masked += 1,
                    Outcome::MaskedCorrupt => {
                        self.masked += 1;
                        self.masked_corrupt += 1;
                    }
                    Outcome::Detected => self.detected += 1,
                    Outcome::Hijack => {
                        self.hijack += 1;
                        let (cycle, word) = hit.expect("hijack carries its cycle");
                        let name = |w: u64| p.codes.decode_u64(w).unwrap_or("?").to_string();
                        found.push(Witness {
                            experiment: id,
                            trace: t,
                            faults: faults.iter().map(|f| p.record(f)).collect(),
                            cycle,
                            expected: name(p.golden[t][cycle]),
                            reached: name(word),
                        });
                    }
                }
            }
        }
        found.sort_by_key(|w| w.experiment);
        for w in found {
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(w);
            } else {
                self.truncated = true;
            }
        }
    }
}

/// Run a campaign over one or more golden traces of port values.
pub fn run_campaign(
    netlist: &Netlist,
    traces: &[PortTrace],
    spec: &CampaignSpec,
    codes: &CodeBook,
    exec: Execution,
) -> Result<FaultCampaignReport, CampaignError> {
    let p = prepare(netlist, traces, spec, codes)?;
    let universes: Vec<u64> = (0..traces.len()).map(|t| p.universe(t)).collect();
    let mut tally = Tally::new();
    match spec.mode {
        CampaignMode::Exhaustive => {
            let needed: u128 = universes
                .iter()
                .map(|&u| {
                    (1..=spec.max_faults as u64)
                        .map(|k| binomial(u, k))
                        .sum::<u128>()
                })
                .sum();
            if needed > spec.exhaustive_bound as u128 {
                return Err(CampaignError::TooLarge {
                    needed,
                    bound: spec.exhaustive_bound,
                });
            }
            let mut wave = Vec::with_capacity(WAVE);
            let mut id = 0u64;
            for (t, &u) in universes.iter().enumerate() {
                for k in 1..=(spec.max_faults as u64).min(u) {
                    let mut comb: Vec<u64> = (0..k).collect();
                    loop {
                        wave.push((id, t, comb.iter().map(|&i| p.fault(t, i)).collect()));
                        id += 1;
                        if wave.len() == WAVE {
                            tally.wave(&p, &mut wave, exec);
                            wave.clear();
                        }
                        if !next_combination(&mut comb, u) {
                            break;
                        }
                    }
                }
            }
            tally.wave(&p, &mut wave, exec);
        }
        CampaignMode::Sampled { count, seed } => {
            let total_u: u64 = universes.iter().sum();
            let mut start = 0u64;
            while start < count {
                let n = (count - start).min(WAVE as u64);
                let mut wave = par::map_indexed(exec, n as usize, |i| {
                    let id = start + i as u64;
                    let (t, faults) =
                        sample_experiment(&p, &universes, total_u, spec.max_faults, seed, id);
                    (id, t, faults)
                });
                tally.wave(&p, &mut wave, exec);
                start += n;
            }
        }
    }

    let n = tally.total.max(1) as f64;
    let (theoretical_p, degenerate) = match (
        netlist
            .metadata()
            .get("blocks")
            .and_then(|v| v.parse::<usize>().ok()),
        netlist
            .metadata()
            .get("error_bits")
            .and_then(|v| v.parse::<usize>().ok()),
    ) {
        (Some(k), Some(e)) => {
            let (p, d) = theoretical_success_probability(codes.width(), e * k, k);
            (Some(p), d)
        }
        _ => (None, false),
    };
    Ok(FaultCampaignReport {
        netlist: netlist.name().to_string(),
        fingerprint: netlist.metadata().get("fingerprint").cloned(),
        scope: spec.scope,
        effects: spec.effects.clone(),
        max_faults: spec.max_faults,
        permanent: spec.permanent,
        mode: spec.mode,
        protection_level: netlist
            .metadata()
            .get("protection_level")
            .and_then(|v| v.parse().ok()),
        traces: traces.len(),
        trace_cycles: traces.iter().map(Vec::len).collect(),
        sites: p.sites.len(),
        universe: universes.iter().sum(),
        total: tally.total,
        masked: tally.masked,
        masked_corrupt: tally.masked_corrupt,
        detected: tally.detected,
        hijack: tally.hijack,
        rates: Rates {
            masked: tally.masked as f64 / n,
            detected: tally.detected as f64 / n,
            hijack: tally.hijack as f64 / n,
        },
        hijack_ci95: wilson_interval(tally.hijack, tally.total),
        theoretical_p,
        theoretical_p_degenerate: degenerate,
        witnesses: tally.witnesses,
        witnesses_truncated: tally.truncated,
    })
}

/// Experiment `i` of a sampled campaign: a trace drawn in proportion to its
/// fault universe, then `j` distinct faults from it.
fn sample_experiment(
    p: &Prepared<'_>,
    universes: &[u64],
    total: u64,
    j: usize,
    seed: u64,
    i: u64,
) -> (usize, Vec<FaultSite>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let mut pick = rng.random_range(0..total);
    let mut t = 0;
    while pick >= universes[t] {
        pick -= universes[t];
        t += 1;
    }
    let u = universes[t];
    let k = (j as u64).min(u);
    let mut chosen: Vec<u64> = Vec::with_capacity(k as usize);
    while (chosen.len() as u64) < k {
        let x = rng.random_range(0..u);
        if !chosen.contains(&x) {
            chosen.push(x);
        }
    }
    chosen.sort_unstable();
    (t, chosen.into_iter().map(|x| p.fault(t, x)).collect())
}

/// Multi-fault campaign drawn uniformly at random. `spec.mode` must be
/// sampled; `spec.max_faults` is the exact number of faults per experiment.
pub fn sample_multifault(
    netlist: &Netlist,
    traces: &[PortTrace],
    spec: &CampaignSpec,
    codes: &CodeBook,
    exec: Execution,
) -> Result<FaultCampaignReport, CampaignError> {
    assert!(
        matches!(spec.mode, CampaignMode::Sampled { .. }),
        "multi-fault campaigns are sampled"
    );
    run_campaign(netlist, traces, spec, codes, exec)
}

/// Re-run one recorded experiment and classify it.
pub fn replay(
    netlist: &Netlist,
    trace: &PortTrace,
    faults: &[FaultRecord],
    codes: &CodeBook,
) -> Result<(Outcome, Option<(usize, String)>), CampaignError> {
    let spec = CampaignSpec {
        cycles: Some((0, trace.len().max(1))),
        ..CampaignSpec::new(FaultScope::All, 1)
    };
    let p = prepare(netlist, std::slice::from_ref(trace), &spec, codes)?;
    let set: Vec<FaultSite> = faults
        .iter()
        .map(|f| {
            netlist
                .net_by_name(&f.net)
                .map(|net| FaultSite {
                    net,
                    effect: f.effect,
                    time: f.time,
                })
                .ok_or_else(|| CampaignError::UnknownNet(f.net.clone()))
        })
        .collect::<Result<_, _>>()?;
    let (o, hit) = p.run_batch(0, &[set]).remove(0);
    Ok((
        o,
        hit.map(|(c, w)| (c, codes.decode_u64(w).unwrap_or("?").to_string())),
    ))
}

#[cfg(test)]
mod tests;
