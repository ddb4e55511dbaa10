// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fsm_harden::fault::{
    edge_cover_traces, run_campaign, CampaignMode, CampaignSpec, FaultCampaignReport, PortTrace,
    DEFAULT_EXHAUSTIVE_BOUND,
};
use fsm_harden::fsm::{self, parse_fsm, Assignment, FsmFormat, FsmSpec};
use fsm_harden::harden::{
    check_bisimulation, encode_trace, harden, CodeBooks, CodeBooksJson, HardeningConfig,
    ALERT_PORT, STATE_PORT,
};
use fsm_harden::netlist::{
    emit_verilog, FaultEffect, FaultScope, InputFrame, Netlist, NetlistJson, Simulator,
};
use fsm_harden::par::Execution;

const NETLIST_JSON: &str = "netlist.json";
const NETLIST_V: &str = "netlist.v";
const CODEBOOK: &str = "codebook.json";
const REPORT: &str = "hardening_report.json";
const FSM_JSON: &str = "fsm.json";

#[derive(Parser)]
#[command(
    name = "fsm-harden",
    version,
    about = "Fault-hardened FSM synthesis and fault injection"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode, diffuse and emit a hardened netlist for an FSM.
    Harden(HardenArgs),
    /// Run a fault-injection campaign against a hardened netlist.
    Inject(InjectArgs),
    /// Golden simulation of an FSM file or a hardened netlist.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct HardenArgs {
    /// FSM description (.json or .kiss2).
    #[arg(long)]
    fsm: PathBuf,
    /// Protection level N (minimum Hamming distance).
    #[arg(long, default_value_t = 2)]
    level: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Error bits per diffusion block; defaults to N.
    #[arg(long)]
    error_bits: Option<u32>,
    /// Force the number of diffusion blocks.
    #[arg(long)]
    blocks: Option<usize>,
    /// Replicate the transition comparators N times.
    #[arg(long)]
    encoded_selectors: bool,
    /// Random traces for the bisimulation self-check.
    #[arg(long, default_value_t = 256)]
    check_traces: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    netlist: PathBuf,
    /// Defaults to codebook.json next to the netlist.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Defaults to fsm.json next to the netlist.
    #[arg(long)]
    fsm: Option<PathBuf>,
    /// all, diffusion or inputs.
    #[arg(long, default_value = "all")]
    scope: String,
    /// Comma-separated subset of flip, stuck0, stuck1.
    #[arg(long, default_value = "flip")]
    effects: String,
    #[arg(long, default_value_t = 1)]
    max_faults: usize,
    #[arg(long, conflicts_with = "sample")]
    exhaustive: bool,
    /// Number of sampled experiments.
    #[arg(long)]
    sample: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `auto-cover` or a JSON trace file.
    #[arg(long, default_value = "auto-cover")]
    trace: String,
    /// Fault onset window START:END (half-open).
    #[arg(long)]
    cycles: Option<String>,
    /// Faults persist from their onset.
    #[arg(long)]
    permanent: bool,
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_BOUND)]
    bound: u64,
    /// Defaults to report.json next to the netlist.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// FSM file or hardened netlist.json.
    #[arg(long)]
    target: PathBuf,
    /// JSON list of input assignments.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    fsm: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Harden(a) => cmd_harden(&a).map(|()| ExitCode::SUCCESS),
        Cmd::Inject(a) => cmd_inject(&a),
        Cmd::Simulate(a) => cmd_simulate(&a).map(|()| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<std::io::Error>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load_fsm(path: &Path) -> Result<FsmSpec> {
    let src = read(path)?;
    parse_fsm(&src, FsmFormat::from_path(path))
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_netlist(path: &Path) -> Result<Netlist> {
    let j: NetlistJson = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Netlist::from_json(j).with_context(|| format!("loading {}", path.display()))
}

fn load_codes(path: &Path) -> Result<CodeBooks> {
    let j: CodeBooksJson = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    CodeBooks::from_json(&j).with_context(|| format!("loading {}", path.display()))
}

fn sibling(netlist: &Path, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| netlist.parent().unwrap_or(Path::new(".")).join(name))
}

fn to_pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_harden(a: &HardenArgs) -> Result<()> {
    let fsm = load_fsm(&a.fsm)?;
    let mut cfg = HardeningConfig::new(a.level, a.seed);
    cfg.error_bits = a.error_bits;
    cfg.blocks = a.blocks;
    cfg.encoded_mux_selectors = a.encoded_selectors;
    let d = harden(&fsm, &cfg).with_context(|| format!("hardening {}", fsm.name()))?;
    check_bisimulation(&d, a.check_traces, 64, a.seed, Execution::Parallel)
        .context("bisimulation self-check failed")?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out.join(NETLIST_JSON), &to_pretty(&d.netlist.to_json()))?;
    write(&a.out.join(NETLIST_V), &emit_verilog(&d.netlist))?;
    write(&a.out.join(CODEBOOK), &to_pretty(&d.codes.to_json()))?;
    write(&a.out.join(FSM_JSON), &to_pretty(&fsm::to_json(&fsm)))?;
    let report = d.report();
    write(&a.out.join(REPORT), &to_pretty(&report))?;

    println!(
        "{}: N={} k={} e={} state={}b control={}b modifier={}b",
        report.fsm,
        report.protection_level,
        report.blocks,
        report.error_bits_per_block,
        report.state_width,
        report.control_width,
        report.modifier_width
    );
    println!("gates {} flops {}", report.total_gates, report.flops);
    for (stage, n) in &report.gate_counts {
        println!("  {stage:<12} {n}");
    }
    println!("self-check: {} traces ok", a.check_traces);
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum TraceFile {
    One(Vec<Assignment>),
    Many(Vec<Vec<Assignment>>),
}

fn load_traces(path: &Path) -> Result<Vec<Vec<Assignment>>> {
    let t: TraceFile = serde_json::from_str(&read(path)?)
        .with_context(|| format!("{}: expected a list of input assignments", path.display()))?;
    Ok(match t {
        TraceFile::One(t) => vec![t],
        TraceFile::Many(ts) => ts,
    })
}

fn parse_window(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("cycle window `{s}` is not START:END"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn cmd_inject(a: &InjectArgs) -> Result<ExitCode> {
    let netlist = load_netlist(&a.netlist)?;
    let codes = load_codes(&sibling(&a.netlist, &a.codebook, CODEBOOK))?;
    let fsm = load_fsm(&sibling(&a.netlist, &a.fsm, FSM_JSON))?;

    let scope =
        FaultScope::parse(&a.scope).ok_or_else(|| anyhow!("unknown scope `{}`", a.scope))?;
    let effects = a
        .effects
        .split(',')
        .map(|e| FaultEffect::parse(e.trim()).ok_or_else(|| anyhow!("unknown fault effect `{e}`")))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = CampaignSpec::new(scope, a.max_faults);
    spec.effects = effects;
    spec.permanent = a.permanent;
    spec.exhaustive_bound = a.bound;
    spec.cycles = a.cycles.as_deref().map(parse_window).transpose()?;
    spec.mode = match a.sample {
        Some(count) => CampaignMode::Sampled {
            count,
            seed: a.seed,
        },
        None => CampaignMode::Exhaustive,
    };

    let raw = if a.trace == "auto-cover" {
        edge_cover_traces(&fsm)
    } else {
        load_traces(Path::new(&a.trace))?
    };
    let traces: Vec<PortTrace> = raw
        .iter()
        .map(|t| encode_trace(&fsm, &codes, t))
        .collect::<Result<_, _>>()
        .context("encoding trace")?;
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let report: FaultCampaignReport = run_campaign(&netlist, &traces, &spec, &codes.state, exec)?;

    let out = sibling(&a.netlist, &a.out, "report.json");
    write(&out, &to_pretty(&report))?;
    print!("{}", report.to_table());
    println!("report: {}", out.display());
    Ok(if report.hijack > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let src = read(&a.target)?;
    let is_netlist = serde_json::from_str::<Value>(&src)
        .map(|v| v.get("gates").is_some())
        .unwrap_or(false);
    let traces = load_traces(&a.trace)?;
    let dumps = if is_netlist {
        let netlist = load_netlist(&a.target)?;
        let codes = load_codes(&sibling(&a.target, &a.codebook, CODEBOOK))?;
        let fsm = load_fsm(&sibling(&a.target, &a.fsm, FSM_JSON))?;
        traces
            .iter()
            .map(|t| simulate_netlist(&netlist, &codes, &fsm, t))
            .collect::<Result<Vec<_>>>()?
    } else {
        let fsm = load_fsm(&a.target)?;
        traces
            .iter()
            .map(|t| simulate_spec(&fsm, t))
            .collect::<Result<Vec<_>>>()?
    };
    let body = if dumps.len() == 1 {
        dumps.into_iter().next().expect("one dump")
    } else {
        Value::Array(dumps)
    };
    print!("{}", to_pretty(&body));
    Ok(())
}

fn simulate_spec(fsm: &FsmSpec, trace: &[Assignment]) -> Result<Value> {
    let states = fsm.simulate(trace)?;
    let mut outputs = Vec::with_capacity(trace.len());
    for (c, a) in trace.iter().enumerate() {
        let bits = fsm.pack_inputs(c, a)?;
        let values = match fsm.fire(&states[c], bits) {
            Some(t) => fsm.output_values(&states[c], t),
            None => fsm.outputs().iter().map(|o| (o.name.clone(), 0)).collect(),
        };
        outputs.push(values);
    }
    Ok(json!({ "states": states, "outputs": outputs }))
}

fn simulate_netlist(
    netlist: &Netlist,
    codes: &CodeBooks,
    fsm: &FsmSpec,
    trace: &[Assignment],
) -> Result<Value> {
    let ports = encode_trace(fsm, codes, trace)?;
    let frames = ports
        .iter()
        .enumerate()
        .map(|(c, v)| InputFrame::broadcast(netlist, c, v))
        .collect::<Result<Vec<_>, _>>()?;
    let run = Simulator::new(netlist).run(&frames);
    let sf = netlist
        .flops_behind_output(STATE_PORT)
        .ok_or_else(|| anyhow!("netlist has no `{STATE_PORT}` port"))?;
    let af = netlist
        .flops_behind_output(ALERT_PORT)
        .ok_or_else(|| anyhow!("netlist has no `{ALERT_PORT}` port"))?;
    let states: Vec<String> = (0..=trace.len())
        .map(|c| {
            let w = run.flop_word(c, &sf, 0);
            codes
                .state
                .decode_u64(w)
                .map_or_else(|| format!("{w:#x}"), str::to_string)
        })
        .collect();
    let alert: Vec<u64> = (0..=trace.len())
        .map(|c| run.flop_word(c, &af, 0))
        .collect();
    let outputs: Vec<BTreeMap<String, u64>> = (0..trace.len())
        .map(|c| {
            fsm.outputs()
                .iter()
                .filter_map(|o| {
                    let i = netlist.outputs().iter().position(|p| p.name == o.name)?;
                    Some((o.name.clone(), run.output_word(c, i, 0)))
                })
                .collect()
        })
        .collect();
    Ok(json!({ "states": states, "outputs": outputs, "alert": alert }))
}
