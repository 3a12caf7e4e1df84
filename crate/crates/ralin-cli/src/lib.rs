//! Trace file I/O, scenario execution and report generation for the `ralin`
//! binary. Kept as a library so integration tests can replay golden
//! scenarios through exactly the code path the CLI uses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ralin::checker::{
    build_execution_order_lin, build_timestamp_order_lin, check_composition,
    check_ra_exhaustive_multi, validate_linearization_multi, Verdict,
};
use ralin::model::{Event, OpId, ReplicaId, Sentinel, Trace, Value};
use ralin::opcrdt::CrdtKind;
use ralin::runtime::{random_multi_op_run, random_sb_run, OpRun};
use ralin::spec::{qu_rewrite_multi, QuRewriting, SeqSpec};
use ralin::statecrdt::SbKind;

/// An object kind from either replication family.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ObjKind {
    Op(CrdtKind),
    Sb(SbKind),
}

impl ObjKind {
    pub fn parse(s: &str) -> Option<ObjKind> {
        CrdtKind::parse(s)
            .map(ObjKind::Op)
            .or_else(|| SbKind::parse(s).map(ObjKind::Sb))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjKind::Op(k) => k.name(),
            ObjKind::Sb(k) => k.name(),
        }
    }
}

/// A parsed scenario file: configuration header plus the event script.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub replicas: usize,
    pub shared_ts: bool,
    pub objects: Vec<(String, ObjKind)>,
    pub trace: Trace,
}

impl Scenario {
    pub fn op_objects(&self) -> Result<Vec<(String, CrdtKind)>> {
        self.objects
            .iter()
            .map(|(name, kind)| match kind {
                ObjKind::Op(k) => Ok((name.clone(), *k)),
                ObjKind::Sb(k) => {
                    Err(anyhow!("object {name} is state-based ({})", k.name()))
                }
            })
            .collect()
    }

    pub fn sb_objects(&self) -> Result<Vec<(String, SbKind)>> {
        self.objects
            .iter()
            .map(|(name, kind)| match kind {
                ObjKind::Sb(k) => Ok((name.clone(), *k)),
                ObjKind::Op(k) => {
                    Err(anyhow!("object {name} is operation-based ({})", k.name()))
                }
            })
            .collect()
    }
}

fn format_atom(v: &Value) -> Result<String> {
    Ok(match v {
        Value::Int(i) => i.to_string(),
        Value::Str(s) => {
            if s.is_empty()
                || s.starts_with('*')
                || s.parse::<i64>().is_ok()
                || s.chars().any(|c| c.is_whitespace() || c == ',' || c == ']' || c == '[')
            {
                bail!("string argument {s:?} is not representable in the trace format");
            }
            s.clone()
        }
        Value::Sentinel(s) => s.to_string(),
        other => bail!("argument {other:?} is not representable in the trace format"),
    })
}

fn parse_atom(s: &str) -> Value {
    match s {
        "*" => Value::Sentinel(Sentinel::Root),
        "*b" => Value::Sentinel(Sentinel::Begin),
        "*e" => Value::Sentinel(Sentinel::End),
        _ => s
            .parse::<i64>()
            .map(Value::Int)
            .unwrap_or_else(|_| Value::Str(s.to_string())),
    }
}

fn parse_opid(s: &str) -> Result<OpId> {
    let (origin, seq) = s
        .split_once('.')
        .ok_or_else(|| anyhow!("malformed id {s:?} (expected origin.seq)"))?;
    let origin: u32 = origin.parse().context("id origin")?;
    let seq: u64 = seq.parse().context("id seq")?;
    Ok(OpId::new(ReplicaId(origin), seq))
}

/// Pulls `key=value` out of a record field, enforcing the fixed field order.
fn field<'a>(parts: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let part = parts.next().ok_or_else(|| anyhow!("missing field {key}"))?;
    part.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| anyhow!("expected {key}=..., got {part:?}"))
}

/// Parses a scenario file: `cfg` header records, then one event per line.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut replicas = None;
    let mut shared_ts = false;
    let mut objects: Vec<(String, ObjKind)> = Vec::new();
    let mut trace = Trace::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let ctx = || format!("line {}: {raw:?}", lineno + 1);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        let result: Result<()> = (|| {
            match tag {
                "cfg" => {
                    let part = parts.next().ok_or_else(|| anyhow!("empty cfg record"))?;
                    if let Some(v) = part.strip_prefix("replicas=") {
                        replicas = Some(v.parse::<usize>().context("replica count")?);
                    } else if let Some(v) = part.strip_prefix("shared-ts=") {
                        shared_ts = v.parse::<bool>().context("shared-ts flag")?;
                    } else if let Some(name) = part.strip_prefix("obj=") {
                        let kind = field(&mut parts, "kind")?;
                        let kind = ObjKind::parse(kind)
                            .ok_or_else(|| anyhow!("unknown object kind {kind:?}"))?;
                        objects.push((name.to_string(), kind));
                    } else {
                        bail!("unknown cfg record {part:?}");
                    }
                }
                "op" => {
                    let replica = ReplicaId(field(&mut parts, "r")?.parse()?);
                    let object = field(&mut parts, "obj")?.to_string();
                    let method = field(&mut parts, "m")?.to_string();
                    let args = field(&mut parts, "args")?;
                    let inner = args
                        .strip_prefix('[')
                        .and_then(|a| a.strip_suffix(']'))
                        .ok_or_else(|| anyhow!("args must be [..], got {args:?}"))?;
                    let args = if inner.is_empty() {
                        vec![]
                    } else {
                        inner.split(',').map(parse_atom).collect()
                    };
                    trace.events.push(Event::Invoke { replica, object, method, args });
                }
                "dlv" => {
                    let replica = ReplicaId(field(&mut parts, "r")?.parse()?);
                    let id = parse_opid(field(&mut parts, "id")?)?;
                    trace.events.push(Event::Deliver { replica, id });
                }
                "snd" => {
                    let replica = ReplicaId(field(&mut parts, "r")?.parse()?);
                    let mid = field(&mut parts, "mid")?.parse()?;
                    trace.events.push(Event::Send { replica, mid });
                }
                "app" => {
                    let replica = ReplicaId(field(&mut parts, "r")?.parse()?);
                    let mid = field(&mut parts, "mid")?.parse()?;
                    trace.events.push(Event::Apply { replica, mid });
                }
                _ => bail!("unknown record tag {tag:?}"),
            }
            if let Some(extra) = parts.next() {
                bail!("trailing field {extra:?}");
            }
            Ok(())
        })();
        result.with_context(ctx)?;
    }
    let replicas = replicas.ok_or_else(|| anyhow!("missing `cfg replicas=` record"))?;
    if objects.is_empty() {
        bail!("missing `cfg obj=` record");
    }
    Ok(Scenario { replicas, shared_ts, objects, trace })
}

/// Parses only the event script of a scenario file.
pub fn parse_trace(text: &str) -> Result<Trace> {
    // Tolerate a missing header so bare event scripts stay parseable.
    let mut padded = String::from("cfg replicas=1\ncfg obj=o kind=counter\n");
    padded.push_str(text);
    Ok(parse_scenario(&padded)?.trace)
}

pub fn serialize_trace(trace: &Trace) -> Result<String> {
    let mut out = String::new();
    for ev in &trace.events {
        match ev {
            Event::Invoke { replica, object, method, args } => {
                let args: Vec<String> =
                    args.iter().map(format_atom).collect::<Result<_>>()?;
                writeln!(
                    out,
                    "op r={} obj={object} m={method} args=[{}]",
                    replica.0,
                    args.join(",")
                )?;
            }
            Event::Deliver { replica, id } => writeln!(out, "dlv r={} id={id}", replica.0)?,
            Event::Send { replica, mid } => writeln!(out, "snd r={} mid={mid}", replica.0)?,
            Event::Apply { replica, mid } => writeln!(out, "app r={} mid={mid}", replica.0)?,
        }
    }
    Ok(out)
}

pub fn serialize_scenario(sc: &Scenario) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "cfg replicas={}", sc.replicas)?;
    if sc.shared_ts {
        writeln!(out, "cfg shared-ts=true")?;
    }
    for (name, kind) in &sc.objects {
        writeln!(out, "cfg obj={name} kind={}", kind.name())?;
    }
    out.push_str(&serialize_trace(&sc.trace)?);
    Ok(out)
}

/// Resolves a `--scenario` argument to a trace file path: explicit paths are
/// used as-is if they exist, otherwise `<golden dir>/<basename>.trace` with
/// the directory taken from `RALIN_GOLDEN_DIR` (default `goldens`).
pub fn resolve_scenario_path(arg: &str) -> PathBuf {
    let direct = Path::new(arg);
    if direct.is_file() {
        return direct.to_path_buf();
    }
    let dir = std::env::var("RALIN_GOLDEN_DIR").unwrap_or_else(|_| "goldens".to_string());
    let base = direct.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    Path::new(&dir).join(format!("{base}.trace"))
}

/// Default sequential spec and rewriting for checking a CRDT against the
/// semantics it was designed to satisfy.
pub fn default_check(kind: CrdtKind) -> (SeqSpec, QuRewriting) {
    match kind {
        CrdtKind::Counter => (SeqSpec::Counter, QuRewriting::Identity),
        CrdtKind::Lww => (SeqSpec::Register, QuRewriting::Identity),
        CrdtKind::OrSet => (SeqSpec::OrSet, QuRewriting::OrSetRemove),
        CrdtKind::Rga => (SeqSpec::Rga, QuRewriting::Identity),
        CrdtKind::RgaAddAt => (SeqSpec::AddAt3, QuRewriting::Identity),
        CrdtKind::RgaAddAt0 => (SeqSpec::AddAt1, QuRewriting::Identity),
        CrdtKind::Wooki => (SeqSpec::Wooki, QuRewriting::Identity),
    }
}

/// CRDTs whose constructive linearization follows the timestamp order; the
/// rest linearize in execution order.
pub fn ts_led(kind: CrdtKind) -> bool {
    matches!(
        kind,
        CrdtKind::Lww | CrdtKind::Rga | CrdtKind::RgaAddAt | CrdtKind::RgaAddAt0
    )
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CheckMode {
    Exhaustive,
    Constructive,
    Both,
}

impl CheckMode {
    pub fn parse(s: &str) -> Option<CheckMode> {
        match s {
            "exhaustive" => Some(CheckMode::Exhaustive),
            "constructive" => Some(CheckMode::Constructive),
            "both" => Some(CheckMode::Both),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CheckMode::Exhaustive => "exhaustive",
            CheckMode::Constructive => "constructive",
            CheckMode::Both => "both",
        }
    }
}

/// Builds and validates the constructive linearization of a finished run.
pub fn constructive_verdict(
    run: &OpRun,
    specs: &BTreeMap<String, SeqSpec>,
    gammas: &BTreeMap<String, QuRewriting>,
) -> ralin::error::Result<Verdict> {
    let h = run.extract_history();
    let rewritten = qu_rewrite_multi(&h, gammas)?;
    let by_ts = run.shared_ts || run.objects.values().all(|k| ts_led(*k));
    let lin = if by_ts {
        build_timestamp_order_lin(&rewritten, &run.order)
    } else {
        build_execution_order_lin(&rewritten, &run.order)
    };
    validate_linearization_multi(&rewritten, &lin, specs)
}

fn verdict_line(out: &mut String, label: &str, v: &Verdict) {
    let mut line = format!("{label} {}", if v.accepted { "accepted" } else { "rejected" });
    if let Some(w) = &v.witness {
        let ids: Vec<String> = w.seq.iter().map(|id| id.to_string()).collect();
        write!(line, " witness={}", ids.join(",")).unwrap();
    }
    if let Some(r) = &v.reason {
        write!(line, " item={}", r.item).unwrap();
        if let Some(q) = r.query {
            write!(line, " query={q}").unwrap();
        }
    }
    out.push_str(&line);
    out.push('\n');
}

/// Result of checking one scenario: the canonical history, a deterministic
/// textual report, and the overall verdict.
pub struct CheckOutcome {
    pub history: String,
    pub report: String,
    pub accepted: bool,
}

/// Replays an op-based scenario and checks RA-linearizability in the
/// requested mode. Overrides, when given, apply to every object.
pub fn run_check(
    name: &str,
    sc: &Scenario,
    spec_override: Option<SeqSpec>,
    gamma_override: Option<QuRewriting>,
    mode: CheckMode,
    bound: usize,
) -> Result<CheckOutcome> {
    let objects = sc.op_objects()?;
    let run = OpRun::run_trace(sc.replicas, &objects, sc.shared_ts, &sc.trace)
        .map_err(|e| anyhow!("replay failed: {e}"))?;
    let h = run.extract_history();

    let mut specs = BTreeMap::new();
    let mut gammas = BTreeMap::new();
    let mut report = String::new();
    writeln!(report, "scenario {name}")?;
    writeln!(report, "replicas {}", sc.replicas)?;
    if sc.shared_ts {
        writeln!(report, "shared-ts true")?;
    }
    for (obj, kind) in &objects {
        let (dspec, dgamma) = default_check(*kind);
        let spec = spec_override.unwrap_or(dspec);
        let gamma = gamma_override.unwrap_or(dgamma);
        writeln!(
            report,
            "object {obj} kind={} spec={} gamma={}",
            kind.name(),
            spec.name(),
            gamma.name()
        )?;
        specs.insert(obj.clone(), spec);
        gammas.insert(obj.clone(), gamma);
    }
    writeln!(report, "labels {}", h.labels.len())?;

    let mut accepted = true;
    if matches!(mode, CheckMode::Exhaustive | CheckMode::Both) {
        // In `both` mode a history too large to enumerate falls back to the
        // constructive check alone; only an explicit `exhaustive` errors.
        let rewritten_len = qu_rewrite_multi(&h, &gammas)?.labels.len();
        if objects.len() == 1 && mode == CheckMode::Both && rewritten_len > bound {
            writeln!(report, "exhaustive skipped labels={rewritten_len} bound={bound}")?;
        } else {
            let v = if objects.len() == 1 {
                check_ra_exhaustive_multi(&h, &specs, &gammas, bound)
            } else {
                check_composition(&run, &specs, &gammas, bound)
            }
            .map_err(|e| anyhow!("exhaustive check failed: {e}"))?;
            accepted &= v.accepted;
            verdict_line(&mut report, "exhaustive", &v);
        }
    }
    if matches!(mode, CheckMode::Constructive | CheckMode::Both) {
        let v = constructive_verdict(&run, &specs, &gammas)
            .map_err(|e| anyhow!("constructive check failed: {e}"))?;
        accepted &= v.accepted;
        verdict_line(&mut report, "constructive", &v);
    }
    writeln!(report, "overall {}", if accepted { "accepted" } else { "rejected" })?;
    Ok(CheckOutcome { history: h.canonical(), report, accepted })
}

/// Runs `runs` seeded random executions and checks each one; op-based kinds
/// get RA-linearizability checks, state-based kinds a convergence check.
#[allow(clippy::too_many_arguments)]
pub fn run_fuzz(
    kinds: &[ObjKind],
    replicas: usize,
    ops: usize,
    runs: usize,
    seed: u64,
    spec_override: Option<SeqSpec>,
    gamma_override: Option<QuRewriting>,
    mode: CheckMode,
    shared_ts: bool,
    bound: usize,
) -> Result<(String, bool)> {
    let names: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();
    let mut report = String::new();
    writeln!(
        report,
        "fuzz crdt={} replicas={replicas} ops={ops} runs={runs} seed={seed} mode={} shared-ts={shared_ts}",
        names.join(","),
        mode.name()
    )?;
    let mut failed = 0usize;
    for i in 0..runs {
        let run_seed = seed + i as u64;
        let line = fuzz_one(
            kinds,
            replicas,
            ops,
            run_seed,
            spec_override,
            gamma_override,
            mode,
            shared_ts,
            bound,
        )?;
        if !line.ends_with("accepted") && !line.ends_with("converged") {
            failed += 1;
        }
        writeln!(report, "run seed={run_seed} {line}")?;
    }
    writeln!(report, "summary runs={runs} failed={failed}")?;
    Ok((report, failed == 0))
}

#[allow(clippy::too_many_arguments)]
fn fuzz_one(
    kinds: &[ObjKind],
    replicas: usize,
    ops: usize,
    seed: u64,
    spec_override: Option<SeqSpec>,
    gamma_override: Option<QuRewriting>,
    mode: CheckMode,
    shared_ts: bool,
    bound: usize,
) -> Result<String> {
    match kinds {
        [ObjKind::Sb(kind)] => {
            if shared_ts {
                bail!("shared-ts does not apply to state-based runs");
            }
            let (_, run) = random_sb_run(*kind, replicas, ops, seed)
                .map_err(|e| anyhow!("run failed: {e}"))?;
            let h = run.extract_history();
            let finals: Vec<&Value> =
                run.order.iter().rev().take(replicas).map(|id| &h.labels[id].ret).collect();
            Ok(if finals.windows(2).all(|w| w[0] == w[1]) {
                "converged".to_string()
            } else {
                "diverged".to_string()
            })
        }
        _ => {
            let objects: Vec<(String, CrdtKind)> = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| match k {
                    ObjKind::Op(k) => {
                        let name =
                            if kinds.len() == 1 { "o".to_string() } else { format!("o{}", i + 1) };
                        Ok((name, *k))
                    }
                    ObjKind::Sb(k) => bail!(
                        "cannot mix state-based kind {} into an op-based run",
                        k.name()
                    ),
                })
                .collect::<Result<_>>()?;
            let (_, run) = random_multi_op_run(&objects, replicas, ops, seed, shared_ts)
                .map_err(|e| anyhow!("run failed: {e}"))?;
            let h = run.extract_history();
            let mut specs = BTreeMap::new();
            let mut gammas = BTreeMap::new();
            for (obj, kind) in &objects {
                let (dspec, dgamma) = default_check(*kind);
                specs.insert(obj.clone(), spec_override.unwrap_or(dspec));
                gammas.insert(obj.clone(), gamma_override.unwrap_or(dgamma));
            }
            let mut ok = true;
            if matches!(mode, CheckMode::Exhaustive | CheckMode::Both) {
                let rewritten_len = qu_rewrite_multi(&h, &gammas)?.labels.len();
                let skip =
                    objects.len() == 1 && mode == CheckMode::Both && rewritten_len > bound;
                if !skip {
                    let v = if objects.len() == 1 {
                        check_ra_exhaustive_multi(&h, &specs, &gammas, bound)
                    } else {
                        check_composition(&run, &specs, &gammas, bound)
                    }
                    .map_err(|e| anyhow!("exhaustive check failed: {e}"))?;
                    ok &= v.accepted;
                }
            }
            if matches!(mode, CheckMode::Constructive | CheckMode::Both) {
                let v = constructive_verdict(&run, &specs, &gammas)
                    .map_err(|e| anyhow!("constructive check failed: {e}"))?;
                ok &= v.accepted;
            }
            Ok(if ok { "accepted".to_string() } else { "rejected".to_string() })
        }
    }
}

/// Generates a reproducible random workload as a scenario file.
pub fn gen_workload(
    kinds: &[ObjKind],
    replicas: usize,
    ops: usize,
    seed: u64,
    shared_ts: bool,
) -> Result<String> {
    match kinds {
        [ObjKind::Sb(kind)] => {
            let (trace, _) = random_sb_run(*kind, replicas, ops, seed)
                .map_err(|e| anyhow!("generation failed: {e}"))?;
            let sc = Scenario {
                replicas,
                shared_ts: false,
                objects: vec![("o".to_string(), ObjKind::Sb(*kind))],
                trace,
            };
            serialize_scenario(&sc)
        }
        _ => {
            let objects: Vec<(String, CrdtKind)> = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| match k {
                    ObjKind::Op(k) => {
                        let name =
                            if kinds.len() == 1 { "o".to_string() } else { format!("o{}", i + 1) };
                        Ok((name, *k))
                    }
                    ObjKind::Sb(k) => bail!(
                        "cannot mix state-based kind {} into an op-based run",
                        k.name()
                    ),
                })
                .collect::<Result<_>>()?;
            let (trace, _) = random_multi_op_run(&objects, replicas, ops, seed, shared_ts)
                .map_err(|e| anyhow!("generation failed: {e}"))?;
            let sc = Scenario {
                replicas,
                shared_ts,
                objects: objects
                    .into_iter()
                    .map(|(n, k)| (n, ObjKind::Op(k)))
                    .collect(),
                trace,
            };
            serialize_scenario(&sc)
        }
    }
}
