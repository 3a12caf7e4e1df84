use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ralin_cli::{
    gen_workload, parse_scenario, resolve_scenario_path, run_check, run_fuzz, CheckMode,
    ObjKind,
};
use ralin::checker::DEFAULT_BOUND;
use ralin::spec::{QuRewriting, SeqSpec};

const EXIT_REJECTED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ralin",
    version,
    about = "Replicated data type simulator and replication-aware linearizability checker"
)]
struct Cli {
    /// Config file with one `key=value` line per flag of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a trace or golden scenario and check it.
    Check(CheckArgs),
    /// Run seeded random workloads and check every one.
    Fuzz(FuzzArgs),
    /// Generate a reproducible random workload file.
    Gen(GenArgs),
}

#[derive(Args, Default)]
struct CheckArgs {
    /// Golden scenario name (resolved under RALIN_GOLDEN_DIR, default `goldens`).
    #[arg(long)]
    scenario: Option<String>,
    /// Explicit trace file path (alternative to --scenario).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Sequential spec for every object (default: per object kind).
    #[arg(long)]
    spec: Option<String>,
    /// Query-update rewriting for every object (default: per object kind).
    #[arg(long)]
    gamma: Option<String>,
    /// exhaustive | constructive | both
    #[arg(long, default_value = "both")]
    mode: String,
    /// Label-count bound for exhaustive enumeration.
    #[arg(long, default_value_t = DEFAULT_BOUND)]
    bound: usize,
    /// Directory to write the history and report files into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// Object kind(s), comma-separated for multi-object runs.
    #[arg(long, default_value = "rga")]
    crdt: String,
    #[arg(long, default_value_t = 3)]
    replicas: usize,
    /// Invocations per run.
    #[arg(long, default_value_t = 8)]
    ops: usize,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// exhaustive | constructive | both
    #[arg(long, default_value = "both")]
    mode: String,
    /// Draw timestamps from one per-replica source shared by all objects.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    shared_ts: bool,
    #[arg(long, default_value_t = 16)]
    bound: usize,
    /// Directory to write the report file into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Object kind(s), comma-separated for multi-object runs.
    #[arg(long, default_value = "rga")]
    crdt: String,
    #[arg(long, default_value_t = 3)]
    replicas: usize,
    #[arg(long, default_value_t = 8)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    shared_ts: bool,
    /// File to write the workload into (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kinds(s: &str) -> Result<Vec<ObjKind>> {
    let kinds: Vec<ObjKind> = s
        .split(',')
        .map(|k| ObjKind::parse(k.trim()).ok_or_else(|| anyhow!("unknown CRDT kind {k:?}")))
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        bail!("no CRDT kind given");
    }
    if kinds.len() > 1 && kinds.iter().any(|k| matches!(k, ObjKind::Sb(_))) {
        bail!("multi-object runs support operation-based kinds only");
    }
    Ok(kinds)
}

fn parse_spec(s: &Option<String>) -> Result<Option<SeqSpec>> {
    s.as_deref()
        .map(|s| SeqSpec::parse(s).ok_or_else(|| anyhow!("unknown spec {s:?}")))
        .transpose()
}

fn parse_gamma(s: &Option<String>) -> Result<Option<QuRewriting>> {
    s.as_deref()
        .map(|s| QuRewriting::parse(s).ok_or_else(|| anyhow!("unknown gamma {s:?}")))
        .transpose()
}

fn parse_mode(s: &str) -> Result<CheckMode> {
    CheckMode::parse(s).ok_or_else(|| anyhow!("unknown mode {s:?}"))
}

fn write_out(dir: &PathBuf, name: &str, ext: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.{ext}"));
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Expands `--config file` into flag tokens inserted right after the
/// subcommand; keys also given explicitly on the command line are skipped,
/// so explicit flags win.
fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    if pos + 1 >= argv.len() {
        bail!("--config requires a file path");
    }
    let path = argv.remove(pos + 1);
    argv.remove(pos);
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut extra = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| anyhow!("config line {line:?} is not key=value"))?;
        let flag = format!("--{}", key.trim());
        if argv.contains(&flag) {
            continue;
        }
        extra.push(flag);
        extra.push(value.trim().to_string());
    }
    // Insert after the subcommand token (argv[0] is the program name).
    let insert_at = 2.min(argv.len());
    argv.splice(insert_at..insert_at, extra);
    Ok(argv)
}

fn cmd_check(args: &CheckArgs) -> Result<bool> {
    let (name, path) = match (&args.scenario, &args.trace) {
        (Some(s), None) => {
            let path = resolve_scenario_path(s);
            let base = path.file_stem().and_then(|b| b.to_str()).unwrap_or(s).to_string();
            (base, path)
        }
        (None, Some(t)) => {
            let base =
                t.file_stem().and_then(|b| b.to_str()).unwrap_or("trace").to_string();
            (base, t.clone())
        }
        _ => bail!("exactly one of --scenario / --trace is required"),
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let sc = parse_scenario(&text)?;
    let outcome = run_check(
        &name,
        &sc,
        parse_spec(&args.spec)?,
        parse_gamma(&args.gamma)?,
        parse_mode(&args.mode)?,
        args.bound,
    )?;
    print!("{}", outcome.report);
    if let Some(dir) = &args.out {
        write_out(dir, &name, "history", &outcome.history)?;
        write_out(dir, &name, "report", &outcome.report)?;
    }
    Ok(outcome.accepted)
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<bool> {
    let kinds = parse_kinds(&args.crdt)?;
    let (report, ok) = run_fuzz(
        &kinds,
        args.replicas,
        args.ops,
        args.runs,
        args.seed,
        parse_spec(&args.spec)?,
        parse_gamma(&args.gamma)?,
        parse_mode(&args.mode)?,
        args.shared_ts,
        args.bound,
    )?;
    print!("{report}");
    if let Some(dir) = &args.out {
        write_out(dir, "fuzz", "report", &report)?;
    }
    Ok(ok)
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let kinds = parse_kinds(&args.crdt)?;
    let text = gen_workload(&kinds, args.replicas, args.ops, args.seed, args.shared_ts)?;
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, &text)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(argv) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version output is not an error.
            let _ = e.print();
            return match e.exit_code() {
                0 => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match &cli.cmd {
        Cmd::Check(args) => cmd_check(args),
        Cmd::Fuzz(args) => cmd_fuzz(args),
        Cmd::Gen(args) => cmd_gen(args).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_REJECTED),
        Err(e) => {
            eprintln!("error: {e:#}");
            // Replay/check machinery failures are internal breaches; bad
            // input (unknown names, unreadable or malformed files) is usage.
            let msg = format!("{e:#}");
            if msg.contains("replay failed")
                || msg.contains("check failed")
                || msg.contains("run failed")
                || msg.contains("generation failed")
            {
                ExitCode::from(EXIT_INTERNAL)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}
