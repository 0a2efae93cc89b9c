//! The `tokenpeg` command line.
//!
//! ```text
//! tokenpeg validate <file> [--total-supply N] [--entrance-fee-minimum N]
//! tokenpeg run <file> [--seed S | --seeds A..B] [--max-ticks N] [--trace-out PATH]
//!                     [--mode conservation|strict] [--threshold-override K]
//! tokenpeg replay <trace> [--mode conservation|strict]
//! ```
//!
//! Exit status: 0 pass, 1 invalid input, 2 invariant failure, 3 replay
//! divergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tokenpeg_core::canonical;
use tokenpeg_core::contracts::GateMode;
use tokenpeg_core::genesis::{Diagnostic, GenesisSpec, SideVariant};
use tokenpeg_core::simnet::trace::{self, TraceError};
use tokenpeg_core::simnet::{Outcome, ScenarioConfig, Sim};
use tokenpeg_core::TokenAmount;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_INVARIANT: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "tokenpeg", version, about = "Simulate a witness-quorum token bridge")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Conservation,
    Strict,
}

impl From<ModeArg> for GateMode {
    fn from(m: ModeArg) -> GateMode {
        match m {
            ModeArg::Conservation => GateMode::Conservation,
            ModeArg::Strict => GateMode::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Gasless,
    NativeGas,
}

/// Inclusive seed range written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let first = a.trim().parse::<u64>().map_err(|e| format!("{a:?}: {e}"))?;
        let last = b.trim().parse::<u64>().map_err(|e| format!("{b:?}: {e}"))?;
        if last < first {
            return Err(format!("empty range {first}..{last}"));
        }
        Ok(SeedRange { first, last })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario or a side chain genesis file without running it.
    Validate {
        file: PathBuf,
        /// Token supply a bare genesis file must account for.
        #[arg(long)]
        total_supply: Option<u64>,
        /// Smallest acceptable Bal_Resv for a bare gasless genesis file.
        #[arg(long, default_value_t = 0)]
        entrance_fee_minimum: u64,
        /// Genesis layout; inferred from the fields when omitted.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Run a scenario and check every invariant.
    Run {
        file: PathBuf,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Run each seed of an inclusive range, in parallel.
        #[arg(long)]
        seeds: Option<SeedRange>,
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Where to write the trace. With --seeds, `{seed}` in the path is
        /// replaced by the seed, or the seed is added before the extension.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Force every quorum threshold, bypassing the majority rule.
        #[arg(long)]
        threshold_override: Option<usize>,
    },
    /// Re-execute a trace and compare it line by line.
    Replay {
        trace: PathBuf,
        /// Re-execute under another gate mode, comparing everything after
        /// the header.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

/// Parse `args` (program name first) and execute, writing to `out` and
/// `err`. Returns the exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_INVALID
            } else {
                let _ = write!(out, "{text}");
                EXIT_PASS
            };
        }
    };
    execute(cli.command, out, err)
}

pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match command {
        Command::Validate { file, total_supply, entrance_fee_minimum, variant } => {
            cmd_validate(&file, total_supply, entrance_fee_minimum, variant, out, err)
        }
        Command::Run { file, seed, seeds, max_ticks, trace_out, mode, threshold_override } => {
            let options = RunOptions { seed, seeds, max_ticks, trace_out, mode, threshold_override };
            cmd_run(&file, &options, out, err)
        }
        Command::Replay { trace, mode } => cmd_replay(&trace, mode, out, err),
    }
}

fn read(path: &Path, err: &mut dyn Write) -> Option<String> {
    match std::fs::read_to_string(path) {
        Ok(text) => Some(text),
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            None
        }
    }
}

fn print_diagnostics(diags: &[Diagnostic], err: &mut dyn Write) {
    for d in diags {
        let _ = writeln!(err, "error: {}: {} [{}]", d.field, d.message, d.rule);
    }
}

/// Which layout a bare genesis object follows, judged by its fields.
pub fn infer_variant(value: &Value) -> SideVariant {
    let has = |k: &str| value.get(k).is_some();
    let gasless_only = ["Bal_Resv", "SC_Inter", "SC_Bank", "Bal_Bank"];
    if has("SC_Trading") && !gasless_only.iter().any(|k| has(k)) {
        SideVariant::NativeGas
    } else {
        SideVariant::Gasless
    }
}

pub fn cmd_validate(
    path: &Path,
    total_supply: Option<u64>,
    entrance_fee_minimum: u64,
    variant: Option<VariantArg>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let Some(text) = read(path, err) else { return EXIT_INVALID };
    let value: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {}: not valid JSON: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    if value.get("token_chain").is_some() {
        return match ScenarioConfig::parse(&text) {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "ok: scenario {} ({} side chains, {} witnesses, {} workload items)",
                    s.name,
                    s.side_chains.len(),
                    s.witnesses.len(),
                    s.workload.len()
                );
                EXIT_PASS
            }
            Err(diags) => {
                print_diagnostics(&diags, err);
                EXIT_INVALID
            }
        };
    }
    let variant = match variant {
        Some(VariantArg::Gasless) => SideVariant::Gasless,
        Some(VariantArg::NativeGas) => SideVariant::NativeGas,
        None => infer_variant(&value),
    };
    let genesis = match GenesisSpec::from_value(variant, &value) {
        Ok(g) => g,
        Err(diags) => {
            print_diagnostics(&diags, err);
            return EXIT_INVALID;
        }
    };
    let total = match (total_supply, variant) {
        (Some(t), _) => TokenAmount(t),
        (None, SideVariant::NativeGas) => TokenAmount::ZERO,
        (None, SideVariant::Gasless) => {
            let _ = writeln!(err, "error: a bare gasless genesis needs --total-supply to check Bal_Resv + Bal_Bank");
            return EXIT_INVALID;
        }
    };
    let diags = genesis.validate(total, TokenAmount(entrance_fee_minimum));
    if diags.is_empty() {
        let _ = writeln!(out, "ok: {variant} genesis for chain {}", genesis.chain_id());
        EXIT_PASS
    } else {
        print_diagnostics(&diags, err);
        EXIT_INVALID
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub seeds: Option<SeedRange>,
    pub max_ticks: Option<u64>,
    pub trace_out: Option<PathBuf>,
    pub mode: Option<ModeArg>,
    pub threshold_override: Option<usize>,
}

/// Path of the trace for `seed` when fanning out.
pub fn seed_path(template: &Path, seed: u64) -> PathBuf {
    let text = template.to_string_lossy();
    if text.contains("{seed}") {
        return PathBuf::from(text.replace("{seed}", &seed.to_string()));
    }
    let stem = template.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match template.extension() {
        Some(ext) => format!("{stem}.{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{seed}"),
    };
    template.with_file_name(name)
}

/// Human-readable report followed by one machine-readable summary line.
pub fn report(outcome: &Outcome, scenario: &ScenarioConfig) -> String {
    let s = &outcome.summary;
    let mut r = String::new();
    let mode = match scenario.mode {
        GateMode::Conservation => "conservation",
        GateMode::Strict => "strict",
    };
    let _ = writeln!(r, "scenario {}  seed {}  mode {mode}", scenario.name, scenario.seed);
    let _ = writeln!(
        r,
        "ticks {}  token height {}  quiescent {}",
        s.ticks,
        s.token_height,
        if s.quiescent { "yes" } else { "no" }
    );
    for (side, spec) in s.sides.iter().zip(&scenario.side_chains) {
        let label = match spec.variant {
            SideVariant::Gasless => "circulating",
            SideVariant::NativeGas => "trading ledger",
        };
        let _ = writeln!(
            r,
            "side {} ({})  registered {}  SC_A.locked {}  {label} {}  height {}",
            side.name,
            spec.variant,
            if side.registered { "yes" } else { "no" },
            side.sc_a_locked,
            side.side_value,
            side.height
        );
    }
    for (tick, e) in registration_results(outcome) {
        let id = e["chain_id"].as_str().unwrap_or_default();
        let name = s.sides.iter().find(|x| x.chain_id.to_string() == id).map_or(id, |x| x.name.as_str());
        let round = &e["round"];
        if e["success"] == Value::Bool(true) {
            let _ = writeln!(r, "registration {name} round {round}: accepted at tick {tick}, amount {}", e["amount"]);
        } else {
            let _ = writeln!(r, "registration {name} round {round}: reverted at tick {tick}, refund {}", e["refund"]);
        }
    }
    let registry: Vec<String> = s.registry.iter().map(ToString::to_string).collect();
    let _ = writeln!(r, "registry [{}]", registry.join(", "));
    let st = &s.stats;
    let _ = writeln!(
        r,
        "blocks {}  sends {}  drops {}  dups {}  resends {}  gate waits {}  reorgs {}  quiescent points {}",
        st.blocks, st.sends, st.drops, st.dups, st.resends, st.gate_waits, st.reorgs, st.quiescent_points
    );
    let _ = writeln!(r, "checks {} run, {} failed", outcome.checks_run, outcome.failures.len());
    for f in &outcome.failures {
        let _ = writeln!(r, "  FAIL {} at tick {}: {}", f.check.name, f.tick, f.check.detail);
    }
    let _ = writeln!(r, "result {}", if outcome.passed() { "PASS" } else { "FAIL" });
    let mut verdicts = serde_json::Map::new();
    for c in &outcome.final_checks {
        verdicts.insert(c.name.clone(), Value::Bool(c.ok));
    }
    for f in &outcome.failures {
        verdicts.insert(f.check.name.clone(), Value::Bool(false));
    }
    let summary = json!({
        "scenario": scenario.name,
        "seed": scenario.seed,
        "passed": outcome.passed(),
        "summary": s,
        "verdicts": verdicts,
    });
    let _ = writeln!(r, "summary {}", canonical::value_to_canonical(&summary));
    r
}

/// Registration settlements on the token chain, with the tick they landed.
fn registration_results(outcome: &Outcome) -> Vec<(u64, Value)> {
    outcome
        .trace
        .records()
        .filter(|rec| rec.kind == "block" && rec.chain.as_deref() == Some("token"))
        .flat_map(|rec| {
            let events = rec.payload["events"].as_array().cloned().unwrap_or_default();
            events
                .into_iter()
                .filter(|e| e["payload"]["topic"] == "registration_result")
                .map(move |e| (rec.tick, e["payload"].clone()))
        })
        .collect()
}

fn prepare(base: &ScenarioConfig, options: &RunOptions, seed: Option<u64>) -> ScenarioConfig {
    let mut s = base.clone();
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(m) = options.max_ticks {
        s.max_ticks = m;
    }
    if let Some(m) = options.mode {
        s.mode = m.into();
    }
    if options.threshold_override.is_some() {
        s.threshold_override = options.threshold_override;
    }
    s
}

struct SeedRun {
    scenario: ScenarioConfig,
    outcome: Result<Outcome, Vec<Diagnostic>>,
}

fn simulate(scenario: ScenarioConfig) -> SeedRun {
    let outcome = Sim::new(scenario.clone()).map(|mut sim| sim.run());
    SeedRun { scenario, outcome }
}

pub fn cmd_run(path: &Path, options: &RunOptions, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let Some(text) = read(path, err) else { return EXIT_INVALID };
    let base = match ScenarioConfig::parse(&text) {
        Ok(s) => s,
        Err(diags) => {
            print_diagnostics(&diags, err);
            return EXIT_INVALID;
        }
    };
    let seeds: Vec<Option<u64>> = match options.seeds {
        Some(r) => (r.first..=r.last).map(Some).collect(),
        None => vec![options.seed],
    };
    let scenarios: Vec<ScenarioConfig> = seeds.iter().map(|s| prepare(&base, options, *s)).collect();
    // Overrides can make a valid file invalid; check before spending time.
    let invalid: Vec<Diagnostic> = scenarios.first().map(ScenarioConfig::validate).unwrap_or_default();
    if !invalid.is_empty() {
        print_diagnostics(&invalid, err);
        return EXIT_INVALID;
    }
    let runs = fan_out(scenarios);
    let fanned = options.seeds.is_some();
    let mut status = EXIT_PASS;
    for run in runs {
        let outcome = match run.outcome {
            Ok(o) => o,
            Err(diags) => {
                print_diagnostics(&diags, err);
                return EXIT_INVALID;
            }
        };
        if let Some(template) = &options.trace_out {
            let target = if fanned { seed_path(template, run.scenario.seed) } else { template.clone() };
            if let Err(e) = std::fs::write(&target, outcome.trace.text()) {
                let _ = writeln!(err, "error: cannot write {}: {e}", target.display());
                return EXIT_INVALID;
            }
        }
        if fanned {
            let _ = writeln!(
                out,
                "seed {}  {}  {} checks, {} failed",
                run.scenario.seed,
                if outcome.passed() { "PASS" } else { "FAIL" },
                outcome.checks_run,
                outcome.failures.len()
            );
            for f in &outcome.failures {
                let _ = writeln!(out, "  FAIL {} at tick {}: {}", f.check.name, f.tick, f.check.detail);
            }
        } else {
            let _ = write!(out, "{}", report(&outcome, &run.scenario));
        }
        if !outcome.passed() {
            status = EXIT_INVARIANT;
        }
    }
    status
}

/// One simulation per scenario, spread over the available cores. Results
/// come back in input order.
fn fan_out(scenarios: Vec<ScenarioConfig>) -> Vec<SeedRun> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(scenarios.len()).max(1);
    if workers == 1 {
        return scenarios.into_iter().map(simulate).collect();
    }
    let jobs: Vec<(usize, ScenarioConfig)> = scenarios.into_iter().enumerate().collect();
    let mut results: Vec<(usize, SeedRun)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let mine: Vec<(usize, ScenarioConfig)> =
                    jobs.iter().filter(|(i, _)| i % workers == w).cloned().collect();
                scope.spawn(move || mine.into_iter().map(|(i, s)| (i, simulate(s))).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, r)| r).collect()
}

pub fn cmd_replay(path: &Path, mode: Option<ModeArg>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let Some(text) = read(path, err) else { return EXIT_INVALID };
    let header = match trace::parse_header(&text) {
        Ok(h) => h,
        Err(TraceError::Empty) => {
            let _ = writeln!(err, "error: {} is empty", path.display());
            return EXIT_INVALID;
        }
        Err(e) => {
            let _ = writeln!(err, "divergence: header: {e}");
            return EXIT_DIVERGENCE;
        }
    };
    let mut scenario = header.scenario;
    let overridden = mode.is_some_and(|m| GateMode::from(m) != scenario.mode);
    if let Some(m) = mode {
        scenario.mode = m.into();
    }
    let outcome = match Sim::new(scenario) {
        Ok(mut sim) => sim.run(),
        Err(diags) => {
            let _ = writeln!(err, "divergence: the recorded scenario does not validate");
            print_diagnostics(&diags, err);
            return EXIT_DIVERGENCE;
        }
    };
    let recorded: Vec<&str> = text.lines().collect();
    let fresh: Vec<&str> = outcome.trace.lines.iter().map(String::as_str).collect();
    // Under another mode the header and trailer differ by construction;
    // everything between them is compared.
    let (skip, trim) = if overridden { (1, 1) } else { (0, 0) };
    let inner = |v: &[&str]| -> Vec<String> {
        let end = v.len().saturating_sub(trim).max(skip);
        v[skip.min(v.len())..end].iter().map(|s| s.to_string()).collect()
    };
    let (a, b) = (inner(&recorded), inner(&fresh));
    match trace::first_divergence(a.iter().map(String::as_str), b.iter().map(String::as_str)) {
        None => {
            let _ = writeln!(out, "ok: {} records replayed identically", recorded.len());
            EXIT_PASS
        }
        Some(d) => {
            let _ = writeln!(err, "divergence at line {}", d.line + skip);
            let _ = writeln!(err, "  recorded: {}", d.expected.as_deref().unwrap_or("<end of trace>"));
            let _ = writeln!(err, "  replayed: {}", d.found.as_deref().unwrap_or("<end of trace>"));
            EXIT_DIVERGENCE
        }
    }
}

pub mod fixtures {
    //! The scenario and genesis files shipped under `fixtures/`, built from
    //! the core presets.

    use serde_json::Value;
    use tokenpeg_core::contracts::GateMode;
    use tokenpeg_core::genesis::SideVariant;
    use tokenpeg_core::simnet::presets;
    use tokenpeg_core::TokenAmount;

    /// Pretty JSON with sorted keys.
    pub fn render(value: &Value) -> String {
        let mut text = serde_json::to_string_pretty(value).expect("json renders");
        text.push('\n');
        text
    }

    fn scenario(s: tokenpeg_core::simnet::ScenarioConfig) -> String {
        render(&serde_json::to_value(s).expect("scenario serializes"))
    }

    /// `(relative path, contents)` of every fixture.
    pub fn all() -> Vec<(&'static str, String)> {
        let genesis = presets::happy_path(SideVariant::Gasless).side_chains[0].genesis.clone();
        let genesis = serde_json::to_value(genesis).expect("genesis serializes");
        let mut missing = genesis.clone();
        missing.as_object_mut().expect("object").remove("Wit_Addr_List");
        let mut off_by_one = genesis.clone();
        off_by_one["Bal_Bank"] = serde_json::to_value(TokenAmount(presets::TOTAL_SUPPLY - presets::BAL_RESV + 1))
            .expect("amount serializes");
        let native = presets::happy_path(SideVariant::NativeGas).side_chains[0].genesis.clone();
        vec![
            ("happy-path.json", scenario(presets::happy_path(SideVariant::Gasless))),
            ("happy-path-native.json", scenario(presets::happy_path(SideVariant::NativeGas))),
            ("round-trip.json", scenario(presets::round_trip(SideVariant::Gasless))),
            ("random-workload.json", scenario(presets::random_workload(1, SideVariant::NativeGas))),
            ("byzantine-majority.json", scenario(presets::quorum_reject_all(1, SideVariant::Gasless, 2))),
            ("forged-registration.json", scenario(presets::quorum_approve_all(1, SideVariant::Gasless, 2))),
            ("colluding-pair.json", scenario(presets::colluding_pair(1))),
            ("reorg-shallow.json", scenario(presets::reorg_immunity(1))),
            ("reorg-deep.json", scenario(presets::reorg_negative(1))),
            ("lossy.json", scenario(presets::lossy(1))),
            ("gate-modes.json", scenario(presets::strict_gate(GateMode::Conservation))),
            ("desk-scale.json", scenario(presets::desk_scale(1))),
            ("genesis/alpha.json", render(&genesis)),
            ("genesis/alpha-native.json", render(&serde_json::to_value(native).expect("genesis serializes"))),
            ("genesis/missing-wit-addr-list.json", render(&missing)),
            ("genesis/bal-off-by-one.json", render(&off_by_one)),
        ]
    }
}
