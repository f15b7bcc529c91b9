//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 0    | success                                             |
//! | 1    | an actor error aborted the scenario                 |
//! | 2    | at least one `assert` step failed                   |
//! | 3    | trace differs from the golden file                  |
//! | 4    | rand-stats exceeded the 4σ bound                    |
//! | 64   | usage error (bad flags, missing config, n too small)|
//! | 65   | config file does not parse or validate              |
//! | 74   | I/O error                                           |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use randhijack_core::harness::{run_scenario, ScenarioConfig, ScenarioRun, Verdict};
use serde::Serialize;

use crate::config::{load_config, LoadError};
use crate::rand_stats::{rand_stats, MIN_SAMPLES};
use crate::trace_io::{compare, render_trace};
use crate::vectors;

pub mod exit {
    pub const OK: i32 = 0;
    pub const ACTOR_ERROR: i32 = 1;
    pub const ASSERTION_FAILED: i32 = 2;
    pub const TRACE_MISMATCH: i32 = 3;
    pub const STATS_FAILED: i32 = 4;
    pub const USAGE: i32 = 64;
    pub const BAD_CONFIG: i32 = 65;
    pub const IO: i32 = 74;
}

#[derive(Debug, Parser)]
#[command(name = "randhijack", version, about = "GSM AKA RAND-hijacking simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded test vectors for every primitive.
    GenVectors {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Records per operation.
        #[arg(long, default_value_t = 16)]
        count: usize,
    },
    /// Run a scenario file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Override the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Print a JSON summary on stdout.
        #[arg(long)]
        summary_json: bool,
    },
    /// Compare a trace with a golden file. With `--config` the scenario is
    /// run first and its trace compared.
    VerifyTrace {
        #[arg(long)]
        golden: PathBuf,
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "config")]
        seed: Option<u64>,
    },
    /// Per-bit frequency check on hijacked RANDs.
    RandStats {
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        summary_json: bool,
    },
}

#[derive(Serialize)]
struct AssertionSummary<'a> {
    step: usize,
    label: &'a str,
    passed: bool,
    divergence: Option<u64>,
    detail: &'a str,
}

#[derive(Serialize)]
struct AttackSummary {
    attack: &'static str,
    victim: String,
    succeeded: bool,
    recovered_kc: Option<String>,
    failure_cause: Option<String>,
    note: Option<String>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: String,
    seed: u64,
    events: usize,
    exit_code: i32,
    error: Option<String>,
    assertions: Vec<AssertionSummary<'a>>,
    attacks: Vec<AttackSummary>,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

// Console write failures are not actionable; the exit code still reports the outcome.
macro_rules! say {
    ($w:expr, $($t:tt)*) => { let _ = writeln!($w, $($t)*); };
}

fn load(path: &Path, seed: Option<u64>, io: &mut Io) -> Result<ScenarioConfig, i32> {
    match load_config(path) {
        Ok(mut cfg) => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            Ok(cfg)
        }
        Err(e @ LoadError::Io { .. }) => {
            say!(io.err, "error: {e}");
            Err(exit::USAGE)
        }
        Err(e) => {
            say!(io.err, "error: {}: {e}", path.display());
            Err(exit::BAD_CONFIG)
        }
    }
}

fn write_file(path: &Path, contents: &str, io: &mut Io) -> Result<(), i32> {
    fs::write(path, contents).map_err(|e| {
        say!(io.err, "error: cannot write {}: {e}", path.display());
        exit::IO
    })
}

pub fn run_exit_code(run: &ScenarioRun) -> i32 {
    if run.error.is_some() {
        exit::ACTOR_ERROR
    } else if !run.assertions_passed() {
        exit::ASSERTION_FAILED
    } else {
        exit::OK
    }
}

fn cmd_run(
    config: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    seed: Option<u64>,
    summary_json: bool,
    io: &mut Io,
) -> Result<i32, i32> {
    let Some(path) = config else {
        say!(io.err, "error: run needs --config <FILE>");
        return Err(exit::USAGE);
    };
    let cfg = load(&path, seed, io)?;
    let run = run_scenario(&cfg).map_err(|e| {
        say!(io.err, "error: {e}");
        exit::BAD_CONFIG
    })?;
    if let Some(out) = &trace_out {
        write_file(out, &render_trace(&run.trace), io)?;
    }
    let code = run_exit_code(&run);

    let mut assertions = Vec::new();
    let mut attacks = Vec::new();
    for v in &run.verdicts {
        match v {
            Verdict::Assertion { step, label, outcome } => assertions.push(AssertionSummary {
                step: *step,
                label,
                passed: outcome.passed,
                divergence: outcome.divergence,
                detail: &outcome.detail,
            }),
            Verdict::Attack(r) => attacks.push(AttackSummary {
                attack: r.attack.name(),
                victim: r.victim.to_string(),
                succeeded: r.succeeded,
                recovered_kc: r.recovered_kc.map(|k| k.to_string()),
                failure_cause: r.failure_cause.clone(),
                note: r.note.clone(),
            }),
        }
    }

    if summary_json {
        let summary = RunSummary {
            config: path.display().to_string(),
            seed: cfg.seed,
            events: run.trace.len(),
            exit_code: code,
            error: run.error.as_ref().map(|e| e.to_string()),
            assertions,
            attacks,
        };
        say!(io.out, "{}", serde_json::to_string(&summary).expect("plain data"));
    } else {
        for a in &attacks {
            let outcome = if a.succeeded { "succeeded" } else { "failed" };
            say!(io.out, "attack {} on {}: {outcome}", a.attack, a.victim);
            if let Some(c) = &a.failure_cause {
                say!(io.out, "  cause: {c}");
            }
            if let Some(kc) = &a.recovered_kc {
                say!(io.out, "  recovered kc: {kc}");
            }
        }
        for a in &assertions {
            if a.passed {
                say!(io.out, "assert {:?}: pass", a.label);
            } else {
                say!(
                    io.out,
                    "assert {:?}: FAIL at seq {:?}: {}",
                    a.label,
                    a.divergence,
                    a.detail
                );
            }
        }
        if let Some(e) = &run.error {
            say!(io.err, "aborted: {e}");
        }
        say!(io.out, "{} events", run.trace.len());
    }
    Ok(code)
}

fn cmd_verify_trace(
    golden: PathBuf,
    trace: Option<PathBuf>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    io: &mut Io,
) -> Result<i32, i32> {
    let read = |p: &Path, io: &mut Io| {
        fs::read_to_string(p).map_err(|e| {
            say!(io.err, "error: cannot read {}: {e}", p.display());
            exit::IO
        })
    };
    let expected = read(&golden, io)?;
    let actual = match (trace, config) {
        (Some(t), _) => read(&t, io)?,
        (None, Some(c)) => {
            let cfg = load(&c, seed, io)?;
            let run = run_scenario(&cfg).map_err(|_| exit::BAD_CONFIG)?;
            render_trace(&run.trace)
        }
        (None, None) => return Err(exit::USAGE),
    };
    match compare(&expected, &actual) {
        None => {
            say!(io.out, "trace matches {}", golden.display());
            Ok(exit::OK)
        }
        Some(d) => {
            say!(io.out, "trace differs from {} at line {}", golden.display(), d.line);
            say!(
                io.out,
                "  expected: {}",
                d.expected.as_deref().unwrap_or("<end of file>")
            );
            say!(io.out, "  actual:   {}", d.actual.as_deref().unwrap_or("<end of file>"));
            Ok(exit::TRACE_MISMATCH)
        }
    }
}

fn cmd_rand_stats(n: u64, seed: u64, summary_json: bool, io: &mut Io) -> Result<i32, i32> {
    let report = rand_stats(n, seed).map_err(|e| {
        say!(io.err, "error: {e}");
        exit::USAGE
    })?;
    if summary_json {
        say!(io.out, "{}", serde_json::to_string(&report).expect("plain data"));
    } else {
        say!(
            io.out,
            "rand-stats n={} seed={} (per-bit frequency smoke test, min n {MIN_SAMPLES})",
            n,
            seed
        );
        say!(
            io.out,
            "max |deviation| = {:.3} sigma at bit {} (bound {} sigma): {}",
            report.max_deviation_sigma,
            report.worst_bit,
            report.bound_sigma,
            if report.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.passed { exit::OK } else { exit::STATS_FAILED })
}

fn cmd_gen_vectors(out: PathBuf, seed: u64, count: usize, io: &mut Io) -> Result<i32, i32> {
    let records = vectors::generate(seed, count);
    write_file(&out, &vectors::render(seed, count, &records), io)?;
    say!(io.out, "wrote {} records to {}", records.len(), out.display());
    Ok(exit::OK)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(io.err, "{text}");
            } else {
                let _ = write!(io.out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::GenVectors { out, seed, count } => cmd_gen_vectors(out, seed, count, &mut io),
        Command::Run {
            config,
            trace_out,
            seed,
            summary_json,
        } => cmd_run(config, trace_out, seed, summary_json, &mut io),
        Command::VerifyTrace {
            golden,
            trace,
            config,
            seed,
        } => cmd_verify_trace(golden, trace, config, seed, &mut io),
        Command::RandStats { n, seed, summary_json } => cmd_rand_stats(n, seed, summary_json, &mut io),
    };
    result.unwrap_or_else(|code| code)
}
