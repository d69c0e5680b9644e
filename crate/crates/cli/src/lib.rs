//! The `gset` command: storage demo, attack suite, key fixtures and
//! transcript inspection.
//!
//! Exit codes: 0 when the run completed and every invariant held (a denied
//! authorization is still 0), 1 on an invariant or property failure, 2 on a
//! usage, config or file error.

pub mod config;
pub mod keys;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gset_core::attacks::attack_suite;
use gset_core::scenario::DEFAULT_SEED;
use gset_core::simnet::{replay_transcript, scan_capture_log, AdversaryMode, Transcript};

pub use config::{AdversaryChoice, AdversarySpec, ConfigError, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_ITERATIONS: usize = 200;
pub const DEFAULT_TRANSCRIPT: &str = "gset-demo.gsett";

const CONFIG_HELP: &str = "\
Config files hold `key = value` lines under `[section]` headers; `#` starts a comment.
Unset keys keep the built-in scenario (10 credits/megabyte, 5 megabytes, limit 60,
credit 100, three pictures).

  (top) or [scenario]  seed, quote_ttl, max_ticks, precheck_limit, capture_on_grant,
                       redeem_on_grant
  [actors]             requester, provider, trust_manager, account_provider
  [account]            ref, credit
  [pricing]            rate
  [usage]              service_id, operation, quantity, unit, objects
  [payment]            limit
  [adversary]          mode (none|tamper|replay|eavesdrop|drop), target (all or a
                       message type such as AuthorizationRequest), seed, skip

Seed precedence: --seed, then GSET_SEED, then the config file, then 42.";

#[derive(Debug, Parser)]
#[command(name = "gset", version, about = "Dynamic authorization and payment protocol simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed.
    #[arg(long, env = "GSET_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Store pictures with a provider, paying through the trust manager.
    #[command(after_long_help = CONFIG_HELP)]
    DemoStorage {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        /// Transcript file to write.
        #[arg(long, default_value = DEFAULT_TRANSCRIPT)]
        out: PathBuf,
        /// Overrides the config file's adversary mode.
        #[arg(long, value_enum)]
        adversary: Option<AdversaryChoice>,
    },
    /// Tamper, replay and eavesdrop sweeps over randomized runs.
    AttackSuite {
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iterations: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic key pairs for the given subject ids.
    Keys {
        /// Defaults to the four storage scenario actors.
        ids: Vec<String>,
        #[command(flatten)]
        seed: SeedArg,
        /// Fixture file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Transcript(TranscriptCommand),
}

#[derive(Debug, Subcommand)]
pub enum TranscriptCommand {
    /// One line per delivery.
    Print { path: PathBuf },
    /// Re-runs the scenario that produced a transcript and reports the first divergence.
    #[command(after_long_help = CONFIG_HELP)]
    Verify {
        path: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Output failures on the terminal are not actionable; ignore them.
macro_rules! say {
    ($w:expr, $($t:tt)*) => { let _ = writeln!($w, $($t)*); };
}

impl Io<'_> {
    fn usage(&mut self, msg: impl std::fmt::Display) -> i32 {
        say!(self.err, "gset: {msg}");
        EXIT_USAGE
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, String> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ScenarioConfig::parse(&src).map_err(|e| format!("{}: {e}", path.display()))
}

fn demo_storage(
    io: &mut Io,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    mode: Option<AdversaryChoice>,
) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return io.usage(e),
    };
    let scenario = cfg.scenario(seed);
    let spec = cfg.adversary(mode);
    if let Err(e) = scenario.validate() {
        return io.usage(e);
    }
    let mut adversary = spec.build(scenario.seed);
    let run = match scenario.run(adversary.as_mut()) {
        Ok(r) => r,
        Err(e) => return io.usage(e),
    };
    let summary = match run.summary() {
        Ok(s) => s,
        Err(e) => return io.usage(e),
    };

    say!(io.out, "demo-storage seed={} adversary={}", scenario.seed, spec.mode);
    say!(io.out, "steps:");
    let _ = write!(io.out, "{}", run.result.transcript);
    say!(io.out, "summary:");
    let _ = write!(io.out, "{summary}");
    let mut passed = summary.all_passed();
    if let Some(adv) = adversary.as_ref().filter(|a| a.mode() == AdversaryMode::PassiveEavesdrop) {
        let hits = scan_capture_log(adv.capture_log(), &scenario.markers()).len();
        say!(
            io.out,
            "eavesdropper: {} message(s) captured, {hits} payment marker(s) in clear",
            adv.capture_log().len()
        );
        passed &= hits == 0;
    }
    if let Err(e) = run.result.transcript.write_to(out) {
        return io.usage(format!("{}: {e}", out.display()));
    }
    say!(io.out, "transcript: {}", out.display());
    say!(io.out, "result: {}", if passed { "PASS" } else { "FAIL" });
    if passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn run_attack_suite(io: &mut Io, seed: Option<u64>, iterations: usize, out: Option<&Path>) -> i32 {
    if iterations == 0 {
        return io.usage("--iterations must be positive");
    }
    let report = match attack_suite(seed.unwrap_or(DEFAULT_SEED), iterations) {
        Ok(r) => r,
        Err(e) => return io.usage(e),
    };
    let text = report.to_string();
    let _ = write!(io.out, "{text}");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &text) {
            return io.usage(format!("{}: {e}", path.display()));
        }
    }
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn run_keys(io: &mut Io, ids: Vec<String>, seed: Option<u64>, out: Option<&Path>) -> i32 {
    let ids = if ids.is_empty() {
        gset_core::scenario::ScenarioIds::default().all().map(str::to_owned).to_vec()
    } else {
        ids
    };
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let text = match keys::generate(&ids, seed) {
        Ok(k) => keys::render(&k, seed),
        Err(e) => return io.usage(e),
    };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                return io.usage(format!("{}: {e}", path.display()));
            }
            say!(io.out, "{} key pair(s) written to {}", ids.len(), path.display());
        }
        None => {
            let _ = write!(io.out, "{text}");
        }
    }
    EXIT_OK
}

fn run_transcript(io: &mut Io, cmd: TranscriptCommand) -> i32 {
    let path = match &cmd {
        TranscriptCommand::Print { path } | TranscriptCommand::Verify { path, .. } => path.clone(),
    };
    let transcript = match Transcript::read_from(&path) {
        Ok(t) => t,
        Err(e) => return io.usage(format!("{}: {e}", path.display())),
    };
    match cmd {
        TranscriptCommand::Print { .. } => {
            let _ = write!(io.out, "{transcript}");
            say!(io.out, "{} record(s)", transcript.len());
            EXIT_OK
        }
        TranscriptCommand::Verify { config, seed, .. } => {
            let cfg = match load_config(config.as_deref()) {
                Ok(c) => c,
                Err(e) => return io.usage(e),
            };
            let (mut network, initial) = match cfg.scenario(seed.seed).build() {
                Ok(b) => b,
                Err(e) => return io.usage(e),
            };
            let report = replay_transcript(&transcript, &mut network, &initial);
            let _ = write!(io.out, "{report}");
            if report.is_clean() {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(io.err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(io.out, "{text}");
                EXIT_OK
            };
        }
    };
    match cli.command {
        Command::DemoStorage { config, seed, out, adversary } => {
            demo_storage(&mut io, config.as_deref(), seed.seed, &out, adversary)
        }
        Command::AttackSuite { seed, iterations, out } => {
            run_attack_suite(&mut io, seed.seed, iterations, out.as_deref())
        }
        Command::Keys { ids, seed, out } => run_keys(&mut io, ids, seed.seed, out.as_deref()),
        Command::Transcript(cmd) => run_transcript(&mut io, cmd),
    }
}
