//! Tamper, replay and eavesdrop sweeps over randomized storage runs.
//!
//! Reports are plain text and depend only on the seed and iteration count.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::actors::Verdict;
use crate::crypto::hash_parts;
use crate::messages::{AdversaryAction, Message, MessageType};
use crate::scenario::{RunKind, ScenarioError, ScenarioRun, StorageScenario};
use crate::simnet::{scan_capture_log, Adversary, Mutation, Target};

/// Every signed or sealed message on the storage path.
pub const TAMPER_TYPES: [MessageType; 12] = [
    MessageType::PriceQuote,
    MessageType::AuthorizationRequest,
    MessageType::AuthorizeAndHold,
    MessageType::HoldRequest,
    MessageType::HoldResponse,
    MessageType::AuthOutcome,
    MessageType::ServiceInvocation,
    MessageType::ServiceGrant,
    MessageType::CaptureRequest,
    MessageType::SettleRequest,
    MessageType::SettleResponse,
    MessageType::CaptureResponse,
];

/// Authorization and capture messages.
pub const REPLAY_TYPES: [MessageType; 7] = [
    MessageType::AuthorizationRequest,
    MessageType::AuthorizeAndHold,
    MessageType::HoldRequest,
    MessageType::HoldResponse,
    MessageType::CaptureRequest,
    MessageType::SettleRequest,
    MessageType::SettleResponse,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyResult {
    pub name: String,
    pub runs: usize,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {} runs, {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.runs, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub seed: u64,
    pub iterations: usize,
    pub results: Vec<PropertyResult>,
}

impl AttackReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "attack suite seed={} iterations={}", self.seed, self.iterations)?;
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        writeln!(f, "overall: {}", if self.all_passed() { "PASS" } else { "FAIL" })
    }
}

fn run_seed(seed: u64, label: &str, a: u64, b: u64) -> u64 {
    let d =
        hash_parts(&[b"gset/attacks/v1", &seed.to_be_bytes(), label.as_bytes(), &a.to_be_bytes(), &b.to_be_bytes()]);
    u64::from_be_bytes(d.as_bytes()[..8].try_into().expect("8 bytes"))
}

/// Records the adversary acted on, by action.
fn acted_on(run: &ScenarioRun, action: AdversaryAction) -> Vec<usize> {
    let records = run.result.transcript.records();
    (0..records.len()).filter(|&i| records[i].adversary_action == action).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TamperStats {
    pub runs: usize,
    pub tampered: usize,
    pub still_parsed: usize,
    pub rejected_by_recipient: usize,
    /// Approvals, grants or settlements among the tampered message's consequences.
    pub forged: usize,
    pub unconserved: usize,
}

/// Flips one uniformly random bit of the first `ty` in each of `iterations`
/// randomized happy-path runs.
pub fn tamper_type(seed: u64, ty: MessageType, iterations: usize) -> Result<TamperStats, ScenarioError> {
    let mut stats = TamperStats::default();
    for i in 0..iterations {
        let s = run_seed(seed, "tamper", ty.tag() as u64, i as u64);
        let scenario = StorageScenario::randomized(s, RunKind::Happy);
        let bit = ChaCha20Rng::seed_from_u64(s).gen::<u64>();
        let mut adv = Adversary::tamper(Target::Type(ty), Mutation::FlipBit(bit));
        let run = scenario.run(Some(&mut adv))?;
        stats.runs += 1;
        for idx in acted_on(&run, AdversaryAction::Tampered) {
            stats.tampered += 1;
            if Message::decode(&run.result.transcript.records()[idx].bytes).is_ok() {
                stats.still_parsed += 1;
            }
            if matches!(run.result.verdict(idx), Some(Verdict::Rejected(_))) {
                stats.rejected_by_recipient += 1;
            }
            stats.forged += run.result.effective_approvals(&run.result.descendants(idx)).len();
        }
        if !run.account_provider().ledger().is_conserved() {
            stats.unconserved += 1;
        }
    }
    Ok(stats)
}

pub fn tamper_sweep(seed: u64, iterations: usize) -> Result<Vec<PropertyResult>, ScenarioError> {
    TAMPER_TYPES
        .iter()
        .map(|&ty| {
            let st = tamper_type(seed, ty, iterations)?;
            Ok(PropertyResult {
                name: format!("tamper {ty}"),
                runs: st.runs,
                passed: st.tampered == st.runs && st.forged == 0 && st.unconserved == 0,
                detail: format!(
                    "{} tampered, {} still parsed, {} rejected by recipient, {} approvals from tampered",
                    st.tampered, st.still_parsed, st.rejected_by_recipient, st.forged
                ),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub runs: usize,
    pub replayed: usize,
    pub duplicates_accepted: usize,
    /// Runs with more holds or settlements than the single-delivery run.
    pub excess: usize,
    pub double_settled_tokens: usize,
    pub unconserved: usize,
}

fn settled_tokens(run: &ScenarioRun) -> Vec<[u8; 16]> {
    let r = &run.result;
    (0..r.transcript.len())
        .filter(|&i| r.accepted(i))
        .filter_map(|i| match Message::decode(&r.transcript.records()[i].bytes) {
            Ok(Message::CaptureResponse(c)) if c.settled => Some(c.token_id.0),
            _ => None,
        })
        .collect()
}

/// Duplicates the first message of each replay type in `runs` randomized
/// runs and compares against the undisturbed run of the same scenario.
pub fn replay_stats(seed: u64, runs: usize) -> Result<Vec<(MessageType, ReplayStats)>, ScenarioError> {
    let mut out: Vec<(MessageType, ReplayStats)> = REPLAY_TYPES.iter().map(|t| (*t, ReplayStats::default())).collect();
    for i in 0..runs {
        let scenario = StorageScenario::randomized(run_seed(seed, "replay", 0, i as u64), RunKind::Happy);
        let honest = scenario.run(None)?;
        let honest_ledger = honest.account_provider().ledger();
        let (holds, settlements) = (honest_ledger.total_holds_placed(), honest_ledger.settlement_count());
        for (ty, st) in out.iter_mut() {
            let mut adv = Adversary::replay(Target::Type(*ty));
            let run = scenario.run(Some(&mut adv))?;
            st.runs += 1;
            let copies = acted_on(&run, AdversaryAction::Replayed);
            st.replayed += copies.len();
            st.duplicates_accepted += copies.iter().filter(|&&c| run.result.accepted(c)).count();
            let ledger = run.account_provider().ledger();
            if ledger.total_holds_placed() > holds || ledger.settlement_count() > settlements {
                st.excess += 1;
            }
            let tokens = settled_tokens(&run);
            let distinct: BTreeSet<_> = tokens.iter().collect();
            st.double_settled_tokens += tokens.len() - distinct.len();
            if !ledger.is_conserved() {
                st.unconserved += 1;
            }
        }
    }
    Ok(out)
}

pub fn replay_sweep(seed: u64, runs: usize) -> Result<Vec<PropertyResult>, ScenarioError> {
    Ok(replay_stats(seed, runs)?
        .into_iter()
        .map(|(ty, st)| PropertyResult {
            name: format!("replay {ty}"),
            runs: st.runs,
            passed: st.replayed == st.runs
                && st.duplicates_accepted == 0
                && st.excess == 0
                && st.double_settled_tokens == 0
                && st.unconserved == 0,
            detail: format!(
                "{} duplicated, {} duplicates accepted, {} runs above single-delivery holds/settlements",
                st.replayed, st.duplicates_accepted, st.excess
            ),
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EavesdropStats {
    pub runs: usize,
    pub captured: usize,
    pub capture_hits: usize,
    pub sp_hits: usize,
    pub tm_hits: usize,
}

/// A passive adversary on every message of happy and denial runs.
pub fn eavesdrop_stats(seed: u64, runs: usize) -> Result<EavesdropStats, ScenarioError> {
    let mut st = EavesdropStats::default();
    for i in 0..runs {
        let kind = RunKind::ALL[i % RunKind::ALL.len()];
        let scenario = StorageScenario::randomized(run_seed(seed, "eavesdrop", 0, i as u64), kind);
        let mut adv = Adversary::passive(Target::All);
        let run = scenario.run(Some(&mut adv))?;
        st.runs += 1;
        st.captured += adv.capture_log().len();
        st.capture_hits += scan_capture_log(adv.capture_log(), &scenario.markers()).len();
        let privacy = run.privacy();
        st.sp_hits += privacy.hits_for(crate::simnet::Party::ServiceProvider);
        st.tm_hits += privacy.hits_for(crate::simnet::Party::TrustManager);
    }
    Ok(st)
}

pub fn eavesdrop_sweep(seed: u64, runs: usize) -> Result<Vec<PropertyResult>, ScenarioError> {
    let st = eavesdrop_stats(seed, runs)?;
    Ok(vec![PropertyResult {
        name: "eavesdrop".into(),
        runs: st.runs,
        passed: st.capture_hits == 0 && st.sp_hits == 0 && st.tm_hits == 0,
        detail: format!(
            "{} messages captured, {} payment markers in capture log, {} SP hits, {} TM hits",
            st.captured, st.capture_hits, st.sp_hits, st.tm_hits
        ),
    }])
}

/// All three sweeps, `iterations` runs each.
pub fn attack_suite(seed: u64, iterations: usize) -> Result<AttackReport, ScenarioError> {
    if iterations == 0 {
        return Err(ScenarioError::Invalid("iterations must be positive".into()));
    }
    let mut results = tamper_sweep(seed, iterations)?;
    results.extend(replay_sweep(seed, iterations)?);
    results.extend(eavesdrop_sweep(seed, iterations)?);
    Ok(AttackReport { seed, iterations, results })
}
