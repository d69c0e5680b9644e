//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use ed25519_dalek::{Signature as EdSignature, VerifyingKey};
use gset_core::actors::TrustManagerNode;
use gset_core::attacks::{replay_stats, tamper_type, TAMPER_TYPES};
use gset_core::crypto::{generate_keypair, make_dual_signature, verify_with_oi, verify_with_pi};
use gset_core::ledger::{account_digest, Ledger, LedgerError};
use gset_core::messages::{encode, AdversaryAction, TranscriptRecord};
use gset_core::scenario::{Outcome, RunKind, StorageScenario};
use gset_core::simnet::{assert_privacy, Markers, Party, Transcript};
use gset_core::{DenialReason, Digest, Id, Message, MessageType};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use sha2::{Digest as _, Sha256};

// Pinned sizes and tolerances. Every criterion requires exact agreement.
const SEED: u64 = 20_240_501;
const GRID: u64 = 20;
const GRID_STEP: u64 = 5;
const LEDGER_OPS: usize = 10_000;
const LEDGER_SEQUENCES: u64 = 5;
const PRIVACY_RUNS: usize = 100;
const TAMPER_PER_TYPE: usize = 200;
const REPLAY_RUNS: usize = 100;
const DUAL_PAIRS: usize = 1_000;
const CODEC_PER_TYPE: usize = 10_000;
const REQUIRED_AGREEMENT: f64 = 1.0;
const TIME_BUDGET: Duration = Duration::from_secs(60);

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn happy_path() -> Verdict {
    let scenario = StorageScenario::with_seed(SEED);
    let a = scenario.run(None).map_err(|e| e.to_string())?;
    let b = scenario.run(None).map_err(|e| e.to_string())?;
    let summary = a.summary().map_err(|e| e.to_string())?;
    ensure(summary.outcome == Outcome::Approved, || format!("outcome {}", summary.outcome))?;
    ensure(summary.tickets_issued == 3 && summary.tickets_redeemed == 3, || {
        format!("tickets {} issued, {} redeemed", summary.tickets_issued, summary.tickets_redeemed)
    })?;
    let quoted = summary.quoted_price.ok_or("no quote")?;
    ensure(summary.settlements == 1 && summary.settled_amount == quoted, || {
        format!("{} settlement(s) totalling {} for quote {}", summary.settlements, summary.settled_amount, quoted)
    })?;
    ensure(summary.all_passed(), || format!("invariant checks failed:\n{summary}"))?;
    let (ta, tb) = (a.result.transcript.to_file_bytes(), b.result.transcript.to_file_bytes());
    ensure(ta == tb, || "transcripts differ between runs".into())?;
    Ok(format!("approved, 3/3 tickets, settled {quoted}, {} transcript bytes identical", ta.len()))
}

fn limit_grid() -> Verdict {
    let price = StorageScenario::with_seed(SEED).expected_price().ok_or("no price")?;
    let mut agree = 0;
    let mut total = 0;
    for i in 1..=GRID {
        for j in 1..=GRID {
            let (limit, credit) = (GRID_STEP * i, GRID_STEP * j);
            let oracle = if price > limit {
                Outcome::Denied(DenialReason::OverLimit)
            } else if price > credit {
                Outcome::Denied(DenialReason::InsufficientCredit)
            } else {
                Outcome::Approved
            };
            let s = StorageScenario { limit, credit, ..StorageScenario::with_seed(SEED + i * 100 + j) };
            let run = s.run(None).map_err(|e| e.to_string())?;
            let holds = run.account_provider().ledger().total_holds_placed();
            let holds_ok = match oracle {
                Outcome::Denied(DenialReason::OverLimit) => holds == 0,
                Outcome::Approved => holds == 1,
                _ => true,
            };
            total += 1;
            if run.outcome() == oracle && holds_ok {
                agree += 1;
            } else {
                eprintln!("  limit={limit} credit={credit}: got {} ({holds} holds), oracle {oracle}", run.outcome());
            }
        }
    }
    let rate = agree as f64 / total as f64;
    ensure(rate >= REQUIRED_AGREEMENT, || format!("{agree}/{total} agree with oracle"))?;
    Ok(format!("{agree}/{total} grid points agree with oracle (price {price})"))
}

/// Straightforward reimplementation: every balance recomputed from the full hold list.
#[derive(Default)]
struct NaiveLedger {
    limits: BTreeMap<Digest, u64>,
    holds: Vec<(Id, Digest, u64, u8)>, // state 0 active, 1 settled, 2 released
}

impl NaiveLedger {
    fn used(&self, d: &Digest, states: &[u8]) -> u64 {
        self.holds.iter().filter(|h| h.1 == *d && states.contains(&h.3)).map(|h| h.2).sum()
    }

    fn available(&self, d: &Digest) -> u64 {
        self.limits[d] - self.used(d, &[0, 1])
    }

    fn open(&mut self, d: Digest, limit: u64) -> Result<(), LedgerError> {
        if limit == 0 {
            return Err(LedgerError::InvalidAmount);
        }
        if self.limits.contains_key(&d) {
            return Err(LedgerError::DuplicateAccount);
        }
        self.limits.insert(d, limit);
        Ok(())
    }

    fn hold(&self, d: &Digest, amount: u64) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::InvalidAmount);
        }
        if !self.limits.contains_key(d) {
            return Err(LedgerError::UnknownAccount);
        }
        let available = self.available(d);
        if amount > available {
            return Err(LedgerError::InsufficientCredit { requested: amount, available });
        }
        Ok(())
    }

    fn close(&mut self, r: &Id, to: u8) -> Result<u64, LedgerError> {
        match self.holds.iter_mut().find(|h| h.0 == *r) {
            None => Err(LedgerError::UnknownHold(*r)),
            Some(h) if h.3 == 1 => Err(LedgerError::AlreadySettled(*r)),
            Some(h) if h.3 == 2 => Err(LedgerError::AlreadyReleased(*r)),
            Some(h) => {
                h.3 = to;
                Ok(h.2)
            }
        }
    }
}

fn ledger_oracle() -> Verdict {
    let mut decisions = 0;
    for seq in 0..LEDGER_SEQUENCES {
        let mut rng = ChaCha20Rng::seed_from_u64(SEED ^ seq);
        let mut ledger = Ledger::new(seq);
        let mut naive = NaiveLedger::default();
        let refs: Vec<Digest> = (0..6).map(|i| account_digest(&format!("acct-{seq}-{i}"))).collect();
        let mut known_holds: Vec<Id> = Vec::new();
        for op in 0..LEDGER_OPS {
            let d = refs[rng.gen_range(0..refs.len())];
            let pick_hold = |rng: &mut ChaCha20Rng| {
                if known_holds.is_empty() || rng.gen_ratio(1, 10) {
                    Id(rng.gen())
                } else {
                    known_holds[rng.gen_range(0..known_holds.len())]
                }
            };
            let (got, want) = match rng.gen_range(0..10) {
                0 => {
                    let limit = rng.gen_range(0..=1_000);
                    // The ledger takes the plaintext reference; look the digest back up.
                    let name = format!("acct-{seq}-{}", refs.iter().position(|r| *r == d).unwrap());
                    (ledger.open_account(&name, limit).map(|_| 0), naive.open(d, limit).map(|_| 0))
                }
                1..=4 => {
                    let amount = rng.gen_range(0..=400);
                    let want = naive.hold(&d, amount);
                    let got = ledger.place_hold(&d, amount);
                    if let Ok(receipt) = &got {
                        naive.holds.push((receipt.hold_ref, d, amount, 0));
                        known_holds.push(receipt.hold_ref);
                    }
                    (got.map(|r| r.amount), want.map(|_| amount))
                }
                5..=7 => {
                    let r = pick_hold(&mut rng);
                    (ledger.settle_hold(&r), naive.close(&r, 1))
                }
                _ => {
                    let r = pick_hold(&mut rng);
                    (ledger.release_hold(&r), naive.close(&r, 2))
                }
            };
            decisions += 1;
            if got != want {
                return Err(format!("sequence {seq} op {op}: ledger {got:?}, oracle {want:?}"));
            }
            if !ledger.is_conserved() {
                return Err(format!("sequence {seq} op {op}: conservation violated"));
            }
        }
        for d in &refs {
            let Some(a) = ledger.account(d) else {
                ensure(!naive.limits.contains_key(d), || "account missing from ledger".into())?;
                continue;
            };
            let want = (naive.available(d), naive.used(d, &[1]), naive.used(d, &[0]));
            let got = (a.available(), a.settled_total, a.held_total());
            ensure(got == want, || format!("sequence {seq}: balances {got:?}, oracle {want:?}"))?;
        }
    }
    Ok(format!("{decisions} decisions over {LEDGER_SEQUENCES} sequences match, final balances equal"))
}

fn privacy_runs() -> Result<(usize, usize, usize), String> {
    let (mut sp_hits, mut tm_hits, mut bytes) = (0, 0, 0);
    for i in 0..PRIVACY_RUNS {
        let kind = RunKind::ALL[i % RunKind::ALL.len()];
        let run = StorageScenario::randomized(SEED + i as u64, kind).run(None).map_err(|e| e.to_string())?;
        let expected = match kind {
            RunKind::Happy => Outcome::Approved,
            RunKind::OverLimit => Outcome::Denied(DenialReason::OverLimit),
            RunKind::InsufficientCredit => Outcome::Denied(DenialReason::InsufficientCredit),
        };
        ensure(run.outcome() == expected, || format!("run {i}: {} instead of {expected}", run.outcome()))?;
        let report = run.privacy();
        sp_hits += report.hits_for(Party::ServiceProvider);
        tm_hits += report.hits_for(Party::TrustManager);
        bytes += report.sp_bytes_scanned + report.tm_bytes_scanned;
    }
    Ok((sp_hits, tm_hits, bytes))
}

/// The scanner must flag payment information sent to the provider in clear.
fn scanner_self_test() -> Result<(), String> {
    let s = StorageScenario::with_seed(SEED);
    let run = s.run(None).map_err(|e| e.to_string())?;
    let leaked = gset_core::messages::PaymentInfo {
        account_provider_id: s.ids.account_provider.clone(),
        account_ref: s.account_ref.clone(),
        authorized_limit: s.limit,
        payment_nonce: Id([1; 16]),
    };
    let broken: Transcript = std::iter::once(TranscriptRecord {
        tick: 1,
        from_id: s.ids.requester.clone(),
        to_id: s.ids.provider.clone(),
        bytes: encode(&leaked).map_err(|e| e.to_string())?,
        adversary_action: AdversaryAction::None,
    })
    .collect();
    let sp = run.network.actor(&s.ids.provider).ok_or("no provider")?;
    let tm = run.network.actor(&s.ids.trust_manager).ok_or("no trust manager")?;
    let report = assert_privacy(&broken, sp, tm, &s.markers());
    ensure(report.hits_for(Party::ServiceProvider) == 2, || format!("self-test missed a leak:\n{report}"))
}

fn sp_privacy(runs: &Result<(usize, usize, usize), String>) -> Verdict {
    scanner_self_test()?;
    let (sp, _, bytes) = runs.clone()?;
    ensure(sp == 0, || format!("{sp} payment marker hit(s) at the provider"))?;
    Ok(format!("0 payment markers in {PRIVACY_RUNS} runs ({bytes} bytes scanned), scanner self-test flags a leak"))
}

fn tm_privacy(runs: &Result<(usize, usize, usize), String>) -> Verdict {
    let (_, tm, _) = runs.clone()?;
    let m = Markers::for_scenario("x", 1, "svc", "op", "unit");
    ensure(m.usage.len() == 3, || "usage markers missing".into())?;
    ensure(tm == 0, || format!("{tm} usage marker hit(s) at the trust manager"))?;
    Ok(format!("0 usage markers in the same {PRIVACY_RUNS} runs"))
}

fn tamper() -> Verdict {
    let mut forged = 0;
    let mut tampered = 0;
    for ty in TAMPER_TYPES {
        let st = tamper_type(SEED, ty, TAMPER_PER_TYPE).map_err(|e| e.to_string())?;
        ensure(st.tampered == TAMPER_PER_TYPE, || {
            format!("{ty}: only {} of {TAMPER_PER_TYPE} runs reached", st.tampered)
        })?;
        ensure(st.unconserved == 0, || format!("{ty}: ledger conservation broken"))?;
        tampered += st.tampered;
        forged += st.forged;
    }
    ensure(forged == 0, || format!("{forged} approvals or settlements from tampered messages"))?;
    Ok(format!("{tampered} single-bit mutations over {} types, 0 approvals or settlements", TAMPER_TYPES.len()))
}

/// The trust manager refuses a second AuthorizeAndHold carrying the same nonce.
fn direct_double_authorization() -> Result<(), String> {
    let s = StorageScenario::with_seed(SEED);
    let honest = s.run(None).map_err(|e| e.to_string())?;
    let idx = *honest.result.indices_of(MessageType::AuthorizeAndHold).first().ok_or("no AuthorizeAndHold")?;
    let Ok(Message::AuthorizeAndHold(msg)) = Message::decode(&honest.result.transcript.records()[idx].bytes) else {
        return Err("AuthorizeAndHold does not decode".into());
    };
    let (mut net, _) = s.build().map_err(|e| e.to_string())?;
    let tm = net.get_mut::<TrustManagerNode>(&s.ids.trust_manager).ok_or("no trust manager")?;
    ensure(tm.authorize(&msg).is_ok(), || "first authorization refused".into())?;
    let second = tm.authorize(&msg);
    ensure(second == Err(DenialReason::Replay), || format!("second authorization gave {second:?}"))?;
    ensure(tm.holds().is_empty(), || "holds recorded before any hold response".into())
}

fn replay() -> Verdict {
    direct_double_authorization()?;
    let stats = replay_stats(SEED, REPLAY_RUNS).map_err(|e| e.to_string())?;
    for (ty, st) in &stats {
        ensure(st.replayed == REPLAY_RUNS, || format!("{ty}: only {} duplicates delivered", st.replayed))?;
        ensure(st.excess == 0, || format!("{ty}: {} runs exceed single-delivery holds/settlements", st.excess))?;
        ensure(st.double_settled_tokens == 0, || format!("{ty}: a token settled twice"))?;
        ensure(st.duplicates_accepted == 0, || format!("{ty}: {} duplicates accepted", st.duplicates_accepted))?;
    }
    Ok(format!(
        "{} message types x {REPLAY_RUNS} runs, no second hold or settlement, direct re-authorization gives REPLAY",
        stats.len()
    ))
}

fn flip(bytes: &mut [u8], rng: &mut ChaCha20Rng) {
    let bit = rng.gen_range(0..bytes.len() * 8);
    bytes[bit / 8] ^= 1 << (bit % 8);
}

fn dual_signatures() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(SEED);
    for i in 0..DUAL_PAIRS {
        let key = generate_keypair("requester", i as u64).map_err(|e| e.to_string())?;
        let pk = key.public_key();
        let oi = encode(&common::order(&mut rng)).map_err(|e| e.to_string())?;
        let pi = encode(&common::payment(&mut rng)).map_err(|e| e.to_string())?;
        let dual = make_dual_signature(&key, &oi, &pi).map_err(|e| e.to_string())?;

        // Independent recomputation of what the signature must cover.
        let oi_d: [u8; 32] = Sha256::digest(&oi).into();
        let pi_d: [u8; 32] = Sha256::digest(&pi).into();
        let signed: [u8; 32] = Sha256::new().chain_update(oi_d).chain_update(pi_d).finalize().into();
        let vk = VerifyingKey::from_bytes(pk.as_bytes()[..32].try_into().unwrap()).map_err(|e| e.to_string())?;
        let sig = EdSignature::from_slice(&dual.signature.bytes).map_err(|e| e.to_string())?;
        ensure(vk.verify_strict(&signed, &sig).is_ok(), || format!("pair {i}: signature not over hash(H(OI)||H(PI))"))?;
        ensure(dual.oi_digest.0 == oi_d && dual.pi_digest.0 == pi_d, || format!("pair {i}: digests differ"))?;

        ensure(verify_with_oi(pk, &oi, &dual.pi_digest, &dual), || format!("pair {i}: honest OI check failed"))?;
        ensure(verify_with_pi(pk, &dual.oi_digest, &pi, &dual), || format!("pair {i}: honest PI check failed"))?;

        let mut bad_oi = oi.clone();
        flip(&mut bad_oi, &mut rng);
        ensure(!verify_with_oi(pk, &bad_oi, &dual.pi_digest, &dual), || format!("pair {i}: mutated OI accepted"))?;
        let mut bad_pi = pi.clone();
        flip(&mut bad_pi, &mut rng);
        ensure(!verify_with_pi(pk, &dual.oi_digest, &bad_pi, &dual), || format!("pair {i}: mutated PI accepted"))?;
        let mut bad_pid = dual.pi_digest;
        flip(&mut bad_pid.0, &mut rng);
        ensure(!verify_with_oi(pk, &oi, &bad_pid, &dual), || format!("pair {i}: mutated PI digest accepted"))?;
        let mut bad_oid = dual.oi_digest;
        flip(&mut bad_oid.0, &mut rng);
        ensure(!verify_with_pi(pk, &bad_oid, &pi, &dual), || format!("pair {i}: mutated OI digest accepted"))?;
        let mut bad_sig = dual.clone();
        flip(&mut bad_sig.signature.bytes, &mut rng);
        ensure(
            !verify_with_oi(pk, &oi, &dual.pi_digest, &bad_sig) && !verify_with_pi(pk, &dual.oi_digest, &pi, &bad_sig),
            || format!("pair {i}: mutated signature accepted"),
        )?;
    }
    Ok(format!("{DUAL_PAIRS} pairs: honest split checks pass, every mutation rejected"))
}

fn canonical_encoding() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(SEED);
    let mut truncations = 0;
    for &ty in MessageType::ALL {
        let mut seen: HashMap<Vec<u8>, Message> = HashMap::with_capacity(CODEC_PER_TYPE);
        for _ in 0..CODEC_PER_TYPE {
            let m = common::message(&mut rng, ty);
            let bytes = m.encode().map_err(|e| format!("{ty}: encode failed: {e}"))?;
            let back = Message::decode(&bytes).map_err(|e| format!("{ty}: decode failed: {e}"))?;
            ensure(back == m, || format!("{ty}: round trip changed the value"))?;
            if let Some(prev) = seen.insert(bytes, m.clone()) {
                ensure(prev == m, || format!("{ty}: two values share an encoding"))?;
            }
        }
        let sample = common::message(&mut rng, ty).encode().map_err(|e| e.to_string())?;
        for cut in 0..sample.len() {
            ensure(Message::decode(&sample[..cut]).is_err(), || format!("{ty}: truncation at {cut} accepted"))?;
            truncations += 1;
        }
    }
    Ok(format!(
        "{} types x {CODEC_PER_TYPE} values round-trip injectively, {truncations} truncations rejected",
        MessageType::ALL.len()
    ))
}

fn main() {
    let started = Instant::now();
    let privacy = privacy_runs();
    let criteria: Vec<Criterion> = vec![
        ("happy path", Box::new(happy_path)),
        ("limit check", Box::new(limit_grid)),
        ("credit check", Box::new(ledger_oracle)),
        ("SP privacy", Box::new(|| sp_privacy(&privacy))),
        ("TM privacy", Box::new(|| tm_privacy(&privacy))),
        ("tamper resistance", Box::new(tamper)),
        ("replay resistance", Box::new(replay)),
        ("dual-signature split verification", Box::new(dual_signatures)),
        ("encoding canonicality", Box::new(canonical_encoding)),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = check();
        let ms = t.elapsed().as_millis();
        match verdict {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({ms} ms)", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({ms} ms)", n + 1);
            }
        }
    }
    let elapsed = started.elapsed();
    let in_budget = elapsed <= TIME_BUDGET;
    println!(
        "{} acceptance: {}/{} criteria passed in {:.1} s (budget {} s)",
        if failed == 0 && in_budget { "PASS" } else { "FAIL" },
        criteria.len() - failed,
        criteria.len(),
        elapsed.as_secs_f64(),
        TIME_BUDGET.as_secs()
    );
    if failed > 0 || !in_budget {
        std::process::exit(1);
    }
}
