use gset_core::messages::AdversaryAction;
use gset_core::scenario::{Outcome, StorageScenario};
use gset_core::simnet::{replay_transcript, Adversary, Mutation, Target, Transcript, TranscriptFileError};
use gset_core::{DenialReason, MessageType};

fn edited(t: &Transcript, k: usize, edit: impl FnOnce(&mut gset_core::messages::TranscriptRecord)) -> Transcript {
    let mut records = t.records().to_vec();
    edit(&mut records[k]);
    records.into_iter().collect()
}

#[test]
fn edited_transcript_diverges_no_later_than_next_record() {
    let s = StorageScenario::with_seed(5);
    let run = s.run(None).unwrap();
    let t = &run.result.transcript;
    for k in 0..t.len() {
        let changed = edited(t, k, |r| {
            let last = r.bytes.len() - 1;
            r.bytes[last] ^= 1;
        });
        let (mut net, initial) = s.build().unwrap();
        let report = replay_transcript(&changed, &mut net, &initial);
        let at = report.first_divergence().unwrap_or_else(|| panic!("edit at {k} not detected"));
        assert!(at <= k + 1, "edit at {k} detected at {at}");

        let rerouted = edited(t, k, |r| r.to_id = "somebody-else".into());
        let (mut net, initial) = s.build().unwrap();
        assert_eq!(replay_transcript(&rerouted, &mut net, &initial).first_divergence(), Some(k));
    }
}

#[test]
fn empty_and_prefix_transcripts_replay() {
    let s = StorageScenario::with_seed(5);
    let (mut net, initial) = s.build().unwrap();
    let report = replay_transcript(&Transcript::new(), &mut net, &initial);
    assert!(report.is_clean());
    assert_eq!(report.records_checked, 0);

    let run = s.run(None).unwrap();
    let prefix: Transcript = run.result.transcript.records()[..7].iter().cloned().collect();
    let (mut net, initial) = s.build().unwrap();
    let report = replay_transcript(&prefix, &mut net, &initial);
    assert!(report.is_clean(), "{report}");
    assert_eq!(report.records_checked, 7);
}

#[test]
fn reordered_records_diverge() {
    let s = StorageScenario::with_seed(5);
    let run = s.run(None).unwrap();
    let mut records = run.result.transcript.records().to_vec();
    let (a, b) = (records[3].clone(), records[4].clone());
    records[3] = b;
    records[4] = a;
    records[3].tick = 4;
    records[4].tick = 5;
    let swapped: Transcript = records.into_iter().collect();
    let (mut net, initial) = s.build().unwrap();
    assert_eq!(replay_transcript(&swapped, &mut net, &initial).first_divergence(), Some(3));
}

#[test]
fn adversarial_runs_replay_cleanly() {
    let s = StorageScenario::with_seed(11);
    let mut advs = [
        Adversary::tamper(Target::Type(MessageType::AuthorizationRequest), Mutation::FlipParsableBit(3)),
        Adversary::replay(Target::Type(MessageType::CaptureRequest)),
        Adversary::drop(Target::Type(MessageType::ServiceGrant)),
        Adversary::passive(Target::All),
    ];
    for adv in advs.iter_mut() {
        let run = s.run(Some(adv)).unwrap();
        assert!(run.replays_cleanly().unwrap(), "{:?} run does not replay", adv.mode());
        assert!(adv.actions() > 0);
    }
}

#[test]
fn parsable_tamper_of_authorization_request_is_bad_signature() {
    let s = StorageScenario::with_seed(42);
    let mut adv = Adversary::tamper(Target::Type(MessageType::AuthorizationRequest), Mutation::FlipParsableBit(42));
    let run = s.run(Some(&mut adv)).unwrap();
    assert_eq!(run.outcome(), Outcome::Denied(DenialReason::BadSignature));
    assert_eq!(run.account_provider().ledger().total_holds_placed(), 0);
    let tampered = run.result.transcript.records().iter().filter(|r| r.adversary_action == AdversaryAction::Tampered);
    assert_eq!(tampered.count(), 1);
}

#[test]
fn dropped_grant_leaves_no_settlement() {
    let s = StorageScenario::with_seed(42);
    let mut adv = Adversary::drop(Target::Type(MessageType::ServiceGrant));
    let run = s.run(Some(&mut adv)).unwrap();
    assert!(run.account_provider().ledger().is_conserved());
    assert_eq!(run.requester().retrieved().len(), 0);
}

#[test]
fn transcript_file_errors() {
    let run = StorageScenario::with_seed(1).run(None).unwrap();
    let bytes = run.result.transcript.to_file_bytes();
    assert!(matches!(
        Transcript::from_file_bytes(&bytes[..bytes.len() - 1]),
        Err(TranscriptFileError::TruncatedRecord { .. })
    ));
    assert!(matches!(Transcript::from_file_bytes(&[0, 0]), Err(TranscriptFileError::TruncatedLength { offset: 0 })));

    let mut records = run.result.transcript.records().to_vec();
    records[2].tick = 1;
    let bad: Transcript = records.into_iter().collect();
    assert!(matches!(
        Transcript::from_file_bytes(&bad.to_file_bytes()),
        Err(TranscriptFileError::TickOrder { index: 2, .. })
    ));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.bin");
    run.result.transcript.write_to(&path).unwrap();
    assert_eq!(Transcript::read_from(&path).unwrap().records(), run.result.transcript.records());
    assert!(matches!(Transcript::read_from(&dir.path().join("missing")), Err(TranscriptFileError::Io(_))));
}

#[test]
fn invocation_after_quote_expiry_releases_the_hold() {
    // Quote issued at tick 2 expires at 5; the invocation arrives at tick 9.
    let s = StorageScenario { quote_ttl: 3, ..StorageScenario::with_seed(42) };
    let run = s.run(None).unwrap();
    let ledger = run.account_provider().ledger();
    assert_eq!((ledger.total_holds_placed(), ledger.active_hold_count(), ledger.settlement_count()), (1, 0, 0));
    let account = ledger.account(&gset_core::ledger::account_digest(&s.account_ref)).unwrap();
    assert_eq!(account.available(), s.credit);
    assert_eq!(run.provider().tickets_issued(), 0);
    assert_eq!(run.provider().events().voided, 1);
    assert!(run.replays_cleanly().unwrap());
}
