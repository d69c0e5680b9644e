//! Regenerates the fuzz corpus seeds under `fuzz/corpus/`.
//!
//! cargo run -p gset-cli --example gen_corpus

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gset_core::messages::*;
use gset_core::scenario::{RunKind, StorageScenario};
use gset_core::{Id, Message, MessageType};

fn write(dir: &Path, name: &str, bytes: &[u8]) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join(name), bytes).unwrap();
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut by_type: BTreeMap<u8, Vec<Vec<u8>>> = BTreeMap::new();
    let mut keep = |bytes: Vec<u8>| {
        let ty = bytes[0];
        let seen = by_type.entry(ty).or_default();
        if seen.len() < 2 && !seen.contains(&bytes) {
            seen.push(bytes);
        }
    };

    let runs = [
        StorageScenario::default(),
        StorageScenario::randomized(1, RunKind::Happy),
        StorageScenario::randomized(2, RunKind::OverLimit),
        StorageScenario::randomized(3, RunKind::InsufficientCredit),
    ];
    let transcripts = root.join("transcript_file");
    let mut token = None;
    let mut signature = None;
    for (i, s) in runs.iter().enumerate() {
        let run = s.run(None).unwrap();
        write(&transcripts, &format!("run-{i}.gsett"), &run.result.transcript.to_file_bytes());
        for rec in run.result.transcript.records() {
            keep(encode(rec).unwrap());
            keep(rec.bytes.clone());
            match Message::decode(&rec.bytes).unwrap() {
                Message::AuthOutcome(AuthOutcome { token: Some(t), .. }) => token = Some(t),
                Message::CaptureRequest(c) => signature = Some(c.provider_signature),
                _ => {}
            }
        }
        keep(encode(&run.account_provider().ledger().snapshot()).unwrap());
        keep(encode(&s.usage()).unwrap());
    }
    write(&transcripts, "empty.gsett", &[]);

    let (token, signature) = (token.unwrap(), signature.unwrap());
    let s = StorageScenario::default();
    let nonce = Id([7; 16]);
    let extra: Vec<Message> = vec![
        QuoteRefusal { request_nonce: nonce }.into(),
        OrderInfo { quote_id: nonce, usage: s.usage(), requester_id: s.ids.requester.clone(), order_nonce: nonce }
            .into(),
        PaymentInfo {
            account_provider_id: s.ids.account_provider.clone(),
            account_ref: s.account_ref.clone(),
            authorized_limit: s.limit,
            payment_nonce: nonce,
        }
        .into(),
        Ticket {
            ticket_id: nonce,
            object_digest: token.tm_signature.bytes[..32].try_into().map(gset_core::Digest).unwrap(),
        }
        .into(),
        VoidRequest { token: token.clone(), provider_signature: signature.clone() }.into(),
        ReleaseRequest { request_id: nonce, hold_ref: token.hold_ref, tm_signature: signature.clone() }.into(),
        ReleaseResponse { request_id: nonce, done: true, amount: 50, reason: None, ap_signature: signature.clone() }
            .into(),
        token.into(),
    ];
    for m in extra {
        keep(m.encode().unwrap());
    }

    let messages = root.join("decode_message");
    for (tag, seeds) in &by_type {
        let name = MessageType::from_tag(*tag).unwrap().name();
        for (i, bytes) in seeds.iter().enumerate() {
            write(&messages, &format!("{name}-{i}"), bytes);
        }
    }
    assert_eq!(by_type.len(), MessageType::ALL.len(), "every message type has a seed");

    let configs = root.join("scenario_config");
    write(&configs, "empty.ini", b"");
    write(&configs, "over-limit.ini", b"# limit below price\n[payment]\nlimit = 40\n");
    write(
        &configs,
        "full.ini",
        b"seed = 7\nquote_ttl = 50\nmax_ticks = 500\nprecheck_limit = true\ncapture_on_grant = true\n\
redeem_on_grant = false\n\n[actors]\nrequester = sr\nprovider = sp\ntrust_manager = tm\naccount_provider = ap\n\n\
[account]\nref = 0123456789abcdefghijklmn\ncredit = 1000\n\n[pricing]\nrate = 12\n\n\
[usage]\nservice_id = mobile-storage\noperation = store\nquantity = 4\nunit = megabyte\nobjects = 2\n\n\
[payment]\nlimit = 900\n\n[adversary]\nmode = tamper\ntarget = AuthorizationRequest\nseed = 3\nskip = 0\n",
    );
    write(&configs, "bad-line.ini", b"[usage]\nquantity = many\n");

    let keys = root.join("key_fixture");
    let ids: Vec<String> = s.ids.all().map(str::to_owned).to_vec();
    let pairs = gset_cli::keys::generate(&ids, 42).unwrap();
    write(&keys, "default.keys", gset_cli::keys::render(&pairs, 42).as_bytes());
    let public_only = format!("[x]\npublic = {}\n", hex::encode(pairs[0].public_key().as_bytes()));
    write(&keys, "public-only.keys", public_only.as_bytes());

    println!("corpus written to {}", root.canonicalize().unwrap().display());
}
