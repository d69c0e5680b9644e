use std::path::Path;

use gset_cli::{run, EXIT_FAILED, EXIT_OK, EXIT_USAGE};
use gset_core::simnet::Transcript;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn gset(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("gset").chain(args.iter().copied()), &mut out, &mut err);
    Outcome { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn demo_defaults_approve_and_redeem_three_tickets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.gsett");
    let r = gset(&["demo-storage", "--seed", "42", "--out", path_str(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert!(r.out.contains("authorization:     APPROVED"));
    assert!(r.out.contains("tickets:           3 issued, 3 redeemed"));
    assert!(r.out.contains("1 settlement(s), 50 settled"));
    for dim in ["Transparency", "Trust", "Privacy", "Agility", "Reliability"] {
        assert!(r.out.lines().any(|l| l.starts_with(dim) && l.ends_with("PASS")), "{dim}");
    }
    assert_eq!(Transcript::read_from(&out).unwrap().len(), 20);

    let again = dir.path().join("again.gsett");
    assert_eq!(gset(&["demo-storage", "--seed", "42", "--out", path_str(&again)]).code, EXIT_OK);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());

    let v = gset(&["transcript", "verify", path_str(&out), "--seed", "42"]);
    assert_eq!(v.code, EXIT_OK, "{}", v.out);
    assert_eq!(gset(&["transcript", "verify", path_str(&out), "--seed", "43"]).code, EXIT_FAILED);
    let p = gset(&["transcript", "print", path_str(&out)]);
    assert_eq!(p.code, EXIT_OK);
    assert!(p.out.ends_with("20 record(s)\n"));
}

#[test]
fn limit_below_price_is_a_business_denial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("low.ini");
    std::fs::write(&cfg, "# limit below the 50 credit price\n[payment]\nlimit = 40\n").unwrap();
    let out = dir.path().join("t.gsett");
    let r = gset(&["demo-storage", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert!(r.out.contains("DENIED (OVER_LIMIT)"));
    assert!(r.out.contains("0 hold(s)"));
    assert!(r.out.contains("result: PASS"));
}

#[test]
fn tamper_config_ends_in_bad_signature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tamper.ini");
    std::fs::write(&cfg, "[adversary]\nmode = tamper\ntarget = AuthorizationRequest\n").unwrap();
    let out = dir.path().join("t.gsett");
    for seed in ["1", "42", "1000"] {
        let r = gset(&["demo-storage", "--config", path_str(&cfg), "--seed", seed, "--out", path_str(&out)]);
        assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
        assert!(r.out.contains("DENIED (BAD_SIGNATURE)"), "seed {seed}:\n{}", r.out);
        assert!(r.out.contains("1 tampered message(s), 0 approval(s)"));
    }
    // The recorded tamper replays from the file.
    assert_eq!(
        gset(&["transcript", "verify", path_str(&out), "--config", path_str(&cfg), "--seed", "1000"]).code,
        EXIT_OK
    );
}

#[test]
fn adversary_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tamper.ini");
    std::fs::write(&cfg, "[adversary]\nmode = tamper\n").unwrap();
    let out = dir.path().join("t.gsett");
    let r = gset(&["demo-storage", "--config", path_str(&cfg), "--adversary", "none", "--out", path_str(&out)]);
    assert!(r.out.contains("APPROVED"), "{}", r.out);
    let r = gset(&["demo-storage", "--adversary", "eavesdrop", "--out", path_str(&out)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("eavesdropper: 20 message(s) captured, 0 payment marker(s) in clear"));
    let r = gset(&["demo-storage", "--adversary", "replay", "--out", path_str(&out)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("APPROVED") && r.out.contains("1 settlement(s)"));
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, "seed = 1\n[payment]\nlimit = lots\n").unwrap();
    let r = gset(&["demo-storage", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("line 3"), "{}", r.err);

    std::fs::write(&cfg, "[actors]\nprovider = same\ntrust_manager = same\n").unwrap();
    let r = gset(&["demo-storage", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("duplicate actor id"), "{}", r.err);

    assert_eq!(gset(&["demo-storage", "--config", "/definitely/missing.ini"]).code, EXIT_USAGE);
    assert_eq!(gset(&["demo-storage", "--adversary", "sneaky"]).code, EXIT_USAGE);
    assert_eq!(gset(&["demo-storage", "--seed", "-4"]).code, EXIT_USAGE);
    assert_eq!(gset(&["nonsense"]).code, EXIT_USAGE);
    assert_eq!(gset(&[]).code, EXIT_USAGE);
}

#[test]
fn help_documents_config_format() {
    let r = gset(&["demo-storage", "--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("[adversary]") && r.out.contains("key = value"));
}

#[test]
fn attack_suite_default_iterations_pass() {
    let r = gset(&["attack-suite", "--seed", "42"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.out);
    assert!(r.out.starts_with("attack suite seed=42 iterations=200\n"));
    assert!(r.out.ends_with("overall: PASS\n"));
    assert!(!r.out.contains("FAIL"));
}

#[test]
fn attack_suite_is_reproducible_and_rejects_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let a = gset(&["attack-suite", "--seed", "7", "--iterations", "3", "--out", path_str(&report)]);
    let b = gset(&["attack-suite", "--seed", "7", "--iterations", "3"]);
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.out, b.out);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), a.out);
    let z = gset(&["attack-suite", "--iterations", "0"]);
    assert_eq!(z.code, EXIT_USAGE);
    assert!(z.err.contains("iterations"));
}

#[test]
fn keys_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.keys");
    let b = dir.path().join("b.keys");
    assert_eq!(gset(&["keys", "--seed", "9", "--out", path_str(&a)]).code, EXIT_OK);
    assert_eq!(gset(&["keys", "--seed", "9", "--out", path_str(&b)]).code, EXIT_OK);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let parsed = gset_cli::keys::parse(&text).unwrap();
    let ids: Vec<_> = parsed.iter().map(|k| k.subject_id().to_owned()).collect();
    assert_eq!(ids, ["service-requester", "service-provider", "trust-manager", "account-provider"]);
    assert!(parsed.iter().all(|k| k.private_key().is_some()));

    let other = gset(&["keys", "--seed", "10"]);
    assert_ne!(other.out, text);
    let dup = gset(&["keys", "x", "y", "x"]);
    assert_eq!(dup.code, EXIT_USAGE);
    assert!(dup.err.contains("duplicate"));
}

#[test]
fn transcript_print_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.gsett");
    std::fs::write(&bad, [0, 0, 0, 9, 1, 2]).unwrap();
    let r = gset(&["transcript", "print", path_str(&bad)]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("bad.gsett"));
}
