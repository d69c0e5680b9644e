use std::fmt;

use super::Transcript;
use crate::actors::Actor;
use crate::messages::u64_field;

/// Byte strings seeded into scenario data that must never reach a party.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Markers {
    /// Must stay away from the service provider.
    pub payment: Vec<(String, Vec<u8>)>,
    /// Must stay away from the trust manager.
    pub usage: Vec<(String, Vec<u8>)>,
}

impl Markers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn payment(mut self, label: &str, bytes: impl Into<Vec<u8>>) -> Self {
        self.payment.push((label.to_owned(), bytes.into()));
        self
    }

    pub fn usage(mut self, label: &str, bytes: impl Into<Vec<u8>>) -> Self {
        self.usage.push((label.to_owned(), bytes.into()));
        self
    }

    /// The account reference and the canonical limit field, plus the three
    /// usage strings. The limit must differ from every other integer the
    /// provider handles (price, ticks, quantity) or the scan cannot tell them apart.
    pub fn for_scenario(account_ref: &str, limit: u64, service_id: &str, operation: &str, unit: &str) -> Self {
        Markers::new()
            .payment("account_ref", account_ref.as_bytes())
            .payment("authorized_limit", u64_field(limit))
            .usage("service_id", service_id.as_bytes())
            .usage("operation", operation.as_bytes())
            .usage("unit", unit.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    ServiceProvider,
    TrustManager,
    Eavesdropper,
}

impl Party {
    pub fn as_str(self) -> &'static str {
        match self {
            Party::ServiceProvider => "SP",
            Party::TrustManager => "TM",
            Party::Eavesdropper => "EAVESDROPPER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitSource {
    /// Transcript record index.
    Record(usize),
    Stored,
    /// Adversary capture log index.
    Captured(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivacyHit {
    pub party: Party,
    pub marker: String,
    pub source: HitSource,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrivacyReport {
    pub hits: Vec<PrivacyHit>,
    pub sp_bytes_scanned: usize,
    pub tm_bytes_scanned: usize,
}

impl PrivacyReport {
    pub fn is_clean(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn hits_for(&self, party: Party) -> usize {
        self.hits.iter().filter(|h| h.party == party).count()
    }
}

impl fmt::Display for PrivacyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "privacy: {} hit(s); SP scanned {} bytes, TM scanned {} bytes",
            self.hits.len(),
            self.sp_bytes_scanned,
            self.tm_bytes_scanned
        )?;
        for h in &self.hits {
            let src = match h.source {
                HitSource::Record(i) => format!("record {i}"),
                HitSource::Stored => "stored state".to_owned(),
                HitSource::Captured(i) => format!("capture {i}"),
            };
            writeln!(f, "  HIT {} {} in {}", h.party.as_str(), h.marker, src)?;
        }
        Ok(())
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Labels of the markers found in `bytes`.
pub fn scan_bytes<'m>(bytes: &[u8], markers: &'m [(String, Vec<u8>)]) -> Vec<&'m str> {
    markers.iter().filter(|(_, m)| contains(bytes, m)).map(|(l, _)| l.as_str()).collect()
}

fn scan_party(
    report: &mut Vec<PrivacyHit>,
    party: Party,
    transcript: &Transcript,
    actor: &dyn Actor,
    markers: &[(String, Vec<u8>)],
) -> usize {
    let mut scanned = 0;
    for (i, r) in transcript.records().iter().enumerate() {
        if r.to_id != actor.id() || !r.adversary_action.delivered() {
            continue;
        }
        scanned += r.bytes.len();
        for label in scan_bytes(&r.bytes, markers) {
            report.push(PrivacyHit { party, marker: label.to_owned(), source: HitSource::Record(i) });
        }
    }
    let stored = actor.stored_bytes();
    scanned += stored.len();
    for label in scan_bytes(&stored, markers) {
        report.push(PrivacyHit { party, marker: label.to_owned(), source: HitSource::Stored });
    }
    scanned
}

/// Scans everything the provider received or keeps for payment markers, and
/// everything the trust manager received or keeps for usage markers.
pub fn assert_privacy(transcript: &Transcript, sp: &dyn Actor, tm: &dyn Actor, markers: &Markers) -> PrivacyReport {
    let mut hits = Vec::new();
    let sp_bytes_scanned = scan_party(&mut hits, Party::ServiceProvider, transcript, sp, &markers.payment);
    let tm_bytes_scanned = scan_party(&mut hits, Party::TrustManager, transcript, tm, &markers.usage);
    PrivacyReport { hits, sp_bytes_scanned, tm_bytes_scanned }
}

/// The same payment-marker scan over a passive adversary's capture log.
pub fn scan_capture_log(log: &[Vec<u8>], markers: &Markers) -> Vec<PrivacyHit> {
    log.iter()
        .enumerate()
        .flat_map(|(i, bytes)| {
            scan_bytes(bytes, &markers.payment).into_iter().map(move |label| PrivacyHit {
                party: Party::Eavesdropper,
                marker: label.to_owned(),
                source: HitSource::Captured(i),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scanner_finds_and_misses() {
        let m = Markers::for_scenario("ACCT-XYZ", 60, "svc", "op", "unit");
        let mut leaked = b"prefix ACCT-XYZ suffix".to_vec();
        leaked.extend(u64_field(60));
        assert_eq!(scan_bytes(&leaked, &m.payment), vec!["account_ref", "authorized_limit"]);
        assert!(scan_bytes(b"ACCT-XY", &m.payment).is_empty());
        assert!(scan_bytes(&u64_field(61), &m.payment).is_empty());
    }

    #[test]
    fn capture_log_hits_carry_index() {
        let m = Markers::new().payment("acct", b"SECRET".to_vec());
        let hits = scan_capture_log(&[b"nothing".to_vec(), b"a SECRET".to_vec()], &m);
        assert_eq!(
            hits,
            vec![PrivacyHit { party: Party::Eavesdropper, marker: "acct".into(), source: HitSource::Captured(1) }]
        );
    }

    #[test]
    fn empty_marker_never_matches() {
        assert!(!contains(b"abc", b""));
    }
}
