//! Key fixtures: one `[subject-id]` section per identity with hex `public`
//! and `private` lines.

use std::collections::BTreeSet;

use gset_core::crypto::{generate_keypair, PrivateKey};
use gset_core::{KeyPair, PublicKey};
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeysError {
    #[error("duplicate subject id {0:?}")]
    DuplicateId(String),
    #[error("subject id {0:?} is empty or contains brackets, '#', newlines or surrounding spaces")]
    BadId(String),
    #[error("no subject ids given")]
    NoIds,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.trim() == id && !id.contains(['[', ']', '#', '\n', '\r'])
}

/// Deterministic key pairs for `ids`, in the given order.
pub fn generate(ids: &[String], seed: u64) -> Result<Vec<KeyPair>, KeysError> {
    if ids.is_empty() {
        return Err(KeysError::NoIds);
    }
    let mut seen = BTreeSet::new();
    ids.iter()
        .map(|id| {
            if !valid_id(id) {
                return Err(KeysError::BadId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(KeysError::DuplicateId(id.clone()));
            }
            Ok(generate_keypair(id, seed).expect("subject id checked non-empty"))
        })
        .collect()
}

pub fn render(keys: &[KeyPair], seed: u64) -> String {
    let mut out = format!("# gset key fixture, seed {seed}\n");
    for k in keys {
        out.push_str(&format!("\n[{}]\npublic = {}\n", k.subject_id(), hex::encode(k.public_key().as_bytes())));
        if let Some(p) = k.private_key() {
            out.push_str(&format!("private = {}\n", hex::encode(p.as_bytes())));
        }
    }
    out
}

#[derive(Default)]
struct Pending {
    id: String,
    line: usize,
    public: Option<PublicKey>,
    private: Option<PrivateKey>,
}

impl Pending {
    fn finish(self) -> Result<KeyPair, ConfigError> {
        let line = self.line;
        let bad = |m: String| ConfigError { line, message: m };
        let public = self.public.ok_or_else(|| bad(format!("[{}] has no public key", self.id)))?;
        match self.private {
            Some(p) => KeyPair::from_parts(&self.id, public, p)
                .map_err(|_| bad(format!("[{}]: private key does not match public key", self.id))),
            None => Ok(KeyPair::public_only(&self.id, public).expect("section ids are non-empty")),
        }
    }
}

/// Parses a fixture written by [`render`]. Sections without a private key
/// yield verification-only identities.
pub fn parse(src: &str) -> Result<Vec<KeyPair>, ConfigError> {
    let mut keys = Vec::new();
    let mut ids = BTreeSet::new();
    let mut current: Option<Pending> = None;
    for (i, raw) in src.lines().enumerate() {
        let n = i + 1;
        let err = |m: String| ConfigError { line: n, message: m };
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let id = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?.trim();
            if id.is_empty() {
                return Err(err("empty subject id".into()));
            }
            if !ids.insert(id.to_owned()) {
                return Err(err(format!("duplicate subject id {id:?}")));
            }
            if let Some(p) = current.take() {
                keys.push(p.finish()?);
            }
            current = Some(Pending { id: id.to_owned(), line: n, ..Pending::default() });
            continue;
        }
        let p = current.as_mut().ok_or_else(|| err("key line outside a [subject] section".into()))?;
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, found {line:?}")))?;
        let bytes = hex::decode(value.trim()).map_err(|e| err(format!("{}: {e}", key.trim())))?;
        match key.trim() {
            "public" if p.public.is_none() => {
                p.public = Some(PublicKey::from_bytes(&bytes).map_err(|e| err(format!("public: {e}")))?)
            }
            "private" if p.private.is_none() => {
                p.private = Some(PrivateKey::from_bytes(&bytes).map_err(|e| err(format!("private: {e}")))?)
            }
            k @ ("public" | "private") => return Err(err(format!("{k} is set twice"))),
            k => return Err(err(format!("unknown key {k:?}"))),
        }
    }
    if let Some(p) = current {
        keys.push(p.finish()?);
    }
    Ok(keys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn render_parse_round_trip() {
        let keys = generate(&ids(&["a", "b c", "trust-manager"]), 4).unwrap();
        let text = render(&keys, 4);
        assert_eq!(parse(&text).unwrap(), keys);
        assert_eq!(text, render(&generate(&ids(&["a", "b c", "trust-manager"]), 4).unwrap(), 4));
    }

    #[test]
    fn generate_rejects_bad_ids() {
        assert_eq!(generate(&ids(&["a", "a"]), 1), Err(KeysError::DuplicateId("a".into())));
        assert_eq!(generate(&ids(&["x]"]), 1), Err(KeysError::BadId("x]".into())));
        assert_eq!(generate(&[], 1), Err(KeysError::NoIds));
    }

    #[test]
    fn public_only_sections() {
        let k = generate(&ids(&["a"]), 1).unwrap().remove(0);
        let text = format!("[a]\npublic = {}\n", hex::encode(k.public_key().as_bytes()));
        let parsed = parse(&text).unwrap();
        assert!(parsed[0].private_key().is_none());
        assert_eq!(parsed[0].public_key(), k.public_key());
    }

    #[test]
    fn parse_errors_have_lines() {
        let keys = generate(&ids(&["a", "b"]), 1).unwrap();
        let pa = hex::encode(keys[0].public_key().as_bytes());
        let kb = hex::encode(keys[1].private_key().unwrap().as_bytes());
        let cases = [
            ("public = 00".to_owned(), 1, "outside"),
            (format!("[a]\npublic = {pa}\n[a]"), 3, "duplicate"),
            (format!("[a]\npublic = {pa}\nprivate = {kb}\n"), 1, "does not match"),
            ("[a]\npublic = zz".to_owned(), 2, "public"),
            ("[a]\npublic = 0011".to_owned(), 2, "malformed"),
            ("[a]\n".to_owned(), 1, "no public key"),
            (format!("[a]\npublic = {pa}\npublic = {pa}"), 3, "twice"),
            ("[a]\ncolour = 00".to_owned(), 2, "unknown key"),
        ];
        for (src, line, needle) in cases {
            let e = parse(&src).unwrap_err();
            assert_eq!(e.line, line, "{src:?}: {e}");
            assert!(e.message.contains(needle), "{src:?}: {e}");
        }
    }
}
