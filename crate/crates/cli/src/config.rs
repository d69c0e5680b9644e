//! Scenario files: `key = value` lines grouped under `[section]` headers.
//!
//! ```text
//! # mobile storage, limit below price
//! seed = 7
//!
//! [usage]
//! service_id = mobile-storage
//! quantity = 5
//!
//! [payment]
//! limit = 40
//!
//! [adversary]
//! mode = tamper
//! target = AuthorizationRequest
//! ```
//!
//! Sections and keys:
//!
//! * (top) or `[scenario]`: `seed`, `quote_ttl`, `max_ticks`, `precheck_limit`,
//!   `capture_on_grant`, `redeem_on_grant`
//! * `[actors]`: `requester`, `provider`, `trust_manager`, `account_provider`
//! * `[account]`: `ref`, `credit`
//! * `[pricing]`: `rate` (credits per unit)
//! * `[usage]`: `service_id`, `operation`, `quantity`, `unit`, `objects`
//! * `[payment]`: `limit`
//! * `[adversary]`: `mode` (none, tamper, replay, eavesdrop, drop), `target`
//!   (`all` or a message type name), `seed`, `skip`
//!
//! Unset keys keep the built-in storage scenario values for the chosen seed.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use gset_core::scenario::{pictures, StorageScenario, DEFAULT_SEED};
use gset_core::simnet::{Adversary, Mutation, Target};
use gset_core::MessageType;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum AdversaryChoice {
    #[default]
    None,
    Tamper,
    Replay,
    Eavesdrop,
    Drop,
}

impl fmt::Display for AdversaryChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdversarySpec {
    pub mode: AdversaryChoice,
    /// `None` picks the mode's default target.
    pub target: Option<Target>,
    pub seed: Option<u64>,
    pub skip: usize,
}

impl AdversarySpec {
    pub fn default_target(mode: AdversaryChoice) -> Target {
        match mode {
            AdversaryChoice::None | AdversaryChoice::Eavesdrop => Target::All,
            AdversaryChoice::Tamper => Target::Type(MessageType::AuthorizationRequest),
            AdversaryChoice::Replay => Target::Type(MessageType::AuthorizeAndHold),
            AdversaryChoice::Drop => Target::Type(MessageType::CaptureRequest),
        }
    }

    /// `scenario_seed` seeds the tamper mutation when no adversary seed is set.
    pub fn build(&self, scenario_seed: u64) -> Option<Adversary> {
        let target = self.target.unwrap_or(Self::default_target(self.mode));
        let adv = match self.mode {
            AdversaryChoice::None => return None,
            AdversaryChoice::Tamper => {
                Adversary::tamper(target, Mutation::FlipParsableBit(self.seed.unwrap_or(scenario_seed)))
            }
            AdversaryChoice::Replay => Adversary::replay(target),
            AdversaryChoice::Eavesdrop => Adversary::passive(target),
            AdversaryChoice::Drop => Adversary::drop(target),
        };
        Some(adv.skipping(self.skip))
    }
}

/// Overrides on top of the built-in storage scenario.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScenarioConfig {
    pub seed: Option<u64>,
    pub quote_ttl: Option<u64>,
    pub max_ticks: Option<u64>,
    pub precheck_limit: Option<bool>,
    pub capture_on_grant: Option<bool>,
    pub redeem_on_grant: Option<bool>,
    pub requester: Option<String>,
    pub provider: Option<String>,
    pub trust_manager: Option<String>,
    pub account_provider: Option<String>,
    pub account_ref: Option<String>,
    pub credit: Option<u64>,
    pub rate: Option<u64>,
    pub service_id: Option<String>,
    pub operation: Option<String>,
    pub quantity: Option<u64>,
    pub unit: Option<String>,
    pub objects: Option<usize>,
    pub limit: Option<u64>,
    pub adversary_mode: Option<AdversaryChoice>,
    pub adversary_target: Option<Target>,
    pub adversary_seed: Option<u64>,
    pub adversary_skip: Option<usize>,
}

const MAX_OBJECTS: usize = 1_000;

fn number<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err(line, format!("{key}: expected a non-negative integer, found {v:?}")));
    }
    v.parse().map_err(|_| err(line, format!("{key}: {v} is out of range")))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("{key}: expected true or false, found {v:?}"))),
    }
}

fn text(line: usize, key: &str, v: &str) -> Result<String, ConfigError> {
    if v.is_empty() {
        return Err(err(line, format!("{key}: value is empty")));
    }
    Ok(v.to_owned())
}

fn set<T>(slot: &mut Option<T>, line: usize, key: &str, v: T) -> Result<(), ConfigError> {
    if slot.is_some() {
        return Err(err(line, format!("{key} is set twice")));
    }
    *slot = Some(v);
    Ok(())
}

impl ScenarioConfig {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut section = String::from("scenario");
        let mut seen_sections = vec![String::from("scenario")];
        for (i, raw) in src.lines().enumerate() {
            let n = i + 1;
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(n, "unterminated section header"))?.trim();
                if !["scenario", "actors", "account", "pricing", "usage", "payment", "adversary"].contains(&name) {
                    return Err(err(n, format!("unknown section [{name}]")));
                }
                if seen_sections.iter().any(|s| s == name) && name != "scenario" {
                    return Err(err(n, format!("section [{name}] appears twice")));
                }
                seen_sections.push(name.to_owned());
                section = name.to_owned();
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(n, format!("expected key = value, found {line:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            let c = &mut cfg;
            match (section.as_str(), key) {
                ("scenario", "seed") => set(&mut c.seed, n, key, number(n, key, v)?)?,
                ("scenario", "quote_ttl") => set(&mut c.quote_ttl, n, key, number(n, key, v)?)?,
                ("scenario", "max_ticks") => set(&mut c.max_ticks, n, key, number(n, key, v)?)?,
                ("scenario", "precheck_limit") => set(&mut c.precheck_limit, n, key, boolean(n, key, v)?)?,
                ("scenario", "capture_on_grant") => set(&mut c.capture_on_grant, n, key, boolean(n, key, v)?)?,
                ("scenario", "redeem_on_grant") => set(&mut c.redeem_on_grant, n, key, boolean(n, key, v)?)?,
                ("actors", "requester") => set(&mut c.requester, n, key, text(n, key, v)?)?,
                ("actors", "provider") => set(&mut c.provider, n, key, text(n, key, v)?)?,
                ("actors", "trust_manager") => set(&mut c.trust_manager, n, key, text(n, key, v)?)?,
                ("actors", "account_provider") => set(&mut c.account_provider, n, key, text(n, key, v)?)?,
                ("account", "ref") => set(&mut c.account_ref, n, key, text(n, key, v)?)?,
                ("account", "credit") => set(&mut c.credit, n, key, number(n, key, v)?)?,
                ("pricing", "rate") => set(&mut c.rate, n, key, number(n, key, v)?)?,
                ("usage", "service_id") => set(&mut c.service_id, n, key, text(n, key, v)?)?,
                ("usage", "operation") => set(&mut c.operation, n, key, text(n, key, v)?)?,
                ("usage", "quantity") => set(&mut c.quantity, n, key, number(n, key, v)?)?,
                ("usage", "unit") => set(&mut c.unit, n, key, text(n, key, v)?)?,
                ("usage", "objects") => {
                    let count: usize = number(n, key, v)?;
                    if count == 0 || count > MAX_OBJECTS {
                        return Err(err(n, format!("objects: expected 1 to {MAX_OBJECTS}")));
                    }
                    set(&mut c.objects, n, key, count)?
                }
                ("payment", "limit") => set(&mut c.limit, n, key, number(n, key, v)?)?,
                ("adversary", "mode") => {
                    let mode = AdversaryChoice::from_str(v, true).map_err(|_| {
                        err(n, format!("mode: expected none, tamper, replay, eavesdrop or drop, found {v:?}"))
                    })?;
                    set(&mut c.adversary_mode, n, key, mode)?
                }
                ("adversary", "target") => {
                    let target = if v == "all" {
                        Target::All
                    } else {
                        Target::Type(v.parse().map_err(|_| err(n, format!("target: unknown message type {v:?}")))?)
                    };
                    set(&mut c.adversary_target, n, key, target)?
                }
                ("adversary", "seed") => set(&mut c.adversary_seed, n, key, number(n, key, v)?)?,
                ("adversary", "skip") => set(&mut c.adversary_skip, n, key, number(n, key, v)?)?,
                (s, k) => return Err(err(n, format!("unknown key {k:?} in [{s}]"))),
            }
        }
        Ok(cfg)
    }

    /// `mode` overrides the file's adversary mode.
    pub fn adversary(&self, mode: Option<AdversaryChoice>) -> AdversarySpec {
        AdversarySpec {
            mode: mode.or(self.adversary_mode).unwrap_or_default(),
            target: self.adversary_target,
            seed: self.adversary_seed,
            skip: self.adversary_skip.unwrap_or(0),
        }
    }

    /// `seed` overrides the file's seed.
    pub fn scenario(&self, seed: Option<u64>) -> StorageScenario {
        let seed = seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let mut s = StorageScenario::with_seed(seed);
        let take = |v: &Option<String>, into: &mut String| {
            if let Some(v) = v {
                into.clone_from(v);
            }
        };
        take(&self.requester, &mut s.ids.requester);
        take(&self.provider, &mut s.ids.provider);
        take(&self.trust_manager, &mut s.ids.trust_manager);
        take(&self.account_provider, &mut s.ids.account_provider);
        take(&self.account_ref, &mut s.account_ref);
        take(&self.service_id, &mut s.service_id);
        take(&self.operation, &mut s.operation);
        take(&self.unit, &mut s.unit);
        s.quote_ttl = self.quote_ttl.unwrap_or(s.quote_ttl);
        s.max_ticks = self.max_ticks.unwrap_or(s.max_ticks);
        s.precheck_limit = self.precheck_limit.unwrap_or(s.precheck_limit);
        s.capture_on_grant = self.capture_on_grant.unwrap_or(s.capture_on_grant);
        s.redeem_on_grant = self.redeem_on_grant.unwrap_or(s.redeem_on_grant);
        s.credit = self.credit.unwrap_or(s.credit);
        s.price_per_unit = self.rate.unwrap_or(s.price_per_unit);
        s.quantity = self.quantity.unwrap_or(s.quantity);
        s.limit = self.limit.unwrap_or(s.limit);
        if let Some(count) = self.objects {
            s.objects = pictures(seed, count);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default_scenario() {
        let c = ScenarioConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c.scenario(None), StorageScenario::default());
        assert_eq!(c.scenario(Some(9)), StorageScenario::with_seed(9));
    }

    #[test]
    fn sections_and_overrides() {
        let src = "seed = 3\n[payment]\nlimit = 40 # below price\n[actors]\nprovider = sp2\n[adversary]\nmode = TAMPER\ntarget = all\n";
        let c = ScenarioConfig::parse(src).unwrap();
        let s = c.scenario(None);
        assert_eq!((s.seed, s.limit, s.ids.provider.as_str()), (3, 40, "sp2"));
        let adv = c.adversary(None);
        assert_eq!((adv.mode, adv.target), (AdversaryChoice::Tamper, Some(Target::All)));
        assert_eq!(c.adversary(Some(AdversaryChoice::None)).mode, AdversaryChoice::None);
        assert_eq!(c.scenario(Some(5)).seed, 5);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("seed = x", 1, "non-negative integer"),
            ("\n[payment]\nlimit = 1\nlimit = 2", 4, "set twice"),
            ("[adversary]\nmode = drop\nmode = none", 3, "set twice"),
            ("[bogus]", 1, "unknown section"),
            ("[usage]\ncolour = red", 2, "unknown key"),
            ("[usage\n", 1, "unterminated"),
            ("just words", 1, "key = value"),
            ("[adversary]\nmode = sneaky", 2, "mode"),
            ("[adversary]\ntarget = Nope", 2, "unknown message type"),
            ("seed = 99999999999999999999", 1, "out of range"),
            ("[usage]\nobjects = 0", 2, "objects"),
            ("[actors]\nrequester =", 2, "empty"),
            ("[pricing]\n[pricing]", 2, "twice"),
        ];
        for (src, line, needle) in cases {
            let e = ScenarioConfig::parse(src).unwrap_err();
            assert_eq!(e.line, line, "{src:?}: {e}");
            assert!(e.message.contains(needle), "{src:?}: {e}");
        }
    }

    #[test]
    fn object_count_override() {
        let c = ScenarioConfig::parse("[usage]\nobjects = 5").unwrap();
        let s = c.scenario(None);
        assert_eq!(s.objects.len(), 5);
        assert!(s.objects[4].starts_with(b"picture-005.jpg:"));
    }
}
