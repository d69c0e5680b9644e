//! The mobile-storage story: a requester on a phone asks a storage provider
//! to keep some pictures, pays through a trust manager, and gets one ticket
//! (a thumbnail) back per stored picture.

use std::fmt;

use rand::distributions::Alphanumeric;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use thiserror::Error;

use crate::actors::{
    AccountProviderNode, ActorError, PaymentTerms, PricingPolicy, ProviderNode, RequesterNode, RequesterPlan,
    TrustManagerNode, DEFAULT_QUOTE_TTL,
};
use crate::crypto::{generate_keypair, hash_parts, CryptoError, Directory};
use crate::ledger::{account_digest, LedgerError};
use crate::messages::{encode, DenialReason, UsageDescriptor};
use crate::simnet::{
    assert_privacy, replay_transcript, run_scenario, Adversary, Injection, Markers, Network, NetworkError,
    PrivacyReport, RunResult,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("actor: {0}")]
    Actor(#[from] ActorError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioIds {
    pub requester: String,
    pub provider: String,
    pub trust_manager: String,
    pub account_provider: String,
}

impl Default for ScenarioIds {
    fn default() -> Self {
        ScenarioIds {
            requester: "service-requester".into(),
            provider: "service-provider".into(),
            trust_manager: "trust-manager".into(),
            account_provider: "account-provider".into(),
        }
    }
}

impl ScenarioIds {
    pub fn all(&self) -> [&str; 4] {
        [&self.requester, &self.provider, &self.trust_manager, &self.account_provider]
    }
}

/// Which path a randomized run is steered down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Happy,
    OverLimit,
    InsufficientCredit,
}

impl RunKind {
    pub const ALL: [RunKind; 3] = [RunKind::Happy, RunKind::OverLimit, RunKind::InsufficientCredit];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageScenario {
    pub seed: u64,
    pub ids: ScenarioIds,
    pub service_id: String,
    pub operation: String,
    pub unit: String,
    pub price_per_unit: u64,
    pub quantity: u64,
    pub limit: u64,
    pub credit: u64,
    pub account_ref: String,
    pub objects: Vec<Vec<u8>>,
    pub quote_ttl: u64,
    pub max_ticks: u64,
    pub precheck_limit: bool,
    pub capture_on_grant: bool,
    pub redeem_on_grant: bool,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_TICKS: u64 = 1_000;

fn derive_u64(seed: u64, label: &str) -> u64 {
    let d = hash_parts(&[b"gset/scenario/v1", &seed.to_be_bytes(), label.as_bytes()]);
    u64::from_be_bytes(d.as_bytes()[..8].try_into().expect("8 bytes"))
}

fn random_token(rng: &mut ChaCha20Rng, len: usize) -> String {
    rng.sample_iter(&Alphanumeric).take(len).map(char::from).collect()
}

/// A 24-character account reference that is unlikely to occur anywhere by accident.
pub fn account_marker(seed: u64) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_u64(seed, "account-ref"));
    random_token(&mut rng, 24)
}

/// `count` deterministic picture-like objects.
pub fn pictures(seed: u64, count: usize) -> Vec<Vec<u8>> {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_u64(seed, "objects"));
    (1..=count)
        .map(|i| {
            let mut obj = format!("picture-{i:03}.jpg:").into_bytes();
            obj.extend((0..32).map(|_| rng.gen::<u8>()));
            obj
        })
        .collect()
}

impl Default for StorageScenario {
    /// 10 credits per megabyte, 5 megabytes, limit 60, credit line 100, three pictures.
    fn default() -> Self {
        Self::with_seed(DEFAULT_SEED)
    }
}

impl StorageScenario {
    pub fn with_seed(seed: u64) -> Self {
        StorageScenario {
            seed,
            ids: ScenarioIds::default(),
            service_id: "mobile-storage".into(),
            operation: "store-pictures".into(),
            unit: "megabyte".into(),
            price_per_unit: 10,
            quantity: 5,
            limit: 60,
            credit: 100,
            account_ref: account_marker(seed),
            objects: pictures(seed, 3),
            quote_ttl: DEFAULT_QUOTE_TTL,
            max_ticks: DEFAULT_MAX_TICKS,
            precheck_limit: false,
            capture_on_grant: true,
            redeem_on_grant: true,
        }
    }

    /// Random prices, limits, credit lines and marker strings, steered toward
    /// `kind`. The limit is kept away from the price and from small integers
    /// (ticks, quantities) so the limit marker is unambiguous.
    pub fn randomized(seed: u64, kind: RunKind) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_u64(seed, "randomized"));
        let price_per_unit = rng.gen_range(1_000..=5_000u64);
        let quantity = rng.gen_range(1..=20u64);
        let price = price_per_unit * quantity;
        let (limit, credit) = match kind {
            RunKind::Happy => {
                let limit = price + rng.gen_range(1..=1_000_000);
                (limit, price + rng.gen_range(0..=1_000_000))
            }
            RunKind::OverLimit => (rng.gen_range((price / 2).max(500)..price), price + rng.gen_range(0..=1_000_000)),
            RunKind::InsufficientCredit => (price + rng.gen_range(1..=1_000_000), rng.gen_range(1..price)),
        };
        let count = rng.gen_range(1..=4);
        StorageScenario {
            seed,
            service_id: format!("svc-{}", random_token(&mut rng, 16)),
            operation: format!("op-{}", random_token(&mut rng, 16)),
            unit: format!("unit-{}", random_token(&mut rng, 16)),
            price_per_unit,
            quantity,
            limit,
            credit,
            account_ref: random_token(&mut rng, 24),
            objects: pictures(seed, count),
            ..Self::with_seed(seed)
        }
    }

    pub fn usage(&self) -> UsageDescriptor {
        UsageDescriptor {
            service_id: self.service_id.clone(),
            operation: self.operation.clone(),
            quantity: self.quantity,
            unit: self.unit.clone(),
        }
    }

    /// `None` when the price overflows.
    pub fn expected_price(&self) -> Option<u64> {
        self.price_per_unit.checked_mul(self.quantity)
    }

    pub fn markers(&self) -> Markers {
        Markers::for_scenario(&self.account_ref, self.limit, &self.service_id, &self.operation, &self.unit)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ids = self.ids.all();
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(ScenarioError::Invalid("empty actor id".into()));
            }
            if ids[..i].contains(id) {
                return Err(ScenarioError::Invalid(format!("duplicate actor id {id}")));
            }
        }
        if self.expected_price().is_none_or(|p| p == 0) {
            return Err(ScenarioError::Invalid("price must be positive and fit in 64 bits".into()));
        }
        if self.credit == 0 || self.limit == 0 {
            return Err(ScenarioError::Invalid("limit and credit must be positive".into()));
        }
        if self.account_ref.is_empty() {
            return Err(ScenarioError::Invalid("empty account reference".into()));
        }
        if self.quote_ttl == 0 {
            return Err(ScenarioError::Invalid("quote_ttl must be positive".into()));
        }
        crate::codec::Body::check(&self.usage()).map_err(|e| ScenarioError::Invalid(e.into()))?;
        Ok(())
    }

    /// Fresh actors and the opening price request. Same scenario, same bytes.
    pub fn build(&self) -> Result<(Network, Vec<Injection>), ScenarioError> {
        self.validate()?;
        let ids = &self.ids;
        let mut directory = Directory::new();
        let mut keys = Vec::new();
        for id in ids.all() {
            let kp = generate_keypair(id, self.seed)?;
            directory.register(id, kp.public_key().clone());
            keys.push(kp);
        }
        let [sr_key, sp_key, tm_key, ap_key]: [_; 4] = keys.try_into().expect("four identities");
        let rng = |label: &str| ChaCha20Rng::seed_from_u64(derive_u64(self.seed, label));

        let plan = RequesterPlan {
            provider_id: ids.provider.clone(),
            trust_manager_id: ids.trust_manager.clone(),
            terms: PaymentTerms {
                account_provider_id: ids.account_provider.clone(),
                account_ref: self.account_ref.clone(),
                limit: self.limit,
            },
            objects: self.objects.clone(),
            precheck_limit: self.precheck_limit,
            redeem_on_grant: self.redeem_on_grant,
        };
        let mut sr = RequesterNode::new(sr_key, directory.clone(), rng("requester")).with_plan(plan);
        let pricing = PricingPolicy::new().with_rate(&self.service_id, self.price_per_unit);
        let mut sp =
            ProviderNode::new(sp_key, directory.clone(), rng("provider"), &ids.trust_manager, pricing, self.quote_ttl);
        sp.set_capture_on_grant(self.capture_on_grant);
        let tm = TrustManagerNode::new(tm_key, directory.clone(), rng("trust-manager"));
        let mut ap =
            AccountProviderNode::new(ap_key, directory, derive_u64(self.seed, "ledger")).trust(&ids.trust_manager);
        ap.open_account(&self.account_ref, self.credit)?;

        let request = sr.request_price(self.usage())?;
        let initial = vec![Injection::new(&ids.requester, &ids.provider, encode(&request).map_err(ActorError::from)?)];
        let network = Network::new().with(sr)?.with(sp)?.with(tm)?.with(ap)?;
        Ok((network, initial))
    }

    pub fn run(&self, adversary: Option<&mut Adversary>) -> Result<ScenarioRun, ScenarioError> {
        let (mut network, initial) = self.build()?;
        let result = run_scenario(&mut network, initial.clone(), adversary, self.max_ticks);
        Ok(ScenarioRun { scenario: self.clone(), network, initial, result })
    }
}

/// A finished run with its final actor states.
#[derive(Debug)]
pub struct ScenarioRun {
    pub scenario: StorageScenario,
    pub network: Network,
    pub initial: Vec<Injection>,
    pub result: RunResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Approved,
    Denied(DenialReason),
    /// The run ended before an authorization decision reached the requester.
    Incomplete,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Approved => f.write_str("APPROVED"),
            Outcome::Denied(r) => write!(f, "DENIED ({r})"),
            Outcome::Incomplete => f.write_str("INCOMPLETE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The paper's five evaluation dimensions, each backed by checks.
pub const DIMENSIONS: [(&str, &[&str]); 5] = [
    ("Transparency", &["quote-signed-and-verified", "settled-equals-quoted"]),
    ("Trust", &["signatures-hold", "tokens-single-use"]),
    ("Privacy", &["sp-sees-no-payment-data", "tm-sees-no-usage-data"]),
    ("Agility", &["decision-matches-request-and-credit"]),
    ("Reliability", &["ledger-conserved", "receivable-backed-by-settlement", "transcript-replays"]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSummary {
    pub outcome: Outcome,
    pub quoted_price: Option<u64>,
    pub holds_placed: usize,
    pub settlements: usize,
    pub settled_amount: u64,
    pub tickets_issued: usize,
    pub tickets_redeemed: usize,
    pub receivable: u64,
    pub records: usize,
    pub privacy: PrivacyReport,
    pub checks: Vec<Check>,
}

impl ScenarioSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl ScenarioRun {
    pub fn requester(&self) -> &RequesterNode {
        self.network.get(&self.scenario.ids.requester).expect("requester endpoint")
    }

    pub fn provider(&self) -> &ProviderNode {
        self.network.get(&self.scenario.ids.provider).expect("provider endpoint")
    }

    pub fn trust_manager(&self) -> &TrustManagerNode {
        self.network.get(&self.scenario.ids.trust_manager).expect("trust manager endpoint")
    }

    pub fn account_provider(&self) -> &AccountProviderNode {
        self.network.get(&self.scenario.ids.account_provider).expect("account provider endpoint")
    }

    pub fn outcome(&self) -> Outcome {
        let sp = self.provider().events();
        if sp.approvals > 0 {
            Outcome::Approved
        } else if let Some(reason) = sp.denials.first() {
            Outcome::Denied(*reason)
        } else {
            Outcome::Incomplete
        }
    }

    pub fn privacy(&self) -> PrivacyReport {
        assert_privacy(
            &self.result.transcript,
            self.network.actor(&self.scenario.ids.provider).expect("provider endpoint"),
            self.network.actor(&self.scenario.ids.trust_manager).expect("trust manager endpoint"),
            &self.scenario.markers(),
        )
    }

    /// Replays the transcript through freshly built actors.
    pub fn replays_cleanly(&self) -> Result<bool, ScenarioError> {
        let (mut fresh, initial) = self.scenario.build()?;
        Ok(replay_transcript(&self.result.transcript, &mut fresh, &initial).is_clean())
    }

    pub fn summary(&self) -> Result<ScenarioSummary, ScenarioError> {
        let s = &self.scenario;
        let sr = self.requester();
        let sp = self.provider();
        let tm = self.trust_manager();
        let ledger = self.account_provider().ledger();
        let account = ledger.account(&account_digest(&s.account_ref));
        let settled_amount = account.map_or(0, |a| a.settled_total);
        let quoted_price = sr.known_quotes().values().next().map(|q| q.price);
        let outcome = self.outcome();
        let privacy = self.privacy();
        let tickets_issued = sp.tickets_issued();
        let tickets_redeemed = sr.retrieved().len();

        let mut checks = Vec::new();
        let mut push = |name, passed, detail: String| checks.push(Check { name, passed, detail });

        let quote_ok = quoted_price.is_none() || quoted_price == s.expected_price();
        push(
            "quote-signed-and-verified",
            quote_ok,
            format!("quoted {quoted_price:?}, policy {:?}", s.expected_price()),
        );
        let settled_ok = ledger.settlement_count() == 0 || Some(settled_amount) == quoted_price;
        push("settled-equals-quoted", settled_ok, format!("settled {settled_amount}"));

        let tampered = self
            .result
            .transcript
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.adversary_action == crate::messages::AdversaryAction::Tampered)
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        let forged: usize =
            tampered.iter().map(|&i| self.result.effective_approvals(&self.result.descendants(i)).len()).sum();
        push(
            "signatures-hold",
            forged == 0,
            format!("{} tampered message(s), {forged} approval(s) caused by them", tampered.len()),
        );
        let single_use = tm.settled_tokens().len() <= tm.holds().len()
            && ledger.settlement_count() <= tm.holds().len()
            && tickets_redeemed <= tickets_issued;
        push(
            "tokens-single-use",
            single_use,
            format!("{} settlement(s) for {} token(s)", ledger.settlement_count(), tm.holds().len()),
        );

        push(
            "sp-sees-no-payment-data",
            privacy.hits_for(crate::simnet::Party::ServiceProvider) == 0,
            format!("{} bytes scanned", privacy.sp_bytes_scanned),
        );
        push(
            "tm-sees-no-usage-data",
            privacy.hits_for(crate::simnet::Party::TrustManager) == 0,
            format!("{} bytes scanned", privacy.tm_bytes_scanned),
        );

        let decision_ok = match (outcome, s.expected_price()) {
            (Outcome::Approved, Some(p)) => p <= s.limit && p <= s.credit,
            (Outcome::Denied(DenialReason::OverLimit), Some(p)) => p > s.limit,
            (Outcome::Denied(DenialReason::InsufficientCredit), Some(p)) => p <= s.limit && p > s.credit,
            // Any other denial is attributable to interference, not to the request.
            _ => true,
        };
        push("decision-matches-request-and-credit", decision_ok, outcome.to_string());

        push("ledger-conserved", ledger.is_conserved(), format!("{} active hold(s)", ledger.active_hold_count()));
        push(
            "receivable-backed-by-settlement",
            sp.receivable() <= settled_amount,
            format!("receivable {}, settled {settled_amount}", sp.receivable()),
        );
        push("transcript-replays", self.replays_cleanly()?, format!("{} record(s)", self.result.transcript.len()));

        Ok(ScenarioSummary {
            outcome,
            quoted_price,
            holds_placed: ledger.total_holds_placed(),
            settlements: ledger.settlement_count(),
            settled_amount,
            tickets_issued,
            tickets_redeemed,
            receivable: sp.receivable(),
            records: self.result.transcript.len(),
            privacy,
            checks,
        })
    }
}

impl fmt::Display for ScenarioSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let price = self.quoted_price.map_or("none".to_owned(), |p| p.to_string());
        writeln!(f, "price quoted:      {price}")?;
        writeln!(f, "authorization:     {}", self.outcome)?;
        writeln!(f, "tickets:           {} issued, {} redeemed", self.tickets_issued, self.tickets_redeemed)?;
        writeln!(
            f,
            "ledger:            {} hold(s), {} settlement(s), {} settled",
            self.holds_placed, self.settlements, self.settled_amount
        )?;
        writeln!(f, "provider credits:  {}", self.receivable)?;
        writeln!(f, "transcript:        {} record(s)", self.records)?;
        for (dimension, names) in DIMENSIONS {
            let backing: Vec<&Check> = names.iter().filter_map(|n| self.check(n)).collect();
            let ok = backing.iter().all(|c| c.passed);
            writeln!(f, "{dimension:<13} {}", if ok { "PASS" } else { "FAIL" })?;
            for c in backing {
                writeln!(f, "  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
            }
        }
        Ok(())
    }
}
