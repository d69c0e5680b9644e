//! Account provider credit ledger with hold, settle and release.
//!
//! Accounts are keyed by the digest of the account reference; the plaintext
//! reference is never stored. For every account
//! `settled_total + sum(active_holds) <= credit_limit` holds after every
//! operation, and all arithmetic is checked.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use thiserror::Error;

use crate::codec::Id;
use crate::crypto::{hash, Digest};
use crate::messages::{AccountSnapshot, DenialReason, HoldEntry, LedgerSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("amount must be positive")]
    InvalidAmount,
    #[error("account already exists")]
    DuplicateAccount,
    #[error("unknown account")]
    UnknownAccount,
    #[error("insufficient credit: requested {requested}, available {available}")]
    InsufficientCredit { requested: u64, available: u64 },
    #[error("hold {0} is not active")]
    UnknownHold(Id),
    #[error("hold {0} was already settled")]
    AlreadySettled(Id),
    #[error("hold {0} was already released")]
    AlreadyReleased(Id),
}

impl LedgerError {
    /// Wire-level reason reported to the trust manager.
    pub fn denial_reason(&self) -> DenialReason {
        match self {
            LedgerError::InsufficientCredit { .. } | LedgerError::InvalidAmount => DenialReason::InsufficientCredit,
            LedgerError::AlreadySettled(_) | LedgerError::AlreadyReleased(_) => DenialReason::Replay,
            LedgerError::UnknownAccount | LedgerError::DuplicateAccount | LedgerError::UnknownHold(_) => {
                DenialReason::UnknownAccount
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerAccount {
    pub account_ref_digest: Digest,
    pub credit_limit: u64,
    pub active_holds: BTreeMap<Id, u64>,
    pub settled_total: u64,
}

impl LedgerAccount {
    pub fn held_total(&self) -> u64 {
        // Bounded by credit_limit, so the sum cannot overflow.
        self.active_holds.values().sum()
    }

    pub fn available(&self) -> u64 {
        self.credit_limit - self.settled_total - self.held_total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldReceipt {
    pub hold_ref: Id,
    pub amount: u64,
    pub account_ref_digest: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldClosure {
    Settled,
    Released,
}

/// Terminal record of a hold that is no longer active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedHold {
    pub account_ref_digest: Digest,
    pub amount: u64,
    pub closure: HoldClosure,
}

pub fn account_digest(account_ref: &str) -> Digest {
    hash(account_ref.as_bytes())
}

#[derive(Debug, Clone)]
pub struct Ledger {
    accounts: BTreeMap<Digest, LedgerAccount>,
    hold_owner: BTreeMap<Id, Digest>,
    closed: BTreeMap<Id, ClosedHold>,
    rng: ChaCha20Rng,
}

impl Ledger {
    /// `seed` drives hold reference generation.
    pub fn new(seed: u64) -> Self {
        Ledger {
            accounts: BTreeMap::new(),
            hold_owner: BTreeMap::new(),
            closed: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn open_account(&mut self, account_ref: &str, credit_limit: u64) -> Result<Digest, LedgerError> {
        if credit_limit == 0 {
            return Err(LedgerError::InvalidAmount);
        }
        let digest = account_digest(account_ref);
        if self.accounts.contains_key(&digest) {
            return Err(LedgerError::DuplicateAccount);
        }
        self.accounts.insert(
            digest,
            LedgerAccount { account_ref_digest: digest, credit_limit, active_holds: BTreeMap::new(), settled_total: 0 },
        );
        Ok(digest)
    }

    pub fn account(&self, digest: &Digest) -> Option<&LedgerAccount> {
        self.accounts.get(digest)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &LedgerAccount> {
        self.accounts.values()
    }

    pub fn available(&self, digest: &Digest) -> Option<u64> {
        self.accounts.get(digest).map(LedgerAccount::available)
    }

    pub fn place_hold(&mut self, digest: &Digest, amount: u64) -> Result<HoldReceipt, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::InvalidAmount);
        }
        let account = self.accounts.get(digest).ok_or(LedgerError::UnknownAccount)?;
        let available = account.available();
        if amount > available {
            return Err(LedgerError::InsufficientCredit { requested: amount, available });
        }
        let hold_ref = loop {
            let candidate = Id::random(&mut self.rng);
            if !self.hold_owner.contains_key(&candidate) && !self.closed.contains_key(&candidate) {
                break candidate;
            }
        };
        let account = self.accounts.get_mut(digest).expect("checked above");
        account.active_holds.insert(hold_ref, amount);
        self.hold_owner.insert(hold_ref, *digest);
        Ok(HoldReceipt { hold_ref, amount, account_ref_digest: *digest })
    }

    fn close(&mut self, hold_ref: &Id, closure: HoldClosure) -> Result<(Digest, u64), LedgerError> {
        let Some(digest) = self.hold_owner.get(hold_ref).copied() else {
            return Err(match self.closed.get(hold_ref).map(|c| c.closure) {
                Some(HoldClosure::Settled) => LedgerError::AlreadySettled(*hold_ref),
                Some(HoldClosure::Released) => LedgerError::AlreadyReleased(*hold_ref),
                None => LedgerError::UnknownHold(*hold_ref),
            });
        };
        let account = self.accounts.get_mut(&digest).expect("hold owner exists");
        let amount = account.active_holds.remove(hold_ref).expect("indexed hold is active");
        if closure == HoldClosure::Settled {
            // amount was part of the used total, so this stays within credit_limit.
            account.settled_total += amount;
        }
        self.hold_owner.remove(hold_ref);
        self.closed.insert(*hold_ref, ClosedHold { account_ref_digest: digest, amount, closure });
        Ok((digest, amount))
    }

    /// Converts a hold into a settlement. Not idempotent.
    pub fn settle_hold(&mut self, hold_ref: &Id) -> Result<u64, LedgerError> {
        self.close(hold_ref, HoldClosure::Settled).map(|(_, amount)| amount)
    }

    pub fn release_hold(&mut self, hold_ref: &Id) -> Result<u64, LedgerError> {
        self.close(hold_ref, HoldClosure::Released).map(|(_, amount)| amount)
    }

    pub fn active_hold(&self, hold_ref: &Id) -> Option<u64> {
        let digest = self.hold_owner.get(hold_ref)?;
        self.accounts.get(digest)?.active_holds.get(hold_ref).copied()
    }

    pub fn closed_hold(&self, hold_ref: &Id) -> Option<&ClosedHold> {
        self.closed.get(hold_ref)
    }

    pub fn closed_holds(&self) -> impl Iterator<Item = (&Id, &ClosedHold)> {
        self.closed.iter()
    }

    pub fn settlement_count(&self) -> usize {
        self.closed.values().filter(|c| c.closure == HoldClosure::Settled).count()
    }

    pub fn active_hold_count(&self) -> usize {
        self.hold_owner.len()
    }

    /// Number of holds ever placed.
    pub fn total_holds_placed(&self) -> usize {
        self.hold_owner.len() + self.closed.len()
    }

    /// The conservation invariant over every account.
    pub fn is_conserved(&self) -> bool {
        self.accounts.values().all(|a| {
            a.active_holds.values().all(|v| *v > 0)
                && a.active_holds
                    .values()
                    .try_fold(a.settled_total, |acc, v| acc.checked_add(*v))
                    .is_some_and(|used| used <= a.credit_limit)
        })
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            accounts: self
                .accounts
                .values()
                .map(|a| AccountSnapshot {
                    account_ref_digest: a.account_ref_digest,
                    credit_limit: a.credit_limit,
                    active_holds: a
                        .active_holds
                        .iter()
                        .map(|(hold_ref, amount)| HoldEntry { hold_ref: *hold_ref, amount: *amount })
                        .collect(),
                    settled_total: a.settled_total,
                })
                .collect(),
        }
    }
}
