use std::collections::BTreeSet;

use super::{impl_any, Actor, ActorError, Outbound, Reaction};
use crate::codec::{encode_body, Id};
use crate::crypto::{self, Digest, Directory, KeyPair, Signature};
use crate::ledger::{Ledger, LedgerError};
use crate::messages::{
    DenialReason, HoldRequest, HoldResponse, Message, ReleaseRequest, ReleaseResponse, SettleRequest, SettleResponse,
    Signed,
};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountProviderEvents {
    pub holds_placed: usize,
    pub holds_refused: Vec<DenialReason>,
    pub settlements: usize,
    pub releases: usize,
}

#[derive(Debug)]
pub struct AccountProviderNode {
    identity: KeyPair,
    directory: Directory,
    trusted: BTreeSet<String>,
    ledger: Ledger,
    seen_requests: BTreeSet<Id>,
    events: AccountProviderEvents,
}

fn blank_signature() -> Signature {
    Signature { bytes: Vec::new(), signer_id: String::new() }
}

impl AccountProviderNode {
    /// `ledger_seed` drives hold reference generation.
    pub fn new(identity: KeyPair, directory: Directory, ledger_seed: u64) -> Self {
        AccountProviderNode {
            identity,
            directory,
            trusted: BTreeSet::new(),
            ledger: Ledger::new(ledger_seed),
            seen_requests: BTreeSet::new(),
            events: AccountProviderEvents::default(),
        }
    }

    /// Only hold commands signed by a trusted manager are honoured.
    pub fn trust(mut self, trust_manager_id: &str) -> Self {
        self.trusted.insert(trust_manager_id.to_owned());
        self
    }

    pub fn open_account(&mut self, account_ref: &str, credit_limit: u64) -> Result<Digest, LedgerError> {
        self.ledger.open_account(account_ref, credit_limit)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn events(&self) -> &AccountProviderEvents {
        &self.events
    }

    /// Outer error: a replayed request id, which gets no answer at all.
    fn check_command(
        &mut self,
        from: &str,
        request_id: Id,
        signing: &[u8],
        sig: &Signature,
    ) -> Result<Result<(), DenialReason>, ActorError> {
        if !self.trusted.contains(from) || !self.directory.verify_from(from, signing, sig) {
            return Ok(Err(DenialReason::BadSignature));
        }
        if !self.seen_requests.insert(request_id) {
            return Err(ActorError::Denied(DenialReason::Replay));
        }
        Ok(Ok(()))
    }

    fn sign<T: Signed>(&self, msg: &T) -> Result<Signature, ActorError> {
        Ok(crypto::sign(&self.identity, &msg.signing_bytes())?)
    }

    pub fn handle_hold(&mut self, from: &str, req: &HoldRequest) -> Result<HoldResponse, ActorError> {
        let result = self
            .check_command(from, req.request_id, &req.signing_bytes(), &req.tm_signature)?
            .and_then(|_| self.ledger.place_hold(&req.account_ref_digest, req.amount).map_err(|e| e.denial_reason()));
        let mut resp = match result {
            Ok(receipt) => {
                self.events.holds_placed += 1;
                HoldResponse {
                    request_id: req.request_id,
                    accepted: true,
                    hold_ref: Some(receipt.hold_ref),
                    reason: None,
                    ap_signature: blank_signature(),
                }
            }
            Err(reason) => {
                self.events.holds_refused.push(reason);
                HoldResponse {
                    request_id: req.request_id,
                    accepted: false,
                    hold_ref: None,
                    reason: Some(reason),
                    ap_signature: blank_signature(),
                }
            }
        };
        resp.ap_signature = self.sign(&resp)?;
        Ok(resp)
    }

    pub fn handle_settle(&mut self, from: &str, req: &SettleRequest) -> Result<SettleResponse, ActorError> {
        let result = self
            .check_command(from, req.request_id, &req.signing_bytes(), &req.tm_signature)?
            .and_then(|_| self.ledger.settle_hold(&req.hold_ref).map_err(|e| e.denial_reason()));
        if result.is_ok() {
            self.events.settlements += 1;
        }
        let mut resp = SettleResponse {
            request_id: req.request_id,
            done: result.is_ok(),
            amount: *result.as_ref().unwrap_or(&0),
            reason: result.err(),
            ap_signature: blank_signature(),
        };
        resp.ap_signature = self.sign(&resp)?;
        Ok(resp)
    }

    pub fn handle_release(&mut self, from: &str, req: &ReleaseRequest) -> Result<ReleaseResponse, ActorError> {
        let result = self
            .check_command(from, req.request_id, &req.signing_bytes(), &req.tm_signature)?
            .and_then(|_| self.ledger.release_hold(&req.hold_ref).map_err(|e| e.denial_reason()));
        if result.is_ok() {
            self.events.releases += 1;
        }
        let mut resp = ReleaseResponse {
            request_id: req.request_id,
            done: result.is_ok(),
            amount: *result.as_ref().unwrap_or(&0),
            reason: result.err(),
            ap_signature: blank_signature(),
        };
        resp.ap_signature = self.sign(&resp)?;
        Ok(resp)
    }
}

impl Actor for AccountProviderNode {
    fn id(&self) -> &str {
        self.identity.subject_id()
    }

    fn deliver(&mut self, _now: u64, from: &str, bytes: &[u8]) -> Reaction {
        let msg = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => return Reaction::rejected(e.into(), Vec::new()),
        };
        let (reply, refused) = match msg {
            Message::HoldRequest(r) => {
                let resp = self.handle_hold(from, &r);
                let refused = resp.as_ref().ok().and_then(|r| r.reason);
                (resp.and_then(|r| Outbound::encode(from, &r)), refused)
            }
            Message::SettleRequest(r) => {
                let resp = self.handle_settle(from, &r);
                let refused = resp.as_ref().ok().and_then(|r| r.reason);
                (resp.and_then(|r| Outbound::encode(from, &r)), refused)
            }
            Message::ReleaseRequest(r) => {
                let resp = self.handle_release(from, &r);
                let refused = resp.as_ref().ok().and_then(|r| r.reason);
                (resp.and_then(|r| Outbound::encode(from, &r)), refused)
            }
            other => return Reaction::rejected(ActorError::UnexpectedMessage(other.message_type()), Vec::new()),
        };
        match (reply, refused) {
            (Ok(out), None) => Reaction::accepted(vec![out]),
            (Ok(out), Some(reason)) => Reaction::rejected(ActorError::Denied(reason), vec![out]),
            (Err(e), _) => Reaction::rejected(e, Vec::new()),
        }
    }

    fn stored_bytes(&self) -> Vec<u8> {
        let mut out = encode_body(&self.ledger.snapshot()).unwrap_or_default();
        for id in &self.seen_requests {
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    impl_any!();
}
