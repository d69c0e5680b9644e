use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;

use super::{impl_any, AccountProviderNode, Actor, ActorError, Outbound, Reaction};
use crate::codec::{Id, Writer};
use crate::crypto::{self, Digest, Directory, KeyPair, Signature};
use crate::ledger::account_digest;
use crate::messages::{
    decode, encode, AuthOutcome, AuthorizeAndHold, CaptureRequest, CaptureResponse, CaptureToken, DenialReason,
    HoldRequest, HoldResponse, Message, PaymentInfo, ReleaseRequest, ReleaseResponse, SettleRequest, SettleResponse,
    Signed, VoidRequest,
};

/// What the trust manager remembers about an accepted hold. No order
/// information appears here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldRecord {
    pub account_provider_id: String,
    pub account_ref_digest: Digest,
    pub charge_amount: u64,
    pub authorized_limit: u64,
    pub provider_id: String,
    pub token_id: Id,
}

#[derive(Debug, Clone)]
struct PendingHold {
    oi_digest: Digest,
    provider_id: String,
    account_provider_id: String,
    account_ref_digest: Digest,
    charge_amount: u64,
    authorized_limit: u64,
}

#[derive(Debug, Clone)]
struct PendingCapture {
    token_id: Id,
    provider_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustManagerEvents {
    pub approvals: usize,
    pub denials: Vec<DenialReason>,
    pub settlements: usize,
    pub capture_denials: Vec<DenialReason>,
    pub releases: usize,
}

#[derive(Debug)]
pub struct TrustManagerNode {
    identity: KeyPair,
    directory: Directory,
    rng: ChaCha20Rng,
    seen_payment_nonces: BTreeSet<Id>,
    pending_holds: BTreeMap<Id, PendingHold>,
    holds: BTreeMap<Id, HoldRecord>,
    tokens: BTreeMap<Id, Id>,
    spent_tokens: BTreeSet<Id>,
    settled_tokens: BTreeSet<Id>,
    pending_settles: BTreeMap<Id, PendingCapture>,
    pending_releases: BTreeMap<Id, Id>,
    events: TrustManagerEvents,
}

fn blank_signature() -> Signature {
    Signature { bytes: Vec::new(), signer_id: String::new() }
}

impl TrustManagerNode {
    pub fn new(identity: KeyPair, directory: Directory, rng: ChaCha20Rng) -> Self {
        TrustManagerNode {
            identity,
            directory,
            rng,
            seen_payment_nonces: BTreeSet::new(),
            pending_holds: BTreeMap::new(),
            holds: BTreeMap::new(),
            tokens: BTreeMap::new(),
            spent_tokens: BTreeSet::new(),
            settled_tokens: BTreeSet::new(),
            pending_settles: BTreeMap::new(),
            pending_releases: BTreeMap::new(),
            events: TrustManagerEvents::default(),
        }
    }

    pub fn events(&self) -> &TrustManagerEvents {
        &self.events
    }

    pub fn holds(&self) -> &BTreeMap<Id, HoldRecord> {
        &self.holds
    }

    pub fn spent_tokens(&self) -> &BTreeSet<Id> {
        &self.spent_tokens
    }

    pub fn settled_tokens(&self) -> &BTreeSet<Id> {
        &self.settled_tokens
    }

    fn fresh_id(&mut self) -> Id {
        Id::random(&mut self.rng)
    }

    fn sign_bytes(&self, bytes: &[u8]) -> Result<Signature, ActorError> {
        Ok(crypto::sign(&self.identity, bytes)?)
    }

    /// Runs every trust-manager-side check on an authorization and, if they
    /// pass, returns the hold request for the named account provider. Only a
    /// fully verified request records its payment nonce.
    pub fn authorize(&mut self, msg: &AuthorizeAndHold) -> Result<(String, HoldRequest), DenialReason> {
        use DenialReason::*;
        if !self.directory.verify_from(&msg.provider_id, &msg.signing_bytes(), &msg.provider_signature) {
            return Err(BadSignature);
        }
        let pi_bytes = crypto::open(&self.identity, &msg.payment_envelope).map_err(|_| BadSignature)?;
        let payment: PaymentInfo = decode(&pi_bytes).map_err(|_| BadSignature)?;
        let requester_key = self.directory.get(&msg.dual.signature.signer_id).ok_or(BadSignature)?;
        if msg.oi_digest != msg.dual.oi_digest
            || !crypto::verify_with_pi(requester_key, &msg.oi_digest, &pi_bytes, &msg.dual)
        {
            return Err(BadSignature);
        }
        if !self.seen_payment_nonces.insert(payment.payment_nonce) {
            return Err(Replay);
        }
        if msg.charge_amount > payment.authorized_limit {
            return Err(OverLimit);
        }
        if !self.directory.contains(&payment.account_provider_id) {
            return Err(UnknownAccount);
        }
        let request_id = self.fresh_id();
        let account_ref_digest = account_digest(&payment.account_ref);
        let mut req =
            HoldRequest { request_id, account_ref_digest, amount: msg.charge_amount, tm_signature: blank_signature() };
        req.tm_signature = self.sign_bytes(&req.signing_bytes()).map_err(|_| BadSignature)?;
        self.pending_holds.insert(
            request_id,
            PendingHold {
                oi_digest: msg.oi_digest,
                provider_id: msg.provider_id.clone(),
                account_provider_id: payment.account_provider_id.clone(),
                account_ref_digest,
                charge_amount: msg.charge_amount,
                authorized_limit: payment.authorized_limit,
            },
        );
        Ok((payment.account_provider_id, req))
    }

    /// Turns the account provider's answer into the outcome for the provider.
    pub fn complete_authorization(&mut self, resp: &HoldResponse) -> Result<(String, AuthOutcome), ActorError> {
        let pending = self.pending_holds.get(&resp.request_id).ok_or(ActorError::UnknownReference("hold request"))?;
        if !self.directory.verify_from(&pending.account_provider_id, &resp.signing_bytes(), &resp.ap_signature) {
            return Err(ActorError::Untrusted("hold response signature"));
        }
        let pending = self.pending_holds.remove(&resp.request_id).expect("present");
        let outcome = match (resp.accepted, resp.hold_ref) {
            (true, Some(hold_ref)) => {
                let token_id = loop {
                    let id = self.fresh_id();
                    if !self.tokens.contains_key(&id) {
                        break id;
                    }
                };
                let mut token = CaptureToken {
                    token_id,
                    provider_id: pending.provider_id.clone(),
                    charge_amount: pending.charge_amount,
                    account_provider_id: pending.account_provider_id.clone(),
                    hold_ref,
                    tm_signature: blank_signature(),
                };
                token.tm_signature = self.sign_bytes(&token.signing_bytes())?;
                self.tokens.insert(token_id, hold_ref);
                self.holds.insert(
                    hold_ref,
                    HoldRecord {
                        account_provider_id: pending.account_provider_id,
                        account_ref_digest: pending.account_ref_digest,
                        charge_amount: pending.charge_amount,
                        authorized_limit: pending.authorized_limit,
                        provider_id: pending.provider_id.clone(),
                        token_id,
                    },
                );
                self.events.approvals += 1;
                AuthOutcome::approved(pending.oi_digest, token)
            }
            _ => {
                let reason = resp.reason.unwrap_or(DenialReason::InsufficientCredit);
                self.events.denials.push(reason);
                AuthOutcome::denied(pending.oi_digest, reason)
            }
        };
        Ok((pending.provider_id, outcome))
    }

    /// Synchronous authorization against an account provider handle.
    pub fn authorize_with(
        &mut self,
        msg: &AuthorizeAndHold,
        ap: &mut AccountProviderNode,
        now: u64,
    ) -> Result<AuthOutcome, ActorError> {
        let (_, req) = match self.authorize(msg) {
            Ok(r) => r,
            Err(reason) => return Ok(AuthOutcome::denied(msg.oi_digest, reason)),
        };
        let reaction = ap.deliver(now, self.identity.subject_id(), &encode(&req)?);
        let reply = reaction.outbound.first().ok_or(ActorError::UnknownReference("no hold response"))?;
        self.complete_authorization(&decode(&reply.bytes)?).map(|(_, o)| o)
    }

    /// Checks a token for capture or void: provider signature, own signature,
    /// known and unspent.
    fn redeemable_token(
        &self,
        token: &CaptureToken,
        signing_bytes: &[u8],
        sig: &Signature,
    ) -> Result<Id, DenialReason> {
        if !self.directory.verify_from(&token.provider_id, signing_bytes, sig) {
            return Err(DenialReason::BadSignature);
        }
        if !self.directory.verify_from(self.identity.subject_id(), &token.signing_bytes(), &token.tm_signature) {
            return Err(DenialReason::BadSignature);
        }
        let hold_ref = *self.tokens.get(&token.token_id).ok_or(DenialReason::UnknownAccount)?;
        if hold_ref != token.hold_ref {
            return Err(DenialReason::BadSignature);
        }
        if self.spent_tokens.contains(&token.token_id) {
            return Err(DenialReason::Replay);
        }
        Ok(hold_ref)
    }

    /// First half of a capture: marks the token spent and asks the account
    /// provider to settle the hold.
    pub fn handle_capture(&mut self, req: &CaptureRequest) -> Result<(String, SettleRequest), CaptureResponse> {
        let token = &req.token;
        match self.redeemable_token(token, &req.signing_bytes(), &req.provider_signature) {
            Err(reason) => {
                self.events.capture_denials.push(reason);
                let token_id = token.token_id;
                Err(self.capture_response(token_id, Some(reason)).unwrap_or(CaptureResponse {
                    token_id,
                    settled: false,
                    reason: Some(reason),
                    tm_signature: blank_signature(),
                }))
            }
            Ok(hold_ref) => {
                self.spent_tokens.insert(token.token_id);
                let request_id = self.fresh_id();
                let mut settle = SettleRequest { request_id, hold_ref, tm_signature: blank_signature() };
                settle.tm_signature =
                    self.sign_bytes(&settle.signing_bytes()).expect("trust manager identity holds a private key");
                self.pending_settles.insert(
                    request_id,
                    PendingCapture { token_id: token.token_id, provider_id: token.provider_id.clone() },
                );
                Ok((token.account_provider_id.clone(), settle))
            }
        }
    }

    fn capture_response(&self, token_id: Id, reason: Option<DenialReason>) -> Result<CaptureResponse, ActorError> {
        let mut resp = CaptureResponse { token_id, settled: reason.is_none(), reason, tm_signature: blank_signature() };
        resp.tm_signature = self.sign_bytes(&resp.signing_bytes())?;
        Ok(resp)
    }

    pub fn complete_capture(
        &mut self,
        from: &str,
        resp: &SettleResponse,
    ) -> Result<(String, CaptureResponse), ActorError> {
        if !self.pending_settles.contains_key(&resp.request_id) {
            return Err(ActorError::UnknownReference("settle request"));
        }
        if !self.directory.verify_from(from, &resp.signing_bytes(), &resp.ap_signature) {
            return Err(ActorError::Untrusted("settle response signature"));
        }
        let pending = self.pending_settles.remove(&resp.request_id).expect("present");
        let reason = if resp.done {
            self.settled_tokens.insert(pending.token_id);
            self.events.settlements += 1;
            None
        } else {
            let r = resp.reason.unwrap_or(DenialReason::UnknownAccount);
            self.events.capture_denials.push(r);
            Some(r)
        };
        Ok((pending.provider_id, self.capture_response(pending.token_id, reason)?))
    }

    fn handle_void(&mut self, req: &VoidRequest) -> Result<(String, ReleaseRequest), DenialReason> {
        let hold_ref = self.redeemable_token(&req.token, &req.signing_bytes(), &req.provider_signature)?;
        self.spent_tokens.insert(req.token.token_id);
        let request_id = self.fresh_id();
        let mut release = ReleaseRequest { request_id, hold_ref, tm_signature: blank_signature() };
        release.tm_signature = self.sign_bytes(&release.signing_bytes()).map_err(|_| DenialReason::BadSignature)?;
        self.pending_releases.insert(request_id, req.token.token_id);
        Ok((req.token.account_provider_id.clone(), release))
    }

    fn complete_release(&mut self, from: &str, resp: &ReleaseResponse) -> Result<(), ActorError> {
        if !self.pending_releases.contains_key(&resp.request_id) {
            return Err(ActorError::UnknownReference("release request"));
        }
        if !self.directory.verify_from(from, &resp.signing_bytes(), &resp.ap_signature) {
            return Err(ActorError::Untrusted("release response signature"));
        }
        self.pending_releases.remove(&resp.request_id);
        if resp.done {
            self.events.releases += 1;
        }
        Ok(())
    }
}

impl Actor for TrustManagerNode {
    fn id(&self) -> &str {
        self.identity.subject_id()
    }

    fn deliver(&mut self, _now: u64, from: &str, bytes: &[u8]) -> Reaction {
        let msg = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => return Reaction::rejected(e.into(), Vec::new()),
        };
        match msg {
            Message::AuthorizeAndHold(m) => match self.authorize(&m) {
                Ok((ap, req)) => Reaction::from_result(Outbound::encode(&ap, &req).map(|o| vec![o])),
                Err(DenialReason::Replay) => {
                    // The original is already being answered.
                    self.events.denials.push(DenialReason::Replay);
                    Reaction::rejected(ActorError::Denied(DenialReason::Replay), Vec::new())
                }
                Err(reason) => {
                    self.events.denials.push(reason);
                    let reply = Outbound::encode(from, &AuthOutcome::denied(m.oi_digest, reason));
                    Reaction::rejected(ActorError::Denied(reason), reply.into_iter().collect())
                }
            },
            Message::HoldResponse(r) => Reaction::from_result(
                self.complete_authorization(&r).and_then(|(sp, o)| Outbound::encode(&sp, &o)).map(|o| vec![o]),
            ),
            Message::CaptureRequest(r) => match self.handle_capture(&r) {
                Ok((ap, settle)) => Reaction::from_result(Outbound::encode(&ap, &settle).map(|o| vec![o])),
                Err(resp) => {
                    let reason = resp.reason.unwrap_or(DenialReason::BadSignature);
                    if reason == DenialReason::Replay {
                        return Reaction::rejected(ActorError::Denied(reason), Vec::new());
                    }
                    Reaction::rejected(ActorError::Denied(reason), Outbound::encode(from, &resp).into_iter().collect())
                }
            },
            Message::SettleResponse(r) => Reaction::from_result(
                self.complete_capture(from, &r).and_then(|(sp, c)| Outbound::encode(&sp, &c)).map(|o| vec![o]),
            ),
            Message::VoidRequest(r) => match self.handle_void(&r) {
                Ok((ap, release)) => Reaction::from_result(Outbound::encode(&ap, &release).map(|o| vec![o])),
                Err(reason) => Reaction::rejected(ActorError::Denied(reason), Vec::new()),
            },
            Message::ReleaseResponse(r) => Reaction::from_result(self.complete_release(from, &r).map(|_| Vec::new())),
            other => Reaction::rejected(ActorError::UnexpectedMessage(other.message_type()), Vec::new()),
        }
    }

    fn stored_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for n in &self.seen_payment_nonces {
            w.id(n);
        }
        for (id, p) in &self.pending_holds {
            w.id(id);
            w.digest(&p.oi_digest);
            w.str(&p.provider_id);
            w.str(&p.account_provider_id);
            w.digest(&p.account_ref_digest);
            w.u64(p.charge_amount);
            w.u64(p.authorized_limit);
        }
        for (hold_ref, h) in &self.holds {
            w.id(hold_ref);
            w.str(&h.account_provider_id);
            w.digest(&h.account_ref_digest);
            w.u64(h.charge_amount);
            w.u64(h.authorized_limit);
            w.str(&h.provider_id);
            w.id(&h.token_id);
        }
        for t in self.spent_tokens.iter().chain(&self.settled_tokens) {
            w.id(t);
        }
        w.into_inner()
    }

    impl_any!();
}
