use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;

use super::{impl_any, Actor, ActorError, Outbound, Reaction};
use crate::codec::{Id, Writer};
use crate::crypto::{self, Digest, Directory, KeyPair, Signature};
use crate::messages::{
    encode, AuthDecision, AuthOutcome, AuthorizationRequest, AuthorizeAndHold, CaptureRequest, CaptureResponse,
    CaptureToken, DenialReason, Message, OrderInfo, PriceQuote, PriceRequest, QuoteRefusal, RedeemResponse,
    ServiceGrant, ServiceInvocation, Signed, Ticket, UsageDescriptor, VoidRequest,
};

/// Linear price per unit of quantity, per service.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PricingPolicy {
    rates: BTreeMap<String, u64>,
}

impl PricingPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rate(mut self, service_id: &str, price_per_unit: u64) -> Self {
        self.rates.insert(service_id.to_owned(), price_per_unit);
        self
    }

    /// `None` for unknown services, zero prices and overflow.
    pub fn price(&self, usage: &UsageDescriptor) -> Option<u64> {
        self.rates.get(&usage.service_id)?.checked_mul(usage.quantity).filter(|p| *p > 0)
    }
}

#[derive(Debug, Clone)]
struct PendingOrder {
    order: OrderInfo,
    charge: u64,
}

#[derive(Debug, Clone)]
struct ApprovedOrder {
    order: OrderInfo,
    outcome: AuthOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProviderEvents {
    pub quotes_issued: usize,
    pub quotes_refused: usize,
    pub forwarded: usize,
    /// Denials in the order they happened, local and from the trust manager.
    pub denials: Vec<DenialReason>,
    pub approvals: usize,
    pub grants: usize,
    pub redemptions: usize,
    pub voided: usize,
    pub settlements: usize,
    pub capture_failures: Vec<DenialReason>,
}

#[derive(Debug)]
pub struct ProviderNode {
    identity: KeyPair,
    directory: Directory,
    rng: ChaCha20Rng,
    trust_manager_id: String,
    pricing: PricingPolicy,
    quote_ttl: u64,
    capture_on_grant: bool,
    issued_quotes: BTreeMap<Id, PriceQuote>,
    used_quotes: BTreeSet<Id>,
    seen_order_nonces: BTreeSet<Id>,
    pending: BTreeMap<Digest, PendingOrder>,
    approved: BTreeMap<Id, ApprovedOrder>,
    held_tokens: BTreeMap<Id, CaptureToken>,
    seen_tokens: BTreeSet<Id>,
    capture_requested: BTreeSet<Id>,
    granted: BTreeMap<Id, (OrderInfo, Vec<Ticket>)>,
    stored_objects: BTreeMap<Id, Vec<u8>>,
    redeemed: BTreeSet<Id>,
    receivable: u64,
    events: ProviderEvents,
}

impl ProviderNode {
    pub fn new(
        identity: KeyPair,
        directory: Directory,
        rng: ChaCha20Rng,
        trust_manager_id: &str,
        pricing: PricingPolicy,
        quote_ttl: u64,
    ) -> Self {
        ProviderNode {
            identity,
            directory,
            rng,
            trust_manager_id: trust_manager_id.to_owned(),
            pricing,
            quote_ttl,
            capture_on_grant: true,
            issued_quotes: BTreeMap::new(),
            used_quotes: BTreeSet::new(),
            seen_order_nonces: BTreeSet::new(),
            pending: BTreeMap::new(),
            approved: BTreeMap::new(),
            held_tokens: BTreeMap::new(),
            seen_tokens: BTreeSet::new(),
            capture_requested: BTreeSet::new(),
            granted: BTreeMap::new(),
            stored_objects: BTreeMap::new(),
            redeemed: BTreeSet::new(),
            receivable: 0,
            events: ProviderEvents::default(),
        }
    }

    /// Whether credits are collected as soon as the service is granted.
    pub fn set_capture_on_grant(&mut self, on: bool) {
        self.capture_on_grant = on;
    }

    pub fn events(&self) -> &ProviderEvents {
        &self.events
    }

    pub fn receivable(&self) -> u64 {
        self.receivable
    }

    pub fn held_tokens(&self) -> impl Iterator<Item = &CaptureToken> {
        self.held_tokens.values()
    }

    pub fn issued_quotes(&self) -> &BTreeMap<Id, PriceQuote> {
        &self.issued_quotes
    }

    pub fn stored_object_count(&self) -> usize {
        self.stored_objects.len()
    }

    pub fn tickets_issued(&self) -> usize {
        self.granted.values().map(|(_, t)| t.len()).sum()
    }

    pub fn quote_price(&mut self, req: &PriceRequest, now: u64) -> Result<PriceQuote, ActorError> {
        let price = self.pricing.price(&req.usage).ok_or(ActorError::InvalidInput("usage cannot be priced"))?;
        let expiry = now.checked_add(self.quote_ttl).ok_or(ActorError::InvalidInput("quote expiry overflows"))?;
        let quote_id = loop {
            let id = Id::random(&mut self.rng);
            if !self.issued_quotes.contains_key(&id) {
                break id;
            }
        };
        let mut quote = PriceQuote {
            quote_id,
            usage: req.usage.clone(),
            price,
            expiry,
            provider_signature: Signature { bytes: Vec::new(), signer_id: String::new() },
        };
        quote.provider_signature = crypto::sign(&self.identity, &quote.signing_bytes())?;
        self.issued_quotes.insert(quote_id, quote.clone());
        self.events.quotes_issued += 1;
        Ok(quote)
    }

    /// Checks the requester's half of the dual signature and the quote, then
    /// builds the message for the trust manager. The order information stays here.
    pub fn handle_authorization(
        &mut self,
        auth: &AuthorizationRequest,
        now: u64,
    ) -> Result<AuthorizeAndHold, DenialReason> {
        let order = &auth.order_info;
        let oi_bytes = encode(order).map_err(|_| DenialReason::BadSignature)?;
        let requester_key = self.directory.get(&order.requester_id).ok_or(DenialReason::BadSignature)?;
        if auth.dual.signature.signer_id != order.requester_id
            || auth.pi_digest != auth.dual.pi_digest
            || !crypto::verify_with_oi(requester_key, &oi_bytes, &auth.pi_digest, &auth.dual)
        {
            return Err(DenialReason::BadSignature);
        }
        let quote = self.issued_quotes.get(&order.quote_id).ok_or(DenialReason::ExpiredQuote)?;
        if now > quote.expiry || quote.usage != order.usage {
            return Err(DenialReason::ExpiredQuote);
        }
        if self.seen_order_nonces.contains(&order.order_nonce) || self.used_quotes.contains(&order.quote_id) {
            return Err(DenialReason::Replay);
        }
        let charge_amount = quote.price;
        let mut msg = AuthorizeAndHold {
            payment_envelope: auth.payment_envelope.clone(),
            oi_digest: auth.dual.oi_digest,
            dual: auth.dual.clone(),
            charge_amount,
            provider_id: self.identity.subject_id().to_owned(),
            provider_signature: Signature { bytes: Vec::new(), signer_id: String::new() },
        };
        msg.provider_signature =
            crypto::sign(&self.identity, &msg.signing_bytes()).map_err(|_| DenialReason::BadSignature)?;
        self.seen_order_nonces.insert(order.order_nonce);
        self.used_quotes.insert(order.quote_id);
        self.pending.insert(msg.oi_digest, PendingOrder { order: order.clone(), charge: charge_amount });
        Ok(msg)
    }

    fn verify_token(&self, token: &CaptureToken) -> Result<(), ActorError> {
        if !self.directory.verify_from(&self.trust_manager_id, &token.signing_bytes(), &token.tm_signature) {
            return Err(ActorError::Untrusted("capture token signature"));
        }
        if token.provider_id != self.identity.subject_id() {
            return Err(ActorError::Untrusted("capture token issued to another provider"));
        }
        Ok(())
    }

    /// Stores the objects and issues one ticket each, provided the outcome
    /// carries a valid token for this order.
    pub fn grant_service(
        &mut self,
        outcome: &AuthOutcome,
        order: &OrderInfo,
        objects: Vec<Vec<u8>>,
    ) -> Result<ServiceGrant, ActorError> {
        if !outcome.approved {
            return Err(ActorError::Denied(outcome.reason.unwrap_or(DenialReason::BadSignature)));
        }
        let token = outcome.token.as_ref().ok_or(ActorError::Untrusted("approval without token"))?;
        self.verify_token(token)?;
        if objects.is_empty() {
            return Err(ActorError::InvalidInput("no objects to store"));
        }
        if self.granted.contains_key(&order.order_nonce) {
            return Err(ActorError::Denied(DenialReason::Replay));
        }
        let mut tickets = Vec::with_capacity(objects.len());
        for object in objects {
            let ticket_id = loop {
                let id = Id::random(&mut self.rng);
                if !self.stored_objects.contains_key(&id) && !self.redeemed.contains(&id) {
                    break id;
                }
            };
            tickets.push(Ticket { ticket_id, object_digest: crypto::hash(&object) });
            self.stored_objects.insert(ticket_id, object);
        }
        let mut grant = ServiceGrant {
            grant_id: order.order_nonce,
            tickets,
            provider_signature: Signature { bytes: Vec::new(), signer_id: String::new() },
        };
        grant.provider_signature = crypto::sign(&self.identity, &grant.signing_bytes())?;
        self.held_tokens.insert(token.token_id, token.clone());
        self.granted.insert(order.order_nonce, (order.clone(), grant.tickets.clone()));
        self.events.grants += 1;
        Ok(grant)
    }

    /// Hands back the stored object once; later attempts and unknown tickets fail.
    pub fn redeem(&mut self, ticket_id: &Id) -> Result<Vec<u8>, ActorError> {
        let object = self
            .stored_objects
            .remove(ticket_id)
            .ok_or(ActorError::Redemption("unknown or already redeemed ticket"))?;
        self.redeemed.insert(*ticket_id);
        self.events.redemptions += 1;
        Ok(object)
    }

    pub fn collect_credits(&mut self, token_id: &Id) -> Result<CaptureRequest, ActorError> {
        let token = self.held_tokens.get(token_id).ok_or(ActorError::UnknownReference("token not held"))?;
        if self.capture_requested.contains(token_id) {
            return Err(ActorError::Denied(DenialReason::Replay));
        }
        let mut req = CaptureRequest {
            token: token.clone(),
            provider_signature: Signature { bytes: Vec::new(), signer_id: String::new() },
        };
        req.provider_signature = crypto::sign(&self.identity, &req.signing_bytes())?;
        self.capture_requested.insert(*token_id);
        Ok(req)
    }

    fn void(&mut self, token: CaptureToken) -> Result<Outbound, ActorError> {
        let mut req =
            VoidRequest { token, provider_signature: Signature { bytes: Vec::new(), signer_id: String::new() } };
        req.provider_signature = crypto::sign(&self.identity, &req.signing_bytes())?;
        self.events.voided += 1;
        Outbound::encode(&self.trust_manager_id, &req)
    }

    fn on_authorization(&mut self, from: &str, auth: AuthorizationRequest, now: u64) -> Reaction {
        let nonce = auth.order_info.order_nonce;
        match self.handle_authorization(&auth, now) {
            Ok(msg) => {
                self.events.forwarded += 1;
                Reaction::from_result(Outbound::encode(&self.trust_manager_id, &msg).map(|o| vec![o]))
            }
            Err(reason) => {
                self.events.denials.push(reason);
                if reason == DenialReason::Replay {
                    // The original is already being answered.
                    return Reaction::rejected(ActorError::Denied(reason), Vec::new());
                }
                let reply = Outbound::encode(from, &AuthDecision { order_nonce: nonce, approved: false });
                Reaction::rejected(ActorError::Denied(reason), reply.into_iter().collect())
            }
        }
    }

    fn on_outcome(&mut self, outcome: AuthOutcome) -> Reaction {
        if let Some(token) = &outcome.token {
            if let Err(e) = self.verify_token(token) {
                return Reaction::rejected(e, Vec::new());
            }
            if !self.seen_tokens.insert(token.token_id) {
                return Reaction::rejected(ActorError::Denied(DenialReason::Replay), Vec::new());
            }
        }
        let Some(pending) = self.pending.remove(&outcome.request_ref) else {
            // A fresh, validly signed token we cannot attach to an order is
            // returned so the hold behind it is released.
            let err = ActorError::UnknownReference("outcome for unknown request");
            return match outcome.token {
                Some(token) => match self.void(token) {
                    Ok(o) => Reaction::rejected(err, vec![o]),
                    Err(e) => Reaction::rejected(e, Vec::new()),
                },
                None => Reaction::rejected(err, Vec::new()),
            };
        };
        let requester = pending.order.requester_id.clone();
        let nonce = pending.order.order_nonce;
        let decision = |approved| Outbound::encode(&requester, &AuthDecision { order_nonce: nonce, approved });
        match &outcome.token {
            Some(token) if token.charge_amount == pending.charge => {
                self.events.approvals += 1;
                self.approved.insert(nonce, ApprovedOrder { order: pending.order, outcome });
                Reaction::from_result(decision(true).map(|o| vec![o]))
            }
            Some(token) => {
                let token = token.clone();
                self.events.denials.push(DenialReason::BadSignature);
                let out = self.void(token).and_then(|v| Ok(vec![v, decision(false)?]));
                match out {
                    Ok(out) => Reaction::rejected(ActorError::Untrusted("token charge differs from quote"), out),
                    Err(e) => Reaction::rejected(e, Vec::new()),
                }
            }
            None => {
                // The reason stays with the provider; the requester only learns "denied".
                self.events.denials.push(outcome.reason.unwrap_or(DenialReason::BadSignature));
                Reaction::from_result(decision(false).map(|o| vec![o]))
            }
        }
    }

    fn on_invocation(&mut self, now: u64, from: &str, inv: ServiceInvocation) -> Reaction {
        let approved = match self.approved.get(&inv.order_nonce) {
            Some(a) => a,
            None => return Reaction::rejected(ActorError::UnknownReference("order not approved"), Vec::new()),
        };
        let requester = approved.order.requester_id.clone();
        if !self.directory.verify_from(&requester, &inv.signing_bytes(), &inv.requester_signature) {
            return Reaction::rejected(ActorError::Untrusted("invocation signature"), Vec::new());
        }
        let expiry = self.issued_quotes.get(&approved.order.quote_id).map(|q| q.expiry);
        let ApprovedOrder { order, outcome } = self.approved.remove(&inv.order_nonce).expect("present");
        if expiry.is_none_or(|e| now > e) {
            // Too late to serve; hand the token back so the hold is released.
            let token = outcome.token.expect("approved outcome has token");
            return match self.void(token) {
                Ok(o) => Reaction::rejected(ActorError::Expired, vec![o]),
                Err(e) => Reaction::rejected(e, Vec::new()),
            };
        }
        Reaction::from_result(self.serve(from, order, outcome, inv.objects))
    }

    fn serve(
        &mut self,
        from: &str,
        order: OrderInfo,
        outcome: AuthOutcome,
        objects: Vec<Vec<u8>>,
    ) -> Result<Vec<Outbound>, ActorError> {
        let grant = self.grant_service(&outcome, &order, objects)?;
        let mut out = vec![Outbound::encode(from, &grant)?];
        if self.capture_on_grant {
            let token_id = outcome.token.as_ref().expect("approved outcome has token").token_id;
            let capture = self.collect_credits(&token_id)?;
            out.push(Outbound::encode(&self.trust_manager_id, &capture)?);
        }
        Ok(out)
    }

    fn on_capture_response(&mut self, resp: CaptureResponse) -> Result<Vec<Outbound>, ActorError> {
        if !self.directory.verify_from(&self.trust_manager_id, &resp.signing_bytes(), &resp.tm_signature) {
            return Err(ActorError::Untrusted("capture response signature"));
        }
        if !self.capture_requested.remove(&resp.token_id) {
            return Err(ActorError::UnknownReference("capture response for unrequested token"));
        }
        let token = self.held_tokens.remove(&resp.token_id).ok_or(ActorError::UnknownReference("token not held"))?;
        if resp.settled {
            self.receivable = self
                .receivable
                .checked_add(token.charge_amount)
                .ok_or(ActorError::InvalidInput("receivable overflow"))?;
            self.events.settlements += 1;
        } else {
            self.events.capture_failures.push(resp.reason.unwrap_or(DenialReason::BadSignature));
        }
        Ok(Vec::new())
    }
}

impl Actor for ProviderNode {
    fn id(&self) -> &str {
        self.identity.subject_id()
    }

    fn deliver(&mut self, now: u64, from: &str, bytes: &[u8]) -> Reaction {
        let msg = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => return Reaction::rejected(e.into(), Vec::new()),
        };
        match msg {
            Message::PriceRequest(req) => match self.quote_price(&req, now) {
                Ok(q) => Reaction::from_result(Outbound::encode(from, &q).map(|o| vec![o])),
                Err(e) => {
                    self.events.quotes_refused += 1;
                    let reply = Outbound::encode(from, &QuoteRefusal { request_nonce: req.nonce });
                    Reaction::rejected(e, reply.into_iter().collect())
                }
            },
            Message::AuthorizationRequest(auth) => self.on_authorization(from, auth, now),
            Message::AuthOutcome(o) => self.on_outcome(o),
            Message::ServiceInvocation(inv) => self.on_invocation(now, from, inv),
            Message::RedeemRequest(r) => {
                let object = self.redeem(&r.ticket_id);
                let ok = object.is_ok();
                let reply = Outbound::encode(from, &RedeemResponse { ticket_id: r.ticket_id, object: object.ok() });
                match (ok, reply) {
                    (true, Ok(o)) => Reaction::accepted(vec![o]),
                    (false, Ok(o)) => Reaction::rejected(ActorError::Redemption("unknown or redeemed ticket"), vec![o]),
                    (_, Err(e)) => Reaction::rejected(e, Vec::new()),
                }
            }
            Message::CaptureResponse(r) => Reaction::from_result(self.on_capture_response(r)),
            other => Reaction::rejected(ActorError::UnexpectedMessage(other.message_type()), Vec::new()),
        }
    }

    fn stored_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for q in self.issued_quotes.values() {
            w.nested(q);
        }
        for p in self.pending.values() {
            w.nested(&p.order);
            w.u64(p.charge);
        }
        for a in self.approved.values() {
            w.nested(&a.order);
            w.nested(&a.outcome);
        }
        for t in self.held_tokens.values() {
            w.nested(t);
        }
        for (order, tickets) in self.granted.values() {
            w.nested(order);
            w.list(tickets);
        }
        for obj in self.stored_objects.values() {
            w.bytes(obj);
        }
        w.u64(self.receivable);
        w.into_inner()
    }

    impl_any!();
}
