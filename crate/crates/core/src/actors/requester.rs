use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use super::{impl_any, Actor, ActorError, Outbound, ProviderNode, Reaction};
use crate::codec::{Id, Writer};
use crate::crypto::{self, Digest, Directory, KeyPair, PublicKey};
use crate::messages::{
    decode, encode, AuthDecision, AuthorizationRequest, Message, OrderInfo, PaymentInfo, PriceQuote, PriceRequest,
    QuoteRefusal, RedeemRequest, RedeemResponse, ServiceGrant, ServiceInvocation, Signed, Ticket, UsageDescriptor,
};

/// Which account vouches for the requester, and how much the trust manager
/// may authorize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentTerms {
    pub account_provider_id: String,
    pub account_ref: String,
    pub limit: u64,
}

/// What a scripted requester does when the flow reaches it.
#[derive(Debug, Clone)]
pub struct RequesterPlan {
    pub provider_id: String,
    pub trust_manager_id: String,
    pub terms: PaymentTerms,
    pub objects: Vec<Vec<u8>>,
    /// Refuse locally when the limit is below the quoted price. Off lets the
    /// trust manager make the call.
    pub precheck_limit: bool,
    pub redeem_on_grant: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequesterEvents {
    pub quotes_refused: usize,
    pub authorizations_sent: usize,
    pub approvals: usize,
    pub denials: usize,
    pub grants_rejected: usize,
    pub redemption_failures: usize,
}

#[derive(Debug)]
pub struct RequesterNode {
    identity: KeyPair,
    directory: Directory,
    rng: ChaCha20Rng,
    plan: Option<RequesterPlan>,
    price_requests: BTreeMap<Id, UsageDescriptor>,
    known_quotes: BTreeMap<Id, PriceQuote>,
    pending_auths: BTreeMap<Id, (OrderInfo, PaymentInfo)>,
    invoked: BTreeMap<Id, Vec<Digest>>,
    grants: Vec<ServiceGrant>,
    unredeemed_tickets: BTreeMap<Id, Ticket>,
    retrieved: BTreeMap<Id, Vec<u8>>,
    events: RequesterEvents,
}

impl RequesterNode {
    pub fn new(identity: KeyPair, directory: Directory, rng: ChaCha20Rng) -> Self {
        RequesterNode {
            identity,
            directory,
            rng,
            plan: None,
            price_requests: BTreeMap::new(),
            known_quotes: BTreeMap::new(),
            pending_auths: BTreeMap::new(),
            invoked: BTreeMap::new(),
            grants: Vec::new(),
            unredeemed_tickets: BTreeMap::new(),
            retrieved: BTreeMap::new(),
            events: RequesterEvents::default(),
        }
    }

    pub fn with_plan(mut self, plan: RequesterPlan) -> Self {
        self.plan = Some(plan);
        self
    }

    pub fn events(&self) -> &RequesterEvents {
        &self.events
    }

    pub fn known_quotes(&self) -> &BTreeMap<Id, PriceQuote> {
        &self.known_quotes
    }

    pub fn grants(&self) -> &[ServiceGrant] {
        &self.grants
    }

    pub fn unredeemed_tickets(&self) -> impl Iterator<Item = &Ticket> {
        self.unredeemed_tickets.values()
    }

    pub fn retrieved(&self) -> &BTreeMap<Id, Vec<u8>> {
        &self.retrieved
    }

    pub fn request_price(&mut self, usage: UsageDescriptor) -> Result<PriceRequest, ActorError> {
        use crate::codec::Body;
        usage.check().map_err(ActorError::InvalidInput)?;
        let nonce = loop {
            let n = Id::random(&mut self.rng);
            if !self.price_requests.contains_key(&n) {
                break n;
            }
        };
        self.price_requests.insert(nonce, usage.clone());
        Ok(PriceRequest { requester_id: self.identity.subject_id().to_owned(), usage, nonce })
    }

    fn verify_quote(&self, quote: &PriceQuote, now: u64) -> Result<(), ActorError> {
        let signer = &quote.provider_signature.signer_id;
        if !self.directory.verify_from(signer, &quote.signing_bytes(), &quote.provider_signature) {
            return Err(ActorError::Untrusted("price quote signature"));
        }
        if now > quote.expiry {
            return Err(ActorError::Expired);
        }
        Ok(())
    }

    /// Builds the dual-signed authorization for a quote, refusing up front if
    /// the limit cannot cover the price.
    pub fn build_authorization(
        &mut self,
        quote: &PriceQuote,
        terms: &PaymentTerms,
        tm_id: &str,
        tm_public_key: &PublicKey,
        now: u64,
    ) -> Result<AuthorizationRequest, ActorError> {
        self.authorize(quote, terms, tm_id, tm_public_key, now, true)
    }

    fn authorize(
        &mut self,
        quote: &PriceQuote,
        terms: &PaymentTerms,
        tm_id: &str,
        tm_public_key: &PublicKey,
        now: u64,
        precheck_limit: bool,
    ) -> Result<AuthorizationRequest, ActorError> {
        self.verify_quote(quote, now)?;
        if precheck_limit && terms.limit < quote.price {
            return Err(ActorError::InvalidInput("limit below quoted price"));
        }
        let order_info = OrderInfo {
            quote_id: quote.quote_id,
            usage: quote.usage.clone(),
            requester_id: self.identity.subject_id().to_owned(),
            order_nonce: Id::random(&mut self.rng),
        };
        let payment_info = PaymentInfo {
            account_provider_id: terms.account_provider_id.clone(),
            account_ref: terms.account_ref.clone(),
            authorized_limit: terms.limit,
            payment_nonce: Id::random(&mut self.rng),
        };
        let oi_bytes = encode(&order_info).map_err(|_| ActorError::InvalidInput("order info"))?;
        let pi_bytes = encode(&payment_info).map_err(|_| ActorError::InvalidInput("payment terms"))?;
        let payment_envelope = crypto::seal(tm_public_key, tm_id, &pi_bytes, &mut self.rng)?;
        let dual = crypto::make_dual_signature(&self.identity, &oi_bytes, &pi_bytes)?;
        self.known_quotes.insert(quote.quote_id, quote.clone());
        self.pending_auths.insert(order_info.order_nonce, (order_info.clone(), payment_info));
        Ok(AuthorizationRequest { order_info, payment_envelope, pi_digest: crypto::hash(&pi_bytes), dual })
    }

    pub fn invocation(&mut self, order_nonce: Id, objects: Vec<Vec<u8>>) -> Result<ServiceInvocation, ActorError> {
        let mut inv = ServiceInvocation {
            order_nonce,
            objects,
            requester_signature: crypto::Signature { bytes: Vec::new(), signer_id: String::new() },
        };
        inv.requester_signature = crypto::sign(&self.identity, &inv.signing_bytes())?;
        self.invoked.insert(order_nonce, inv.objects.iter().map(|o| crypto::hash(o)).collect());
        Ok(inv)
    }

    /// Checks a grant against the objects sent for its order.
    pub fn accept_grant(&mut self, grant: ServiceGrant, provider_id: &str) -> Result<(), ActorError> {
        if !self.directory.verify_from(provider_id, &grant.signing_bytes(), &grant.provider_signature) {
            return Err(ActorError::Untrusted("grant signature"));
        }
        let sent = self.invoked.get(&grant.grant_id).ok_or(ActorError::UnknownReference("grant for unknown order"))?;
        let digests: Vec<Digest> = grant.tickets.iter().map(|t| t.object_digest).collect();
        if &digests != sent {
            return Err(ActorError::Untrusted("tickets do not match stored objects"));
        }
        self.invoked.remove(&grant.grant_id);
        for t in &grant.tickets {
            self.unredeemed_tickets.insert(t.ticket_id, t.clone());
        }
        self.grants.push(grant);
        Ok(())
    }

    pub fn redeem_request(&self, ticket_id: Id) -> Result<RedeemRequest, ActorError> {
        if !self.unredeemed_tickets.contains_key(&ticket_id) {
            return Err(ActorError::Redemption("ticket not held or already redeemed"));
        }
        Ok(RedeemRequest { ticket_id })
    }

    pub fn handle_redeem_response(&mut self, resp: RedeemResponse) -> Result<Vec<u8>, ActorError> {
        let ticket =
            self.unredeemed_tickets.get(&resp.ticket_id).ok_or(ActorError::Redemption("ticket not outstanding"))?;
        let object = resp.object.ok_or(ActorError::Redemption("provider refused ticket"))?;
        if crypto::hash(&object) != ticket.object_digest {
            return Err(ActorError::Redemption("object does not match ticket digest"));
        }
        self.unredeemed_tickets.remove(&resp.ticket_id);
        self.retrieved.insert(resp.ticket_id, object.clone());
        Ok(object)
    }

    /// Redeems a ticket directly against a provider handle.
    pub fn redeem_ticket(&mut self, sp: &mut ProviderNode, ticket_id: Id, now: u64) -> Result<Vec<u8>, ActorError> {
        let req = self.redeem_request(ticket_id)?;
        let reaction = sp.deliver(now, self.identity.subject_id(), &encode(&req)?);
        let reply = reaction
            .outbound
            .into_iter()
            .find(|o| o.to == self.identity.subject_id())
            .ok_or(ActorError::Redemption("no reply"))?;
        self.handle_redeem_response(decode(&reply.bytes)?)
    }

    fn on_quote(&mut self, quote: PriceQuote, now: u64) -> Result<Vec<Outbound>, ActorError> {
        self.verify_quote(&quote, now)?;
        let nonce = self
            .price_requests
            .iter()
            .find(|(_, u)| **u == quote.usage)
            .map(|(n, _)| *n)
            .ok_or(ActorError::UnknownReference("quote for usage never requested"))?;
        self.price_requests.remove(&nonce);
        let Some(plan) = self.plan.clone() else {
            self.known_quotes.insert(quote.quote_id, quote);
            return Ok(Vec::new());
        };
        let tm_key = self
            .directory
            .get(&plan.trust_manager_id)
            .cloned()
            .ok_or(ActorError::UnknownReference("trust manager not in directory"))?;
        let auth = self.authorize(&quote, &plan.terms, &plan.trust_manager_id, &tm_key, now, plan.precheck_limit)?;
        self.events.authorizations_sent += 1;
        Ok(vec![Outbound::encode(&plan.provider_id, &auth)?])
    }

    fn on_decision(&mut self, from: &str, d: AuthDecision) -> Result<Vec<Outbound>, ActorError> {
        if self.pending_auths.remove(&d.order_nonce).is_none() {
            return Err(ActorError::UnknownReference("decision for unknown order"));
        }
        if !d.approved {
            self.events.denials += 1;
            return Ok(Vec::new());
        }
        self.events.approvals += 1;
        let objects = self.plan.as_ref().map(|p| p.objects.clone()).unwrap_or_default();
        if objects.is_empty() {
            return Ok(Vec::new());
        }
        let inv = self.invocation(d.order_nonce, objects)?;
        Ok(vec![Outbound::encode(from, &inv)?])
    }

    fn on_grant(&mut self, from: &str, grant: ServiceGrant) -> Result<Vec<Outbound>, ActorError> {
        let tickets: Vec<Id> = grant.tickets.iter().map(|t| t.ticket_id).collect();
        if let Err(e) = self.accept_grant(grant, from) {
            self.events.grants_rejected += 1;
            return Err(e);
        }
        if !self.plan.as_ref().is_some_and(|p| p.redeem_on_grant) {
            return Ok(Vec::new());
        }
        tickets.into_iter().map(|ticket_id| Outbound::encode(from, &RedeemRequest { ticket_id })).collect()
    }
}

impl Actor for RequesterNode {
    fn id(&self) -> &str {
        self.identity.subject_id()
    }

    fn deliver(&mut self, now: u64, from: &str, bytes: &[u8]) -> Reaction {
        let msg = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => return Reaction::rejected(e.into(), Vec::new()),
        };
        let result = match msg {
            Message::PriceQuote(q) => self.on_quote(q, now),
            Message::QuoteRefusal(QuoteRefusal { request_nonce }) => {
                if self.price_requests.remove(&request_nonce).is_some() {
                    self.events.quotes_refused += 1;
                    Ok(Vec::new())
                } else {
                    Err(ActorError::UnknownReference("refusal for unknown request"))
                }
            }
            Message::AuthDecision(d) => self.on_decision(from, d),
            Message::ServiceGrant(g) => self.on_grant(from, g),
            Message::RedeemResponse(r) => self.handle_redeem_response(r).map(|_| Vec::new()).inspect_err(|_| {
                self.events.redemption_failures += 1;
            }),
            other => Err(ActorError::UnexpectedMessage(other.message_type())),
        };
        Reaction::from_result(result)
    }

    fn stored_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for q in self.known_quotes.values() {
            w.nested(q);
        }
        for (o, p) in self.pending_auths.values() {
            w.nested(o);
            w.nested(p);
        }
        for g in &self.grants {
            w.nested(g);
        }
        for obj in self.retrieved.values() {
            w.bytes(obj);
        }
        w.into_inner()
    }

    impl_any!();
}
