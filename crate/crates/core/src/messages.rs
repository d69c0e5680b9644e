//! Protocol messages and their wire encoding.
//!
//! Every top-level message is a one-byte [`MessageType`] tag followed by the
//! body layout described in [`crate::codec`]. Signed messages sign the tag
//! plus every field declared before the signature.

use std::fmt;

use crate::codec::{self, Body, DecodeError, EncodeError, Id, Reader, Writer};
use crate::crypto::{Digest, DualSignature, SealedEnvelope, Signature};

macro_rules! message_types {
    ($($variant:ident = $tag:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum MessageType {
            $($variant = $tag),*
        }

        impl MessageType {
            pub const ALL: &'static [MessageType] = &[$(MessageType::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(MessageType::$variant => stringify!($variant)),*
                }
            }

            pub fn tag(self) -> u8 {
                self as u8
            }

            pub fn from_tag(tag: u8) -> Option<Self> {
                match tag {
                    $($tag => Some(MessageType::$variant),)*
                    _ => None,
                }
            }
        }

        /// Any decoded top-level message.
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub enum Message {
            $($variant($variant)),*
        }

        impl Message {
            pub fn message_type(&self) -> MessageType {
                match self {
                    $(Message::$variant(_) => MessageType::$variant),*
                }
            }

            pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
                match self {
                    $(Message::$variant(m) => encode(m)),*
                }
            }

            /// Decodes any message, dispatching on the leading tag.
            pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
                let tag = *bytes.first().ok_or(DecodeError::Empty)?;
                match MessageType::from_tag(tag) {
                    $(Some(MessageType::$variant) => decode::<$variant>(bytes).map(Message::$variant),)*
                    None => Err(DecodeError::UnknownType { tag }),
                }
            }
        }

        $(
            impl WireMessage for $variant {
                const TYPE: MessageType = MessageType::$variant;
            }

            impl From<$variant> for Message {
                fn from(m: $variant) -> Message {
                    Message::$variant(m)
                }
            }
        )*
    };
}

message_types! {
    UsageDescriptor = 0x01,
    PriceRequest = 0x02,
    PriceQuote = 0x03,
    QuoteRefusal = 0x04,
    OrderInfo = 0x05,
    PaymentInfo = 0x06,
    AuthorizationRequest = 0x07,
    AuthorizeAndHold = 0x08,
    CaptureToken = 0x09,
    AuthOutcome = 0x0a,
    AuthDecision = 0x0b,
    ServiceInvocation = 0x0c,
    Ticket = 0x0d,
    ServiceGrant = 0x0e,
    RedeemRequest = 0x0f,
    RedeemResponse = 0x10,
    CaptureRequest = 0x11,
    CaptureResponse = 0x12,
    HoldRequest = 0x13,
    HoldResponse = 0x14,
    SettleRequest = 0x15,
    SettleResponse = 0x16,
    VoidRequest = 0x17,
    ReleaseRequest = 0x18,
    ReleaseResponse = 0x19,
    TranscriptRecord = 0x20,
    LedgerSnapshot = 0x21,
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MessageType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MessageType::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown message type {s:?}"))
    }
}

pub trait WireMessage: Body {
    const TYPE: MessageType;
}

pub fn encode<T: WireMessage>(m: &T) -> Result<Vec<u8>, EncodeError> {
    if let Err(what) = m.check() {
        return Err(EncodeError::Invariant { type_name: T::NAME, what });
    }
    let mut w = Writer::with_tag(T::TYPE as u8);
    m.encode_body(&mut w);
    w.finish()
}

/// Strict decode of one message of a known type.
pub fn decode<T: WireMessage>(bytes: &[u8]) -> Result<T, DecodeError> {
    let tag = *bytes.first().ok_or(DecodeError::Empty)?;
    match MessageType::from_tag(tag) {
        None => return Err(DecodeError::UnknownType { tag }),
        Some(t) if t != T::TYPE => return Err(DecodeError::TypeMismatch { expected: T::TYPE.name(), found: t.name() }),
        Some(_) => {}
    }
    let mut r = Reader::new(&bytes[1..]);
    let v = T::decode_body(&mut r).map_err(|e| shift(e, 1))?;
    r.finish().map_err(|e| shift(e, 1))?;
    v.check().map_err(|what| DecodeError::Invariant { offset: 1, what })?;
    Ok(v)
}

/// Decode with the expected type given at runtime.
pub fn decode_as(bytes: &[u8], expected: MessageType) -> Result<Message, DecodeError> {
    let tag = *bytes.first().ok_or(DecodeError::Empty)?;
    match MessageType::from_tag(tag) {
        Some(t) if t != expected => Err(DecodeError::TypeMismatch { expected: expected.name(), found: t.name() }),
        _ => Message::decode(bytes),
    }
}

/// The type tag of an encoded message, if it is a known one.
pub fn peek_type(bytes: &[u8]) -> Option<MessageType> {
    bytes.first().copied().and_then(MessageType::from_tag)
}

fn shift(e: DecodeError, by: usize) -> DecodeError {
    match e {
        DecodeError::Truncated { offset, need } => DecodeError::Truncated { offset: offset + by, need },
        DecodeError::TrailingBytes { offset, count } => DecodeError::TrailingBytes { offset: offset + by, count },
        DecodeError::Malformed { offset, what } => DecodeError::Malformed { offset: offset + by, what },
        DecodeError::Invariant { offset, what } => DecodeError::Invariant { offset: offset + by, what },
        other => other,
    }
}

/// Messages carrying a signature over their tag and preceding fields.
pub trait Signed: WireMessage {
    fn encode_unsigned(&self, w: &mut Writer);
    fn signature(&self) -> &Signature;

    fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(Self::TYPE as u8);
        self.encode_unsigned(&mut w);
        w.into_inner()
    }
}

macro_rules! signed_body {
    ($ty:ident, $sig:ident) => {
        impl Signed for $ty {
            fn encode_unsigned(&self, w: &mut Writer) {
                self.write_unsigned(w);
            }
            fn signature(&self) -> &Signature {
                &self.$sig
            }
        }
    };
}

fn non_empty(s: &str, what: &'static str) -> Result<(), &'static str> {
    if s.is_empty() {
        Err(what)
    } else {
        Ok(())
    }
}

// Crypto values nest inside messages but never travel on their own.

impl Body for Signature {
    const NAME: &'static str = "Signature";

    fn encode_body(&self, w: &mut Writer) {
        w.bytes(&self.bytes);
        w.str(&self.signer_id);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Signature { bytes: r.bytes()?, signer_id: r.str()? })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.signer_id, "signer_id is empty")
    }
}

impl Body for SealedEnvelope {
    const NAME: &'static str = "SealedEnvelope";

    fn encode_body(&self, w: &mut Writer) {
        w.str(&self.recipient_id);
        w.bytes(&self.ciphertext);
        w.bytes(&self.wrapped_key);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(SealedEnvelope { recipient_id: r.str()?, ciphertext: r.bytes()?, wrapped_key: r.bytes()? })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.recipient_id, "recipient_id is empty")
    }
}

impl Body for DualSignature {
    const NAME: &'static str = "DualSignature";

    fn encode_body(&self, w: &mut Writer) {
        w.digest(&self.oi_digest);
        w.digest(&self.pi_digest);
        w.nested(&self.signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(DualSignature { oi_digest: r.digest()?, pi_digest: r.digest()?, signature: r.nested()? })
    }
}

/// Reason a request was refused. The numeric codes are part of the wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum DenialReason {
    OverLimit = 1,
    InsufficientCredit = 2,
    BadSignature = 3,
    Replay = 4,
    ExpiredQuote = 5,
    UnknownAccount = 6,
}

impl DenialReason {
    pub const ALL: [DenialReason; 6] = [
        DenialReason::OverLimit,
        DenialReason::InsufficientCredit,
        DenialReason::BadSignature,
        DenialReason::Replay,
        DenialReason::ExpiredQuote,
        DenialReason::UnknownAccount,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        DenialReason::ALL.into_iter().find(|r| r.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DenialReason::OverLimit => "OVER_LIMIT",
            DenialReason::InsufficientCredit => "INSUFFICIENT_CREDIT",
            DenialReason::BadSignature => "BAD_SIGNATURE",
            DenialReason::Replay => "REPLAY",
            DenialReason::ExpiredQuote => "EXPIRED_QUOTE",
            DenialReason::UnknownAccount => "UNKNOWN_ACCOUNT",
        }
    }
}

impl fmt::Display for DenialReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn write_reason(w: &mut Writer, r: Option<DenialReason>) {
    w.opt_u8(r.map(DenialReason::code));
}

fn read_reason(r: &mut Reader<'_>) -> Result<Option<DenialReason>, DecodeError> {
    let at = r.offset() + 4;
    match r.opt_u8()? {
        None => Ok(None),
        Some(code) => DenialReason::from_code(code)
            .map(Some)
            .ok_or(DecodeError::Malformed { offset: at, what: "unknown denial code" }),
    }
}

/// Outcome invariant shared by the request/response pairs: success carries no
/// reason, failure carries one.
fn outcome_consistent(ok: bool, reason: Option<DenialReason>) -> Result<(), &'static str> {
    match (ok, reason) {
        (true, None) | (false, Some(_)) => Ok(()),
        (true, Some(_)) => Err("success must not carry a reason"),
        (false, None) => Err("failure must carry a reason"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UsageDescriptor {
    pub service_id: String,
    pub operation: String,
    pub quantity: u64,
    pub unit: String,
}

impl UsageDescriptor {
    pub fn new(service_id: &str, operation: &str, quantity: u64, unit: &str) -> Self {
        UsageDescriptor {
            service_id: service_id.to_owned(),
            operation: operation.to_owned(),
            quantity,
            unit: unit.to_owned(),
        }
    }
}

impl Body for UsageDescriptor {
    const NAME: &'static str = "UsageDescriptor";

    fn encode_body(&self, w: &mut Writer) {
        w.str(&self.service_id);
        w.str(&self.operation);
        w.u64(self.quantity);
        w.str(&self.unit);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(UsageDescriptor { service_id: r.str()?, operation: r.str()?, quantity: r.u64()?, unit: r.str()? })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.service_id, "service_id is empty")?;
        non_empty(&self.operation, "operation is empty")?;
        non_empty(&self.unit, "unit is empty")?;
        if self.quantity == 0 {
            return Err("quantity must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceRequest {
    pub requester_id: String,
    pub usage: UsageDescriptor,
    pub nonce: Id,
}

impl Body for PriceRequest {
    const NAME: &'static str = "PriceRequest";

    fn encode_body(&self, w: &mut Writer) {
        w.str(&self.requester_id);
        w.nested(&self.usage);
        w.id(&self.nonce);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(PriceRequest { requester_id: r.str()?, usage: r.nested()?, nonce: r.id()? })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.requester_id, "requester_id is empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceQuote {
    pub quote_id: Id,
    pub usage: UsageDescriptor,
    /// Minor currency units.
    pub price: u64,
    /// Last logical tick at which the quote may be used.
    pub expiry: u64,
    pub provider_signature: Signature,
}

impl PriceQuote {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.quote_id);
        w.nested(&self.usage);
        w.u64(self.price);
        w.u64(self.expiry);
    }
}
signed_body!(PriceQuote, provider_signature);

impl Body for PriceQuote {
    const NAME: &'static str = "PriceQuote";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.provider_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(PriceQuote {
            quote_id: r.id()?,
            usage: r.nested()?,
            price: r.u64()?,
            expiry: r.u64()?,
            provider_signature: r.nested()?,
        })
    }
}

/// Sent instead of a quote when the usage cannot be priced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuoteRefusal {
    pub request_nonce: Id,
}

impl Body for QuoteRefusal {
    const NAME: &'static str = "QuoteRefusal";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.request_nonce);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(QuoteRefusal { request_nonce: r.id()? })
    }
}

/// The half of an authorization only the service provider reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderInfo {
    pub quote_id: Id,
    pub usage: UsageDescriptor,
    pub requester_id: String,
    pub order_nonce: Id,
}

impl Body for OrderInfo {
    const NAME: &'static str = "OrderInfo";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.quote_id);
        w.nested(&self.usage);
        w.str(&self.requester_id);
        w.id(&self.order_nonce);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(OrderInfo { quote_id: r.id()?, usage: r.nested()?, requester_id: r.str()?, order_nonce: r.id()? })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.requester_id, "requester_id is empty")
    }
}

/// The half of an authorization only the trust manager reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentInfo {
    pub account_provider_id: String,
    pub account_ref: String,
    pub authorized_limit: u64,
    pub payment_nonce: Id,
}

impl Body for PaymentInfo {
    const NAME: &'static str = "PaymentInfo";

    fn encode_body(&self, w: &mut Writer) {
        w.str(&self.account_provider_id);
        w.str(&self.account_ref);
        w.u64(self.authorized_limit);
        w.id(&self.payment_nonce);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(PaymentInfo {
            account_provider_id: r.str()?,
            account_ref: r.str()?,
            authorized_limit: r.u64()?,
            payment_nonce: r.id()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.account_provider_id, "account_provider_id is empty")?;
        non_empty(&self.account_ref, "account_ref is empty")?;
        if self.authorized_limit == 0 {
            return Err("authorized_limit must be positive");
        }
        Ok(())
    }
}

/// Requester to provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizationRequest {
    pub order_info: OrderInfo,
    pub payment_envelope: SealedEnvelope,
    pub pi_digest: Digest,
    pub dual: DualSignature,
}

impl Body for AuthorizationRequest {
    const NAME: &'static str = "AuthorizationRequest";

    fn encode_body(&self, w: &mut Writer) {
        w.nested(&self.order_info);
        w.nested(&self.payment_envelope);
        w.digest(&self.pi_digest);
        w.nested(&self.dual);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AuthorizationRequest {
            order_info: r.nested()?,
            payment_envelope: r.nested()?,
            pi_digest: r.digest()?,
            dual: r.nested()?,
        })
    }
}

/// Provider to trust manager. Carries no order information in clear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizeAndHold {
    pub payment_envelope: SealedEnvelope,
    pub oi_digest: Digest,
    pub dual: DualSignature,
    pub charge_amount: u64,
    pub provider_id: String,
    pub provider_signature: Signature,
}

impl AuthorizeAndHold {
    fn write_unsigned(&self, w: &mut Writer) {
        w.nested(&self.payment_envelope);
        w.digest(&self.oi_digest);
        w.nested(&self.dual);
        w.u64(self.charge_amount);
        w.str(&self.provider_id);
    }
}
signed_body!(AuthorizeAndHold, provider_signature);

impl Body for AuthorizeAndHold {
    const NAME: &'static str = "AuthorizeAndHold";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.provider_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AuthorizeAndHold {
            payment_envelope: r.nested()?,
            oi_digest: r.digest()?,
            dual: r.nested()?,
            charge_amount: r.u64()?,
            provider_id: r.str()?,
            provider_signature: r.nested()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.provider_id, "provider_id is empty")?;
        if self.charge_amount == 0 {
            return Err("charge_amount must be positive");
        }
        Ok(())
    }
}

/// Trust-manager-signed, single-use claim on a hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureToken {
    pub token_id: Id,
    pub provider_id: String,
    pub charge_amount: u64,
    pub account_provider_id: String,
    pub hold_ref: Id,
    pub tm_signature: Signature,
}

impl CaptureToken {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.token_id);
        w.str(&self.provider_id);
        w.u64(self.charge_amount);
        w.str(&self.account_provider_id);
        w.id(&self.hold_ref);
    }
}
signed_body!(CaptureToken, tm_signature);

impl Body for CaptureToken {
    const NAME: &'static str = "CaptureToken";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.tm_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(CaptureToken {
            token_id: r.id()?,
            provider_id: r.str()?,
            charge_amount: r.u64()?,
            account_provider_id: r.str()?,
            hold_ref: r.id()?,
            tm_signature: r.nested()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        non_empty(&self.provider_id, "provider_id is empty")?;
        non_empty(&self.account_provider_id, "account_provider_id is empty")?;
        if self.charge_amount == 0 {
            return Err("charge_amount must be positive");
        }
        Ok(())
    }
}

/// Trust manager to provider. `request_ref` echoes the order digest of the
/// `AuthorizeAndHold` it answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthOutcome {
    pub request_ref: Digest,
    pub approved: bool,
    pub token: Option<CaptureToken>,
    pub reason: Option<DenialReason>,
}

impl AuthOutcome {
    pub fn approved(request_ref: Digest, token: CaptureToken) -> Self {
        AuthOutcome { request_ref, approved: true, token: Some(token), reason: None }
    }

    pub fn denied(request_ref: Digest, reason: DenialReason) -> Self {
        AuthOutcome { request_ref, approved: false, token: None, reason: Some(reason) }
    }
}

impl Body for AuthOutcome {
    const NAME: &'static str = "AuthOutcome";

    fn encode_body(&self, w: &mut Writer) {
        w.digest(&self.request_ref);
        w.bool(self.approved);
        w.opt_nested(self.token.as_ref());
        write_reason(w, self.reason);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AuthOutcome {
            request_ref: r.digest()?,
            approved: r.bool()?,
            token: r.opt_nested()?,
            reason: read_reason(r)?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.approved != self.token.is_some() {
            return Err("approved must coincide with a token");
        }
        outcome_consistent(self.approved, self.reason)
    }
}

/// Provider to requester: approved or denied, without the trust manager's reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthDecision {
    pub order_nonce: Id,
    pub approved: bool,
}

impl Body for AuthDecision {
    const NAME: &'static str = "AuthDecision";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.order_nonce);
        w.bool(self.approved);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AuthDecision { order_nonce: r.id()?, approved: r.bool()? })
    }
}

/// Requester to provider after approval: the objects to store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceInvocation {
    pub order_nonce: Id,
    pub objects: Vec<Vec<u8>>,
    pub requester_signature: Signature,
}

impl ServiceInvocation {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.order_nonce);
        w.byte_list(&self.objects);
    }
}
signed_body!(ServiceInvocation, requester_signature);

impl Body for ServiceInvocation {
    const NAME: &'static str = "ServiceInvocation";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.requester_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ServiceInvocation { order_nonce: r.id()?, objects: r.byte_list()?, requester_signature: r.nested()? })
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.objects.is_empty() {
            return Err("no objects");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ticket {
    pub ticket_id: Id,
    pub object_digest: Digest,
}

impl Body for Ticket {
    const NAME: &'static str = "Ticket";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.ticket_id);
        w.digest(&self.object_digest);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Ticket { ticket_id: r.id()?, object_digest: r.digest()? })
    }
}

/// One ticket per stored object, in the order the objects were sent.
/// `grant_id` equals the order nonce it answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceGrant {
    pub grant_id: Id,
    pub tickets: Vec<Ticket>,
    pub provider_signature: Signature,
}

impl ServiceGrant {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.grant_id);
        w.list(&self.tickets);
    }
}
signed_body!(ServiceGrant, provider_signature);

impl Body for ServiceGrant {
    const NAME: &'static str = "ServiceGrant";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.provider_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ServiceGrant { grant_id: r.id()?, tickets: r.list()?, provider_signature: r.nested()? })
    }
}

/// Tickets are bearer instruments, so redemption is unsigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedeemRequest {
    pub ticket_id: Id,
}

impl Body for RedeemRequest {
    const NAME: &'static str = "RedeemRequest";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.ticket_id);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(RedeemRequest { ticket_id: r.id()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedeemResponse {
    pub ticket_id: Id,
    /// `None` if the ticket is unknown or already redeemed.
    pub object: Option<Vec<u8>>,
}

impl Body for RedeemResponse {
    const NAME: &'static str = "RedeemResponse";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.ticket_id);
        w.opt_bytes(self.object.as_deref());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(RedeemResponse { ticket_id: r.id()?, object: r.opt_bytes()? })
    }
}

/// Provider to trust manager: redeem a token for credits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRequest {
    pub token: CaptureToken,
    pub provider_signature: Signature,
}

impl CaptureRequest {
    fn write_unsigned(&self, w: &mut Writer) {
        w.nested(&self.token);
    }
}
signed_body!(CaptureRequest, provider_signature);

impl Body for CaptureRequest {
    const NAME: &'static str = "CaptureRequest";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.provider_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(CaptureRequest { token: r.nested()?, provider_signature: r.nested()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureResponse {
    pub token_id: Id,
    pub settled: bool,
    pub reason: Option<DenialReason>,
    pub tm_signature: Signature,
}

impl CaptureResponse {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.token_id);
        w.bool(self.settled);
        write_reason(w, self.reason);
    }
}
signed_body!(CaptureResponse, tm_signature);

impl Body for CaptureResponse {
    const NAME: &'static str = "CaptureResponse";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.tm_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(CaptureResponse {
            token_id: r.id()?,
            settled: r.bool()?,
            reason: read_reason(r)?,
            tm_signature: r.nested()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        outcome_consistent(self.settled, self.reason)
    }
}

/// Trust manager to account provider. Names the account by digest only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldRequest {
    pub request_id: Id,
    pub account_ref_digest: Digest,
    pub amount: u64,
    pub tm_signature: Signature,
}

impl HoldRequest {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.request_id);
        w.digest(&self.account_ref_digest);
        w.u64(self.amount);
    }
}
signed_body!(HoldRequest, tm_signature);

impl Body for HoldRequest {
    const NAME: &'static str = "HoldRequest";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.tm_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(HoldRequest {
            request_id: r.id()?,
            account_ref_digest: r.digest()?,
            amount: r.u64()?,
            tm_signature: r.nested()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.amount == 0 {
            return Err("amount must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldResponse {
    pub request_id: Id,
    pub accepted: bool,
    pub hold_ref: Option<Id>,
    pub reason: Option<DenialReason>,
    pub ap_signature: Signature,
}

impl HoldResponse {
    fn write_unsigned(&self, w: &mut Writer) {
        w.id(&self.request_id);
        w.bool(self.accepted);
        w.opt_id(self.hold_ref.as_ref());
        write_reason(w, self.reason);
    }
}
signed_body!(HoldResponse, ap_signature);

impl Body for HoldResponse {
    const NAME: &'static str = "HoldResponse";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.ap_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(HoldResponse {
            request_id: r.id()?,
            accepted: r.bool()?,
            hold_ref: r.opt_id()?,
            reason: read_reason(r)?,
            ap_signature: r.nested()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.accepted != self.hold_ref.is_some() {
            return Err("accepted must coincide with a hold_ref");
        }
        outcome_consistent(self.accepted, self.reason)
    }
}

macro_rules! hold_command {
    ($ty:ident, $name:literal) => {
        /// Trust manager to account provider, acting on an existing hold.
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $ty {
            pub request_id: Id,
            pub hold_ref: Id,
            pub tm_signature: Signature,
        }

        impl $ty {
            fn write_unsigned(&self, w: &mut Writer) {
                w.id(&self.request_id);
                w.id(&self.hold_ref);
            }
        }
        signed_body!($ty, tm_signature);

        impl Body for $ty {
            const NAME: &'static str = $name;

            fn encode_body(&self, w: &mut Writer) {
                self.write_unsigned(w);
                w.nested(&self.tm_signature);
            }

            fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
                Ok($ty { request_id: r.id()?, hold_ref: r.id()?, tm_signature: r.nested()? })
            }
        }
    };
}

macro_rules! hold_result {
    ($ty:ident, $name:literal) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $ty {
            pub request_id: Id,
            pub done: bool,
            pub amount: u64,
            pub reason: Option<DenialReason>,
            pub ap_signature: Signature,
        }

        impl $ty {
            fn write_unsigned(&self, w: &mut Writer) {
                w.id(&self.request_id);
                w.bool(self.done);
                w.u64(self.amount);
                write_reason(w, self.reason);
            }
        }
        signed_body!($ty, ap_signature);

        impl Body for $ty {
            const NAME: &'static str = $name;

            fn encode_body(&self, w: &mut Writer) {
                self.write_unsigned(w);
                w.nested(&self.ap_signature);
            }

            fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
                Ok($ty {
                    request_id: r.id()?,
                    done: r.bool()?,
                    amount: r.u64()?,
                    reason: read_reason(r)?,
                    ap_signature: r.nested()?,
                })
            }

            fn check(&self) -> Result<(), &'static str> {
                outcome_consistent(self.done, self.reason)
            }
        }
    };
}

hold_command!(SettleRequest, "SettleRequest");
hold_command!(ReleaseRequest, "ReleaseRequest");
hold_result!(SettleResponse, "SettleResponse");
hold_result!(ReleaseResponse, "ReleaseResponse");

/// Provider to trust manager: give back a token it will not use, so the hold
/// behind it is released.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoidRequest {
    pub token: CaptureToken,
    pub provider_signature: Signature,
}

impl VoidRequest {
    fn write_unsigned(&self, w: &mut Writer) {
        w.nested(&self.token);
    }
}
signed_body!(VoidRequest, provider_signature);

impl Body for VoidRequest {
    const NAME: &'static str = "VoidRequest";

    fn encode_body(&self, w: &mut Writer) {
        self.write_unsigned(w);
        w.nested(&self.provider_signature);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(VoidRequest { token: r.nested()?, provider_signature: r.nested()? })
    }
}

/// What the adversary did to a delivery. Codes are part of the transcript format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AdversaryAction {
    /// Delivered untouched.
    None = 0,
    /// Delivered untouched; the adversary kept a copy.
    Observed = 1,
    /// Delivered with bytes replaced by the adversary.
    Tampered = 2,
    /// A duplicate injected by the adversary.
    Replayed = 3,
    /// Withheld from the recipient.
    Dropped = 4,
    /// Recipient not registered; dropped by the scheduler.
    Undeliverable = 5,
}

impl AdversaryAction {
    pub fn from_code(code: u8) -> Option<Self> {
        use AdversaryAction::*;
        [None, Observed, Tampered, Replayed, Dropped, Undeliverable].into_iter().find(|a| *a as u8 == code)
    }

    pub fn delivered(self) -> bool {
        !matches!(self, AdversaryAction::Dropped | AdversaryAction::Undeliverable)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryAction::None => "none",
            AdversaryAction::Observed => "observed",
            AdversaryAction::Tampered => "tampered",
            AdversaryAction::Replayed => "replayed",
            AdversaryAction::Dropped => "dropped",
            AdversaryAction::Undeliverable => "undeliverable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub tick: u64,
    pub from_id: String,
    pub to_id: String,
    pub bytes: Vec<u8>,
    pub adversary_action: AdversaryAction,
}

impl Body for TranscriptRecord {
    const NAME: &'static str = "TranscriptRecord";

    fn encode_body(&self, w: &mut Writer) {
        w.u64(self.tick);
        w.str(&self.from_id);
        w.str(&self.to_id);
        w.bytes(&self.bytes);
        w.u8(self.adversary_action as u8);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let tick = r.u64()?;
        let from_id = r.str()?;
        let to_id = r.str()?;
        let bytes = r.bytes()?;
        let at = r.offset() + 4;
        let adversary_action = AdversaryAction::from_code(r.u8()?)
            .ok_or(DecodeError::Malformed { offset: at, what: "unknown adversary action" })?;
        Ok(TranscriptRecord { tick, from_id, to_id, bytes, adversary_action })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldEntry {
    pub hold_ref: Id,
    pub amount: u64,
}

impl Body for HoldEntry {
    const NAME: &'static str = "HoldEntry";

    fn encode_body(&self, w: &mut Writer) {
        w.id(&self.hold_ref);
        w.u64(self.amount);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(HoldEntry { hold_ref: r.id()?, amount: r.u64()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountSnapshot {
    pub account_ref_digest: Digest,
    pub credit_limit: u64,
    pub active_holds: Vec<HoldEntry>,
    pub settled_total: u64,
}

impl Body for AccountSnapshot {
    const NAME: &'static str = "AccountSnapshot";

    fn encode_body(&self, w: &mut Writer) {
        w.digest(&self.account_ref_digest);
        w.u64(self.credit_limit);
        w.list(&self.active_holds);
        w.u64(self.settled_total);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AccountSnapshot {
            account_ref_digest: r.digest()?,
            credit_limit: r.u64()?,
            active_holds: r.list()?,
            settled_total: r.u64()?,
        })
    }

    fn check(&self) -> Result<(), &'static str> {
        let held = self
            .active_holds
            .iter()
            .try_fold(0u64, |acc, h| if h.amount == 0 { None } else { acc.checked_add(h.amount) })
            .ok_or("hold amounts must be positive and not overflow")?;
        match held.checked_add(self.settled_total) {
            Some(used) if used <= self.credit_limit => Ok(()),
            _ => Err("holds plus settlements exceed credit limit"),
        }
    }
}

/// Serialized account provider ledger, accounts sorted by digest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LedgerSnapshot {
    pub accounts: Vec<AccountSnapshot>,
}

impl Body for LedgerSnapshot {
    const NAME: &'static str = "LedgerSnapshot";

    fn encode_body(&self, w: &mut Writer) {
        w.list(&self.accounts);
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(LedgerSnapshot { accounts: r.list()? })
    }
}

/// Convenience: canonical encoding of a value's body without the tag.
pub fn body_bytes<T: Body>(v: &T) -> Result<Vec<u8>, EncodeError> {
    codec::encode_body(v)
}

/// The canonical encoding of a lone `u64` field, as it appears inside a body.
pub fn u64_field(v: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(v);
    w.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, hash, make_dual_signature, sign};

    pub(crate) fn usage() -> UsageDescriptor {
        UsageDescriptor::new("store", "put", 1, "megabyte")
    }

    #[test]
    fn usage_encoding_is_fixed() {
        let bytes = encode(&usage()).unwrap();
        let mut expected = vec![0x01];
        for s in [&b"store"[..], b"put"] {
            expected.extend_from_slice(&(s.len() as u32).to_be_bytes());
            expected.extend_from_slice(s);
        }
        expected.extend_from_slice(&[0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 1]);
        expected.extend_from_slice(&[0, 0, 0, 8]);
        expected.extend_from_slice(b"megabyte");
        assert_eq!(bytes, expected);
    }

    #[test]
    fn quantity_changes_encoding() {
        let mut other = usage();
        other.quantity = 2;
        assert_ne!(encode(&usage()).unwrap(), encode(&other).unwrap());
    }

    #[test]
    fn invalid_usage_refuses_to_encode() {
        let mut u = usage();
        u.quantity = 0;
        assert!(matches!(encode(&u), Err(EncodeError::Invariant { .. })));
        u.quantity = 1;
        u.unit.clear();
        assert!(encode(&u).is_err());
    }

    #[test]
    fn type_tag_checked() {
        let bytes = encode(&usage()).unwrap();
        assert_eq!(
            decode::<PriceRequest>(&bytes),
            Err(DecodeError::TypeMismatch { expected: "PriceRequest", found: "UsageDescriptor" })
        );
        assert!(matches!(decode_as(&bytes, MessageType::PriceQuote), Err(DecodeError::TypeMismatch { .. })));
        assert_eq!(decode_as(&bytes, MessageType::UsageDescriptor).unwrap(), Message::UsageDescriptor(usage()));
        assert_eq!(Message::decode(&[0xee]), Err(DecodeError::UnknownType { tag: 0xee }));
        assert_eq!(Message::decode(&[]), Err(DecodeError::Empty));
    }

    #[test]
    fn every_truncation_rejected() {
        let sr = generate_keypair("SR", 1).unwrap();
        let tm = generate_keypair("TM", 1).unwrap();
        let order =
            OrderInfo { quote_id: Id([1; 16]), usage: usage(), requester_id: "SR".into(), order_nonce: Id([2; 16]) };
        let pi = PaymentInfo {
            account_provider_id: "AP".into(),
            account_ref: "acct".into(),
            authorized_limit: 60,
            payment_nonce: Id([3; 16]),
        };
        let oi_b = encode(&order).unwrap();
        let pi_b = encode(&pi).unwrap();
        let env = crate::crypto::seal(
            tm.public_key(),
            "TM",
            &pi_b,
            &mut <rand_chacha::ChaCha20Rng as rand_core::SeedableRng>::seed_from_u64(1),
        )
        .unwrap();
        let req = AuthorizationRequest {
            order_info: order,
            payment_envelope: env,
            pi_digest: hash(&pi_b),
            dual: make_dual_signature(&sr, &oi_b, &pi_b).unwrap(),
        };
        let bytes = encode(&req).unwrap();
        assert_eq!(decode::<AuthorizationRequest>(&bytes).unwrap(), req);
        for len in 0..bytes.len() {
            assert!(decode::<AuthorizationRequest>(&bytes[..len]).is_err(), "prefix {len}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode::<AuthorizationRequest>(&long), Err(DecodeError::TrailingBytes { .. })));
    }

    #[test]
    fn outcome_invariants() {
        let tm = generate_keypair("TM", 1).unwrap();
        let token = CaptureToken {
            token_id: Id([1; 16]),
            provider_id: "SP".into(),
            charge_amount: 50,
            account_provider_id: "AP".into(),
            hold_ref: Id([2; 16]),
            tm_signature: sign(&tm, b"x").unwrap(),
        };
        let ok = AuthOutcome::approved(Digest::default(), token.clone());
        assert_eq!(decode::<AuthOutcome>(&encode(&ok).unwrap()).unwrap(), ok);
        let bad = AuthOutcome { reason: Some(DenialReason::Replay), ..ok.clone() };
        assert!(encode(&bad).is_err());
        let bad = AuthOutcome { approved: false, ..ok };
        assert!(encode(&bad).is_err());
        let denied = AuthOutcome::denied(Digest::default(), DenialReason::OverLimit);
        assert_eq!(decode::<AuthOutcome>(&encode(&denied).unwrap()).unwrap(), denied);
    }

    #[test]
    fn signing_bytes_exclude_signature_and_include_tag() {
        let sp = generate_keypair("SP", 1).unwrap();
        let mut q = PriceQuote {
            quote_id: Id([9; 16]),
            usage: usage(),
            price: 50,
            expiry: 100,
            provider_signature: Signature { bytes: vec![], signer_id: "SP".into() },
        };
        let unsigned = q.signing_bytes();
        q.provider_signature = sign(&sp, &unsigned).unwrap();
        assert_eq!(q.signing_bytes(), unsigned);
        let full = encode(&q).unwrap();
        assert!(full.starts_with(&unsigned));
        assert_eq!(unsigned[0], MessageType::PriceQuote as u8);
    }

    #[test]
    fn denial_codes_round_trip() {
        for r in DenialReason::ALL {
            assert_eq!(DenialReason::from_code(r.code()), Some(r));
        }
        assert_eq!(DenialReason::from_code(0), None);
        assert_eq!(DenialReason::OverLimit.to_string(), "OVER_LIMIT");
    }

    #[test]
    fn ledger_snapshot_rejects_overdrawn_state() {
        let snap = LedgerSnapshot {
            accounts: vec![AccountSnapshot {
                account_ref_digest: hash(b"a"),
                credit_limit: 10,
                active_holds: vec![HoldEntry { hold_ref: Id([1; 16]), amount: 6 }],
                settled_total: 5,
            }],
        };
        assert!(encode(&snap).is_err());
    }

    #[test]
    fn message_type_names_parse() {
        for t in MessageType::ALL {
            assert_eq!(t.name().parse::<MessageType>().unwrap(), *t);
            assert_eq!(MessageType::from_tag(*t as u8), Some(*t));
        }
        assert_eq!(u64_field(60), [0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 60]);
    }
}
