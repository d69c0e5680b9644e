//! The four principals as single-threaded message-driven state machines.
//!
//! Every actor exposes the same surface: [`Actor::deliver`] takes one encoded
//! message and returns the encoded messages it sends in reaction. Nothing else
//! crosses actor boundaries.

use std::any::Any;

use thiserror::Error;

use crate::codec::{DecodeError, EncodeError};
use crate::crypto::CryptoError;
use crate::messages::{encode, DenialReason, MessageType, WireMessage};

mod account_provider;
mod provider;
mod requester;
mod trust_manager;

pub use account_provider::AccountProviderNode;
pub use provider::{PricingPolicy, ProviderNode};
pub use requester::{PaymentTerms, RequesterNode, RequesterPlan};
pub use trust_manager::{HoldRecord, TrustManagerNode};

/// Default number of ticks a price quote stays valid.
pub const DEFAULT_QUOTE_TTL: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActorError {
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("encode: {0}")]
    Encode(#[from] EncodeError),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("{0} is not accepted by this actor")]
    UnexpectedMessage(MessageType),
    #[error("trust failure: {0}")]
    Untrusted(&'static str),
    #[error("quote expired")]
    Expired,
    #[error("denied: {0}")]
    Denied(DenialReason),
    #[error("unknown reference: {0}")]
    UnknownReference(&'static str),
    #[error("redemption failed: {0}")]
    Redemption(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub to: String,
    pub bytes: Vec<u8>,
}

impl Outbound {
    pub fn encode<T: WireMessage>(to: &str, msg: &T) -> Result<Self, ActorError> {
        Ok(Outbound { to: to.to_owned(), bytes: encode(msg)? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected(ActorError),
}

/// What one delivery produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub verdict: Verdict,
    pub outbound: Vec<Outbound>,
}

impl Reaction {
    pub fn accepted(outbound: Vec<Outbound>) -> Self {
        Reaction { verdict: Verdict::Accepted, outbound }
    }

    pub fn rejected(err: ActorError, outbound: Vec<Outbound>) -> Self {
        Reaction { verdict: Verdict::Rejected(err), outbound }
    }

    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    fn from_result(r: Result<Vec<Outbound>, ActorError>) -> Self {
        match r {
            Ok(out) => Reaction::accepted(out),
            Err(e) => Reaction::rejected(e, Vec::new()),
        }
    }
}

pub trait Actor: Any {
    fn id(&self) -> &str;

    /// Processes one message to completion.
    fn deliver(&mut self, now: u64, from: &str, bytes: &[u8]) -> Reaction;

    /// Canonical encoding of everything the actor retains, for privacy scans.
    fn stored_bytes(&self) -> Vec<u8>;

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

macro_rules! impl_any {
    () => {
        fn as_any(&self) -> &dyn std::any::Any {
            self
        }

        fn as_any_mut(&mut self) -> &mut dyn std::any::Any {
            self
        }
    };
}
pub(crate) use impl_any;
