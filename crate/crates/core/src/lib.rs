//! Payment authorization between a service requester, a service provider, a
//! trust manager and an account provider, driven over a deterministic
//! simulated network.
//!
//! The requester splits its order from its payment details. The provider only
//! ever sees the order and the trust manager only ever sees the payment; a
//! dual signature binds the two halves together so each party can check the
//! binding without learning the other half.

pub mod actors;
pub mod attacks;
pub mod codec;
pub mod crypto;
pub mod ledger;
pub mod messages;
pub mod scenario;
pub mod simnet;

pub use codec::{DecodeError, EncodeError, Id};
pub use crypto::{Digest, Directory, KeyPair, PublicKey};
pub use messages::{DenialReason, Message, MessageType};
