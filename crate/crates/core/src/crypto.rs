//! Identities, hashing, signatures, sealed envelopes and dual signatures.
//!
//! The protocol layer only talks to this module. Primitive choices:
//!
//! - digest: SHA-256
//! - signatures: Ed25519 (strict verification)
//! - envelopes: a fresh ChaCha20-Poly1305 content key per message, wrapped to
//!   the recipient's X25519 key through an ephemeral Diffie-Hellman exchange
//!   and HKDF-SHA256
//!
//! A public key is the 64-byte concatenation of the Ed25519 verifying key and
//! the X25519 public key. The private half mirrors that layout.

use std::collections::BTreeMap;
use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hkdf::Hkdf;
use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRng, RngCore, SeedableRng};
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as DhPublic, StaticSecret};

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 64;
pub const SIGNATURE_LEN: usize = 64;

const DH_LEN: usize = 32;
const KEY_LEN: usize = 32;
const TAG_LEN: usize = 16;
/// Ephemeral DH public key followed by the sealed content key.
pub const WRAPPED_KEY_LEN: usize = DH_LEN + KEY_LEN + TAG_LEN;

const KEYGEN_DOMAIN: &[u8] = b"gset/keygen/v1";
const KEK_DOMAIN: &[u8] = b"gset/envelope-kek/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("identity label must be non-empty")]
    InvalidIdentity,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("key pair for {0:?} holds no private key")]
    MissingPrivateKey(String),
    #[error("malformed public key")]
    MalformedKey,
    #[error("envelope addressed to {expected:?}, opened by {actual:?}")]
    WrongRecipient { expected: String, actual: String },
    #[error("envelope failed authenticated decryption")]
    Integrity,
}

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &hex::encode(self.0)[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of the concatenation of several byte strings, without copying them.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let raw: [u8; PUBLIC_KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::MalformedKey)?;
        VerifyingKey::from_bytes(raw[..32].try_into().expect("32-byte half")).map_err(|_| CryptoError::MalformedKey)?;
        Ok(PublicKey(raw))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_bytes(self.0[..32].try_into().ok()?).ok()
    }

    fn dh_key(&self) -> DhPublic {
        let raw: [u8; DH_LEN] = self.0[32..].try_into().expect("32-byte half");
        DhPublic::from(raw)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..16])
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey([u8; 64]);

impl PrivateKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes.try_into().map(PrivateKey).map_err(|_| CryptoError::MalformedKey)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    fn signing_key(&self) -> SigningKey {
        SigningKey::from_bytes(self.0[..32].try_into().expect("32-byte half"))
    }

    fn dh_secret(&self) -> StaticSecret {
        let raw: [u8; 32] = self.0[32..].try_into().expect("32-byte half");
        StaticSecret::from(raw)
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

/// An identity with its signing and key-agreement material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    subject_id: String,
    public_key: PublicKey,
    private_key: Option<PrivateKey>,
}

impl KeyPair {
    /// Rebuilds a full key pair from stored material, checking that the two
    /// halves belong together.
    pub fn from_parts(
        subject_id: impl Into<String>,
        public_key: PublicKey,
        private_key: PrivateKey,
    ) -> Result<Self, CryptoError> {
        let subject_id = subject_id.into();
        if subject_id.is_empty() {
            return Err(CryptoError::InvalidIdentity);
        }
        if derive_public(&private_key) != public_key {
            return Err(CryptoError::MalformedKey);
        }
        Ok(KeyPair { subject_id, public_key, private_key: Some(private_key) })
    }

    /// A verification-only identity, as found in a certificate directory.
    pub fn public_only(subject_id: impl Into<String>, public_key: PublicKey) -> Result<Self, CryptoError> {
        let subject_id = subject_id.into();
        if subject_id.is_empty() {
            return Err(CryptoError::InvalidIdentity);
        }
        Ok(KeyPair { subject_id, public_key, private_key: None })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public_key
    }

    pub fn private_key(&self) -> Option<&PrivateKey> {
        self.private_key.as_ref()
    }

    fn require_private(&self) -> Result<&PrivateKey, CryptoError> {
        self.private_key.as_ref().ok_or_else(|| CryptoError::MissingPrivateKey(self.subject_id.clone()))
    }
}

fn derive_public(private: &PrivateKey) -> PublicKey {
    let mut raw = [0u8; PUBLIC_KEY_LEN];
    raw[..32].copy_from_slice(private.signing_key().verifying_key().as_bytes());
    raw[32..].copy_from_slice(DhPublic::from(&private.dh_secret()).as_bytes());
    PublicKey(raw)
}

/// Deterministic key generation. The subject label is mixed into the seed, so
/// two identities built from the same seed still get unrelated keys.
pub fn generate_keypair(subject_id: &str, seed: u64) -> Result<KeyPair, CryptoError> {
    if subject_id.is_empty() {
        return Err(CryptoError::InvalidIdentity);
    }
    let material = hash_parts(&[KEYGEN_DOMAIN, &seed.to_be_bytes(), subject_id.as_bytes()]);
    let mut rng = ChaCha20Rng::from_seed(material.0);
    let mut raw = [0u8; 64];
    rng.fill_bytes(&mut raw);
    let private = PrivateKey(raw);
    Ok(KeyPair { subject_id: subject_id.to_owned(), public_key: derive_public(&private), private_key: Some(private) })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub bytes: Vec<u8>,
    pub signer_id: String,
}

pub fn sign(key: &KeyPair, message: &[u8]) -> Result<Signature, CryptoError> {
    let private = key.require_private()?;
    let sig = private.signing_key().sign(message);
    Ok(Signature { bytes: sig.to_bytes().to_vec(), signer_id: key.subject_id.clone() })
}

/// `signer_id` is not consulted here; callers resolve the key from it.
pub fn verify(public_key: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(raw) = <[u8; SIGNATURE_LEN]>::try_from(sig.bytes.as_slice()) else {
        return false;
    };
    let Some(vk) = public_key.verifying_key() else {
        return false;
    };
    vk.verify_strict(message, &ed25519_dalek::Signature::from_bytes(&raw)).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedEnvelope {
    pub recipient_id: String,
    pub ciphertext: Vec<u8>,
    pub wrapped_key: Vec<u8>,
}

fn key_encryption_key(shared: &[u8; 32], ephemeral: &[u8], recipient: &DhPublic, recipient_id: &str) -> Key {
    let hk = Hkdf::<Sha256>::new(None, shared);
    let mut okm = [0u8; KEY_LEN];
    hk.expand_multi_info(&[KEK_DOMAIN, ephemeral, recipient.as_bytes(), recipient_id.as_bytes()], &mut okm)
        .expect("32 bytes is a valid HKDF output length");
    Key::from(okm)
}

pub fn seal<R: RngCore + CryptoRng>(
    recipient_public_key: &PublicKey,
    recipient_id: &str,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<SealedEnvelope, CryptoError> {
    if plaintext.is_empty() {
        return Err(CryptoError::InvalidInput("plaintext is empty"));
    }
    if recipient_id.is_empty() {
        return Err(CryptoError::InvalidIdentity);
    }

    // Each content key encrypts exactly one message, so a fixed nonce is safe.
    let mut content_key = [0u8; KEY_LEN];
    rng.fill_bytes(&mut content_key);
    let ciphertext = ChaCha20Poly1305::new(&Key::from(content_key))
        .encrypt(&Nonce::default(), Payload { msg: plaintext, aad: recipient_id.as_bytes() })
        .map_err(|_| CryptoError::Integrity)?;

    let recipient = recipient_public_key.dh_key();
    let ephemeral = StaticSecret::random_from_rng(&mut *rng);
    let ephemeral_public = DhPublic::from(&ephemeral);
    let shared = ephemeral.diffie_hellman(&recipient);
    if !shared.was_contributory() {
        return Err(CryptoError::MalformedKey);
    }
    let kek = key_encryption_key(shared.as_bytes(), ephemeral_public.as_bytes(), &recipient, recipient_id);
    let ct_digest = hash(&ciphertext);
    let sealed_key = ChaCha20Poly1305::new(&kek)
        .encrypt(&Nonce::default(), Payload { msg: &content_key, aad: ct_digest.as_bytes() })
        .map_err(|_| CryptoError::Integrity)?;

    let mut wrapped_key = Vec::with_capacity(WRAPPED_KEY_LEN);
    wrapped_key.extend_from_slice(ephemeral_public.as_bytes());
    wrapped_key.extend_from_slice(&sealed_key);
    Ok(SealedEnvelope { recipient_id: recipient_id.to_owned(), ciphertext, wrapped_key })
}

pub fn open(key: &KeyPair, envelope: &SealedEnvelope) -> Result<Vec<u8>, CryptoError> {
    if key.subject_id != envelope.recipient_id {
        return Err(CryptoError::WrongRecipient {
            expected: envelope.recipient_id.clone(),
            actual: key.subject_id.clone(),
        });
    }
    let private = key.require_private()?;
    if envelope.wrapped_key.len() != WRAPPED_KEY_LEN {
        return Err(CryptoError::Integrity);
    }
    let (ephemeral_bytes, sealed_key) = envelope.wrapped_key.split_at(DH_LEN);
    let ephemeral = DhPublic::from(<[u8; DH_LEN]>::try_from(ephemeral_bytes).expect("split at 32"));
    let shared = private.dh_secret().diffie_hellman(&ephemeral);
    if !shared.was_contributory() {
        return Err(CryptoError::Integrity);
    }
    let own = key.public_key.dh_key();
    let kek = key_encryption_key(shared.as_bytes(), ephemeral_bytes, &own, &envelope.recipient_id);
    let ct_digest = hash(&envelope.ciphertext);
    let content_key = ChaCha20Poly1305::new(&kek)
        .decrypt(&Nonce::default(), Payload { msg: sealed_key, aad: ct_digest.as_bytes() })
        .map_err(|_| CryptoError::Integrity)?;
    let content_key: [u8; KEY_LEN] = content_key.try_into().map_err(|_| CryptoError::Integrity)?;
    ChaCha20Poly1305::new(&Key::from(content_key))
        .decrypt(&Nonce::default(), Payload { msg: &envelope.ciphertext, aad: envelope.recipient_id.as_bytes() })
        .map_err(|_| CryptoError::Integrity)
}

/// One signature binding order information and payment information, so each
/// side can be checked by a party that only holds the other side's digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DualSignature {
    pub oi_digest: Digest,
    pub pi_digest: Digest,
    pub signature: Signature,
}

impl DualSignature {
    /// The exact bytes the signature covers: `hash(oi_digest || pi_digest)`.
    pub fn signed_message(oi_digest: &Digest, pi_digest: &Digest) -> Digest {
        hash_parts(&[oi_digest.as_bytes(), pi_digest.as_bytes()])
    }
}

pub fn make_dual_signature(
    key: &KeyPair,
    order_info: &[u8],
    payment_info: &[u8],
) -> Result<DualSignature, CryptoError> {
    if order_info.is_empty() || payment_info.is_empty() {
        return Err(CryptoError::InvalidInput("dual signature halves must be non-empty"));
    }
    let oi_digest = hash(order_info);
    let pi_digest = hash(payment_info);
    let signature = sign(key, DualSignature::signed_message(&oi_digest, &pi_digest).as_bytes())?;
    Ok(DualSignature { oi_digest, pi_digest, signature })
}

fn verify_dual_digests(public_key: &PublicKey, oi_digest: &Digest, pi_digest: &Digest, dual: &DualSignature) -> bool {
    *oi_digest == dual.oi_digest
        && *pi_digest == dual.pi_digest
        && verify(public_key, DualSignature::signed_message(oi_digest, pi_digest).as_bytes(), &dual.signature)
}

/// Check performed by the party holding the order information in clear.
pub fn verify_with_oi(public_key: &PublicKey, order_info: &[u8], pi_digest: &Digest, dual: &DualSignature) -> bool {
    verify_dual_digests(public_key, &hash(order_info), pi_digest, dual)
}

/// Check performed by the party holding the payment information in clear.
pub fn verify_with_pi(public_key: &PublicKey, oi_digest: &Digest, payment_info: &[u8], dual: &DualSignature) -> bool {
    verify_dual_digests(public_key, oi_digest, &hash(payment_info), dual)
}

/// Trusted certificate directory: subject label to public key. Populated at
/// setup, read-only afterwards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Directory {
    entries: BTreeMap<String, PublicKey>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the subject was already registered.
    pub fn register(&mut self, subject_id: &str, public_key: PublicKey) -> bool {
        if self.entries.contains_key(subject_id) {
            return false;
        }
        self.entries.insert(subject_id.to_owned(), public_key);
        true
    }

    pub fn get(&self, subject_id: &str) -> Option<&PublicKey> {
        self.entries.get(subject_id)
    }

    pub fn contains(&self, subject_id: &str) -> bool {
        self.entries.contains_key(subject_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PublicKey)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Verifies `sig` against the key registered for `sig.signer_id`.
    pub fn verify_from(&self, expected_signer: &str, message: &[u8], sig: &Signature) -> bool {
        sig.signer_id == expected_signer && self.get(expected_signer).is_some_and(|pk| verify(pk, message, sig))
    }
}
