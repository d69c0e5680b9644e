//! Random well-formed values of every message type.
#![allow(dead_code)]

use gset_core::crypto::{DualSignature, SealedEnvelope, Signature};
use gset_core::messages::*;
use gset_core::{Digest, Id, Message, MessageType};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

const ALPHABET: &[char] = &['a', 'b', 'z', 'A', 'Q', '0', '9', '-', '_', '.', ' ', 'é', 'ß', '€', '字', '🙂'];

pub fn id(rng: &mut ChaCha20Rng) -> Id {
    Id(rng.gen())
}

pub fn digest(rng: &mut ChaCha20Rng) -> Digest {
    Digest(rng.gen())
}

pub fn text(rng: &mut ChaCha20Rng) -> String {
    let len = rng.gen_range(1..=12);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

pub fn blob(rng: &mut ChaCha20Rng, max: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max);
    (0..len).map(|_| rng.gen()).collect()
}

/// Small values, boundary values and full-range values.
pub fn int(rng: &mut ChaCha20Rng) -> u64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..256),
        1 => [0, 1, u64::MAX, u64::MAX - 1, 1 << 32][rng.gen_range(0..5)],
        _ => rng.gen(),
    }
}

pub fn positive(rng: &mut ChaCha20Rng) -> u64 {
    int(rng).max(1)
}

pub fn reason(rng: &mut ChaCha20Rng) -> DenialReason {
    DenialReason::ALL[rng.gen_range(0..DenialReason::ALL.len())]
}

pub fn signature(rng: &mut ChaCha20Rng) -> Signature {
    Signature { bytes: blob(rng, 64), signer_id: text(rng) }
}

pub fn envelope(rng: &mut ChaCha20Rng) -> SealedEnvelope {
    SealedEnvelope { recipient_id: text(rng), ciphertext: blob(rng, 80), wrapped_key: blob(rng, 80) }
}

pub fn dual(rng: &mut ChaCha20Rng) -> DualSignature {
    DualSignature { oi_digest: digest(rng), pi_digest: digest(rng), signature: signature(rng) }
}

pub fn usage(rng: &mut ChaCha20Rng) -> UsageDescriptor {
    UsageDescriptor { service_id: text(rng), operation: text(rng), quantity: positive(rng), unit: text(rng) }
}

pub fn order(rng: &mut ChaCha20Rng) -> OrderInfo {
    OrderInfo { quote_id: id(rng), usage: usage(rng), requester_id: text(rng), order_nonce: id(rng) }
}

pub fn payment(rng: &mut ChaCha20Rng) -> PaymentInfo {
    PaymentInfo {
        account_provider_id: text(rng),
        account_ref: text(rng),
        authorized_limit: positive(rng),
        payment_nonce: id(rng),
    }
}

pub fn token(rng: &mut ChaCha20Rng) -> CaptureToken {
    CaptureToken {
        token_id: id(rng),
        provider_id: text(rng),
        charge_amount: positive(rng),
        account_provider_id: text(rng),
        hold_ref: id(rng),
        tm_signature: signature(rng),
    }
}

fn verdict(rng: &mut ChaCha20Rng) -> (bool, Option<DenialReason>) {
    if rng.gen() {
        (true, None)
    } else {
        (false, Some(reason(rng)))
    }
}

fn snapshot(rng: &mut ChaCha20Rng) -> LedgerSnapshot {
    let accounts = (0..rng.gen_range(0..4))
        .map(|_| {
            let credit_limit = rng.gen_range(1..=u64::MAX / 2);
            let mut room = credit_limit;
            let active_holds = (0..rng.gen_range(0..4))
                .filter_map(|_| {
                    if room == 0 {
                        return None;
                    }
                    let amount = rng.gen_range(1..=room);
                    room -= amount;
                    Some(HoldEntry { hold_ref: id(rng), amount })
                })
                .collect();
            let settled_total = rng.gen_range(0..=room);
            AccountSnapshot { account_ref_digest: digest(rng), credit_limit, active_holds, settled_total }
        })
        .collect();
    LedgerSnapshot { accounts }
}

pub fn message(rng: &mut ChaCha20Rng, ty: MessageType) -> Message {
    use MessageType as T;
    match ty {
        T::UsageDescriptor => usage(rng).into(),
        T::PriceRequest => PriceRequest { requester_id: text(rng), usage: usage(rng), nonce: id(rng) }.into(),
        T::PriceQuote => PriceQuote {
            quote_id: id(rng),
            usage: usage(rng),
            price: int(rng),
            expiry: int(rng),
            provider_signature: signature(rng),
        }
        .into(),
        T::QuoteRefusal => QuoteRefusal { request_nonce: id(rng) }.into(),
        T::OrderInfo => order(rng).into(),
        T::PaymentInfo => payment(rng).into(),
        T::AuthorizationRequest => AuthorizationRequest {
            order_info: order(rng),
            payment_envelope: envelope(rng),
            pi_digest: digest(rng),
            dual: dual(rng),
        }
        .into(),
        T::AuthorizeAndHold => AuthorizeAndHold {
            payment_envelope: envelope(rng),
            oi_digest: digest(rng),
            dual: dual(rng),
            charge_amount: positive(rng),
            provider_id: text(rng),
            provider_signature: signature(rng),
        }
        .into(),
        T::CaptureToken => token(rng).into(),
        T::AuthOutcome => {
            if rng.gen() {
                AuthOutcome::approved(digest(rng), token(rng)).into()
            } else {
                AuthOutcome::denied(digest(rng), reason(rng)).into()
            }
        }
        T::AuthDecision => AuthDecision { order_nonce: id(rng), approved: rng.gen() }.into(),
        T::ServiceInvocation => ServiceInvocation {
            order_nonce: id(rng),
            objects: (0..rng.gen_range(1..4)).map(|_| blob(rng, 40)).collect(),
            requester_signature: signature(rng),
        }
        .into(),
        T::Ticket => Ticket { ticket_id: id(rng), object_digest: digest(rng) }.into(),
        T::ServiceGrant => ServiceGrant {
            grant_id: id(rng),
            tickets: (0..rng.gen_range(0..4))
                .map(|_| Ticket { ticket_id: id(rng), object_digest: digest(rng) })
                .collect(),
            provider_signature: signature(rng),
        }
        .into(),
        T::RedeemRequest => RedeemRequest { ticket_id: id(rng) }.into(),
        T::RedeemResponse => {
            RedeemResponse { ticket_id: id(rng), object: rng.gen::<bool>().then(|| blob(rng, 40)) }.into()
        }
        T::CaptureRequest => CaptureRequest { token: token(rng), provider_signature: signature(rng) }.into(),
        T::CaptureResponse => {
            let (settled, reason) = verdict(rng);
            CaptureResponse { token_id: id(rng), settled, reason, tm_signature: signature(rng) }.into()
        }
        T::HoldRequest => HoldRequest {
            request_id: id(rng),
            account_ref_digest: digest(rng),
            amount: positive(rng),
            tm_signature: signature(rng),
        }
        .into(),
        T::HoldResponse => {
            let (accepted, reason) = verdict(rng);
            HoldResponse {
                request_id: id(rng),
                accepted,
                hold_ref: accepted.then(|| id(rng)),
                reason,
                ap_signature: signature(rng),
            }
            .into()
        }
        T::SettleRequest => {
            SettleRequest { request_id: id(rng), hold_ref: id(rng), tm_signature: signature(rng) }.into()
        }
        T::ReleaseRequest => {
            ReleaseRequest { request_id: id(rng), hold_ref: id(rng), tm_signature: signature(rng) }.into()
        }
        T::SettleResponse => {
            let (done, reason) = verdict(rng);
            SettleResponse { request_id: id(rng), done, amount: int(rng), reason, ap_signature: signature(rng) }.into()
        }
        T::ReleaseResponse => {
            let (done, reason) = verdict(rng);
            ReleaseResponse { request_id: id(rng), done, amount: int(rng), reason, ap_signature: signature(rng) }.into()
        }
        T::VoidRequest => VoidRequest { token: token(rng), provider_signature: signature(rng) }.into(),
        T::TranscriptRecord => TranscriptRecord {
            tick: int(rng),
            from_id: text(rng),
            to_id: text(rng),
            bytes: blob(rng, 60),
            adversary_action: AdversaryAction::from_code(rng.gen_range(0..6)).unwrap(),
        }
        .into(),
        T::LedgerSnapshot => snapshot(rng).into(),
    }
}
