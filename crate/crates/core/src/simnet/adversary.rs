use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use crate::messages::{peek_type, Message, MessageType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryMode {
    PassiveEavesdrop,
    Tamper,
    Replay,
    Drop,
}

impl AdversaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryMode::PassiveEavesdrop => "eavesdrop",
            AdversaryMode::Tamper => "tamper",
            AdversaryMode::Replay => "replay",
            AdversaryMode::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    All,
    Type(MessageType),
}

impl Target {
    /// Undecodable bytes only match `All`.
    pub fn matches(self, bytes: &[u8]) -> bool {
        match self {
            Target::All => true,
            Target::Type(t) => peek_type(bytes) == Some(t),
        }
    }
}

pub type MutateFn = Box<dyn FnMut(&[u8]) -> Vec<u8> + Send>;

pub enum Mutation {
    /// Flips bit `n mod (8 * len)`, counting from the most significant bit of byte 0.
    FlipBit(u64),
    /// Flips one seeded-random bit, preferring positions where the result
    /// still parses as the same message type, so the tamper reaches the
    /// recipient's signature checks instead of its parser.
    FlipParsableBit(u64),
    Custom(MutateFn),
}

impl Mutation {
    pub fn apply(&mut self, bytes: &[u8]) -> Vec<u8> {
        match self {
            Mutation::FlipBit(n) => {
                let mut out = bytes.to_vec();
                if !out.is_empty() {
                    let bit = (*n % (out.len() as u64 * 8)) as usize;
                    out[bit / 8] ^= 0x80 >> (bit % 8);
                }
                out
            }
            Mutation::FlipParsableBit(seed) => {
                if bytes.is_empty() {
                    return Vec::new();
                }
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                let bits = bytes.len() as u64 * 8;
                let first = rng.gen_range(0..bits);
                let ty = peek_type(bytes);
                for candidate in std::iter::once(first).chain((0..255).map(|_| rng.gen_range(0..bits))) {
                    let out = Mutation::FlipBit(candidate).apply(bytes);
                    if Message::decode(&out).is_ok_and(|m| Some(m.message_type()) == ty) {
                        return out;
                    }
                }
                Mutation::FlipBit(first).apply(bytes)
            }
            Mutation::Custom(f) => f(bytes),
        }
    }
}

impl fmt::Debug for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::FlipBit(n) => write!(f, "FlipBit({n})"),
            Mutation::FlipParsableBit(n) => write!(f, "FlipParsableBit({n})"),
            Mutation::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// What the scheduler should do with one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Interposition {
    Pass,
    Observed,
    Tampered(Vec<u8>),
    /// Deliver, then deliver the same bytes again later.
    Replay,
    Drop,
}

/// An external attacker on the wire. It works on encoded bytes only and holds
/// no keys.
#[derive(Debug)]
pub struct Adversary {
    mode: AdversaryMode,
    target: Target,
    mutation: Mutation,
    /// How many matching messages to let through before acting.
    skip: usize,
    /// Maximum number of messages acted on; `None` is unlimited.
    budget: Option<usize>,
    seen: usize,
    acted: usize,
    capture_log: Vec<Vec<u8>>,
}

impl Adversary {
    fn new(mode: AdversaryMode, target: Target, budget: Option<usize>) -> Self {
        Adversary {
            mode,
            target,
            mutation: Mutation::FlipBit(0),
            skip: 0,
            budget,
            seen: 0,
            acted: 0,
            capture_log: Vec::new(),
        }
    }

    /// Records every matching message and lets it through.
    pub fn passive(target: Target) -> Self {
        Self::new(AdversaryMode::PassiveEavesdrop, target, None)
    }

    /// Mutates the first matching message.
    pub fn tamper(target: Target, mutation: Mutation) -> Self {
        Adversary { mutation, ..Self::new(AdversaryMode::Tamper, target, Some(1)) }
    }

    /// Duplicates the first matching message.
    pub fn replay(target: Target) -> Self {
        Self::new(AdversaryMode::Replay, target, Some(1))
    }

    /// Withholds the first matching message.
    pub fn drop(target: Target) -> Self {
        Self::new(AdversaryMode::Drop, target, Some(1))
    }

    pub fn with_budget(mut self, budget: Option<usize>) -> Self {
        self.budget = budget;
        self
    }

    pub fn skipping(mut self, skip: usize) -> Self {
        self.skip = skip;
        self
    }

    pub fn mode(&self) -> AdversaryMode {
        self.mode
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn capture_log(&self) -> &[Vec<u8>] {
        &self.capture_log
    }

    /// Number of messages the adversary has acted on.
    pub fn actions(&self) -> usize {
        self.acted
    }

    pub fn interpose(&mut self, bytes: &[u8]) -> Interposition {
        if !self.target.matches(bytes) {
            return Interposition::Pass;
        }
        self.seen += 1;
        if self.seen <= self.skip || self.budget.is_some_and(|b| self.acted >= b) {
            return Interposition::Pass;
        }
        self.acted += 1;
        match self.mode {
            AdversaryMode::PassiveEavesdrop => {
                self.capture_log.push(bytes.to_vec());
                Interposition::Observed
            }
            AdversaryMode::Tamper => Interposition::Tampered(self.mutation.apply(bytes)),
            AdversaryMode::Replay => Interposition::Replay,
            AdversaryMode::Drop => Interposition::Drop,
        }
    }
}
