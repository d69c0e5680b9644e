//! Deterministic in-process transport between actors.
//!
//! One FIFO queue, one delivery per tick. An optional adversary sees every
//! message on the wire (bytes only, no keys) and may observe, flip bits,
//! duplicate or drop it. Every delivery attempt is appended to a transcript.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::actors::{Actor, Verdict};
use crate::messages::{peek_type, AdversaryAction, Message, MessageType, TranscriptRecord};

mod adversary;
mod privacy;
mod replay;
mod transcript;

pub use adversary::{Adversary, AdversaryMode, Interposition, MutateFn, Mutation, Target};
pub use privacy::{assert_privacy, scan_bytes, scan_capture_log, HitSource, Markers, Party, PrivacyHit, PrivacyReport};
pub use replay::{replay_transcript, Divergence, DivergenceReport};
pub use transcript::{Transcript, TranscriptFileError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("duplicate endpoint {0}")]
    DuplicateEndpoint(String),
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(String),
}

pub struct Endpoint {
    subject_id: String,
    actor: Box<dyn Actor + Send>,
}

impl Endpoint {
    pub fn new<A: Actor + Send>(actor: A) -> Self {
        Endpoint { subject_id: actor.id().to_owned(), actor: Box::new(actor) }
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn actor(&self) -> &dyn Actor {
        self.actor.as_ref()
    }
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint").field("subject_id", &self.subject_id).finish_non_exhaustive()
    }
}

/// The set of endpoints a run delivers to.
#[derive(Debug, Default)]
pub struct Network {
    endpoints: BTreeMap<String, Endpoint>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, endpoint: Endpoint) -> Result<(), NetworkError> {
        if self.endpoints.contains_key(&endpoint.subject_id) {
            return Err(NetworkError::DuplicateEndpoint(endpoint.subject_id));
        }
        self.endpoints.insert(endpoint.subject_id.clone(), endpoint);
        Ok(())
    }

    pub fn with<A: Actor + Send>(mut self, actor: A) -> Result<Self, NetworkError> {
        self.add(Endpoint::new(actor))?;
        Ok(self)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.endpoints.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.endpoints.keys().map(String::as_str)
    }

    pub fn actor(&self, id: &str) -> Option<&dyn Actor> {
        self.endpoints.get(id).map(Endpoint::actor)
    }

    /// Typed access to an actor's final state.
    pub fn get<A: Actor>(&self, id: &str) -> Option<&A> {
        self.endpoints.get(id)?.actor.as_any().downcast_ref()
    }

    pub fn get_mut<A: Actor>(&mut self, id: &str) -> Option<&mut A> {
        self.endpoints.get_mut(id)?.actor.as_any_mut().downcast_mut()
    }

    fn deliver(&mut self, now: u64, from: &str, to: &str, bytes: &[u8]) -> Option<crate::actors::Reaction> {
        self.endpoints.get_mut(to).map(|e| e.actor.deliver(now, from, bytes))
    }
}

/// A message handed to the network from outside a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub from: String,
    pub to: String,
    pub bytes: Vec<u8>,
}

impl Injection {
    pub fn new(from: &str, to: &str, bytes: Vec<u8>) -> Self {
        Injection { from: from.to_owned(), to: to.to_owned(), bytes }
    }
}

/// How a queued message got there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Scheduled,
    Replayed,
}

#[derive(Debug, Clone)]
struct InFlight {
    from: String,
    to: String,
    bytes: Vec<u8>,
    origin: Origin,
    cause: Option<usize>,
}

/// Per-record bookkeeping, index-aligned with the transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryLog {
    /// `None` when the message never reached an actor.
    pub verdict: Option<Verdict>,
    /// The record whose delivery produced this message.
    pub cause: Option<usize>,
}

#[derive(Debug)]
pub struct RunResult {
    pub transcript: Transcript,
    pub deliveries: Vec<DeliveryLog>,
    pub ticks: u64,
    /// Messages still queued when `max_ticks` cut the run off.
    pub undelivered: usize,
}

impl RunResult {
    /// `idx` and every record caused, directly or transitively, by it.
    pub fn descendants(&self, idx: usize) -> BTreeSet<usize> {
        let mut set = BTreeSet::from([idx]);
        for (i, d) in self.deliveries.iter().enumerate().skip(idx + 1) {
            if d.cause.is_some_and(|c| set.contains(&c)) {
                set.insert(i);
            }
        }
        set
    }

    pub fn accepted(&self, idx: usize) -> bool {
        matches!(self.deliveries.get(idx), Some(DeliveryLog { verdict: Some(Verdict::Accepted), .. }))
    }

    pub fn verdict(&self, idx: usize) -> Option<&Verdict> {
        self.deliveries.get(idx)?.verdict.as_ref()
    }

    /// Indices of records of `t` in delivery order.
    pub fn indices_of(&self, t: MessageType) -> Vec<usize> {
        self.transcript
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| peek_type(&r.bytes) == Some(t))
            .map(|(i, _)| i)
            .collect()
    }

    /// Accepted deliveries that grant value: approved outcomes and grants,
    /// and settled captures on either side of the trust manager.
    pub fn effective_approvals(&self, within: &BTreeSet<usize>) -> Vec<usize> {
        within
            .iter()
            .copied()
            .filter(|&i| self.accepted(i))
            .filter(|&i| match Message::decode(&self.transcript.records()[i].bytes) {
                Ok(Message::AuthOutcome(o)) => o.approved,
                Ok(Message::ServiceGrant(_)) => true,
                Ok(Message::SettleResponse(s)) => s.done,
                Ok(Message::CaptureResponse(c)) => c.settled,
                _ => false,
            })
            .collect()
    }
}

/// Delivers queued messages in FIFO order, one per tick, until the queue is
/// empty or `max_ticks` deliveries have been attempted. State stays in
/// `network`. Actor randomness is fixed when the endpoints are built.
pub fn run_scenario(
    network: &mut Network,
    initial: Vec<Injection>,
    mut adversary: Option<&mut Adversary>,
    max_ticks: u64,
) -> RunResult {
    let mut queue: VecDeque<InFlight> = initial
        .into_iter()
        .map(|m| InFlight { from: m.from, to: m.to, bytes: m.bytes, origin: Origin::Scheduled, cause: None })
        .collect();
    let mut transcript = Transcript::new();
    let mut deliveries = Vec::new();
    let mut tick = 0u64;
    while tick < max_ticks {
        let Some(msg) = queue.pop_front() else { break };
        tick += 1;
        let idx = transcript.len();
        let mut bytes = msg.bytes;
        let mut action = AdversaryAction::None;
        let mut deliver = true;
        if msg.origin == Origin::Replayed {
            action = AdversaryAction::Replayed;
        } else if let Some(adv) = adversary.as_deref_mut() {
            match adv.interpose(&bytes) {
                Interposition::Pass => {}
                Interposition::Observed => action = AdversaryAction::Observed,
                Interposition::Tampered(mutated) => {
                    bytes = mutated;
                    action = AdversaryAction::Tampered;
                }
                Interposition::Replay => {
                    action = AdversaryAction::Observed;
                    queue.push_back(InFlight {
                        from: msg.from.clone(),
                        to: msg.to.clone(),
                        bytes: bytes.clone(),
                        origin: Origin::Replayed,
                        cause: Some(idx),
                    });
                }
                Interposition::Drop => {
                    action = AdversaryAction::Dropped;
                    deliver = false;
                }
            }
        }
        if deliver && !network.contains(&msg.to) {
            action = AdversaryAction::Undeliverable;
            deliver = false;
        }
        let verdict = if deliver {
            let reaction = network.deliver(tick, &msg.from, &msg.to, &bytes).expect("destination checked");
            for out in reaction.outbound {
                queue.push_back(InFlight {
                    from: msg.to.clone(),
                    to: out.to,
                    bytes: out.bytes,
                    origin: Origin::Scheduled,
                    cause: Some(idx),
                });
            }
            Some(reaction.verdict)
        } else {
            None
        };
        transcript.push(TranscriptRecord { tick, from_id: msg.from, to_id: msg.to, bytes, adversary_action: action });
        deliveries.push(DeliveryLog { verdict, cause: msg.cause });
    }
    RunResult { transcript, deliveries, ticks: tick, undelivered: queue.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::{ActorError, Outbound, Reaction};
    use crate::messages::{encode, QuoteRefusal};
    use crate::Id;

    /// Bounces every message back to its sender until a hop budget runs out.
    struct Echo {
        id: String,
        hops: usize,
    }

    impl Actor for Echo {
        fn id(&self) -> &str {
            &self.id
        }

        fn deliver(&mut self, _now: u64, from: &str, bytes: &[u8]) -> Reaction {
            if Message::decode(bytes).is_err() {
                return Reaction::rejected(ActorError::InvalidInput("garbage"), Vec::new());
            }
            if self.hops == 0 {
                return Reaction::accepted(Vec::new());
            }
            self.hops -= 1;
            Reaction::accepted(vec![Outbound { to: from.to_owned(), bytes: bytes.to_vec() }])
        }

        fn stored_bytes(&self) -> Vec<u8> {
            Vec::new()
        }

        crate::actors::impl_any!();
    }

    fn net() -> Network {
        Network::new().with(Echo { id: "a".into(), hops: 3 }).unwrap().with(Echo { id: "b".into(), hops: 3 }).unwrap()
    }

    fn msg() -> Vec<u8> {
        encode(&QuoteRefusal { request_nonce: Id([7; 16]) }).unwrap()
    }

    #[test]
    fn fifo_one_delivery_per_tick() {
        let mut n = net();
        let r = run_scenario(&mut n, vec![Injection::new("a", "b", msg())], None, 100);
        let ticks: Vec<u64> = r.transcript.records().iter().map(|x| x.tick).collect();
        assert_eq!(ticks, (1..=7).collect::<Vec<_>>());
        assert_eq!(r.deliveries[3].cause, Some(2));
        assert_eq!(r.descendants(4), BTreeSet::from([4, 5, 6]));
    }

    #[test]
    fn max_ticks_truncates() {
        let mut n = net();
        let r = run_scenario(&mut n, vec![Injection::new("a", "b", msg())], None, 2);
        assert_eq!(r.transcript.len(), 2);
        assert_eq!(r.undelivered, 1);
    }

    #[test]
    fn undeliverable_destination_is_recorded_and_dropped() {
        let mut n = net();
        let r = run_scenario(&mut n, vec![Injection::new("a", "nobody", msg())], None, 10);
        assert_eq!(r.transcript.len(), 1);
        assert_eq!(r.transcript.records()[0].adversary_action, AdversaryAction::Undeliverable);
        assert_eq!(r.deliveries[0].verdict, None);
    }

    #[test]
    fn duplicate_endpoint_rejected() {
        let mut n = net();
        assert_eq!(
            n.add(Endpoint::new(Echo { id: "a".into(), hops: 0 })),
            Err(NetworkError::DuplicateEndpoint("a".into()))
        );
    }

    #[test]
    fn adversary_actions_are_recorded() {
        let mut n = net();
        let mut adv = Adversary::drop(Target::All);
        let r = run_scenario(&mut n, vec![Injection::new("a", "b", msg())], Some(&mut adv), 10);
        assert_eq!(r.transcript.len(), 1);
        assert_eq!(r.transcript.records()[0].adversary_action, AdversaryAction::Dropped);

        let mut n = net();
        let mut adv = Adversary::replay(Target::Type(MessageType::QuoteRefusal));
        let r = run_scenario(&mut n, vec![Injection::new("a", "b", msg())], Some(&mut adv), 100);
        let replayed: Vec<_> =
            r.transcript.records().iter().filter(|x| x.adversary_action == AdversaryAction::Replayed).collect();
        assert_eq!(replayed.len(), 1);

        let mut n = net();
        let mut adv = Adversary::tamper(Target::All, Mutation::FlipBit(0));
        let r = run_scenario(&mut n, vec![Injection::new("a", "b", msg())], Some(&mut adv), 100);
        assert_eq!(r.transcript.records()[0].adversary_action, AdversaryAction::Tampered);
        assert!(!r.accepted(0));
    }

    #[test]
    fn passive_adversary_captures_exact_wire_bytes() {
        let mut n = net();
        let mut adv = Adversary::passive(Target::All);
        let r = run_scenario(&mut n, vec![Injection::new("a", "b", msg())], Some(&mut adv), 100);
        assert_eq!(adv.capture_log().len(), r.transcript.len());
        assert!(adv.capture_log().iter().all(|b| *b == msg()));
    }
}
