use std::collections::VecDeque;
use std::fmt;

use super::{Injection, Network, Transcript};
use crate::messages::AdversaryAction;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DivergenceReport {
    pub records_checked: usize,
    pub divergence: Option<Divergence>,
}

impl DivergenceReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none()
    }

    pub fn first_divergence(&self) -> Option<usize> {
        self.divergence.as_ref().map(|d| d.index)
    }
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.divergence {
            None => writeln!(f, "replay: {} record(s) reproduced", self.records_checked),
            Some(d) => writeln!(f, "replay: diverged at record {}: {}", d.index, d.reason),
        }
    }
}

/// Drives fresh endpoints from the same initial messages and checks that each
/// recorded delivery is the one the scheduler would make next. Adversary
/// actions are taken from the record: tampered bytes and duplicates are
/// delivered as recorded and dropped messages are withheld.
pub fn replay_transcript(transcript: &Transcript, network: &mut Network, initial: &[Injection]) -> DivergenceReport {
    let mut expected: VecDeque<Injection> = initial.iter().cloned().collect();
    let mut report = DivergenceReport::default();
    for (i, rec) in transcript.records().iter().enumerate() {
        let diverge = |reason: String| Some(Divergence { index: i, reason });
        if rec.tick != i as u64 + 1 {
            report.divergence = diverge(format!("tick {} where {} was due", rec.tick, i + 1));
            return report;
        }
        if rec.adversary_action != AdversaryAction::Replayed {
            let Some(next) = expected.pop_front() else {
                report.divergence = diverge("no message was queued".to_owned());
                return report;
            };
            if next.from != rec.from_id || next.to != rec.to_id {
                report.divergence =
                    diverge(format!("{} -> {} where {} -> {} was due", rec.from_id, rec.to_id, next.from, next.to));
                return report;
            }
            if rec.adversary_action != AdversaryAction::Tampered && next.bytes != rec.bytes {
                report.divergence = diverge("message bytes differ".to_owned());
                return report;
            }
        }
        let reachable = network.contains(&rec.to_id);
        if (rec.adversary_action == AdversaryAction::Undeliverable) == reachable {
            report.divergence = diverge(format!("deliverability of {} differs", rec.to_id));
            return report;
        }
        report.records_checked += 1;
        if !rec.adversary_action.delivered() {
            continue;
        }
        let reaction = network.deliver(rec.tick, &rec.from_id, &rec.to_id, &rec.bytes).expect("reachable");
        expected.extend(reaction.outbound.into_iter().map(|o| Injection {
            from: rec.to_id.clone(),
            to: o.to,
            bytes: o.bytes,
        }));
    }
    report
}
