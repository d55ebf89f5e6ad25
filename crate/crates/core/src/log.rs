//! Time-stamped event records for auditing and statistical tests.
//!
//! Simulators append one record per realized or vetoed event; the replay
//! helpers rebuild final sequences from an initial state plus the log, which
//! is the oracle for "the log explains the output".

use crate::num::Real;
use crate::seq::{SiteActivity, TraitSequence, TraitState};
use crate::tree::{NodeId, Tree};

/// What happened (or was vetoed) at one point in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A fresh trait born into a language (stochastic-Dollo).
    Birth,
    /// An alive trait removed from a language (stochastic-Dollo).
    Death,
    /// GTR/covarion mutation 0 -> 1.
    GainMutation,
    /// GTR/covarion mutation 1 -> 0.
    LossMutation,
    /// Covarion regime switch (variant <-> invariant), observable unchanged.
    RegimeSwitch,
    /// Trait set present in the recipient, copied from `donor`.
    Borrow { donor: NodeId },
    /// Death skipped by the no-empty-meaning-class guard.
    VetoedDeath,
    /// Borrowing skipped: donor and recipient too distantly related.
    VetoedBorrowDistance { donor: NodeId },
    /// Borrowing skipped: no partner lineage alive.
    VetoedBorrowNoPartner,
}

impl EventKind {
    pub fn is_veto(self) -> bool {
        matches!(
            self,
            EventKind::VetoedDeath
                | EventKind::VetoedBorrowDistance { .. }
                | EventKind::VetoedBorrowNoPartner
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord<F> {
    /// Time before the present at which the event fired.
    pub age: F,
    /// Lineage (edge child node) the event applies to.
    pub language: NodeId,
    /// Column involved, when one is.
    pub column: Option<usize>,
    pub kind: EventKind,
}

/// Append-only event record.
#[derive(Debug, Clone, Default)]
pub struct EventLog<F> {
    records: Vec<EventRecord<F>>,
}

impl<F: Real> EventLog<F> {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EventRecord<F>) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord<F>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&EventRecord<F>) -> bool) -> usize {
        self.records.iter().filter(|r| pred(r)).count()
    }
}

/// Borrow of a log scoped to one branch: the kernel logs against this
/// lineage with ages measured down from `start_age`.
pub struct BranchLog<'a, F> {
    pub log: &'a mut EventLog<F>,
    pub language: NodeId,
    pub start_age: F,
}

impl<'a, F: Real> BranchLog<'a, F> {
    pub fn standalone(log: &'a mut EventLog<F>, elapsed: F) -> Self {
        Self {
            log,
            language: 0,
            start_age: elapsed,
        }
    }

    pub fn record(&mut self, local_time: F, column: Option<usize>, kind: EventKind) {
        self.log.push(EventRecord {
            age: self.start_age - local_time,
            language: self.language,
            column,
            kind,
        });
    }
}

/// Apply one event to a sequence, growing it as needed. Vetoes are no-ops.
fn apply_event<F: Real>(seq: &mut TraitSequence, record: &EventRecord<F>) {
    let Some(column) = record.column else { return };
    match record.kind {
        EventKind::Birth | EventKind::GainMutation | EventKind::Borrow { .. } => {
            seq.ensure_len(column + 1);
            seq.set_state(column, TraitState::Present)
                .expect("column exists");
        }
        EventKind::Death | EventKind::LossMutation => {
            seq.set_state(column, TraitState::Absent)
                .expect("column exists");
        }
        EventKind::RegimeSwitch => {
            let hidden = seq
                .hidden_mut()
                .expect("covarion replay needs hidden states");
            hidden[column] = match hidden[column] {
                SiteActivity::Variant => SiteActivity::Invariant,
                SiteActivity::Invariant => SiteActivity::Variant,
            };
        }
        _ => {}
    }
}

/// Replay a single-branch log onto a copy of the initial sequence.
pub fn replay_branch<F: Real>(initial: &TraitSequence, log: &EventLog<F>) -> TraitSequence {
    let mut seq = initial.clone();
    for record in log.records() {
        apply_event(&mut seq, record);
    }
    seq
}

/// Replay a whole-tree log: walks the sweep intervals of `tree`, copies the
/// working sequence to both children at every split and applies logged
/// events to their lineages. Returns one sequence per node, padded to
/// `width` columns.
pub fn replay_tree<F: Real>(
    tree: &Tree<F>,
    root_seq: &TraitSequence,
    width: usize,
    log: &EventLog<F>,
) -> Vec<TraitSequence> {
    let mut rows = vec![TraitSequence::default(); tree.len()];
    for &c in &tree.node(tree.root()).children {
        rows[c] = root_seq.clone();
    }
    let mut next = 0usize;
    let records = log.records();
    for interval in &tree.event_schedule().intervals {
        while next < records.len() && records[next].age > interval.lower {
            apply_event(&mut rows[records[next].language], &records[next]);
            next += 1;
        }
        if let Some(split) = interval.split_at_lower {
            for &c in &tree.node(split).children {
                rows[c] = rows[split].clone();
            }
        }
    }
    // Any records exactly at age 0 land after the last interval.
    while next < records.len() {
        apply_event(&mut rows[records[next].language], &records[next]);
        next += 1;
    }
    for row in &mut rows {
        row.ensure_len(width);
    }
    rows
}
