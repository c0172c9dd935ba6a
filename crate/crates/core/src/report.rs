//! Report types shared by the sampling audits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// One audited condition: a stable identifier, the verdict, the worst margin
/// seen over all samples (positive means the inequality held with room), and
/// the sample that attained it.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConditionEntry {
    pub id: String,
    pub pass: bool,
    /// Worst (smallest) margin over the sample set. The margin of an
    /// inequality `lhs <= rhs` is `rhs - lhs`.
    pub margin: f64,
    pub witness_t: f64,
    pub witness_u: f64,
    pub note: String,
    /// Non-mandatory entries are informational and do not affect `pass`.
    pub mandatory: bool,
}

#[derive(Clone, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AuditReport {
    pub entries: Vec<ConditionEntry>,
    /// Conjunction of the mandatory entries.
    pub pass: bool,
}

impl AuditReport {
    pub fn from_entries(entries: Vec<ConditionEntry>) -> Self {
        let pass = entries.iter().filter(|e| e.mandatory).all(|e| e.pass);
        AuditReport { entries, pass }
    }

    pub fn entry(&self, id: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Tracks the worst margin and its witness while sampling one condition.
#[derive(Clone, Debug)]
pub struct MarginTracker {
    pub margin: f64,
    pub witness_t: f64,
    pub witness_u: f64,
    pub samples: usize,
}

impl Default for MarginTracker {
    fn default() -> Self {
        MarginTracker {
            margin: f64::INFINITY,
            witness_t: f64::NAN,
            witness_u: f64::NAN,
            samples: 0,
        }
    }
}

impl MarginTracker {
    pub fn observe(&mut self, margin: f64, t: f64, u: f64) {
        self.samples += 1;
        if margin < self.margin {
            self.margin = margin;
            self.witness_t = t;
            self.witness_u = u;
        }
    }

    pub fn into_entry(self, id: &str, note: &str, mandatory: bool) -> ConditionEntry {
        ConditionEntry {
            id: String::from(id),
            pass: self.samples > 0 && self.margin >= 0.0,
            margin: self.margin,
            witness_t: self.witness_t,
            witness_u: self.witness_u,
            note: String::from(note),
            mandatory,
        }
    }
}

/// MarginTracker plus an eval-failure note and vacuity handling for the
/// audit loops.
pub(crate) struct Gate {
    pub(crate) tr: MarginTracker,
    pub(crate) failure: Option<String>,
    pub(crate) vacuous: bool,
}

impl Gate {
    pub(crate) fn new() -> Self {
        Gate {
            tr: MarginTracker::default(),
            failure: None,
            vacuous: false,
        }
    }

    pub(crate) fn observe(&mut self, margin: f64, t: f64, u: f64) {
        self.tr.observe(margin, t, u);
    }

    pub(crate) fn flag<E: core::fmt::Display>(&mut self, e: &E, t: f64, u: f64) {
        if self.failure.is_none() {
            self.failure = Some(format!("evaluation failed at (t, u) = ({t}, {u}): {e}"));
        }
    }

    /// `strict` additionally rejects a zero worst margin.
    pub(crate) fn entry(self, id: &str, note: &str, mandatory: bool, strict: bool) -> ConditionEntry {
        let mut e = self.tr.into_entry(id, note, mandatory);
        if strict && e.margin <= 0.0 {
            e.pass = false;
        }
        if self.vacuous {
            e.pass = true;
            e.note = String::from("no impulses in the partition");
        }
        if let Some(msg) = self.failure {
            e.pass = false;
            e.note = msg;
        }
        e
    }
}
