//! Instrumented record of which rows each stage reads.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Training,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub fold: usize,
    pub stage: String,
    pub phase: Phase,
    pub reads: usize,
    pub rows_read: usize,
    /// Rows belonging to this fold's test set.
    pub test_rows_read: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pre_evaluation_test_reads: usize,
    pub events: Vec<AuditEvent>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.pre_evaluation_test_reads == 0
    }
}

pub struct Audit {
    assignment: Vec<usize>,
    tally: Mutex<BTreeMap<(usize, String), AuditEvent>>,
}

impl Audit {
    pub fn new(assignment: &[usize]) -> Self {
        Audit { assignment: assignment.to_vec(), tally: Mutex::new(BTreeMap::new()) }
    }

    /// Record that `stage` of `fold` read the given dataset rows.
    pub fn read(&self, fold: usize, stage: &str, phase: Phase, rows: &[usize]) {
        let test = rows.iter().filter(|&&r| self.assignment[r] == fold).count();
        let mut tally = self.tally.lock().unwrap_or_else(|e| e.into_inner());
        let ev = tally.entry((fold, stage.to_string())).or_insert_with(|| AuditEvent {
            fold,
            stage: stage.to_string(),
            phase,
            reads: 0,
            rows_read: 0,
            test_rows_read: 0,
        });
        ev.reads += 1;
        ev.rows_read += rows.len();
        ev.test_rows_read += test;
    }

    pub fn report(&self) -> AuditReport {
        let tally = self.tally.lock().unwrap_or_else(|e| e.into_inner());
        let events: Vec<AuditEvent> = tally.values().cloned().collect();
        let pre_evaluation_test_reads =
            events.iter().filter(|e| e.phase == Phase::Training).map(|e| e.test_rows_read).sum();
        AuditReport { pre_evaluation_test_reads, events }
    }
}
