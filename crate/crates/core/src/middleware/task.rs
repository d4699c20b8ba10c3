//! Task descriptions, the status machine and the master node's task queue.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::netlayer::{packets_for, PacketError};
use crate::NodeId;

pub type TaskId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Queued,
    Dispatched,
    Executing,
    Migrating,
    Completed,
    Failed,
}

impl TaskStatus {
    pub fn label(self) -> &'static str {
        match self {
            TaskStatus::Queued => "queued",
            TaskStatus::Dispatched => "dispatched",
            TaskStatus::Executing => "executing",
            TaskStatus::Migrating => "migrating",
            TaskStatus::Completed => "completed",
            TaskStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<TaskStatus> {
        Some(match s {
            "queued" => TaskStatus::Queued,
            "dispatched" => TaskStatus::Dispatched,
            "executing" => TaskStatus::Executing,
            "migrating" => TaskStatus::Migrating,
            "completed" => TaskStatus::Completed,
            "failed" => TaskStatus::Failed,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        self == TaskStatus::Completed
    }
}

/// Allowed status changes. Besides the main lifecycle, a failed task can be
/// re-queued, and a result that arrives after the master gave up on an
/// attempt completes the task from whatever state it is in.
pub fn transition_allowed(from: TaskStatus, to: TaskStatus) -> bool {
    use TaskStatus::*;
    matches!(
        (from, to),
        (Queued, Dispatched)
            | (Dispatched, Executing)
            | (Dispatched, Queued)
            | (Dispatched, Failed)
            | (Executing, Completed)
            | (Executing, Failed)
            | (Executing, Migrating)
            | (Migrating, Executing)
            | (Migrating, Failed)
            | (Failed, Queued)
            | (Queued, Completed)
            | (Dispatched, Completed)
            | (Migrating, Completed)
            | (Failed, Completed)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub task_type: u32,
    /// Consumer node that submitted the task and receives the result.
    pub consumer: NodeId,
    pub submit_at: SimTime,
    pub instructions: u64,
    pub code_bits: u64,
    pub input_bits: u64,
    pub output_bits: u64,
}

impl TaskSpec {
    /// Bits sent toward the provider: code plus input.
    pub fn dispatch_bits(&self) -> u64 {
        self.code_bits + self.input_bits
    }

    /// Packets for code, input and output, each packetised separately.
    pub fn packets(&self, pkt_bits: u64, header_bits: u64) -> Result<u64, PacketError> {
        Ok(packets_for(self.dispatch_bits(), pkt_bits, header_bits)?
            + packets_for(self.output_bits, pkt_bits, header_bits)?)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("task {task}: transition {from:?} -> {to:?} is not allowed")]
pub struct TransitionError {
    pub task: TaskId,
    pub from: TaskStatus,
    pub to: TaskStatus,
}

/// The master's view of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub spec: TaskSpec,
    pub status: TaskStatus,
    pub assigned: Option<NodeId>,
    /// Incremented on every fresh placement; migrations keep the attempt.
    pub attempt: u32,
    /// Last time any node reported on the current attempt.
    pub last_report_at: SimTime,
    /// When the master first learned the current attempt was running.
    pub exec_seen_at: Option<SimTime>,
    /// Instructions already done when the current placement started.
    pub resumed_from: u64,
    pub queued_since: SimTime,
    pub migrations: u32,
    pub failures: u32,
    pub permanently_failed: bool,
}

impl TaskRecord {
    pub fn new(spec: TaskSpec, now: SimTime) -> Self {
        Self {
            spec,
            status: TaskStatus::Queued,
            assigned: None,
            attempt: 0,
            last_report_at: now,
            exec_seen_at: None,
            resumed_from: 0,
            queued_since: now,
            migrations: 0,
            failures: 0,
            permanently_failed: false,
        }
    }

    pub fn remaining_instructions(&self) -> u64 {
        self.spec.instructions - self.resumed_from
    }
}

/// Task queue held by the master node, indexed by task id.
#[derive(Debug, Clone, Default)]
pub struct TaskQueue {
    records: Vec<Option<TaskRecord>>,
}

impl TaskQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn submit(&mut self, spec: TaskSpec, now: SimTime) {
        let id = spec.id;
        if self.records.len() <= id {
            self.records.resize(id + 1, None);
        }
        if self.records[id].is_none() {
            self.records[id] = Some(TaskRecord::new(spec, now));
        }
    }

    pub fn get(&self, id: TaskId) -> Option<&TaskRecord> {
        self.records.get(id).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, id: TaskId) -> Option<&mut TaskRecord> {
        self.records.get_mut(id).and_then(Option::as_mut)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskRecord> + '_ {
        self.records.iter().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut TaskRecord> + '_ {
        self.records.iter_mut().flatten()
    }

    /// Tasks waiting for placement, oldest submission first.
    pub fn queued(&self) -> Vec<TaskId> {
        let mut q: Vec<&TaskRecord> = self
            .iter()
            .filter(|r| r.status == TaskStatus::Queued)
            .collect();
        q.sort_by(|a, b| {
            a.spec
                .submit_at
                .total_cmp(&b.spec.submit_at)
                .then(a.spec.id.cmp(&b.spec.id))
        });
        q.into_iter().map(|r| r.spec.id).collect()
    }

    /// Applies a status change, returning the previous status.
    pub fn set_status(
        &mut self,
        id: TaskId,
        to: TaskStatus,
    ) -> Result<TaskStatus, TransitionError> {
        let rec = self.get_mut(id).expect("unknown task id");
        let from = rec.status;
        if !transition_allowed(from, to) {
            return Err(TransitionError { task: id, from, to });
        }
        rec.status = to;
        Ok(from)
    }

    /// Placed tasks on `node` that have not finished, for queue-time estimates.
    pub fn on_node(&self, node: NodeId) -> impl Iterator<Item = &TaskRecord> + '_ {
        self.iter().filter(move |r| {
            r.assigned == Some(node)
                && matches!(
                    r.status,
                    TaskStatus::Dispatched | TaskStatus::Executing | TaskStatus::Migrating
                )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: TaskId, at: f64) -> TaskSpec {
        TaskSpec {
            id,
            task_type: 0,
            consumer: 1,
            submit_at: at,
            instructions: 1000,
            code_bits: 3840,
            input_bits: 3840,
            output_bits: 100,
        }
    }

    #[test]
    fn lifecycle_transitions() {
        use TaskStatus::*;
        assert!(transition_allowed(Queued, Dispatched));
        assert!(transition_allowed(Executing, Migrating));
        assert!(transition_allowed(Migrating, Executing));
        assert!(!transition_allowed(Queued, Executing));
        assert!(!transition_allowed(Completed, Queued));
        assert!(!transition_allowed(Completed, Failed));
        assert!(!transition_allowed(Executing, Queued));
    }

    #[test]
    fn queue_rejects_illegal_change() {
        let mut q = TaskQueue::new();
        q.submit(spec(0, 1.0), 1.0);
        assert_eq!(q.set_status(0, TaskStatus::Dispatched), Ok(TaskStatus::Queued));
        assert!(q.set_status(0, TaskStatus::Migrating).is_err());
        assert_eq!(q.get(0).unwrap().status, TaskStatus::Dispatched);
    }

    #[test]
    fn queued_in_submission_order() {
        let mut q = TaskQueue::new();
        q.submit(spec(2, 5.0), 5.0);
        q.submit(spec(0, 7.0), 7.0);
        q.submit(spec(1, 5.0), 5.0);
        assert_eq!(q.queued(), vec![1, 2, 0]);
    }

    #[test]
    fn packet_count_sums_directions() {
        // code+input 7680 bits -> 2 packets, output 100 bits -> 1 packet
        assert_eq!(spec(0, 0.0).packets(4096, 256), Ok(3));
    }
}
