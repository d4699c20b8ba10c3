//! Consistency checks over a finished run and its trace.

use std::collections::BTreeMap;
use std::fmt;

use crate::middleware::{transition_allowed, TaskId, TaskStatus};
use crate::trace::TraceEvent;
use crate::world::RunOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Submitted tasks not accounted for as completed, failed or in flight.
    Conservation,
    StatusMachine,
    DispatchToUnavailable,
    /// Executed instructions of the completing attempt differ from the task size.
    MigrationWork,
    EnergySum,
    AtctSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub task: Option<TaskId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Some(t) => write!(f, "{:?} (task {t}): {}", self.kind, self.detail),
            None => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Every property violation found in `out`; empty for a consistent run.
pub fn check_run(out: &RunOutput) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |kind, task, detail: String| v.push(Violation { kind, task, detail });

    let mut status: BTreeMap<TaskId, TaskStatus> = BTreeMap::new();
    let mut submitted = 0usize;
    let mut completed: BTreeMap<TaskId, (u32, f64)> = BTreeMap::new();
    let mut failed = 0usize;
    let mut exec: BTreeMap<(TaskId, u32), u64> = BTreeMap::new();
    let mut energy = 0.0;

    for e in out.trace.iter() {
        energy += e.energy_j();
        match *e {
            TraceEvent::Submitted { task, .. } => {
                submitted += 1;
                if status.insert(task, TaskStatus::Queued).is_some() {
                    push(ViolationKind::Conservation, Some(task), "submitted twice".into());
                }
            }
            TraceEvent::Status { task, from, to, .. } => {
                match status.get(&task) {
                    None => push(
                        ViolationKind::StatusMachine,
                        Some(task),
                        "status change before submission".into(),
                    ),
                    Some(&cur) if cur != from => push(
                        ViolationKind::StatusMachine,
                        Some(task),
                        format!("recorded {} but task was {}", from.label(), cur.label()),
                    ),
                    Some(_) => {}
                }
                if !transition_allowed(from, to) {
                    push(
                        ViolationKind::StatusMachine,
                        Some(task),
                        format!("{} -> {} not allowed", from.label(), to.label()),
                    );
                }
                status.insert(task, to);
            }
            TraceEvent::Dispatch {
                task,
                node,
                available,
                ..
            } => {
                if !available {
                    push(
                        ViolationKind::DispatchToUnavailable,
                        Some(task),
                        format!("node {node} was not available"),
                    );
                }
            }
            TraceEvent::Exec {
                task,
                attempt,
                instructions,
                ..
            } => *exec.entry((task, attempt)).or_default() += instructions,
            TraceEvent::Completed {
                task,
                attempt,
                completion_s,
                ..
            } => {
                if completed.insert(task, (attempt, completion_s)).is_some() {
                    push(ViolationKind::Conservation, Some(task), "completed twice".into());
                }
            }
            TraceEvent::PermanentFailure { .. } => failed += 1,
            _ => {}
        }
    }

    let m = &out.metrics;
    if submitted != m.tasks_submitted
        || completed.len() != m.tasks_completed
        || m.tasks_completed + m.tasks_failed + m.tasks_in_system != m.tasks_submitted
        || m.tasks_failed > failed
    {
        push(
            ViolationKind::Conservation,
            None,
            format!(
                "trace: {submitted} submitted, {} completed, {failed} failed; metrics: {} / {} / {} / {} in system",
                completed.len(),
                m.tasks_submitted,
                m.tasks_completed,
                m.tasks_failed,
                m.tasks_in_system
            ),
        );
    }

    for (&task, &(attempt, _)) in &completed {
        let size = out.tasks[task].instructions;
        let done = exec.get(&(task, attempt)).copied().unwrap_or(0);
        if done != size {
            push(
                ViolationKind::MigrationWork,
                Some(task),
                format!("attempt {attempt} executed {done} of {size} instructions"),
            );
        }
    }

    if !close(energy, m.tx_energy_j, 1e-9) {
        push(
            ViolationKind::EnergySum,
            None,
            format!("trace {energy} J, metrics {} J", m.tx_energy_j),
        );
    }
    let atct: f64 = completed.values().map(|&(_, c)| c).sum();
    if !close(atct, m.atct_s, 1e-9) {
        push(
            ViolationKind::AtctSum,
            None,
            format!("trace {atct} s, metrics {} s", m.atct_s),
        );
    }
    v
}
