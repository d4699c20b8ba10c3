//! Per-run event trace.

use std::fmt;
use std::io::{self, Write};

use crate::engine::SimTime;
use crate::middleware::{PacketKind, TaskId, TaskStatus};
use crate::radio::LevelIdx;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// `count` transmissions by `src` at `level`; `lost` of them were not
    /// received. `dst` is `None` for broadcasts.
    Packet {
        t: SimTime,
        src: NodeId,
        dst: Option<NodeId>,
        level: LevelIdx,
        kind: PacketKind,
        count: u64,
        lost: u64,
        energy_j: f64,
    },
    /// Same as `Packet` but summed over every node sending at `level`.
    PacketBatch {
        t: SimTime,
        senders: u64,
        level: LevelIdx,
        kind: PacketKind,
        energy_j: f64,
    },
    Submitted {
        t: SimTime,
        task: TaskId,
        consumer: NodeId,
        instructions: u64,
    },
    Status {
        t: SimTime,
        task: TaskId,
        from: TaskStatus,
        to: TaskStatus,
        node: Option<NodeId>,
    },
    Dispatch {
        t: SimTime,
        task: TaskId,
        attempt: u32,
        node: NodeId,
        available: bool,
    },
    /// Instructions of `(task, attempt)` executed on `node` in one stretch.
    Exec {
        t: SimTime,
        task: TaskId,
        attempt: u32,
        node: NodeId,
        instructions: u64,
    },
    Migration {
        t: SimTime,
        task: TaskId,
        from: NodeId,
        to: NodeId,
        ok: bool,
    },
    /// The consumer received the first result of a task.
    Completed {
        t: SimTime,
        task: TaskId,
        attempt: u32,
        node: NodeId,
        completion_s: f64,
    },
    PermanentFailure {
        t: SimTime,
        task: TaskId,
    },
    Position {
        t: SimTime,
        node: NodeId,
        x: f64,
        y: f64,
    },
}

impl TraceEvent {
    pub fn time(&self) -> SimTime {
        match self {
            TraceEvent::Packet { t, .. }
            | TraceEvent::PacketBatch { t, .. }
            | TraceEvent::Submitted { t, .. }
            | TraceEvent::Status { t, .. }
            | TraceEvent::Dispatch { t, .. }
            | TraceEvent::Exec { t, .. }
            | TraceEvent::Migration { t, .. }
            | TraceEvent::Completed { t, .. }
            | TraceEvent::PermanentFailure { t, .. }
            | TraceEvent::Position { t, .. } => *t,
        }
    }

    /// Transmission energy carried by this record.
    pub fn energy_j(&self) -> f64 {
        match self {
            TraceEvent::Packet { energy_j, .. } | TraceEvent::PacketBatch { energy_j, .. } => *energy_j,
            _ => 0.0,
        }
    }
}

fn opt(n: Option<NodeId>) -> String {
    n.map_or_else(|| "*".to_string(), |v| v.to_string())
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Packet {
                t,
                src,
                dst,
                level,
                kind,
                count,
                lost,
                energy_j,
            } => write!(
                f,
                "{t:.6} packet src={src} dst={} level={level} kind={} count={count} lost={lost} energy={energy_j:e}",
                opt(*dst),
                kind.label()
            ),
            TraceEvent::PacketBatch {
                t,
                senders,
                level,
                kind,
                energy_j,
            } => write!(
                f,
                "{t:.6} packet src=all dst=* level={level} kind={} count={senders} lost=0 energy={energy_j:e}",
                kind.label()
            ),
            TraceEvent::Submitted {
                t,
                task,
                consumer,
                instructions,
            } => write!(f, "{t:.6} submit task={task} consumer={consumer} instructions={instructions}"),
            TraceEvent::Status {
                t,
                task,
                from,
                to,
                node,
            } => write!(
                f,
                "{t:.6} status task={task} from={} to={} node={}",
                from.label(),
                to.label(),
                opt(*node)
            ),
            TraceEvent::Dispatch {
                t,
                task,
                attempt,
                node,
                available,
            } => write!(
                f,
                "{t:.6} dispatch task={task} attempt={attempt} node={node} available={available}"
            ),
            TraceEvent::Exec {
                t,
                task,
                attempt,
                node,
                instructions,
            } => write!(
                f,
                "{t:.6} exec task={task} attempt={attempt} node={node} instructions={instructions}"
            ),
            TraceEvent::Migration {
                t,
                task,
                from,
                to,
                ok,
            } => write!(f, "{t:.6} migration task={task} from={from} to={to} ok={ok}"),
            TraceEvent::Completed {
                t,
                task,
                attempt,
                node,
                completion_s,
            } => write!(
                f,
                "{t:.6} completed task={task} attempt={attempt} node={node} completion={completion_s:.6}"
            ),
            TraceEvent::PermanentFailure { t, task } => write!(f, "{t:.6} failed task={task}"),
            TraceEvent::Position { t, node, x, y } => {
                write!(f, "{t:.6} position node={node} x={x:.3} y={y:.3}")
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEvent> + '_ {
        self.events.iter()
    }

    pub fn total_energy_j(&self) -> f64 {
        self.events.iter().map(TraceEvent::energy_j).sum()
    }

    /// Sampled positions as `(t, node, x, y)`.
    pub fn positions(&self) -> Vec<(SimTime, NodeId, f64, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Position { t, node, x, y } => Some((*t, *node, *x, *y)),
                _ => None,
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let e = TraceEvent::Packet {
            t: 1.5,
            src: 3,
            dst: None,
            level: 2,
            kind: PacketKind::Nim,
            count: 1,
            lost: 0,
            energy_j: 0.25,
        };
        assert_eq!(
            e.to_string(),
            "1.500000 packet src=3 dst=* level=2 kind=nim count=1 lost=0 energy=2.5e-1"
        );
        let s = TraceEvent::Status {
            t: 2.0,
            task: 4,
            from: TaskStatus::Queued,
            to: TaskStatus::Dispatched,
            node: Some(7),
        };
        assert_eq!(s.to_string(), "2.000000 status task=4 from=queued to=dispatched node=7");
    }

    #[test]
    fn energy_sum() {
        let mut t = Trace::default();
        t.push(TraceEvent::PacketBatch {
            t: 0.0,
            senders: 20,
            level: 0,
            kind: PacketKind::Hello,
            energy_j: 0.5,
        });
        t.push(TraceEvent::PermanentFailure { t: 1.0, task: 0 });
        assert_eq!(t.total_energy_j(), 0.5);
    }
}
