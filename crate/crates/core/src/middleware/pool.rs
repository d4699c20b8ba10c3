//! Resource pool kept by every node and the handling of pool messages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::messages::{ControlMessage, DynamicInfo, MemberInfo};
use crate::engine::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolTimers {
    /// Node information broadcast period `x`.
    pub nim_period_s: f64,
    /// Missed periods `m` before an entry is declared unavailable.
    pub miss_multiplier: f64,
    /// Task information period `z`.
    pub tim_period_s: f64,
    pub mim_period_s: f64,
    /// Relative change in queue time, memory or battery that triggers an update.
    pub update_threshold: f64,
    /// Task failure is assumed after `failure_grace * z` without a report.
    pub failure_grace: f64,
}

impl Default for ProtocolTimers {
    fn default() -> Self {
        Self {
            nim_period_s: 10.0,
            miss_multiplier: 3.0,
            tim_period_s: 15.0,
            mim_period_s: 30.0,
            update_threshold: 0.2,
            failure_grace: 4.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimerError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("miss multiplier must be at least 1")]
    MultiplierBelowOne,
}

impl ProtocolTimers {
    pub fn validate(&self) -> Result<(), TimerError> {
        for (name, v) in [
            ("nim_period_s", self.nim_period_s),
            ("tim_period_s", self.tim_period_s),
            ("mim_period_s", self.mim_period_s),
            ("failure_grace", self.failure_grace),
        ] {
            if !(v > 0.0) {
                return Err(TimerError::NotPositive(name));
            }
        }
        if !(self.miss_multiplier >= 1.0) {
            return Err(TimerError::MultiplierBelowOne);
        }
        if !(self.update_threshold >= 0.0) {
            return Err(TimerError::NotPositive("update_threshold"));
        }
        Ok(())
    }

    pub fn nim_timeout(&self) -> f64 {
        self.miss_multiplier * self.nim_period_s
    }

    pub fn mim_timeout(&self) -> f64 {
        self.miss_multiplier * self.mim_period_s
    }

    pub fn failure_timeout(&self) -> f64 {
        self.failure_grace * self.tim_period_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub node: NodeId,
    pub cpi: f64,
    pub cct_s: f64,
    pub dynamic: Option<DynamicInfo>,
    /// Last node information message heard directly from the node.
    pub last_nim_at: Option<SimTime>,
    /// Last time another node listed it in a members message.
    pub last_mim_at: Option<SimTime>,
    /// When the entry was first created.
    pub added_at: SimTime,
    pub available: bool,
}

impl PoolEntry {
    /// Directly heard entries live for `m * x`, relayed ones for `m * MIM period`.
    pub fn is_fresh(&self, now: SimTime, timers: &ProtocolTimers) -> bool {
        let direct = self
            .last_nim_at
            .is_some_and(|t| now - t <= timers.nim_timeout());
        let relayed = self
            .last_mim_at
            .is_some_and(|t| now - t <= timers.mim_timeout());
        direct || relayed
    }

    /// Whether a NIM was heard within `m * x`.
    pub fn heard_directly(&self, now: SimTime, timers: &ProtocolTimers) -> bool {
        self.last_nim_at
            .is_some_and(|t| now - t <= timers.nim_timeout())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Unicast { dst: NodeId, msg: ControlMessage },
    Broadcast(ControlMessage),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MalformedMessage {
    #[error("message addressed to node {dst} delivered to node {receiver}")]
    WrongDestination { dst: NodeId, receiver: NodeId },
    #[error("non-finite or negative field in {0}")]
    BadValue(&'static str),
}

fn dynamic_ok(info: &DynamicInfo) -> bool {
    info.queue_wait_s.is_finite()
        && info.queue_wait_s >= 0.0
        && info.battery_j.is_finite()
        && info.battery_j >= 0.0
}

fn caps_ok(cpi: f64, cct_s: f64) -> bool {
    cpi.is_finite() && cpi > 0.0 && cct_s.is_finite() && cct_s > 0.0
}

fn relative_change(old: f64, new: f64) -> f64 {
    if old == 0.0 {
        if new == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((new - old) / old).abs()
    }
}

/// True when any field moved by more than `threshold` relative to `old`.
pub fn changed_beyond(old: &DynamicInfo, new: &DynamicInfo, threshold: f64) -> bool {
    relative_change(old.queue_wait_s, new.queue_wait_s) > threshold
        || relative_change(old.memory_bytes as f64, new.memory_bytes as f64) > threshold
        || relative_change(old.battery_j, new.battery_j) > threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourcePool {
    pub owner: NodeId,
    entries: BTreeMap<NodeId, PoolEntry>,
}

impl ResourcePool {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, node: NodeId) -> Option<&PoolEntry> {
        self.entries.get(&node)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> + '_ {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_available(&self, node: NodeId) -> bool {
        self.entries.get(&node).is_some_and(|e| e.available)
    }

    /// Members advertised in this node's MIM: entries heard directly.
    pub fn direct_members(&self, now: SimTime, timers: &ProtocolTimers) -> Vec<MemberInfo> {
        self.entries
            .values()
            .filter(|e| e.heard_directly(now, timers))
            .map(|e| MemberInfo {
                member: e.node,
                cpi: e.cpi,
                cct_s: e.cct_s,
            })
            .collect()
    }

    fn upsert_static(
        &mut self,
        node: NodeId,
        cpi: f64,
        cct_s: f64,
        now: SimTime,
    ) -> (&mut PoolEntry, bool) {
        let mut fresh = false;
        let e = self.entries.entry(node).or_insert_with(|| {
            fresh = true;
            PoolEntry {
                node,
                cpi,
                cct_s,
                dynamic: None,
                last_nim_at: None,
                last_mim_at: None,
                added_at: now,
                available: false,
            }
        });
        e.cpi = cpi;
        e.cct_s = cct_s;
        (e, fresh)
    }

    /// Stores dynamic info; returns true if it moved beyond `threshold`.
    fn update_dynamic(&mut self, node: NodeId, info: DynamicInfo, threshold: f64) -> bool {
        let Some(e) = self.entries.get_mut(&node) else {
            return false;
        };
        let changed = match &e.dynamic {
            None => true,
            Some(old) => changed_beyond(old, &info, threshold),
        };
        e.dynamic = Some(info);
        changed
    }

    /// Handles one pool-related message and returns the messages it causes.
    /// `own` is the receiver's current dynamic state, used to answer requests.
    pub fn process_control_message(
        &mut self,
        msg: &ControlMessage,
        own: &DynamicInfo,
        now: SimTime,
        timers: &ProtocolTimers,
    ) -> Result<Vec<Outgoing>, MalformedMessage> {
        let me = self.owner;
        let check_dst = |dst: NodeId| {
            if dst == me {
                Ok(())
            } else {
                Err(MalformedMessage::WrongDestination { dst, receiver: me })
            }
        };
        let mut out = Vec::new();
        match msg {
            ControlMessage::Nim {
                node, cpi, cct_s, ..
            } => {
                if !caps_ok(*cpi, *cct_s) {
                    return Err(MalformedMessage::BadValue("nim"));
                }
                if *node == me {
                    return Ok(out);
                }
                let (e, fresh) = self.upsert_static(*node, *cpi, *cct_s, now);
                e.last_nim_at = Some(now);
                e.available = true;
                if fresh {
                    out.push(Outgoing::Unicast {
                        dst: *node,
                        msg: ControlMessage::Nirm { src: me, dst: *node },
                    });
                }
            }
            ControlMessage::Nirm { src, dst } => {
                check_dst(*dst)?;
                out.push(Outgoing::Unicast {
                    dst: *src,
                    msg: ControlMessage::Nium {
                        node: me,
                        info: *own,
                        dst: Some(*src),
                    },
                });
            }
            ControlMessage::Nium { node, info, dst } => {
                if let Some(d) = dst {
                    check_dst(*d)?;
                }
                if !dynamic_ok(info) {
                    return Err(MalformedMessage::BadValue("nium"));
                }
                if *node != me && self.update_dynamic(*node, *info, timers.update_threshold) {
                    out.push(Outgoing::Broadcast(ControlMessage::Mium {
                        src: me,
                        member: *node,
                        info: *info,
                        dst: None,
                    }));
                }
            }
            ControlMessage::Mium {
                member, info, dst, ..
            } => {
                if let Some(d) = dst {
                    check_dst(*d)?;
                }
                if !dynamic_ok(info) {
                    return Err(MalformedMessage::BadValue("mium"));
                }
                let changed = *member != me
                    && self.update_dynamic(*member, *info, timers.update_threshold);
                // answers to a request are not relayed further
                if changed && dst.is_none() {
                    out.push(Outgoing::Broadcast(ControlMessage::Mium {
                        src: me,
                        member: *member,
                        info: *info,
                        dst: None,
                    }));
                }
            }
            ControlMessage::Mim { node, members, .. } => {
                if members.iter().any(|m| !caps_ok(m.cpi, m.cct_s)) {
                    return Err(MalformedMessage::BadValue("mim"));
                }
                if *node == me {
                    return Ok(out);
                }
                let mut unknown = Vec::new();
                for m in members {
                    if m.member == me {
                        continue;
                    }
                    let (e, fresh) = self.upsert_static(m.member, m.cpi, m.cct_s, now);
                    e.last_mim_at = Some(now);
                    e.available = true;
                    if fresh || e.dynamic.is_none() {
                        unknown.push(m.member);
                    }
                }
                if !unknown.is_empty() {
                    out.push(Outgoing::Unicast {
                        dst: *node,
                        msg: ControlMessage::Mdirm {
                            src: me,
                            members: unknown,
                            dst: *node,
                        },
                    });
                }
            }
            ControlMessage::Mdirm { src, members, dst } => {
                check_dst(*dst)?;
                for &m in members {
                    let info = if m == me {
                        Some(*own)
                    } else {
                        self.entries.get(&m).and_then(|e| e.dynamic)
                    };
                    if let Some(info) = info {
                        out.push(Outgoing::Unicast {
                            dst: *src,
                            msg: ControlMessage::Mium {
                                src: me,
                                member: m,
                                info,
                                dst: Some(*src),
                            },
                        });
                    }
                }
            }
            ControlMessage::Tim { dst, .. } => check_dst(*dst)?,
            _ => {}
        }
        Ok(out)
    }

    /// Refreshes availability flags, returning nodes that just became unavailable.
    pub fn evict_stale(&mut self, now: SimTime, timers: &ProtocolTimers) -> Vec<NodeId> {
        let mut gone = Vec::new();
        for e in self.entries.values_mut() {
            let fresh = e.is_fresh(now, timers);
            if e.available && !fresh {
                gone.push(e.node);
            }
            e.available = fresh;
        }
        gone
    }
}

/// Remembers the last advertised dynamic state of a node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateTracker {
    last_sent: Option<DynamicInfo>,
}

impl UpdateTracker {
    pub fn last_sent(&self) -> Option<DynamicInfo> {
        self.last_sent
    }

    /// Records `current` as sent when it differs enough from the last
    /// advertised snapshot; returns whether an update should go out.
    pub fn maybe_send_nium(&mut self, current: DynamicInfo, threshold: f64) -> bool {
        let send = match &self.last_sent {
            None => true,
            Some(old) => changed_beyond(old, &current, threshold),
        };
        if send {
            self.last_sent = Some(current);
        }
        send
    }

    /// Marks `current` as advertised without a threshold check.
    pub fn mark_sent(&mut self, current: DynamicInfo) {
        self.last_sent = Some(current);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: ProtocolTimers = ProtocolTimers {
        nim_period_s: 10.0,
        miss_multiplier: 3.0,
        tim_period_s: 15.0,
        mim_period_s: 30.0,
        update_threshold: 0.2,
        failure_grace: 2.0,
    };

    fn info(q: f64, b: f64) -> DynamicInfo {
        DynamicInfo {
            queue_wait_s: q,
            memory_bytes: 1000,
            battery_j: b,
        }
    }

    fn nim(node: NodeId) -> ControlMessage {
        ControlMessage::Nim {
            node,
            cpi: 2.0,
            cct_s: 1e-9,
            broadcast_id: 0,
        }
    }

    #[test]
    fn unknown_nim_adds_entry_and_requests_details() {
        let mut p = ResourcePool::new(0);
        let out = p.process_control_message(&nim(4), &info(0.0, 1.0), 1.0, &T).unwrap();
        assert!(p.is_available(4));
        assert_eq!(
            out,
            vec![Outgoing::Unicast {
                dst: 4,
                msg: ControlMessage::Nirm { src: 0, dst: 4 }
            }]
        );
        let out = p.process_control_message(&nim(4), &info(0.0, 1.0), 5.0, &T).unwrap();
        assert!(out.is_empty());
        assert_eq!(p.get(4).unwrap().last_nim_at, Some(5.0));
    }

    #[test]
    fn request_answered_with_own_state() {
        let mut p = ResourcePool::new(3);
        let own = info(2.0, 50.0);
        let out = p
            .process_control_message(&ControlMessage::Nirm { src: 0, dst: 3 }, &own, 0.0, &T)
            .unwrap();
        assert_eq!(
            out,
            vec![Outgoing::Unicast {
                dst: 0,
                msg: ControlMessage::Nium {
                    node: 3,
                    info: own,
                    dst: Some(0)
                }
            }]
        );
        assert!(p
            .process_control_message(&ControlMessage::Nirm { src: 0, dst: 9 }, &own, 0.0, &T)
            .is_err());
    }

    #[test]
    fn eviction_and_return() {
        let mut p = ResourcePool::new(0);
        p.process_control_message(&nim(1), &info(0.0, 1.0), 0.0, &T).unwrap();
        assert!(p.evict_stale(30.0, &T).is_empty());
        assert_eq!(p.evict_stale(40.0, &T), vec![1]);
        assert!(!p.is_available(1));
        p.process_control_message(&nim(1), &info(0.0, 1.0), 41.0, &T).unwrap();
        assert!(p.is_available(1));
    }

    #[test]
    fn members_message_requests_unknown_details() {
        let mut p = ResourcePool::new(0);
        let mim = ControlMessage::Mim {
            node: 5,
            members: vec![
                MemberInfo {
                    member: 0,
                    cpi: 1.0,
                    cct_s: 1e-9,
                },
                MemberInfo {
                    member: 7,
                    cpi: 1.0,
                    cct_s: 1e-9,
                },
            ],
            broadcast_id: 1,
        };
        let out = p.process_control_message(&mim, &info(0.0, 1.0), 0.0, &T).unwrap();
        assert!(p.is_available(7) && p.get(0).is_none());
        assert_eq!(
            out,
            vec![Outgoing::Unicast {
                dst: 5,
                msg: ControlMessage::Mdirm {
                    src: 0,
                    members: vec![7],
                    dst: 5
                }
            }]
        );
        // relayed entries outlive a missed NIM window but not the MIM window
        p.evict_stale(60.0, &T);
        assert!(p.is_available(7));
        p.evict_stale(91.0, &T);
        assert!(!p.is_available(7));
    }

    #[test]
    fn update_relayed_once() {
        let mut p = ResourcePool::new(0);
        p.process_control_message(&nim(2), &info(0.0, 1.0), 0.0, &T).unwrap();
        let nium = ControlMessage::Nium {
            node: 2,
            info: info(1.0, 100.0),
            dst: None,
        };
        let out = p.process_control_message(&nium, &info(0.0, 1.0), 1.0, &T).unwrap();
        assert_eq!(out.len(), 1);
        let mium = ControlMessage::Mium {
            src: 9,
            member: 2,
            info: info(1.0, 100.0),
            dst: None,
        };
        assert!(p
            .process_control_message(&mium, &info(0.0, 1.0), 2.0, &T)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn nium_thresholds() {
        let mut t = UpdateTracker::default();
        assert!(t.maybe_send_nium(info(10.0, 100.0), 0.2));
        assert!(!t.maybe_send_nium(info(10.0, 100.0), 0.2));
        assert!(t.maybe_send_nium(info(10.0, 70.0), 0.2));
        // two 15% drops measured against the last sent snapshot
        let mut t = UpdateTracker::default();
        t.maybe_send_nium(info(10.0, 100.0), 0.2);
        assert!(!t.maybe_send_nium(info(10.0, 85.0), 0.2));
        assert!(t.maybe_send_nium(info(10.0, 72.0), 0.2));
    }

    #[test]
    fn malformed_values_rejected() {
        let mut p = ResourcePool::new(0);
        let bad = ControlMessage::Nim {
            node: 1,
            cpi: f64::NAN,
            cct_s: 1.0,
            broadcast_id: 0,
        };
        assert!(p.process_control_message(&bad, &info(0.0, 1.0), 0.0, &T).is_err());
        assert!(p.is_empty());
    }
}
