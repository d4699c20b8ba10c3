//! Task placement by estimated completion time.

use std::cmp::Ordering;

use super::cost;
use crate::netlayer::{dtt_for_packets, packets_for, PacketError, RouteEntry};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketFormat {
    pub pkt_bits: u64,
    pub header_bits: u64,
}

/// What the allocator needs to know about a task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDemand {
    pub instructions: f64,
    /// Code plus input, sent toward the provider.
    pub dispatch_bits: u64,
    pub output_bits: u64,
}

/// An available provider together with the routes that reach it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub node: NodeId,
    pub cpi: f64,
    pub cct_s: f64,
    pub alpha_w: f64,
    pub beta_j: f64,
    pub queue_time_s: f64,
    pub routes: Vec<RouteEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub node: NodeId,
    pub route: RouteEntry,
    pub e_pt: f64,
    pub e_qt: f64,
    pub e_dtt: f64,
    pub e_ct: f64,
    pub e_ec: f64,
}

impl Estimate {
    pub fn lifetime_ok(&self) -> bool {
        self.e_dtt.is_finite() && self.route.predicted_lifetime_s >= self.e_dtt
    }
}

/// Cost estimate of running `task` on `cand` with data carried over `route`.
pub fn estimate(
    task: &TaskDemand,
    cand: &Candidate,
    route: &RouteEntry,
    fmt: PacketFormat,
) -> Result<Estimate, PacketError> {
    let out_pkts = packets_for(task.dispatch_bits, fmt.pkt_bits, fmt.header_bits)?;
    let back_pkts = packets_for(task.output_bits, fmt.pkt_bits, fmt.header_bits)?;
    let e_dtt = dtt_for_packets(out_pkts, fmt.pkt_bits, route)
        + dtt_for_packets(back_pkts, fmt.pkt_bits, route);
    let e_pt = cost::processing_time(task.instructions, cand.cpi, cand.cct_s);
    let e_qt = cand.queue_time_s;
    let e_ct = cost::completion_time(cost::execution_time(e_pt, e_qt), e_dtt);
    let e_ec = cost::energy(cand.alpha_w, e_pt, cand.beta_j, out_pkts + back_pkts);
    Ok(Estimate {
        node: cand.node,
        route: route.clone(),
        e_pt,
        e_qt,
        e_dtt,
        e_ct,
        e_ec,
    })
}

/// Preference between two estimates: lower completion time, then higher
/// route lifetime probability, lower energy, lower power level, lower node
/// id and finally the lexicographically smaller path.
pub fn preference(a: &Estimate, b: &Estimate) -> Ordering {
    a.e_ct
        .total_cmp(&b.e_ct)
        .then_with(|| {
            b.route
                .lifetime_probability
                .total_cmp(&a.route.lifetime_probability)
        })
        .then_with(|| a.e_ec.total_cmp(&b.e_ec))
        .then_with(|| a.route.power_level.cmp(&b.route.power_level))
        .then_with(|| a.node.cmp(&b.node))
        .then_with(|| a.route.path.cmp(&b.route.path))
}

fn best_by<F>(
    task: &TaskDemand,
    candidates: &[Candidate],
    fmt: PacketFormat,
    accept: F,
) -> Result<Option<Estimate>, PacketError>
where
    F: Fn(&Estimate) -> bool,
{
    let mut best: Option<Estimate> = None;
    for cand in candidates {
        for route in &cand.routes {
            let e = estimate(task, cand, route, fmt)?;
            if !accept(&e) {
                continue;
            }
            if best
                .as_ref()
                .map_or(true, |b| preference(&e, b) == Ordering::Less)
            {
                best = Some(e);
            }
        }
    }
    Ok(best)
}

/// Picks the (provider, route) pair with the lowest estimated completion
/// time among routes whose predicted lifetime covers their transfer time
/// and whose lifetime probability is positive. `None` defers the task.
pub fn allocate(
    task: &TaskDemand,
    candidates: &[Candidate],
    fmt: PacketFormat,
) -> Result<Option<Estimate>, PacketError> {
    best_by(task, candidates, fmt, |e| {
        e.lifetime_ok() && e.route.lifetime_probability > 0.0
    })
}

/// Same as [`allocate`] without the lifetime test; used for tasks that have
/// been deferred for too long.
pub fn allocate_relaxed(
    task: &TaskDemand,
    candidates: &[Candidate],
    fmt: PacketFormat,
) -> Result<Option<Estimate>, PacketError> {
    best_by(task, candidates, fmt, |e| e.e_dtt.is_finite())
}
