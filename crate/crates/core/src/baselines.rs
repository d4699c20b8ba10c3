//! Comparison allocators: fastest node first, and fewest hops first.
//! Both always transmit at maximum power.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Hta,
    MinHop,
}

/// What the heterogeneity-aware allocator may look at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtaView {
    pub node: NodeId,
    pub cpi: f64,
    pub cct_s: f64,
    /// Battery from the pool's dynamic info, if any was received.
    pub battery_j: Option<f64>,
}

/// Fastest node (`1 / (CPI * CCT)`), then larger known battery, then lowest id.
pub fn hta_allocate(pool: &[HtaView]) -> Option<NodeId> {
    pool.iter()
        .min_by(|a, b| {
            let sa = 1.0 / (a.cpi * a.cct_s);
            let sb = 1.0 / (b.cpi * b.cct_s);
            sb.total_cmp(&sa)
                .then_with(|| {
                    b.battery_j
                        .unwrap_or(0.0)
                        .total_cmp(&a.battery_j.unwrap_or(0.0))
                })
                .then_with(|| a.node.cmp(&b.node))
        })
        .map(|v| v.node)
}

/// Candidate with the fewest hops from the consumer; unreachable
/// candidates (`None`) are skipped, ties go to the lowest id.
pub fn minhop_allocate(candidates: &[(NodeId, Option<usize>)]) -> Option<NodeId> {
    candidates
        .iter()
        .filter_map(|&(n, h)| h.map(|h| (h, n)))
        .min()
        .map(|(_, n)| n)
}

/// Hop counts from `src` over the links reported by `adjacent`.
pub fn hop_counts<F>(src: NodeId, n_nodes: usize, adjacent: F) -> Vec<Option<usize>>
where
    F: Fn(NodeId, NodeId) -> bool,
{
    let mut hops = vec![None; n_nodes];
    hops[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = hops[u].unwrap_or(0);
        for v in 0..n_nodes {
            if v != u && hops[v].is_none() && adjacent(u, v) {
                hops[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}
