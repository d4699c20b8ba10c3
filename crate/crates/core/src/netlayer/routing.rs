//! Per-power-level routing tables and route selection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use super::estimate::{dtt_for_packets, packets_for, PacketError};
use super::lifetime::Interval;
use crate::radio::LevelIdx;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_node: NodeId,
    pub dest_node: NodeId,
    pub power_level: LevelIdx,
    /// Nodes after the source, ending with `dest_node`.
    pub path: Vec<NodeId>,
    /// Smoothed count of dropped plus lost packets per transfer.
    pub avg_dropped_lost: f64,
    pub link_quality_bps: f64,
    pub predicted_lifetime_s: f64,
    pub lifetime_probability: f64,
    pub predicted_interval: Option<Interval>,
}

impl RouteEntry {
    /// Single-hop entry as created by a discovery reply.
    pub fn direct(dest: NodeId, level: LevelIdx) -> Self {
        Self {
            next_node: dest,
            dest_node: dest,
            power_level: level,
            path: vec![dest],
            avg_dropped_lost: 0.0,
            link_quality_bps: 0.0,
            predicted_lifetime_s: 0.0,
            lifetime_probability: 0.0,
            predicted_interval: None,
        }
    }

    pub fn hops(&self) -> usize {
        self.path.len()
    }

    pub fn is_direct(&self) -> bool {
        self.path.len() == 1
    }
}

/// One routing table per power level, lowest power first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingTableSet {
    tables: Vec<BTreeMap<NodeId, Vec<RouteEntry>>>,
}

impl RoutingTableSet {
    pub fn new(levels: usize) -> Self {
        Self {
            tables: vec![BTreeMap::new(); levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, level: LevelIdx) -> &BTreeMap<NodeId, Vec<RouteEntry>> {
        &self.tables[level]
    }

    pub fn insert(&mut self, entry: RouteEntry) {
        let level = entry.power_level;
        let routes = self.tables[level].entry(entry.dest_node).or_default();
        if let Some(slot) = routes.iter_mut().find(|r| r.path == entry.path) {
            *slot = entry;
        } else {
            routes.push(entry);
        }
    }

    /// Adds or moves the single-hop entry for `dest` into `level`'s table,
    /// removing single-hop entries for it from every other table.
    pub fn upsert_direct(&mut self, dest: NodeId, level: LevelIdx) {
        for (l, table) in self.tables.iter_mut().enumerate() {
            if l == level {
                continue;
            }
            if let Some(routes) = table.get_mut(&dest) {
                routes.retain(|r| !r.is_direct());
                if routes.is_empty() {
                    table.remove(&dest);
                }
            }
        }
        let existing = self.tables[level]
            .get(&dest)
            .map(|rs| rs.iter().any(|r| r.is_direct()))
            .unwrap_or(false);
        if !existing {
            self.insert(RouteEntry::direct(dest, level));
        }
    }

    pub fn remove_direct(&mut self, dest: NodeId) {
        for table in &mut self.tables {
            if let Some(routes) = table.get_mut(&dest) {
                routes.retain(|r| !r.is_direct());
                if routes.is_empty() {
                    table.remove(&dest);
                }
            }
        }
    }

    /// Level at which `dest` is a direct neighbour, if any.
    pub fn direct_level(&self, dest: NodeId) -> Option<LevelIdx> {
        self.tables.iter().position(|t| {
            t.get(&dest)
                .map(|rs| rs.iter().any(|r| r.is_direct()))
                .unwrap_or(false)
        })
    }

    /// Direct neighbours with the level they were discovered at.
    pub fn direct_neighbors(&self) -> impl Iterator<Item = (NodeId, LevelIdx)> + '_ {
        self.tables.iter().enumerate().flat_map(|(l, t)| {
            t.iter()
                .filter(|(_, rs)| rs.iter().any(|r| r.is_direct()))
                .map(move |(&d, _)| (d, l))
        })
    }

    pub fn routes_to(&self, dest: NodeId) -> impl Iterator<Item = &RouteEntry> + '_ {
        self.tables
            .iter()
            .filter_map(move |t| t.get(&dest))
            .flatten()
    }

    pub fn contains(&self, dest: NodeId) -> bool {
        self.tables.iter().any(|t| t.contains_key(&dest))
    }

    pub fn destinations(&self) -> Vec<NodeId> {
        let mut d: Vec<NodeId> = self.tables.iter().flat_map(|t| t.keys().copied()).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> + '_ {
        self.tables.iter().flat_map(|t| t.values().flatten())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut RouteEntry> + '_ {
        self.tables.iter_mut().flat_map(|t| t.values_mut().flatten())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("no route to node {0}")]
    NoRoute(NodeId),
    #[error(transparent)]
    Packet(#[from] PacketError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSelection {
    pub entry: RouteEntry,
    pub edtt_s: f64,
    /// Set when no route satisfied the lifetime test and the
    /// longest-lived route at the lowest level was taken instead.
    pub fallback: bool,
}

/// Canonical scan order inside one table: faster estimate first, then more
/// probable lifetime, then fewer hops, then lower next hop.
fn scan_order(a: &(f64, &RouteEntry), b: &(f64, &RouteEntry)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| b.1.lifetime_probability.total_cmp(&a.1.lifetime_probability))
        .then_with(|| a.1.hops().cmp(&b.1.hops()))
        .then_with(|| a.1.path.cmp(&b.1.path))
}

/// Picks a route to `dest` for `data_bits` of payload.
///
/// Tables are scanned from the lowest power level upward. A route replaces
/// the current choice only when its predicted lifetime covers its estimated
/// transfer time, its estimate is strictly lower than the current choice's,
/// and its lifetime probability is strictly higher.
pub fn select_route(
    dest: NodeId,
    data_bits: u64,
    tables: &RoutingTableSet,
    pkt_bits: u64,
    header_bits: u64,
) -> Result<RouteSelection, RouteError> {
    let packets = packets_for(data_bits, pkt_bits, header_bits)?;
    let mut best: Option<(f64, &RouteEntry)> = None;
    let mut prev_edtt = f64::INFINITY;
    let mut prev_prob = 0.0;
    let mut lowest_level_with_dest = None;

    for level in 0..tables.levels() {
        let Some(routes) = tables.table(level).get(&dest) else {
            continue;
        };
        if routes.is_empty() {
            continue;
        }
        lowest_level_with_dest.get_or_insert(level);
        let mut scored: Vec<(f64, &RouteEntry)> = routes
            .iter()
            .map(|r| (dtt_for_packets(packets, pkt_bits, r), r))
            .collect();
        scored.sort_by(scan_order);
        for (edtt, route) in scored {
            if route.predicted_lifetime_s >= edtt
                && edtt < prev_edtt
                && route.lifetime_probability > prev_prob
            {
                best = Some((edtt, route));
                prev_edtt = edtt;
                prev_prob = route.lifetime_probability;
            }
        }
    }

    if let Some((edtt, entry)) = best {
        return Ok(RouteSelection {
            entry: entry.clone(),
            edtt_s: edtt,
            fallback: false,
        });
    }
    let level = lowest_level_with_dest.ok_or(RouteError::NoRoute(dest))?;
    let entry = tables.table(level)[&dest]
        .iter()
        .map(|r| (dtt_for_packets(packets, pkt_bits, r), r))
        .min_by(|a, b| {
            b.1.predicted_lifetime_s
                .total_cmp(&a.1.predicted_lifetime_s)
                .then_with(|| scan_order(a, b))
        })
        .expect("non-empty route list");
    Ok(RouteSelection {
        entry: entry.1.clone(),
        edtt_s: entry.0,
        fallback: true,
    })
}

/// Enumerates candidate paths from `src`, grouped by the power level they need.
///
/// `edge_level(u, v)` gives the lowest level at which `u` can currently
/// reach `v`, or `None`. For each level and each first hop, a min-hop path
/// is grown inside the graph of edges usable at that level; a path belongs
/// to the table of the highest level any of its hops needs. At most
/// `per_dest` paths (fewest hops, then lowest next hop) are kept per
/// destination and level.
pub fn enumerate_paths<F>(
    src: NodeId,
    n_nodes: usize,
    levels: usize,
    max_hops: usize,
    per_dest: usize,
    edge_level: F,
) -> Vec<(LevelIdx, Vec<NodeId>)>
where
    F: Fn(NodeId, NodeId) -> Option<LevelIdx>,
{
    // adjacency with the needed level, ascending neighbour id
    let adj: Vec<Vec<(NodeId, LevelIdx)>> = (0..n_nodes)
        .map(|u| {
            (0..n_nodes)
                .filter(|&v| v != u)
                .filter_map(|v| edge_level(u, v).map(|l| (v, l)))
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    for level in 0..levels {
        let mut per_dest_paths: BTreeMap<NodeId, Vec<Vec<NodeId>>> = BTreeMap::new();
        for &(first, first_level) in &adj[src] {
            if first_level > level {
                continue;
            }
            // BFS from `first` without revisiting src; track the max level on the way.
            let mut parent = vec![usize::MAX; n_nodes];
            let mut depth = vec![usize::MAX; n_nodes];
            let mut need = vec![0usize; n_nodes];
            depth[first] = 1;
            need[first] = first_level;
            let mut queue = VecDeque::from([first]);
            while let Some(u) = queue.pop_front() {
                if depth[u] >= max_hops {
                    continue;
                }
                for &(v, l) in &adj[u] {
                    if l > level || v == src || depth[v] != usize::MAX {
                        continue;
                    }
                    depth[v] = depth[u] + 1;
                    parent[v] = u;
                    need[v] = need[u].max(l);
                    queue.push_back(v);
                }
            }
            for dest in 0..n_nodes {
                if depth[dest] == usize::MAX || need[dest] != level {
                    continue;
                }
                let mut path = vec![dest];
                let mut cur = dest;
                while cur != first {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                per_dest_paths.entry(dest).or_default().push(path);
            }
        }
        for (_, mut paths) in per_dest_paths {
            paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            paths.truncate(per_dest);
            out.extend(paths.into_iter().map(|p| (level, p)));
        }
    }
    out
}
