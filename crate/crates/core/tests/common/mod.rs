//! Straightforward re-evaluations of the model formulas, used as oracles
//! against the library. Nothing here calls into the code under test.

#![allow(dead_code)]

use adhoc_cloud::middleware::{Candidate, PacketFormat, TaskDemand};
use adhoc_cloud::netlayer::RouteEntry;
use adhoc_cloud::NodeId;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn distance(x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    let (dx, dy) = (x1 - x2, y1 - y2);
    (dx * dx + dy * dy).sqrt()
}

pub fn distance_from_rssi(tx_dbm: f64, rssi_dbm: f64, n: f64) -> f64 {
    let exponent = (tx_dbm - rssi_dbm) / (10.0 * n);
    (exponent * std::f64::consts::LN_10).exp()
}

pub fn rssi(tx_dbm: f64, d: f64, n: f64) -> f64 {
    tx_dbm - 10.0 * n * d.ln() / std::f64::consts::LN_10
}

pub fn link_quality(b_channel: f64, neighbours: &[f64]) -> f64 {
    let mut used = 0.0;
    for b in neighbours {
        used += b;
    }
    let left = b_channel - used;
    if left < 0.0 {
        0.0
    } else {
        left
    }
}

pub fn packets(data_bits: u64, pkt_bits: u64, header_bits: u64) -> u64 {
    let payload = pkt_bits - header_bits;
    let mut n = data_bits / payload;
    if n * payload < data_bits {
        n += 1;
    }
    n
}

/// Transfer time of `pkts` packets; the loss term only applies when
/// something is sent.
pub fn dtt(pkts: u64, pkt_bits: u64, lq: f64, avg_dropped_lost: f64) -> f64 {
    if pkts == 0 {
        return 0.0;
    }
    if lq <= 0.0 {
        return f64::INFINITY;
    }
    let size = pkt_bits as f64;
    (pkts as f64 * size) / lq + (avg_dropped_lost * size) / lq
}

pub fn e_pt(instructions: f64, cpi: f64, cct: f64) -> f64 {
    instructions * cpi * cct
}

pub fn e_pte(instructions: f64, executed: f64, cpi: f64, cct: f64) -> f64 {
    let left = instructions - executed;
    if left > 0.0 {
        left * cpi * cct
    } else {
        0.0
    }
}

pub fn e_qt(running: Option<(f64, f64)>, queued: &[f64], cpi: f64, cct: f64, phi: f64) -> f64 {
    let mut t = match running {
        Some((i, done)) => e_pte(i, done, cpi, cct),
        None => 0.0,
    };
    for &i in queued {
        t += e_pt(i, cpi, cct);
    }
    t + (queued.len() + 2) as f64 * phi
}

pub fn alpha(p_static: f64, gates: f64, c: f64, v: f64, f: f64) -> f64 {
    p_static + gates * c * v.powi(2) * f
}

pub fn energy(alpha: f64, e_pt: f64, beta: f64, pkts: u64) -> f64 {
    alpha * e_pt + beta * pkts as f64
}

pub fn atct(completions: &[f64]) -> f64 {
    completions.iter().fold(0.0, |acc, c| acc + c)
}

/// Random allocation instance with at most 5 providers and 4 routes each.
/// Values are drawn from small sets so that exact ties occur.
pub fn allocation_instance<R: Rng>(rng: &mut R) -> (TaskDemand, Vec<Candidate>, PacketFormat) {
    let fmt = PacketFormat {
        pkt_bits: *[2048u64, 4096].choose(rng).unwrap(),
        header_bits: 256,
    };
    let task = TaskDemand {
        instructions: *[1e7, 1e8, 5e8].choose(rng).unwrap(),
        dispatch_bits: *[0u64, 40_000, 400_000, 2_000_000].choose(rng).unwrap(),
        output_bits: *[0u64, 4_000, 40_000].choose(rng).unwrap(),
    };
    let n = rng.gen_range(1..=5);
    let mut ids: Vec<NodeId> = (0..10).collect();
    ids.shuffle(rng);
    let cands = ids[..n]
        .iter()
        .map(|&node| {
            let routes = (0..rng.gen_range(0..=4))
                .map(|_| {
                    let mut path: Vec<NodeId> = (0..rng.gen_range(0..3)).map(|_| rng.gen_range(10..14)).collect();
                    path.push(node);
                    RouteEntry {
                        next_node: path[0],
                        dest_node: node,
                        power_level: rng.gen_range(0..3),
                        path,
                        avg_dropped_lost: *[0.0, 0.5, 3.0].choose(rng).unwrap(),
                        link_quality_bps: *[0.0, 2e5, 1e6].choose(rng).unwrap(),
                        predicted_lifetime_s: *[0.0, 2.0, 30.0, 120.0].choose(rng).unwrap(),
                        lifetime_probability: *[0.0, 0.5, 1.0].choose(rng).unwrap(),
                        predicted_interval: None,
                    }
                })
                .collect();
            Candidate {
                node,
                cpi: *[1.0, 2.0].choose(rng).unwrap(),
                cct_s: *[6.25e-8, 1.25e-7].choose(rng).unwrap(),
                alpha_w: *[0.1, 0.3].choose(rng).unwrap(),
                beta_j: *[0.0, 1e-3].choose(rng).unwrap(),
                queue_time_s: *[0.0, 0.5, 3.0].choose(rng).unwrap(),
                routes,
            }
        })
        .collect();
    (task, cands, fmt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pick {
    pub node: NodeId,
    pub path: Vec<NodeId>,
    pub level: usize,
    pub e_ct: f64,
}

/// Exhaustive search: every (provider, route) pair whose predicted lifetime
/// covers its transfer time and whose lifetime probability is positive;
/// lowest completion time wins, ties go to higher probability, lower
/// energy, lower power level, lower node id, then the smaller path.
pub fn brute_force_allocate(task: &TaskDemand, cands: &[Candidate], fmt: PacketFormat) -> Option<Pick> {
    struct Row {
        ect: f64,
        p: f64,
        eec: f64,
        level: usize,
        node: NodeId,
        path: Vec<NodeId>,
    }
    let mut rows = Vec::new();
    for c in cands {
        for r in &c.routes {
            let out = packets(task.dispatch_bits, fmt.pkt_bits, fmt.header_bits);
            let back = packets(task.output_bits, fmt.pkt_bits, fmt.header_bits);
            let t = dtt(out, fmt.pkt_bits, r.link_quality_bps, r.avg_dropped_lost)
                + dtt(back, fmt.pkt_bits, r.link_quality_bps, r.avg_dropped_lost);
            if !t.is_finite() || r.predicted_lifetime_s < t || r.lifetime_probability <= 0.0 {
                continue;
            }
            let pt = e_pt(task.instructions, c.cpi, c.cct_s);
            rows.push(Row {
                ect: (pt + c.queue_time_s) + t,
                p: r.lifetime_probability,
                eec: energy(c.alpha_w, pt, c.beta_j, out + back),
                level: r.power_level,
                node: c.node,
                path: r.path.clone(),
            });
        }
    }
    let min = rows.iter().map(|r| r.ect).fold(f64::INFINITY, f64::min);
    rows.retain(|r| r.ect == min);
    rows.sort_by(|a, b| {
        b.p.total_cmp(&a.p)
            .then(a.eec.total_cmp(&b.eec))
            .then(a.level.cmp(&b.level))
            .then(a.node.cmp(&b.node))
            .then(a.path.cmp(&b.path))
    });
    rows.into_iter().next().map(|r| Pick {
        node: r.node,
        path: r.path,
        level: r.level,
        e_ct: r.ect,
    })
}

/// Interval index of a lifetime, boundaries inclusive on the short side.
pub fn interval_of(d: f64, short_max: f64, medium_max: f64) -> usize {
    if d <= short_max {
        0
    } else if d <= medium_max {
        1
    } else {
        2
    }
}

/// Most frequent next interval in a count row, the first one on ties; an
/// empty row predicts staying put with a uniform prior over the
/// non-shrinking intervals.
pub fn count_scan(row: &[u64; 3], from: usize) -> (usize, f64) {
    let total: u64 = row.iter().sum();
    if total == 0 {
        return (from, 1.0 / (3 - from) as f64);
    }
    let mut best = 0;
    let mut best_count = 0;
    for (i, &c) in row.iter().enumerate() {
        if c > best_count {
            best = i;
            best_count = c;
        }
    }
    (best, best_count as f64 / total as f64)
}
