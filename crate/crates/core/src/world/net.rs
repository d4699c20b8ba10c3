//! Link state, discovery, route construction, data flows and control
//! message delivery.

use std::collections::VecDeque;

use rand::Rng;

use super::{Ev, Flow, FlowKind, RunError, World};
use crate::middleware::messages::{
    packet_count, wire_bytes, DISCOVERY_REPLY_PAYLOAD_BYTES, DISCOVERY_REQUEST_PAYLOAD_BYTES,
    HELLO_PAYLOAD_BYTES,
};
use crate::middleware::{ControlMessage, PacketKind};
use crate::netlayer::{
    link_quality, packets_for, select_route, RouteEntry, RouteSelection, RoutingTableSet,
};
use crate::netlayer::routing::enumerate_paths;
use crate::radio::{self, Delivery, LevelIdx};
use crate::trace::TraceEvent;
use crate::NodeId;

impl World<'_> {
    fn idx(&self, level: LevelIdx, u: NodeId, v: NodeId) -> usize {
        (level * self.n + u) * self.n + v
    }

    pub(super) fn dist(&self, u: NodeId, v: NodeId) -> f64 {
        self.mobility.positions[u].distance(&self.mobility.positions[v])
    }

    pub(super) fn is_up(&self, level: LevelIdx, u: NodeId, v: NodeId) -> bool {
        self.up[self.idx(level, u, v)]
    }

    fn trace_level(&self, level: LevelIdx) -> LevelIdx {
        level + self.level_offset
    }

    /// Re-evaluates every link at every level from current positions and
    /// feeds up/down changes to the lifetime models.
    pub(super) fn refresh_links(&mut self) {
        let now = self.now();
        let bounds = self.cfg.lifetime_bounds;
        for level in 0..self.levels {
            let range = self.radio.range(level);
            for u in 0..self.n {
                for v in (u + 1)..self.n {
                    let up = self.nodes[u].alive && self.nodes[v].alive && self.dist(u, v) <= range;
                    let i = self.idx(level, u, v);
                    if self.up[i] == up {
                        continue;
                    }
                    let j = self.idx(level, v, u);
                    self.up[i] = up;
                    self.up[j] = up;
                    if up {
                        self.models[i].link_up(now);
                    } else {
                        self.models[i].link_down(now, &bounds);
                        if level == self.top && self.proposed() {
                            self.tables[u].remove_direct(v);
                            self.tables[v].remove_direct(u);
                        }
                    }
                }
            }
        }
    }

    fn model(&self, level: LevelIdx, u: NodeId, v: NodeId) -> &crate::netlayer::LinkLifetimeModel {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        &self.models[self.idx(level, a, b)]
    }

    fn record_packet(
        &mut self,
        src: NodeId,
        dst: Option<NodeId>,
        level: LevelIdx,
        kind: PacketKind,
        count: u64,
        lost: u64,
        energy_j: f64,
    ) {
        let t = self.now();
        if kind.is_control() {
            self.control_packets += count;
        } else {
            self.data_packets += count;
        }
        self.trace.push(TraceEvent::Packet {
            t,
            src,
            dst,
            level: self.trace_level(level),
            kind,
            count,
            lost,
            energy_j,
        });
        self.drain(src, energy_j);
    }

    fn control_energy(&self, level: LevelIdx, payload: u32) -> (f64, u64) {
        let ch = &self.cfg.channel;
        let bytes = wire_bytes(payload, ch.header_bytes, ch.packet_bytes);
        let energy = self.radio.packet_energy(level, bytes, ch.packet_bytes);
        let pkts = u64::from(packet_count(payload, ch.header_bytes, ch.packet_bytes));
        (energy, pkts)
    }

    /// One hello per node per usable level; accounted as a batch.
    pub(super) fn send_hellos(&mut self) {
        let alive: Vec<NodeId> = (0..self.n).filter(|&i| self.nodes[i].alive).collect();
        for level in 0..self.levels {
            let (e, pkts) = self.control_energy(level, HELLO_PAYLOAD_BYTES);
            for &i in &alive {
                self.drain(i, e);
            }
            self.control_packets += pkts * alive.len() as u64;
            self.trace.push(TraceEvent::PacketBatch {
                t: self.now(),
                senders: pkts * alive.len() as u64,
                level: self.trace_level(level),
                kind: PacketKind::Hello,
                energy_j: e * alive.len() as f64,
            });
        }
    }

    /// Discovery flood started at the master. Every node that hears the
    /// request rebroadcasts it once at maximum power; every receiver of a
    /// request answers at the lowest level covering the distance it infers
    /// from the signal strength.
    pub(super) fn discovery_round(&mut self) {
        let top = self.top;
        let tx_dbm = self.radio.levels[top].tx_power_dbm;
        let n_exp = self.radio.path_loss_exponent;
        let (req_e, req_pkts) = self.control_energy(top, DISCOVERY_REQUEST_PAYLOAD_BYTES);
        let mut seen = vec![false; self.n];
        seen[self.smn] = true;
        let mut frontier = VecDeque::from([self.smn]);
        while let Some(u) = frontier.pop_front() {
            if !self.nodes[u].alive {
                continue;
            }
            let mut heard = Vec::new();
            let mut lost = 0;
            for v in 0..self.n {
                if v == u || !self.nodes[v].alive {
                    continue;
                }
                match radio::deliverable(self.dist(u, v), top, &self.radio, &mut self.rng_loss) {
                    Delivery::Delivered => heard.push(v),
                    Delivery::Lost => lost += 1,
                    Delivery::OutOfRange => {}
                }
            }
            self.record_packet(u, None, top, PacketKind::DiscoveryRequest, req_pkts, lost, req_e);
            for v in heard {
                if !self.nodes[v].alive {
                    continue;
                }
                let d = self.dist(u, v);
                let measured = radio::rssi(tx_dbm, d, n_exp);
                let estimate = radio::estimate_distance(tx_dbm, measured, n_exp);
                if let Ok(level) = radio::min_power_level(estimate, &self.radio) {
                    let (e, pkts) = self.control_energy(level, DISCOVERY_REPLY_PAYLOAD_BYTES);
                    let ok = radio::deliverable(d, level, &self.radio, &mut self.rng_loss)
                        == Delivery::Delivered;
                    self.record_packet(
                        v,
                        Some(u),
                        level,
                        PacketKind::DiscoveryReply,
                        pkts,
                        if ok { 0 } else { pkts },
                        e,
                    );
                    if ok && self.nodes[u].alive {
                        self.tables[u].upsert_direct(v, level);
                    }
                }
                if !seen[v] {
                    seen[v] = true;
                    frontier.push_back(v);
                }
            }
        }
    }

    /// Lowest usable level for the hop `u -> v`: at or above the level `v`
    /// was discovered at, and currently in range.
    fn edge_level(&self, u: NodeId, v: NodeId) -> Option<LevelIdx> {
        let d = self.tables[u].direct_level(v)?;
        (d..self.levels).find(|&l| self.is_up(l, u, v))
    }

    /// Routing tables of `src` built from discovered neighbours, with link
    /// quality, lifetime and loss statistics filled in.
    pub(super) fn routes_from(&self, src: NodeId) -> RoutingTableSet {
        let mut set = RoutingTableSet::new(self.levels);
        if !self.nodes[src].alive {
            return set;
        }
        let net = &self.cfg.network;
        let paths = enumerate_paths(
            src,
            self.n,
            self.levels,
            net.max_hops,
            net.routes_per_dest,
            |u, v| {
                if self.nodes[u].alive && self.nodes[v].alive {
                    self.edge_level(u, v)
                } else {
                    None
                }
            },
        );
        for (level, path) in paths {
            if let Some(e) = self.route_entry(src, level, path) {
                set.insert(e);
            }
        }
        set
    }

    /// Available bandwidth on a hop into `receiver` at `level`; the
    /// neighbours that compete for it are those in range at that level.
    fn hop_quality(&self, level: LevelIdx, receiver: NodeId) -> f64 {
        let b = self.cfg.channel.b_channel_bps;
        link_quality(
            b,
            (0..self.n)
                .filter(|&j| j != receiver && self.is_up(level, receiver, j))
                .map(|j| self.b_self[j]),
        )
    }

    fn route_entry(&self, src: NodeId, level: LevelIdx, path: Vec<NodeId>) -> Option<RouteEntry> {
        let now = self.now();
        let bounds = self.cfg.lifetime_bounds;
        let mut prev = src;
        let mut inv_sum = 0.0;
        let mut blocked = false;
        let mut lifetime = f64::INFINITY;
        let mut probability = 1.0;
        let mut interval = None;
        for &h in &path {
            if !self.is_up(level, prev, h) {
                return None;
            }
            let lq = self.hop_quality(level, h);
            if lq > 0.0 {
                inv_sum += 1.0 / lq;
            } else {
                blocked = true;
            }
            let p = self.model(level, prev, h).predict_now(now, &bounds)?;
            if p.lifetime_s < lifetime {
                lifetime = p.lifetime_s;
                interval = Some(p.interval);
            }
            probability *= p.probability;
            prev = h;
        }
        let avg = self
            .loss_avg
            .get(&(src, level, path.clone()))
            .copied()
            .unwrap_or(0.0);
        Some(RouteEntry {
            next_node: path[0],
            dest_node: *path.last()?,
            power_level: level,
            path,
            avg_dropped_lost: avg,
            link_quality_bps: if blocked { 0.0 } else { 1.0 / inv_sum },
            predicted_lifetime_s: lifetime,
            lifetime_probability: probability,
            predicted_interval: interval,
        })
    }

    /// Whether every hop of `route` from `src` is still up at its level.
    pub(super) fn route_valid(&self, src: NodeId, route: &RouteEntry) -> bool {
        let mut prev = src;
        for &h in &route.path {
            if !self.nodes[h].alive || !self.is_up(route.power_level, prev, h) {
                return false;
            }
            prev = h;
        }
        true
    }

    pub(super) fn select(&self, src: NodeId, dst: NodeId, bits: u64) -> Option<RouteSelection> {
        let ch = &self.cfg.channel;
        select_route(dst, bits, &self.routes_from(src), ch.pkt_bits(), ch.header_bits()).ok()
    }

    /// Fewest-hop path at the top level over live links.
    pub(super) fn bfs_path(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        if !self.nodes[src].alive || !self.nodes[dst].alive {
            return None;
        }
        let mut parent = vec![usize::MAX; self.n];
        parent[src] = src;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            if u == dst {
                break;
            }
            for v in 0..self.n {
                if parent[v] == usize::MAX && self.is_up(self.top, u, v) {
                    parent[v] = u;
                    q.push_back(v);
                }
            }
        }
        if parent[dst] == usize::MAX {
            return None;
        }
        let mut path = vec![dst];
        let mut cur = dst;
        while parent[cur] != src {
            cur = parent[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    /// Path and level a data transfer from `src` to `dst` uses: the given
    /// route if still valid, otherwise route selection (proposed) or the
    /// fewest-hop path at maximum power (baselines).
    pub(super) fn data_path(
        &self,
        src: NodeId,
        dst: NodeId,
        bits: u64,
        planned: Option<&RouteEntry>,
    ) -> Option<(Vec<NodeId>, LevelIdx)> {
        if src == dst {
            return None;
        }
        if self.proposed() {
            if let Some(r) = planned.filter(|r| self.route_valid(src, r)) {
                return Some((r.path.clone(), r.power_level));
            }
            let sel = self.select(src, dst, bits)?;
            self.route_valid(src, &sel.entry)
                .then(|| (sel.entry.path, sel.entry.power_level))
        } else {
            self.bfs_path(src, dst).map(|p| (p, self.top))
        }
    }

    /// Starts a transfer of `bits` along `path` and returns its flow index.
    pub(super) fn start_flow(
        &mut self,
        kind: FlowKind,
        task: usize,
        attempt: u32,
        src: NodeId,
        path: Vec<NodeId>,
        level: LevelIdx,
        bits: u64,
    ) -> Result<(), RunError> {
        let ch = &self.cfg.channel;
        let packets = packets_for(bits, ch.pkt_bits(), ch.header_bits())?;
        let rx = self.radio.rx_success_ratio;
        let mut tx = Vec::with_capacity(path.len());
        for _ in 0..path.len() {
            let mut sent = packets;
            if rx < 1.0 {
                for _ in 0..packets {
                    while !self.rng_loss.gen_bool(rx) {
                        sent += 1;
                    }
                }
            }
            tx.push(sent);
        }
        let work = tx.iter().copied().max().unwrap_or(0) as f64 * ch.pkt_bits() as f64;
        let flow = Flow {
            kind,
            task,
            attempt,
            src,
            path,
            level,
            packets,
            tx,
            work_bits: work,
            done_bits: 0.0,
            rate_bps: 0.0,
            updated_at: self.now(),
            gen: 0,
        };
        let id = match self.flows.iter().position(Option::is_none) {
            Some(i) => {
                self.flows[i] = Some(flow);
                i
            }
            None => {
                self.flows.push(Some(flow));
                self.flows.len() - 1
            }
        };
        if work == 0.0 {
            self.schedule(0.0, Ev::FlowDone { flow: id, gen: 0 });
            return Ok(());
        }
        self.reflow();
        Ok(())
    }

    /// Advances progress of every active flow and recomputes rates: each
    /// hop gets the channel divided among itself and the hops it conflicts
    /// with, and a flow moves at its slowest hop.
    pub(super) fn reflow(&mut self) {
        let now = self.now();
        let extra = self.radio.interference_range_extra_m;
        let b = self.cfg.channel.b_channel_bps;
        let mut hops: Vec<(usize, NodeId, NodeId, f64)> = Vec::new();
        for (i, f) in self.flows.iter_mut().enumerate() {
            let Some(f) = f else { continue };
            f.done_bits = (f.done_bits + f.rate_bps * (now - f.updated_at)).min(f.work_bits);
            f.updated_at = now;
            if f.work_bits == 0.0 {
                continue;
            }
            let reach = self.radio.range(f.level) + extra;
            for (s, r) in f.hops() {
                hops.push((i, s, r, reach));
            }
        }
        let pos = &self.mobility.positions;
        let mut hop_rate = vec![0.0; hops.len()];
        for (a, &(fa, sa, ra, reach_a)) in hops.iter().enumerate() {
            let mut conflicts = 0usize;
            for (c, &(fc, sc, rc, reach_c)) in hops.iter().enumerate() {
                if a == c || (fa == fc && sa == sc && ra == rc) {
                    continue;
                }
                let shared = sa == sc || sa == rc || ra == sc || ra == rc;
                if shared
                    || pos[sc].distance(&pos[ra]) <= reach_c
                    || pos[sa].distance(&pos[rc]) <= reach_a
                {
                    conflicts += 1;
                }
            }
            hop_rate[a] = b / (1 + conflicts) as f64;
        }
        let mut rate = vec![f64::INFINITY; self.flows.len()];
        for (k, &(f, ..)) in hops.iter().enumerate() {
            rate[f] = rate[f].min(hop_rate[k]);
        }
        self.b_self.iter_mut().for_each(|x| *x = 0.0);
        let mut reschedule = Vec::new();
        for (i, f) in self.flows.iter_mut().enumerate() {
            let Some(f) = f else { continue };
            if f.work_bits == 0.0 {
                continue;
            }
            let r = rate[i];
            for (s, d) in f.hops() {
                self.b_self[s] += r;
                self.b_self[d] += r;
            }
            if r != f.rate_bps {
                f.rate_bps = r;
                f.gen += 1;
                let left = (f.work_bits - f.done_bits).max(0.0);
                reschedule.push((i, f.gen, left / r));
            }
        }
        for (flow, gen, delay) in reschedule {
            self.schedule(delay, Ev::FlowDone { flow, gen });
        }
    }

    /// Charges a flow's transmissions. A finished flow pays for all of them,
    /// an interrupted one for the fraction already sent.
    fn charge_flow(&mut self, f: &Flow, fraction: f64) {
        let e_pkt = self.radio.levels[f.level].energy_per_packet_j;
        let hops: Vec<(NodeId, NodeId)> = f.hops().collect();
        for (k, (s, r)) in hops.into_iter().enumerate() {
            let tx = f.tx[k];
            let (count, lost) = if fraction >= 1.0 {
                (tx, tx - f.packets)
            } else {
                let c = (tx as f64 * fraction).round() as u64;
                let l = ((tx - f.packets) as f64 * fraction).round() as u64;
                (c, l.min(c))
            };
            if count == 0 {
                continue;
            }
            self.record_packet(s, Some(r), f.level, PacketKind::Data, count, lost, count as f64 * e_pkt);
        }
    }

    pub(super) fn complete_flow(&mut self, id: usize) -> Result<(), RunError> {
        let f = self.flows[id].take().expect("active flow");
        self.reflow();
        self.charge_flow(&f, 1.0);
        if self.proposed() {
            let lost: u64 = f.tx.iter().map(|t| t - f.packets).sum();
            let w = self.cfg.network.loss_ewma_weight;
            let key = (f.src, f.level, f.path.clone());
            let v = match self.loss_avg.get(&key) {
                Some(old) => w * lost as f64 + (1.0 - w) * old,
                None => lost as f64,
            };
            self.loss_avg.insert(key, v);
        }
        if !self.nodes[f.dst()].alive {
            return self.flow_failed(f);
        }
        self.flow_arrived(f)
    }

    /// Fails flows whose path broke or whose nodes died since the last check.
    pub(super) fn check_flows(&mut self) -> Result<(), RunError> {
        let mut broken = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            let Some(f) = f else { continue };
            let range = self.radio.range(f.level);
            let bad = f.hops().any(|(s, r)| {
                !self.nodes[s].alive || !self.nodes[r].alive || self.dist(s, r) > range
            });
            if bad {
                broken.push(i);
            }
        }
        if broken.is_empty() {
            self.reflow();
            return Ok(());
        }
        self.reflow();
        let mut failed = Vec::new();
        for i in broken {
            let f = self.flows[i].take().expect("active flow");
            let fraction = if f.work_bits > 0.0 {
                f.done_bits / f.work_bits
            } else {
                0.0
            };
            self.charge_flow(&f, fraction);
            failed.push(f);
        }
        self.reflow();
        for f in failed {
            self.flow_failed(f)?;
        }
        Ok(())
    }

    /// Sends `msg` hop by hop along the fewest-hop path at maximum power.
    /// Reliable messages retry each hop and, if the path is missing or a hop
    /// gives up, are resent after the allocation retry period.
    pub(super) fn unicast(&mut self, from: NodeId, to: NodeId, msg: ControlMessage, reliable: bool) {
        if !self.nodes[from].alive {
            return;
        }
        let retry = self.cfg.allocation.retry_period_s;
        if from == to {
            self.schedule(0.0, Ev::Deliver { to, msg });
            return;
        }
        let Some(path) = self.bfs_path(from, to) else {
            if reliable {
                self.schedule(retry, Ev::Resend { from, to, msg });
            }
            return;
        };
        let ch = &self.cfg.channel;
        let payload = msg.payload_bytes();
        let (e, pkts) = self.control_energy(self.top, payload);
        let bits = f64::from(wire_bytes(payload, ch.header_bytes, ch.packet_bytes)) * 8.0;
        let per_try = bits / ch.b_channel_bps + ch.hop_latency_s;
        let max_tries = if reliable {
            self.cfg.network.reliable_attempts
        } else {
            1
        };
        let kind = msg.kind();
        let mut latency = 0.0;
        let mut prev = from;
        for &h in &path {
            let d = self.dist(prev, h);
            let mut tries = 0u32;
            let mut ok = false;
            while tries < max_tries {
                tries += 1;
                if radio::deliverable(d, self.top, &self.radio, &mut self.rng_loss)
                    == Delivery::Delivered
                {
                    ok = true;
                    break;
                }
            }
            let lost = u64::from(tries - u32::from(ok)) * pkts;
            self.record_packet(prev, Some(h), self.top, kind, u64::from(tries) * pkts, lost, e * f64::from(tries));
            latency += f64::from(tries) * per_try;
            if !ok {
                if reliable {
                    self.schedule(retry + latency, Ev::Resend { from, to, msg });
                }
                return;
            }
            prev = h;
        }
        self.schedule(latency, Ev::Deliver { to, msg });
    }

    /// Transmits one broadcast at maximum power and returns who received it.
    pub(super) fn broadcast_raw(&mut self, from: NodeId, msg: &ControlMessage) -> Vec<NodeId> {
        if !self.nodes[from].alive {
            return Vec::new();
        }
        let (e, pkts) = self.control_energy(self.top, msg.payload_bytes());
        let mut heard = Vec::new();
        let mut lost = 0;
        for v in 0..self.n {
            if v == from || !self.nodes[v].alive {
                continue;
            }
            match radio::deliverable(self.dist(from, v), self.top, &self.radio, &mut self.rng_loss) {
                Delivery::Delivered => heard.push(v),
                Delivery::Lost => lost += 1,
                Delivery::OutOfRange => {}
            }
        }
        self.record_packet(from, None, self.top, msg.kind(), pkts, lost, e);
        heard
    }

    /// One-hop broadcast processed by every receiver immediately.
    pub(super) fn broadcast(&mut self, from: NodeId, msg: ControlMessage) -> Result<(), RunError> {
        for v in self.broadcast_raw(from, &msg) {
            if self.nodes[v].alive {
                self.receive(v, msg.clone())?;
            }
        }
        Ok(())
    }

    /// Members message flooded up to the configured hop limit, each node
    /// forwarding a given message once.
    pub(super) fn flood_mim(&mut self, origin: NodeId, msg: ControlMessage, bid: u32) -> Result<(), RunError> {
        self.nodes[origin].mim_seen[origin] = Some(bid);
        let mut q = VecDeque::from([(origin, self.cfg.network.mim_ttl_hops)]);
        while let Some((u, ttl)) = q.pop_front() {
            for v in self.broadcast_raw(u, &msg) {
                if !self.nodes[v].alive || self.nodes[v].mim_seen[origin] == Some(bid) {
                    continue;
                }
                self.nodes[v].mim_seen[origin] = Some(bid);
                self.receive(v, msg.clone())?;
                if ttl > 1 {
                    q.push_back((v, ttl - 1));
                }
            }
        }
        Ok(())
    }
}
