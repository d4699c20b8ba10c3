//! Middleware behaviour of the master, consumers and providers.

use super::{Ev, Flow, FlowKind, LocalTask, MigrationState, RunError, Running, World};
use crate::baselines::{hop_counts, hta_allocate, minhop_allocate, HtaView};
use crate::config::Scheme;
use crate::middleware::cost::{self, RunningTask};
use crate::middleware::{
    allocate, allocate_relaxed, check_migration_triggers, Candidate, ControlMessage, DynamicInfo,
    MigrationReason, MonitorInput, Outgoing, PacketFormat, TaskDemand, TaskId, TaskStatus,
};
use crate::netlayer::RouteEntry;
use crate::trace::TraceEvent;
use crate::NodeId;

/// Memory a node sets aside for each task it holds.
const TASK_MEMORY_BYTES: u64 = 64 * 1024;

impl World<'_> {
    fn fmt(&self) -> PacketFormat {
        PacketFormat {
            pkt_bits: self.cfg.channel.pkt_bits(),
            header_bits: self.cfg.channel.header_bits(),
        }
    }

    /// Instructions the running task on `node` has executed since it started.
    fn executed_since_start(&self, node: NodeId) -> u64 {
        let st = &self.nodes[node];
        let Some(r) = st.running else { return 0 };
        let elapsed = self.now() - r.start - st.spec.phi_s;
        if elapsed <= 0.0 {
            return 0;
        }
        let left = self.tasks[r.lt.task].instructions - r.lt.done;
        ((elapsed * st.spec.speed()) as u64).min(left)
    }

    /// Local estimate of the wait a new task would see on `node`.
    fn backlog(&self, node: NodeId) -> f64 {
        let st = &self.nodes[node];
        let running = st.running.map(|r| RunningTask {
            instructions: self.tasks[r.lt.task].instructions as f64,
            executed: (r.lt.done + self.executed_since_start(node)) as f64,
        });
        let queued: Vec<f64> = st
            .local
            .iter()
            .map(|lt| (self.tasks[lt.task].instructions - lt.done) as f64)
            .collect();
        cost::queue_time(running, &queued, st.spec.cpi, st.spec.cct_s, st.spec.phi_s)
    }

    fn dynamic_info(&self, node: NodeId) -> DynamicInfo {
        let st = &self.nodes[node];
        let held = st.local.len() + usize::from(st.running.is_some());
        DynamicInfo {
            queue_wait_s: self.backlog(node),
            memory_bytes: st
                .spec
                .memory_bytes
                .saturating_sub(TASK_MEMORY_BYTES * held as u64),
            battery_j: st.battery_j.max(0.0),
        }
    }

    pub(super) fn maybe_nium(&mut self, node: NodeId) {
        if !self.nodes[node].alive {
            return;
        }
        let info = self.dynamic_info(node);
        let threshold = self.cfg.timers.update_threshold;
        if self.nodes[node].nium.maybe_send_nium(info, threshold) {
            let msg = ControlMessage::Nium {
                node,
                info,
                dst: None,
            };
            // pool handlers only fail on malformed input, which we never build
            let _ = self.broadcast(node, msg);
        }
    }

    pub(super) fn send_nim(&mut self, node: NodeId) {
        if !self.nodes[node].alive {
            return;
        }
        let st = &mut self.nodes[node];
        st.nim_bid += 1;
        let msg = ControlMessage::Nim {
            node,
            cpi: st.spec.cpi,
            cct_s: st.spec.cct_s,
            broadcast_id: st.nim_bid,
        };
        let _ = self.broadcast(node, msg);
    }

    pub(super) fn send_mim(&mut self, node: NodeId) {
        if !self.nodes[node].alive {
            return;
        }
        let members = self.nodes[node]
            .pool
            .direct_members(self.now(), &self.cfg.timers);
        if members.is_empty() {
            return;
        }
        let st = &mut self.nodes[node];
        st.mim_bid += 1;
        let bid = st.mim_bid;
        let msg = ControlMessage::Mim {
            node,
            members,
            broadcast_id: bid,
        };
        let _ = self.flood_mim(node, msg, bid);
    }

    pub(super) fn send_tim(&mut self, node: NodeId) {
        let st = &self.nodes[node];
        if !st.alive || node == self.smn || st.held.is_empty() {
            return;
        }
        let tasks: Vec<(TaskId, TaskStatus)> =
            st.held.iter().map(|(&(t, _), &s)| (t, s)).collect();
        let msg = ControlMessage::Tim {
            node,
            tasks,
            dst: self.smn,
        };
        self.unicast(node, self.smn, msg, false);
    }

    pub(super) fn receive(&mut self, to: NodeId, msg: ControlMessage) -> Result<(), RunError> {
        match msg {
            ControlMessage::Nim { .. }
            | ControlMessage::Nirm { .. }
            | ControlMessage::Nium { .. }
            | ControlMessage::Mim { .. }
            | ControlMessage::Mdirm { .. }
            | ControlMessage::Mium { .. } => {
                let own = self.dynamic_info(to);
                let now = self.now();
                let out = self.nodes[to]
                    .pool
                    .process_control_message(&msg, &own, now, &self.cfg.timers);
                // malformed messages are dropped
                for o in out.unwrap_or_default() {
                    match o {
                        Outgoing::Unicast { dst, msg } => self.unicast(to, dst, msg, false),
                        Outgoing::Broadcast(m) => self.broadcast(to, m)?,
                    }
                }
            }
            ControlMessage::Tim { node, tasks, dst } => {
                if dst == to && to == self.smn {
                    self.smn_on_tim(node, &tasks)?;
                }
            }
            ControlMessage::Submit { task, .. } => {
                if to == self.smn && self.queue.get(task).is_none() {
                    let spec = self.tasks[task].clone();
                    self.queue.submit(spec, self.now());
                    self.try_allocate()?;
                }
            }
            ControlMessage::Assign {
                task,
                attempt,
                provider,
            } => self.consumer_on_assign(to, task, attempt, provider)?,
            ControlMessage::DispatchFailed { task, attempt } => {
                self.smn_on_dispatch_failed(task, attempt)?
            }
            ControlMessage::Result { task, provider } => self.smn_on_result(task, provider)?,
            ControlMessage::MigrationRequest {
                task,
                src,
                reason,
                remaining_instructions,
            } => self.smn_on_migration_request(task, src, reason, remaining_instructions)?,
            ControlMessage::MigrationDecision { task, target } => {
                self.source_on_decision(to, task, target)?
            }
            ControlMessage::MigrationAborted { task, src, failed } => {
                self.smn_on_migration_aborted(task, src, failed)?
            }
        }
        Ok(())
    }

    fn set_status(&mut self, task: TaskId, to: TaskStatus, node: Option<NodeId>) -> Result<(), RunError> {
        let from = self.queue.set_status(task, to)?;
        self.trace.push(TraceEvent::Status {
            t: self.now(),
            task,
            from,
            to,
            node,
        });
        Ok(())
    }

    pub(super) fn on_arrival(&mut self, task: TaskId) {
        let c = self.tasks[task].consumer;
        if !self.nodes[c].alive {
            return;
        }
        self.submitted[task] = true;
        self.trace.push(TraceEvent::Submitted {
            t: self.now(),
            task,
            consumer: c,
            instructions: self.tasks[task].instructions,
        });
        self.unicast(c, self.smn, ControlMessage::Submit { task, consumer: c }, true);
    }

    // ---- master ----

    fn requeue(&mut self, task: TaskId) {
        let now = self.now();
        let rec = self.queue.get_mut(task).expect("known task");
        rec.assigned = None;
        rec.queued_since = now;
        rec.exec_seen_at = None;
        rec.resumed_from = 0;
        self.migrations_in_progress.remove(&task);
        self.reallocations += 1;
    }

    pub(super) fn detect_failures(&mut self) -> Result<(), RunError> {
        let now = self.now();
        let timeout = self.cfg.timers.failure_timeout();
        let max = self.cfg.allocation.max_attempts;
        let stale: Vec<(TaskId, Option<NodeId>)> = self
            .queue
            .iter()
            .filter(|r| {
                matches!(
                    r.status,
                    TaskStatus::Dispatched | TaskStatus::Executing | TaskStatus::Migrating
                ) && now - r.last_report_at > timeout
            })
            .map(|r| (r.spec.id, r.assigned))
            .collect();
        for (task, node) in stale {
            self.set_status(task, TaskStatus::Failed, node)?;
            self.migrations_in_progress.remove(&task);
            let rec = self.queue.get_mut(task).expect("known task");
            rec.failures += 1;
            if rec.attempt < max {
                self.set_status(task, TaskStatus::Queued, None)?;
                self.requeue(task);
            } else {
                rec.permanently_failed = true;
                self.trace.push(TraceEvent::PermanentFailure { t: now, task });
            }
        }
        Ok(())
    }

    /// Queue time the master expects on `node` from the placements it made.
    fn master_queue_estimate(&self, node: NodeId, exclude: TaskId) -> f64 {
        let spec = &self.nodes[node].spec;
        let now = self.now();
        let mut on: Vec<_> = self
            .queue
            .on_node(node)
            .filter(|r| r.spec.id != exclude)
            .collect();
        on.sort_by(|a, b| {
            let ka = a.exec_seen_at.unwrap_or(f64::INFINITY);
            let kb = b.exec_seen_at.unwrap_or(f64::INFINITY);
            ka.total_cmp(&kb).then(a.spec.id.cmp(&b.spec.id))
        });
        let mut running = None;
        let mut queued = Vec::new();
        for r in on {
            match (r.status, r.exec_seen_at, running.is_none()) {
                (TaskStatus::Executing, Some(seen), true) => {
                    let ran = (now - seen).max(0.0) * spec.speed();
                    running = Some(RunningTask {
                        instructions: r.spec.instructions as f64,
                        executed: (r.resumed_from as f64 + ran).min(r.spec.instructions as f64),
                    });
                }
                _ => queued.push(r.remaining_instructions() as f64),
            }
        }
        cost::queue_time(running, &queued, spec.cpi, spec.cct_s, spec.phi_s)
    }

    /// Available providers in the master's pool, excluding `exclude`.
    fn pool_providers(&self, exclude: &[NodeId]) -> Vec<NodeId> {
        self.nodes[self.smn]
            .pool
            .entries()
            .filter(|e| e.available && self.cfg.is_provider(e.node) && !exclude.contains(&e.node))
            .map(|e| e.node)
            .collect()
    }

    fn candidates(&self, routes_src: NodeId, exclude: &[NodeId], task: TaskId) -> Vec<Candidate> {
        let routes = self.routes_from(routes_src);
        let pool = &self.nodes[self.smn].pool;
        self.pool_providers(exclude)
            .into_iter()
            .filter_map(|node| {
                let e = pool.get(node)?;
                let spec = &self.nodes[node].spec;
                let rs: Vec<RouteEntry> = routes.routes_to(node).cloned().collect();
                (!rs.is_empty()).then(|| Candidate {
                    node,
                    cpi: e.cpi,
                    cct_s: e.cct_s,
                    alpha_w: spec.alpha_w(),
                    beta_j: spec.beta_j,
                    queue_time_s: self.master_queue_estimate(node, task),
                    routes: rs,
                })
            })
            .collect()
    }

    pub(super) fn try_allocate(&mut self) -> Result<(), RunError> {
        if !self.nodes[self.smn].alive {
            return Ok(());
        }
        for task in self.queue.queued() {
            let choice = self.choose_provider(task)?;
            if let Some((node, route)) = choice {
                self.assign(task, node, route)?;
            }
        }
        Ok(())
    }

    fn choose_provider(&self, task: TaskId) -> Result<Option<(NodeId, Option<RouteEntry>)>, RunError> {
        let rec = self.queue.get(task).expect("known task");
        let consumer = rec.spec.consumer;
        match self.scheme {
            Scheme::Proposed => {
                let demand = TaskDemand {
                    instructions: rec.spec.instructions as f64,
                    dispatch_bits: rec.spec.dispatch_bits(),
                    output_bits: rec.spec.output_bits,
                };
                let cands = self.candidates(consumer, &[], task);
                let mut best = allocate(&demand, &cands, self.fmt())?;
                if best.is_none() && self.now() - rec.queued_since >= self.cfg.allocation.relax_after_s {
                    best = allocate_relaxed(&demand, &cands, self.fmt())?;
                }
                Ok(best.map(|e| (e.node, Some(e.route))))
            }
            Scheme::Hta => {
                let pool = &self.nodes[self.smn].pool;
                let views: Vec<HtaView> = self
                    .pool_providers(&[])
                    .into_iter()
                    .filter_map(|n| pool.get(n))
                    .map(|e| HtaView {
                        node: e.node,
                        cpi: e.cpi,
                        cct_s: e.cct_s,
                        battery_j: e.dynamic.map(|d| d.battery_j),
                    })
                    .collect();
                Ok(hta_allocate(&views).map(|n| (n, None)))
            }
            Scheme::Minhop => {
                let hops = hop_counts(consumer, self.n, |u, v| self.is_up(self.top, u, v));
                let cands: Vec<(NodeId, Option<usize>)> = self
                    .pool_providers(&[])
                    .into_iter()
                    .map(|n| (n, hops[n]))
                    .collect();
                Ok(minhop_allocate(&cands).map(|n| (n, None)))
            }
        }
    }

    fn assign(&mut self, task: TaskId, node: NodeId, route: Option<RouteEntry>) -> Result<(), RunError> {
        self.set_status(task, TaskStatus::Dispatched, Some(node))?;
        let now = self.now();
        let rec = self.queue.get_mut(task).expect("known task");
        rec.attempt += 1;
        rec.assigned = Some(node);
        rec.last_report_at = now;
        rec.exec_seen_at = None;
        rec.resumed_from = 0;
        let attempt = rec.attempt;
        let consumer = rec.spec.consumer;
        let available = self.nodes[self.smn].pool.is_available(node);
        self.trace.push(TraceEvent::Dispatch {
            t: now,
            task,
            attempt,
            node,
            available,
        });
        if let Some(r) = route {
            self.planned.insert((task, attempt), r);
        }
        let msg = ControlMessage::Assign {
            task,
            attempt,
            provider: node,
        };
        self.unicast(self.smn, consumer, msg, true);
        Ok(())
    }

    fn smn_on_tim(&mut self, node: NodeId, tasks: &[(TaskId, TaskStatus)]) -> Result<(), RunError> {
        let now = self.now();
        for &(task, reported) in tasks {
            let Some(rec) = self.queue.get(task) else { continue };
            if !matches!(
                rec.status,
                TaskStatus::Dispatched | TaskStatus::Executing | TaskStatus::Migrating
            ) {
                continue;
            }
            let from_assigned = rec.assigned == Some(node);
            let accepted = from_assigned
                || (rec.status == TaskStatus::Dispatched && rec.spec.consumer == node)
                || self
                    .migrations_in_progress
                    .get(&task)
                    .is_some_and(|m| m.src == node);
            if !accepted {
                continue;
            }
            let status = rec.status;
            let instructions = rec.spec.instructions;
            self.queue.get_mut(task).expect("known task").last_report_at = now;
            if reported != TaskStatus::Executing || !from_assigned {
                continue;
            }
            match status {
                TaskStatus::Dispatched => {
                    self.set_status(task, TaskStatus::Executing, Some(node))?;
                    self.queue.get_mut(task).expect("known task").exec_seen_at = Some(now);
                }
                TaskStatus::Migrating => {
                    self.set_status(task, TaskStatus::Executing, Some(node))?;
                    let m = self.migrations_in_progress.remove(&task);
                    let rec = self.queue.get_mut(task).expect("known task");
                    rec.exec_seen_at = Some(now);
                    if let Some(m) = m {
                        rec.resumed_from = instructions - m.remaining_instructions;
                        rec.migrations += 1;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn smn_on_dispatch_failed(&mut self, task: TaskId, attempt: u32) -> Result<(), RunError> {
        let Some(rec) = self.queue.get(task) else { return Ok(()) };
        if rec.attempt != attempt || rec.status != TaskStatus::Dispatched {
            return Ok(());
        }
        self.set_status(task, TaskStatus::Queued, None)?;
        self.requeue(task);
        self.try_allocate()
    }

    fn smn_on_result(&mut self, task: TaskId, provider: NodeId) -> Result<(), RunError> {
        let Some(rec) = self.queue.get(task) else { return Ok(()) };
        if rec.status == TaskStatus::Completed {
            return Ok(());
        }
        self.set_status(task, TaskStatus::Completed, Some(provider))?;
        self.migrations_in_progress.remove(&task);
        Ok(())
    }

    /// Best migration target for `task` with the image sent from `src`.
    fn migration_target(&self, task: TaskId, src: NodeId, remaining: u64, exclude: &[NodeId]) -> Result<Option<(NodeId, RouteEntry, f64)>, RunError> {
        let spec = &self.tasks[task];
        let demand = TaskDemand {
            instructions: remaining as f64,
            dispatch_bits: spec.dispatch_bits() + self.cfg.workload.state_bits,
            output_bits: spec.output_bits,
        };
        let mut ex = exclude.to_vec();
        ex.push(src);
        let cands = self.candidates(src, &ex, task);
        Ok(allocate(&demand, &cands, self.fmt())?.map(|e| (e.node, e.route, e.e_ct)))
    }

    fn smn_on_migration_request(
        &mut self,
        task: TaskId,
        src: NodeId,
        reason: MigrationReason,
        remaining: u64,
    ) -> Result<(), RunError> {
        let ok = self
            .queue
            .get(task)
            .is_some_and(|r| r.status == TaskStatus::Executing && r.assigned == Some(src));
        let mut target = None;
        if ok {
            if let Some((node, route, e_ct)) = self.migration_target(task, src, remaining, &[])? {
                let e = self.nodes[self.smn].pool.get(src);
                let stay = e.map_or(f64::INFINITY, |e| {
                    cost::processing_time(remaining as f64, e.cpi, e.cct_s)
                });
                if reason == MigrationReason::LowBattery || e_ct < stay {
                    target = Some((node, route));
                }
            }
        }
        let decision = match target {
            Some((node, route)) => {
                self.set_status(task, TaskStatus::Migrating, Some(node))?;
                let now = self.now();
                let rec = self.queue.get_mut(task).expect("known task");
                rec.assigned = Some(node);
                rec.last_report_at = now;
                let attempt = rec.attempt;
                self.planned.insert((task, attempt), route);
                self.migrations_in_progress.insert(
                    task,
                    MigrationState {
                        src,
                        remaining_instructions: remaining,
                        tried: vec![node],
                    },
                );
                Some(node)
            }
            None => None,
        };
        self.unicast(
            self.smn,
            src,
            ControlMessage::MigrationDecision {
                task,
                target: decision,
            },
            true,
        );
        Ok(())
    }

    /// The source could not hand over the task. With `failed` set, the image
    /// transfer to that node broke and the next-best target is tried.
    fn smn_on_migration_aborted(
        &mut self,
        task: TaskId,
        src: NodeId,
        failed: Option<NodeId>,
    ) -> Result<(), RunError> {
        let Some(m) = self.migrations_in_progress.get(&task).cloned() else {
            return Ok(());
        };
        if m.src != src || self.queue.get(task).map(|r| r.status) != Some(TaskStatus::Migrating) {
            return Ok(());
        }
        let next = match failed {
            Some(_) => self.migration_target(task, src, m.remaining_instructions, &m.tried)?,
            None => None,
        };
        let now = self.now();
        let target = match next {
            Some((node, route, _)) => {
                let rec = self.queue.get_mut(task).expect("known task");
                rec.assigned = Some(node);
                rec.last_report_at = now;
                let attempt = rec.attempt;
                self.planned.insert((task, attempt), route);
                self.migrations_in_progress
                    .get_mut(&task)
                    .expect("in progress")
                    .tried
                    .push(node);
                Some(node)
            }
            None => {
                self.set_status(task, TaskStatus::Executing, Some(src))?;
                self.migrations_in_progress.remove(&task);
                let rec = self.queue.get_mut(task).expect("known task");
                rec.assigned = Some(src);
                rec.last_report_at = now;
                rec.exec_seen_at = Some(now);
                rec.resumed_from = rec.spec.instructions - m.remaining_instructions;
                None
            }
        };
        if failed.is_some() {
            let msg = ControlMessage::MigrationDecision { task, target };
            self.unicast(self.smn, src, msg, true);
        }
        Ok(())
    }

    // ---- consumers and providers ----

    fn consumer_on_assign(&mut self, c: NodeId, task: TaskId, attempt: u32, provider: NodeId) -> Result<(), RunError> {
        if self.completion[task].is_some() || self.nodes[c].held.contains_key(&(task, attempt)) {
            return Ok(());
        }
        self.nodes[c].held.insert((task, attempt), TaskStatus::Dispatched);
        let spec = &self.tasks[task];
        let bits = spec.dispatch_bits();
        let planned = self.planned.get(&(task, attempt)).cloned();
        match self.data_path(c, provider, bits, planned.as_ref()) {
            Some((path, level)) => self.start_flow(
                FlowKind::Dispatch { provider },
                task,
                attempt,
                c,
                path,
                level,
                bits,
            ),
            None => {
                self.nodes[c].held.remove(&(task, attempt));
                self.unicast(c, self.smn, ControlMessage::DispatchFailed { task, attempt }, true);
                Ok(())
            }
        }
    }

    fn enqueue(&mut self, node: NodeId, lt: LocalTask) {
        let st = &mut self.nodes[node];
        st.local.push_back(lt);
        st.held.insert((lt.task, lt.attempt), TaskStatus::Dispatched);
        self.start_cpu_if_idle(node);
        self.maybe_nium(node);
    }

    fn start_cpu_if_idle(&mut self, node: NodeId) {
        let now = self.now();
        let st = &mut self.nodes[node];
        if !st.alive || st.running.is_some() {
            return;
        }
        let Some(lt) = st.local.pop_front() else { return };
        st.running = Some(Running { lt, start: now });
        st.cpu_gen += 1;
        st.held.insert((lt.task, lt.attempt), TaskStatus::Executing);
        let left = self.tasks[lt.task].instructions - lt.done;
        let busy = st.spec.phi_s + left as f64 / st.spec.speed();
        let gen = st.cpu_gen;
        self.schedule(busy, Ev::CpuDone { node, gen });
        self.send_tim(node);
    }

    /// Stops the running task, charging CPU energy and logging the work done.
    fn stop_running(&mut self, node: NodeId) -> Option<LocalTask> {
        let executed = self.executed_since_start(node);
        let now = self.now();
        let st = &mut self.nodes[node];
        let r = st.running.take()?;
        st.cpu_gen += 1;
        let alpha = st.spec.alpha_w();
        if executed > 0 {
            self.trace.push(TraceEvent::Exec {
                t: now,
                task: r.lt.task,
                attempt: r.lt.attempt,
                node,
                instructions: executed,
            });
        }
        self.drain(node, alpha * (now - r.start));
        Some(LocalTask {
            done: r.lt.done + executed,
            ..r.lt
        })
    }

    pub(super) fn on_cpu_done(&mut self, node: NodeId) {
        let Some(r) = self.nodes[node].running else { return };
        let left = self.tasks[r.lt.task].instructions - r.lt.done;
        let now = self.now();
        self.trace.push(TraceEvent::Exec {
            t: now,
            task: r.lt.task,
            attempt: r.lt.attempt,
            node,
            instructions: left,
        });
        let alpha = self.nodes[node].spec.alpha_w();
        self.nodes[node].running = None;
        self.drain(node, alpha * (now - r.start));
        if !self.nodes[node].alive {
            return;
        }
        // output failures are retried later; nothing to report here
        let _ = self.start_output(node, r.lt.task, r.lt.attempt);
        self.start_cpu_if_idle(node);
        self.maybe_nium(node);
    }

    pub(super) fn start_output(&mut self, p: NodeId, task: TaskId, attempt: u32) -> Result<(), RunError> {
        let c = self.tasks[task].consumer;
        let bits = self.tasks[task].output_bits;
        match self.data_path(p, c, bits, None) {
            Some((path, level)) => self.start_flow(
                FlowKind::Output { provider: p },
                task,
                attempt,
                p,
                path,
                level,
                bits,
            ),
            None => {
                let retry = self.cfg.allocation.retry_period_s;
                self.schedule(retry, Ev::OutputRetry { node: p, task, attempt });
                Ok(())
            }
        }
    }

    pub(super) fn flow_arrived(&mut self, f: Flow) -> Result<(), RunError> {
        let now = self.now();
        match f.kind {
            FlowKind::Dispatch { provider } => {
                self.nodes[f.src].held.remove(&(f.task, f.attempt));
                // a copy from an earlier attempt already here keeps its progress
                let st = &self.nodes[provider];
                let duplicate = st.running.is_some_and(|r| r.lt.task == f.task)
                    || st.local.iter().any(|lt| lt.task == f.task)
                    || st.parked.contains_key(&f.task);
                if self.completion[f.task].is_none() && !duplicate {
                    let lt = LocalTask {
                        task: f.task,
                        attempt: f.attempt,
                        done: 0,
                        migration_requests: 0,
                    };
                    self.enqueue(provider, lt);
                }
            }
            FlowKind::Output { provider } => {
                self.nodes[provider].held.remove(&(f.task, f.attempt));
                let c = f.dst();
                if self.completion[f.task].is_none() {
                    let completion_s = now - self.tasks[f.task].submit_at;
                    self.completion[f.task] = Some(completion_s);
                    self.trace.push(TraceEvent::Completed {
                        t: now,
                        task: f.task,
                        attempt: f.attempt,
                        node: provider,
                        completion_s,
                    });
                    let msg = ControlMessage::Result {
                        task: f.task,
                        provider,
                    };
                    self.unicast(c, self.smn, msg, true);
                }
            }
            FlowKind::Image { lt, target } => {
                self.nodes[f.src].held.remove(&(f.task, f.attempt));
                self.trace.push(TraceEvent::Migration {
                    t: now,
                    task: f.task,
                    from: f.src,
                    to: target,
                    ok: true,
                });
                self.migrations += 1;
                self.enqueue(target, lt);
                self.maybe_nium(f.src);
            }
        }
        Ok(())
    }

    pub(super) fn flow_failed(&mut self, f: Flow) -> Result<(), RunError> {
        let now = self.now();
        match f.kind {
            FlowKind::Dispatch { .. } => {
                self.nodes[f.src].held.remove(&(f.task, f.attempt));
                let msg = ControlMessage::DispatchFailed {
                    task: f.task,
                    attempt: f.attempt,
                };
                self.unicast(f.src, self.smn, msg, true);
            }
            FlowKind::Output { provider } => {
                if self.nodes[provider].alive {
                    let retry = self.cfg.allocation.retry_period_s;
                    self.schedule(
                        retry,
                        Ev::OutputRetry {
                            node: provider,
                            task: f.task,
                            attempt: f.attempt,
                        },
                    );
                }
            }
            FlowKind::Image { lt, target } => {
                self.trace.push(TraceEvent::Migration {
                    t: now,
                    task: f.task,
                    from: f.src,
                    to: target,
                    ok: false,
                });
                if self.nodes[f.src].alive {
                    self.nodes[f.src].parked.insert(f.task, lt);
                    let msg = ControlMessage::MigrationAborted {
                        task: f.task,
                        src: f.src,
                        failed: Some(target),
                    };
                    self.unicast(f.src, self.smn, msg, true);
                }
            }
        }
        Ok(())
    }

    pub(super) fn monitor_tick(&mut self) {
        let now = self.now();
        let mig = self.cfg.migration.clone();
        for p in 0..self.n {
            let st = &self.nodes[p];
            if !st.alive || !self.cfg.is_provider(p) {
                continue;
            }
            let Some(r) = st.running else { continue };
            let spec = &self.tasks[r.lt.task];
            let executed = r.lt.done + self.executed_since_start(p);
            let remaining = spec.instructions - executed;
            let remaining_exec_s = remaining as f64 / st.spec.speed();
            let route_lifetime_s = self
                .select(p, spec.consumer, spec.output_bits)
                .map(|s| s.entry.predicted_lifetime_s);
            let image_bits = spec.dispatch_bits() + self.cfg.workload.state_bits;
            let joined = st
                .pool
                .entries()
                .filter(|e| e.available && e.added_at > r.start && self.cfg.is_provider(e.node))
                .filter_map(|e| {
                    let sel = self.select(p, e.node, image_bits)?;
                    let wait = e.dynamic.map_or(0.0, |d| d.queue_wait_s);
                    Some(cost::processing_time(remaining as f64, e.cpi, e.cct_s) + wait + sel.edtt_s)
                })
                .min_by(f64::total_cmp);
            let input = MonitorInput {
                // CPU energy is only charged when the CPU stops
                battery_j: st.battery_j - st.spec.alpha_w() * (now - r.start),
                battery_capacity_j: st.spec.battery_j,
                remaining_exec_s,
                route_lifetime_s,
                backlog_s: self.backlog(p),
                joined_node_ect_s: joined,
                migrations_so_far: r.lt.migration_requests,
            };
            let Some(reason) = check_migration_triggers(&input, &mig) else {
                continue;
            };
            if let Some(run) = self.nodes[p].running.as_mut() {
                run.lt.migration_requests += 1;
            }
            let msg = ControlMessage::MigrationRequest {
                task: r.lt.task,
                src: p,
                reason,
                remaining_instructions: remaining,
            };
            self.unicast(p, self.smn, msg, true);
        }
    }

    fn start_image(&mut self, src: NodeId, lt: LocalTask, target: NodeId) -> Result<(), RunError> {
        self.nodes[src]
            .held
            .insert((lt.task, lt.attempt), TaskStatus::Migrating);
        let spec = &self.tasks[lt.task];
        let bits = spec.dispatch_bits() + self.cfg.workload.state_bits;
        let planned = self.planned.get(&(lt.task, lt.attempt)).cloned();
        match self.data_path(src, target, bits, planned.as_ref()) {
            Some((path, level)) => self.start_flow(
                FlowKind::Image { lt, target },
                lt.task,
                lt.attempt,
                src,
                path,
                level,
                bits,
            ),
            None => {
                self.trace.push(TraceEvent::Migration {
                    t: self.now(),
                    task: lt.task,
                    from: src,
                    to: target,
                    ok: false,
                });
                self.nodes[src].parked.insert(lt.task, lt);
                let msg = ControlMessage::MigrationAborted {
                    task: lt.task,
                    src,
                    failed: Some(target),
                };
                self.unicast(src, self.smn, msg, true);
                Ok(())
            }
        }
    }

    fn source_on_decision(&mut self, src: NodeId, task: TaskId, target: Option<NodeId>) -> Result<(), RunError> {
        let running_here = self.nodes[src].running.is_some_and(|r| r.lt.task == task);
        let parked = self.nodes[src].parked.remove(&task);
        match (target, parked) {
            (None, Some(lt)) => {
                let st = &mut self.nodes[src];
                st.local.push_front(lt);
                st.held.insert((lt.task, lt.attempt), TaskStatus::Dispatched);
                self.start_cpu_if_idle(src);
            }
            (None, None) => {}
            (Some(t), Some(lt)) => self.start_image(src, lt, t)?,
            (Some(t), None) if running_here => {
                let lt = self.stop_running(src).expect("running task");
                self.start_cpu_if_idle(src);
                self.start_image(src, lt, t)?;
            }
            (Some(_), None) => {
                let msg = ControlMessage::MigrationAborted {
                    task,
                    src,
                    failed: None,
                };
                self.unicast(src, self.smn, msg, true);
            }
        }
        Ok(())
    }
}
