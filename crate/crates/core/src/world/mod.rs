//! One simulation run: mobility, radio, routing and middleware driven by a
//! single event queue.

mod cloud;
mod net;

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, PowerMode, ScenarioConfig, Scheme};
use crate::engine::{rng_stream, Engine, EngineError, SimTime, StreamId};
use crate::metrics::{self, MetricsRecord};
use crate::middleware::task::TransitionError;
use crate::middleware::{
    ControlMessage, NodeSpec, ResourcePool, Role, TaskId, TaskQueue, TaskSpec, TaskStatus,
    UpdateTracker,
};
use crate::mobility::{MobilityGroup, MobilityState, Region};
use crate::netlayer::{LinkLifetimeModel, PacketError, RouteEntry, RoutingTableSet};
use crate::radio::{LevelIdx, Position, RadioConfig};
use crate::trace::{Trace, TraceEvent};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("scheduler: {0}")]
    Engine(#[from] EngineError),
    #[error("task state: {0}")]
    Transition(#[from] TransitionError),
    #[error("packet format: {0}")]
    Packet(#[from] PacketError),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub trace: Trace,
    pub tasks: Vec<TaskSpec>,
    /// Completion time per task id; `None` when no result reached the consumer.
    pub completion_s: Vec<Option<f64>>,
}

/// Validates `cfg` and simulates it up to its horizon.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut w = World::new(cfg);
    w.run()?;
    Ok(w.finish())
}

#[derive(Debug, Clone)]
enum Ev {
    Mobility,
    Hello,
    Discovery,
    Nim(NodeId),
    Mim(NodeId),
    Tim(NodeId),
    Monitor,
    Allocate,
    Arrival(TaskId),
    Deliver { to: NodeId, msg: ControlMessage },
    Resend { from: NodeId, to: NodeId, msg: ControlMessage },
    FlowDone { flow: usize, gen: u64 },
    CpuDone { node: NodeId, gen: u64 },
    OutputRetry { node: NodeId, task: TaskId, attempt: u32 },
}

/// A task instance held by a provider.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LocalTask {
    task: TaskId,
    attempt: u32,
    /// Instructions already executed, here or on a previous node.
    done: u64,
    migration_requests: u32,
}

#[derive(Debug, Clone, Copy)]
struct Running {
    lt: LocalTask,
    start: SimTime,
}

#[derive(Debug, Clone)]
struct NodeState {
    spec: NodeSpec,
    alive: bool,
    battery_j: f64,
    pool: ResourcePool,
    nium: UpdateTracker,
    nim_bid: u32,
    mim_bid: u32,
    /// Last members-message id seen from each origin.
    mim_seen: Vec<Option<u32>>,
    local: VecDeque<LocalTask>,
    running: Option<Running>,
    cpu_gen: u64,
    /// What this node reports in its task information messages.
    held: BTreeMap<(TaskId, u32), TaskStatus>,
    /// Images kept by a migration source after a failed transfer.
    parked: BTreeMap<TaskId, LocalTask>,
}

/// Master-side bookkeeping of an ongoing migration.
#[derive(Debug, Clone)]
struct MigrationState {
    src: NodeId,
    remaining_instructions: u64,
    tried: Vec<NodeId>,
}

#[derive(Debug, Clone)]
enum FlowKind {
    Dispatch { provider: NodeId },
    Output { provider: NodeId },
    Image { lt: LocalTask, target: NodeId },
}

/// A data transfer along a fixed path at one power level.
#[derive(Debug, Clone)]
struct Flow {
    kind: FlowKind,
    task: TaskId,
    attempt: u32,
    src: NodeId,
    /// Nodes after `src`, ending at the destination.
    path: Vec<NodeId>,
    level: LevelIdx,
    packets: u64,
    /// Transmissions needed on each hop, retries included.
    tx: Vec<u64>,
    work_bits: f64,
    done_bits: f64,
    rate_bps: f64,
    updated_at: SimTime,
    gen: u64,
}

impl Flow {
    fn hops(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        std::iter::once(self.src)
            .chain(self.path.iter().copied())
            .zip(self.path.iter().copied())
    }

    fn dst(&self) -> NodeId {
        *self.path.last().expect("non-empty path")
    }
}

struct World<'c> {
    cfg: &'c ScenarioConfig,
    scheme: Scheme,
    /// Levels usable in this run; one level for baselines and max-only mode.
    radio: RadioConfig,
    /// Added to run-local level indices to get indices into the configured list.
    level_offset: usize,
    levels: usize,
    top: LevelIdx,
    n: usize,
    smn: NodeId,
    engine: Engine<Ev>,
    mobility: MobilityState,
    rng_mobility: ChaCha8Rng,
    rng_loss: ChaCha8Rng,
    nodes: Vec<NodeState>,
    up: Vec<bool>,
    models: Vec<LinkLifetimeModel>,
    tables: Vec<RoutingTableSet>,
    loss_avg: BTreeMap<(NodeId, LevelIdx, Vec<NodeId>), f64>,
    b_self: Vec<f64>,
    flows: Vec<Option<Flow>>,
    queue: TaskQueue,
    migrations_in_progress: BTreeMap<TaskId, MigrationState>,
    planned: BTreeMap<(TaskId, u32), RouteEntry>,
    tasks: Vec<TaskSpec>,
    submitted: Vec<bool>,
    completion: Vec<Option<f64>>,
    next_position_sample: SimTime,
    trace: Trace,
    control_packets: u64,
    data_packets: u64,
    migrations: u64,
    reallocations: u64,
}

fn node_specs(cfg: &ScenarioConfig) -> Vec<NodeSpec> {
    (0..cfg.node_count)
        .map(|id| {
            let m = &cfg.mote_types[cfg.mote_type_of(id)];
            let role = if id == cfg.roles.smn {
                Role::Smn
            } else if cfg.roles.scns.contains(&id) {
                Role::Scn
            } else {
                Role::Spn
            };
            let mut s = NodeSpec {
                id,
                role,
                cpi: m.cpi,
                cct_s: m.cct_s,
                phi_s: m.phi_s,
                p_static_w: m.p_static_w,
                active_gates: m.active_gates,
                capacitance_f: m.capacitance_f,
                voltage_v: m.voltage_v,
                frequency_hz: m.frequency_hz,
                beta_j: m.beta_j,
                memory_bytes: m.memory_bytes,
                battery_j: m.battery_j,
            };
            for o in cfg.node_overrides.iter().filter(|o| o.node == id) {
                s.cpi = o.cpi.unwrap_or(s.cpi);
                s.cct_s = o.cct_s.unwrap_or(s.cct_s);
                s.phi_s = o.phi_s.unwrap_or(s.phi_s);
                s.battery_j = o.battery_j.unwrap_or(s.battery_j);
                s.memory_bytes = o.memory_bytes.unwrap_or(s.memory_bytes);
            }
            s
        })
        .collect()
}

fn initial_mobility(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> MobilityState {
    let area = Region::square(cfg.area_m);
    let mut offsets = vec![Position::default(); cfg.node_count];
    let mut groups = Vec::with_capacity(cfg.groups.len());
    for g in &cfg.groups {
        let region = g.region.unwrap_or(area);
        let center = g.center.unwrap_or_else(|| region.sample(rng));
        let waypoint = region.sample(rng);
        for (k, &m) in g.members.iter().enumerate() {
            offsets[m] = match &g.offsets {
                Some(off) => off[k],
                None => {
                    let r = g.spread_m * rng.gen::<f64>().sqrt();
                    let a = std::f64::consts::TAU * rng.gen::<f64>();
                    Position::new(r * a.cos(), r * a.sin())
                }
            };
        }
        groups.push(MobilityGroup::new(
            g.members.clone(),
            center,
            waypoint,
            g.speed_mps,
            g.jitter_radius_m,
            g.pause_s,
            region,
        ));
    }
    MobilityState::new(cfg.area_m, groups, offsets)
}

/// Synthetic workload: arrival times uniform over the window, sizes uniform
/// over their ranges, consumers drawn uniformly.
pub fn generate_workload(cfg: &ScenarioConfig) -> Vec<TaskSpec> {
    let w = &cfg.workload;
    let mut rng = rng_stream(cfg.seed, StreamId::Workload);
    let mut times: Vec<f64> = (0..w.tasks)
        .map(|_| w.arrival_start_s + rng.gen::<f64>() * w.arrival_window_s)
        .collect();
    times.sort_by(f64::total_cmp);
    times
        .into_iter()
        .enumerate()
        .map(|(id, submit_at)| {
            let consumer = cfg.roles.scns[rng.gen_range(0..cfg.roles.scns.len())];
            let instructions = rng.gen_range(w.instructions_min..=w.instructions_max);
            let input_bits = rng.gen_range(w.input_bits_min..=w.input_bits_max);
            TaskSpec {
                id,
                task_type: rng.gen_range(0..w.task_types),
                consumer,
                submit_at,
                instructions,
                code_bits: w.code_bits,
                input_bits,
                output_bits: (input_bits as f64 * w.output_fraction).round() as u64,
            }
        })
        .collect()
}

impl<'c> World<'c> {
    fn new(cfg: &'c ScenarioConfig) -> Self {
        let n = cfg.node_count;
        let single = cfg.scheme.is_baseline() || cfg.power_mode == PowerMode::MaxOnly;
        let radio = if single {
            cfg.radio.max_only()
        } else {
            cfg.radio.clone()
        };
        let levels = radio.levels.len();
        let mut rng_place = rng_stream(cfg.seed, StreamId::Placement);
        let mobility = initial_mobility(cfg, &mut rng_place);
        let nodes = node_specs(cfg)
            .into_iter()
            .map(|spec| NodeState {
                alive: true,
                battery_j: spec.battery_j,
                pool: ResourcePool::new(spec.id),
                nium: UpdateTracker::default(),
                nim_bid: 0,
                mim_bid: 0,
                mim_seen: vec![None; n],
                local: VecDeque::new(),
                running: None,
                cpu_gen: 0,
                held: BTreeMap::new(),
                parked: BTreeMap::new(),
                spec,
            })
            .collect();
        let tasks = generate_workload(cfg);
        let count = tasks.len();
        World {
            cfg,
            scheme: cfg.scheme,
            level_offset: cfg.radio.levels.len() - levels,
            top: levels - 1,
            levels,
            radio,
            n,
            smn: cfg.roles.smn,
            engine: Engine::new(),
            mobility,
            rng_mobility: rng_stream(cfg.seed, StreamId::Mobility),
            rng_loss: rng_stream(cfg.seed, StreamId::PacketLoss),
            nodes,
            up: vec![false; levels * n * n],
            models: vec![LinkLifetimeModel::new(); levels * n * n],
            tables: vec![RoutingTableSet::new(levels); n],
            loss_avg: BTreeMap::new(),
            b_self: vec![0.0; n],
            flows: Vec::new(),
            queue: TaskQueue::new(),
            migrations_in_progress: BTreeMap::new(),
            planned: BTreeMap::new(),
            tasks,
            submitted: vec![false; count],
            completion: vec![None; count],
            next_position_sample: 0.0,
            trace: Trace::default(),
            control_packets: 0,
            data_packets: 0,
            migrations: 0,
            reallocations: 0,
        }
    }

    fn now(&self) -> SimTime {
        self.engine.now()
    }

    fn proposed(&self) -> bool {
        self.scheme == Scheme::Proposed
    }

    fn schedule(&mut self, delay: f64, ev: Ev) {
        self.engine.schedule_in(delay, ev);
    }

    fn run(&mut self) -> Result<(), RunError> {
        let cfg = self.cfg;
        self.sample_positions();
        self.refresh_links();
        let n = self.n;
        self.engine.schedule(cfg.mobility_step_s, Ev::Mobility)?;
        self.engine.schedule(cfg.network.hello_period_s, Ev::Hello)?;
        if self.proposed() {
            self.engine.schedule(0.0, Ev::Discovery)?;
        }
        let t = &cfg.timers;
        for i in 0..n {
            let frac = (i + 1) as f64 / n as f64;
            self.engine.schedule(frac * t.nim_period_s, Ev::Nim(i))?;
            self.engine
                .schedule(t.nim_period_s + frac * t.mim_period_s, Ev::Mim(i))?;
            self.engine.schedule(frac * t.tim_period_s, Ev::Tim(i))?;
        }
        if self.proposed() && cfg.migration.enabled {
            self.engine.schedule(cfg.migration.check_period_s, Ev::Monitor)?;
        }
        self.engine
            .schedule(cfg.allocation.retry_period_s, Ev::Allocate)?;
        for k in 0..self.tasks.len() {
            let at = self.tasks[k].submit_at;
            self.engine.schedule(at, Ev::Arrival(k))?;
        }
        while let Some(ev) = self.engine.pop_until(cfg.sim_time_s) {
            self.handle(ev.kind)?;
        }
        Ok(())
    }

    fn handle(&mut self, ev: Ev) -> Result<(), RunError> {
        let cfg = self.cfg;
        match ev {
            Ev::Mobility => {
                self.mobility
                    .advance(cfg.mobility_step_s, &mut self.rng_mobility);
                self.sample_positions();
                self.refresh_links();
                self.check_flows()?;
                self.schedule(cfg.mobility_step_s, Ev::Mobility);
            }
            Ev::Hello => {
                self.send_hellos();
                self.schedule(cfg.network.hello_period_s, Ev::Hello);
            }
            Ev::Discovery => {
                self.discovery_round();
                self.schedule(cfg.network.discovery_period_s, Ev::Discovery);
            }
            Ev::Nim(i) => {
                self.send_nim(i);
                self.maybe_nium(i);
                self.schedule(cfg.timers.nim_period_s, Ev::Nim(i));
            }
            Ev::Mim(i) => {
                self.send_mim(i);
                self.schedule(cfg.timers.mim_period_s, Ev::Mim(i));
            }
            Ev::Tim(i) => {
                self.send_tim(i);
                self.schedule(cfg.timers.tim_period_s, Ev::Tim(i));
            }
            Ev::Monitor => {
                self.monitor_tick();
                self.schedule(cfg.migration.check_period_s, Ev::Monitor);
            }
            Ev::Allocate => {
                let now = self.now();
                for node in &mut self.nodes {
                    node.pool.evict_stale(now, &cfg.timers);
                }
                self.detect_failures()?;
                self.try_allocate()?;
                self.schedule(cfg.allocation.retry_period_s, Ev::Allocate);
            }
            Ev::Arrival(task) => self.on_arrival(task),
            Ev::Deliver { to, msg } => {
                if self.nodes[to].alive {
                    self.receive(to, msg)?;
                }
            }
            Ev::Resend { from, to, msg } => {
                if self.nodes[from].alive && self.nodes[to].alive {
                    self.unicast(from, to, msg, true);
                }
            }
            Ev::FlowDone { flow, gen } => {
                let current = self.flows[flow].as_ref().is_some_and(|f| f.gen == gen);
                if current {
                    self.complete_flow(flow)?;
                }
            }
            Ev::CpuDone { node, gen } => {
                if self.nodes[node].cpu_gen == gen {
                    self.on_cpu_done(node);
                }
            }
            Ev::OutputRetry { node, task, attempt } => {
                let holds = self.nodes[node].alive
                    && self.nodes[node].held.contains_key(&(task, attempt));
                if holds {
                    self.start_output(node, task, attempt)?;
                }
            }
        }
        Ok(())
    }

    fn sample_positions(&mut self) {
        let now = self.now();
        if now + 1e-9 < self.next_position_sample {
            return;
        }
        for (node, p) in self.mobility.positions.iter().enumerate() {
            self.trace.push(TraceEvent::Position {
                t: now,
                node,
                x: p.x,
                y: p.y,
            });
        }
        self.next_position_sample = now + self.cfg.position_sample_s;
    }

    /// Drains `joules` from `node`'s battery; the node dies when it runs out.
    fn drain(&mut self, node: NodeId, joules: f64) {
        let st = &mut self.nodes[node];
        st.battery_j -= joules;
        if st.alive && st.battery_j <= 0.0 {
            st.battery_j = 0.0;
            st.alive = false;
            st.local.clear();
            st.running = None;
            st.cpu_gen += 1;
            st.held.clear();
            st.parked.clear();
        }
    }

    fn finish(self) -> RunOutput {
        let cfg = self.cfg;
        let done: Vec<f64> = self.completion.iter().flatten().copied().collect();
        let submitted = self.submitted.iter().filter(|&&s| s).count();
        let failed = self
            .queue
            .iter()
            .filter(|r| r.permanently_failed && self.completion[r.spec.id].is_none())
            .count();
        let completed = done.len();
        let mean = if done.is_empty() {
            0.0
        } else {
            metrics::atct(&done) / done.len() as f64
        };
        let metrics = MetricsRecord {
            scenario: cfg.name.clone(),
            scheme: cfg.scheme.label().to_string(),
            power_mode: cfg.power_mode.label().to_string(),
            seed: cfg.seed,
            tasks: cfg.workload.tasks,
            tasks_submitted: submitted,
            tasks_completed: completed,
            tasks_failed: failed,
            tasks_in_system: submitted - completed - failed,
            atct_s: metrics::atct(&done),
            tx_energy_j: self.trace.total_energy_j(),
            control_packets: self.control_packets,
            data_packets: self.data_packets,
            migrations: self.migrations,
            reallocations: self.reallocations,
            mean_completion_s: mean,
            p50_completion_s: metrics::percentile(&done, 50.0),
            p95_completion_s: metrics::percentile(&done, 95.0),
            error: String::new(),
        };
        RunOutput {
            metrics,
            trace: self.trace,
            tasks: self.tasks,
            completion_s: self.completion,
        }
    }
}
