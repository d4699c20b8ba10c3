//! Scenario configuration, built-in presets and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::middleware::{MigrationConfig, ProtocolTimers};
use crate::mobility::Region;
use crate::netlayer::LifetimeBounds;
use crate::radio::{Position, RadioConfig, RadioError};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Proposed,
    Hta,
    Minhop,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Hta, Scheme::Minhop];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Hta => "hta",
            Scheme::Minhop => "minhop",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "proposed" => Some(Scheme::Proposed),
            "hta" => Some(Scheme::Hta),
            "minhop" => Some(Scheme::Minhop),
            _ => None,
        }
    }

    pub fn is_baseline(self) -> bool {
        self != Scheme::Proposed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    Multi,
    MaxOnly,
}

impl PowerMode {
    pub fn label(self) -> &'static str {
        match self {
            PowerMode::Multi => "multi",
            PowerMode::MaxOnly => "max-only",
        }
    }

    pub fn parse(s: &str) -> Option<PowerMode> {
        match s {
            "multi" => Some(PowerMode::Multi),
            "max-only" => Some(PowerMode::MaxOnly),
            _ => None,
        }
    }
}

/// Hardware profile shared by several nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoteType {
    pub name: String,
    pub cpi: f64,
    pub cct_s: f64,
    pub phi_s: f64,
    pub p_static_w: f64,
    pub active_gates: f64,
    pub capacitance_f: f64,
    pub voltage_v: f64,
    pub frequency_hz: f64,
    pub beta_j: f64,
    pub memory_bytes: u64,
    pub battery_j: f64,
}

impl MoteType {
    fn tier(name: &str, cpi: f64, clock_hz: f64, gates: f64) -> Self {
        Self {
            name: name.to_string(),
            cpi,
            cct_s: 1.0 / clock_hz,
            phi_s: 0.005,
            p_static_w: 0.003,
            active_gates: gates,
            capacitance_f: 1e-12,
            voltage_v: 3.0,
            frequency_hz: clock_hz,
            beta_j: 1e-3,
            memory_bytes: 512 * 1024,
            battery_j: 10_000.0,
        }
    }

    /// Three default hardware tiers, fastest first.
    pub fn default_tiers() -> Vec<MoteType> {
        vec![
            MoteType::tier("fast", 1.0, 16e6, 2e3),
            MoteType::tier("medium", 2.0, 16e6, 1.5e3),
            MoteType::tier("slow", 4.0, 8e6, 1e3),
        ]
    }
}

/// Per-node replacement of selected hardware fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeOverride {
    pub node: NodeId,
    pub cpi: Option<f64>,
    pub cct_s: Option<f64>,
    pub phi_s: Option<f64>,
    pub battery_j: Option<f64>,
    pub memory_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub smn: NodeId,
    pub scns: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupConfig {
    pub members: Vec<NodeId>,
    /// Initial centre; drawn inside `region` when absent.
    pub center: Option<Position>,
    /// Members start uniformly inside this radius unless `offsets` is given.
    pub spread_m: f64,
    pub offsets: Option<Vec<Position>>,
    pub speed_mps: f64,
    pub jitter_radius_m: f64,
    pub pause_s: f64,
    /// Waypoint region; the whole area when absent.
    pub region: Option<Region>,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            members: Vec::new(),
            center: None,
            spread_m: 40.0,
            offsets: None,
            speed_mps: 0.0,
            jitter_radius_m: 0.0,
            pause_s: 0.0,
            region: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub b_channel_bps: f64,
    pub packet_bytes: u32,
    pub header_bytes: u32,
    /// Per-hop processing delay added to control message latency.
    pub hop_latency_s: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            b_channel_bps: 1e6,
            packet_bytes: 512,
            header_bytes: 32,
            hop_latency_s: 0.001,
        }
    }
}

impl ChannelConfig {
    pub fn pkt_bits(&self) -> u64 {
        u64::from(self.packet_bytes) * 8
    }

    pub fn header_bits(&self) -> u64 {
        u64::from(self.header_bytes) * 8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hello_period_s: f64,
    pub discovery_period_s: f64,
    pub routes_per_dest: usize,
    pub max_hops: usize,
    /// Weight of the newest transfer in the dropped/lost packet average.
    pub loss_ewma_weight: f64,
    /// Hop limit of the members-message flood.
    pub mim_ttl_hops: usize,
    /// Per-hop transmission attempts for task-control messages.
    pub reliable_attempts: u32,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hello_period_s: 2.0,
            discovery_period_s: 30.0,
            routes_per_dest: 3,
            max_hops: 4,
            loss_ewma_weight: 0.2,
            mim_ttl_hops: 1,
            reliable_attempts: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationConfig {
    /// Period of the allocation retry and failure-detection tick.
    pub retry_period_s: f64,
    /// Tasks deferred longer than this are placed without the lifetime test.
    pub relax_after_s: f64,
    /// Placements per task before it is failed permanently.
    pub max_attempts: u32,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            retry_period_s: 1.0,
            relax_after_s: 30.0,
            max_attempts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub tasks: usize,
    pub arrival_start_s: f64,
    pub arrival_window_s: f64,
    pub task_types: u32,
    pub instructions_min: u64,
    pub instructions_max: u64,
    pub input_bits_min: u64,
    pub input_bits_max: u64,
    pub output_fraction: f64,
    pub code_bits: u64,
    /// Extra bits carried with a migrating task for its execution state.
    pub state_bits: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            tasks: 40,
            arrival_start_s: 60.0,
            arrival_window_s: 2400.0,
            task_types: 3,
            instructions_min: 100_000_000,
            instructions_max: 1_000_000_000,
            input_bits_min: 500_000,
            input_bits_max: 4_000_000,
            output_fraction: 0.1,
            code_bits: 100_000,
            state_bits: 8_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub area_m: f64,
    pub sim_time_s: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub power_mode: PowerMode,
    pub node_count: usize,
    pub roles: Roles,
    pub mote_types: Vec<MoteType>,
    /// Mote type index per node; empty assigns types round-robin.
    pub node_mote_types: Vec<usize>,
    pub node_overrides: Vec<NodeOverride>,
    pub groups: Vec<GroupConfig>,
    pub mobility_step_s: f64,
    pub position_sample_s: f64,
    pub radio: RadioConfig,
    pub channel: ChannelConfig,
    pub network: NetworkConfig,
    pub timers: ProtocolTimers,
    pub lifetime_bounds: LifetimeBounds,
    pub migration: MigrationConfig,
    pub allocation: AllocationConfig,
    pub workload: WorkloadConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        preset_s1()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("radio: {0}")]
    Radio(#[from] RadioError),
    #[error("timers: {0}")]
    Timers(#[from] crate::middleware::pool::TimerError),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("node id {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {0} belongs to more than one mobility group")]
    DuplicateMember(NodeId),
    #[error("node {0} is not in any mobility group")]
    Ungrouped(NodeId),
    #[error("there must be at least one consumer and one provider node")]
    MissingRole,
    #[error("the master node cannot also be a consumer")]
    MasterIsConsumer,
    #[error("node {node} refers to mote type {index}, only {count} defined")]
    UnknownMoteType { node: NodeId, index: usize, count: usize },
    #[error("mote type list must not be empty")]
    NoMoteTypes,
    #[error("mote type {0} has a non-positive CPI or clock cycle time")]
    BadMoteType(String),
    #[error("group has {offsets} offsets for {members} members")]
    OffsetCount { members: usize, offsets: usize },
    #[error("packet size must exceed header size")]
    PacketTooSmall,
    #[error("interval bounds must satisfy 0 < short < medium")]
    BadIntervals,
    #[error("workload: {0}")]
    Workload(&'static str),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.radio.validate()?;
        self.timers.validate()?;
        for (name, v) in [
            ("area_m", self.area_m),
            ("sim_time_s", self.sim_time_s),
            ("mobility_step_s", self.mobility_step_s),
            ("position_sample_s", self.position_sample_s),
            ("channel.b_channel_bps", self.channel.b_channel_bps),
            ("network.hello_period_s", self.network.hello_period_s),
            ("network.discovery_period_s", self.network.discovery_period_s),
            ("allocation.retry_period_s", self.allocation.retry_period_s),
            ("migration.check_period_s", self.migration.check_period_s),
            ("migration.utilization_window_s", self.migration.utilization_window_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.node_count == 0 {
            return Err(ConfigError::NotPositive("node_count"));
        }
        if self.network.max_hops == 0 || self.network.routes_per_dest == 0 {
            return Err(ConfigError::NotPositive("network.max_hops / routes_per_dest"));
        }
        if self.network.reliable_attempts == 0 || self.allocation.max_attempts == 0 {
            return Err(ConfigError::NotPositive("attempt limits"));
        }
        if !(0.0..=1.0).contains(&self.network.loss_ewma_weight) {
            return Err(ConfigError::NotPositive("network.loss_ewma_weight"));
        }
        if self.channel.packet_bytes <= self.channel.header_bytes {
            return Err(ConfigError::PacketTooSmall);
        }
        let b = &self.lifetime_bounds;
        if !(b.short_max_s > 0.0 && b.medium_max_s > b.short_max_s) {
            return Err(ConfigError::BadIntervals);
        }
        let n = self.node_count;
        let check = |id: NodeId| {
            if id < n {
                Ok(())
            } else {
                Err(ConfigError::UnknownNode(id))
            }
        };
        check(self.roles.smn)?;
        for &c in &self.roles.scns {
            check(c)?;
            if c == self.roles.smn {
                return Err(ConfigError::MasterIsConsumer);
            }
        }
        let providers = (0..n)
            .filter(|&i| i != self.roles.smn && !self.roles.scns.contains(&i))
            .count();
        if self.roles.scns.is_empty() || providers == 0 {
            return Err(ConfigError::MissingRole);
        }
        if self.mote_types.is_empty() {
            return Err(ConfigError::NoMoteTypes);
        }
        for m in &self.mote_types {
            if !(m.cpi > 0.0 && m.cct_s > 0.0 && m.phi_s >= 0.0 && m.battery_j > 0.0) {
                return Err(ConfigError::BadMoteType(m.name.clone()));
            }
        }
        if !self.node_mote_types.is_empty() {
            if self.node_mote_types.len() != n {
                return Err(ConfigError::UnknownNode(self.node_mote_types.len()));
            }
            for (node, &index) in self.node_mote_types.iter().enumerate() {
                if index >= self.mote_types.len() {
                    return Err(ConfigError::UnknownMoteType {
                        node,
                        index,
                        count: self.mote_types.len(),
                    });
                }
            }
        }
        for o in &self.node_overrides {
            check(o.node)?;
        }
        let mut seen = vec![false; n];
        for g in &self.groups {
            for &m in &g.members {
                check(m)?;
                if std::mem::replace(&mut seen[m], true) {
                    return Err(ConfigError::DuplicateMember(m));
                }
            }
            if let Some(off) = &g.offsets {
                if off.len() != g.members.len() {
                    return Err(ConfigError::OffsetCount {
                        members: g.members.len(),
                        offsets: off.len(),
                    });
                }
            }
            if g.speed_mps < 0.0 || g.jitter_radius_m < 0.0 || g.spread_m < 0.0 || g.pause_s < 0.0
            {
                return Err(ConfigError::NotPositive("group speed / jitter / spread / pause"));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ConfigError::Ungrouped(missing));
        }
        let w = &self.workload;
        if w.instructions_min > w.instructions_max || w.input_bits_min > w.input_bits_max {
            return Err(ConfigError::Workload("minimum exceeds maximum"));
        }
        if !(w.output_fraction >= 0.0) || !(w.arrival_start_s >= 0.0) || !(w.arrival_window_s >= 0.0)
        {
            return Err(ConfigError::Workload("negative fraction or time"));
        }
        if w.task_types == 0 {
            return Err(ConfigError::Workload("task_types must be at least 1"));
        }
        Ok(())
    }

    pub fn is_provider(&self, node: NodeId) -> bool {
        node != self.roles.smn && !self.roles.scns.contains(&node)
    }

    pub fn mote_type_of(&self, node: NodeId) -> usize {
        if self.node_mote_types.is_empty() {
            node % self.mote_types.len()
        } else {
            self.node_mote_types[node]
        }
    }

    /// Built-in scenario by name (`s1`..`s4`).
    /// Parses a JSON configuration; absent fields keep their defaults.
    pub fn from_json(text: &str) -> Result<ScenarioConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn preset(name: &str) -> Option<ScenarioConfig> {
        match name {
            "s1" => Some(preset_s1()),
            "s2" => Some(preset_s2()),
            "s3" => Some(preset_s3()),
            "s4" => Some(preset_s4()),
            _ => None,
        }
    }

    pub fn with_run(mut self, scheme: Scheme, power_mode: PowerMode, seed: u64, tasks: usize) -> Self {
        self.scheme = scheme;
        self.power_mode = power_mode;
        self.seed = seed;
        self.workload.tasks = tasks;
        self
    }
}

pub const PRESETS: [&str; 4] = ["s1", "s2", "s3", "s4"];

fn base(name: &str) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        area_m: 1200.0,
        sim_time_s: 3600.0,
        seed: 1,
        scheme: Scheme::Proposed,
        power_mode: PowerMode::Multi,
        node_count: 20,
        roles: Roles {
            smn: 0,
            scns: vec![1, 2, 3],
        },
        mote_types: MoteType::default_tiers(),
        node_mote_types: Vec::new(),
        node_overrides: Vec::new(),
        groups: Vec::new(),
        mobility_step_s: 1.0,
        position_sample_s: 60.0,
        radio: RadioConfig::default(),
        channel: ChannelConfig::default(),
        network: NetworkConfig::default(),
        timers: ProtocolTimers::default(),
        lifetime_bounds: LifetimeBounds::default(),
        migration: MigrationConfig::default(),
        allocation: AllocationConfig::default(),
        workload: WorkloadConfig::default(),
    }
}

/// Four groups of five nodes. Group `g` holds nodes `g, g+4, g+8, g+12, g+16`,
/// so every group mixes roles and hardware tiers.
fn four_groups(speed: f64, jitter: f64, spread: f64, region: Region) -> Vec<GroupConfig> {
    (0..4)
        .map(|g| GroupConfig {
            members: (0..5).map(|k| g + 4 * k).collect(),
            center: None,
            spread_m: spread,
            offsets: None,
            speed_mps: speed,
            jitter_radius_m: jitter,
            pause_s: 0.0,
            region: Some(region),
        })
        .collect()
}

/// Tier per node: consumers and master are medium. The four providers of
/// each group (see [`four_groups`]) are one fast, one medium and two slow.
fn mixed_tiers() -> Vec<usize> {
    (0..20)
        .map(|i| match i {
            0..=3 => 1,
            _ => [0, 1, 2, 2][(i / 4 - 1 + i % 4) % 4],
        })
        .collect()
}

/// Slowly moving groups that mostly stay connected.
pub fn preset_s1() -> ScenarioConfig {
    let mut c = base("s1");
    c.node_mote_types = mixed_tiers();
    c.groups = four_groups(
        1.0,
        10.0,
        50.0,
        Region {
            x0: 450.0,
            y0: 450.0,
            x1: 750.0,
            y1: 750.0,
        },
    );
    c
}

/// Fast, independently moving groups with frequent link breaks between them.
pub fn preset_s2() -> ScenarioConfig {
    let mut c = base("s2");
    c.node_mote_types = mixed_tiers();
    c.groups = four_groups(
        12.0,
        20.0,
        50.0,
        Region {
            x0: 250.0,
            y0: 250.0,
            x1: 950.0,
            y1: 950.0,
        },
    );
    c
}

/// Static 5 x 4 grid with 150 m spacing: every neighbour needs maximum power.
pub fn preset_s3() -> ScenarioConfig {
    let mut c = base("s3");
    c.node_mote_types = mixed_tiers();
    let spacing = 150.0;
    let offsets = (0..20)
        .map(|i| {
            Position::new(
                (i % 5) as f64 * spacing - 2.0 * spacing,
                (i / 5) as f64 * spacing - 1.5 * spacing,
            )
        })
        .collect();
    c.groups = vec![GroupConfig {
        members: (0..20).collect(),
        center: Some(Position::new(600.0, 600.0)),
        spread_m: 0.0,
        offsets: Some(offsets),
        ..GroupConfig::default()
    }];
    c
}

/// Static clusters of 8, 5, 4 and 3 identical devices. Members of a
/// cluster are within the lowest power range of each other; clusters are
/// reachable from each other only at higher power.
pub fn preset_s4() -> ScenarioConfig {
    let mut c = base("s4");
    c.node_mote_types = vec![0; 20];
    let clusters: [(Vec<NodeId>, Position); 4] = [
        (vec![0, 1, 4, 5, 6, 7, 8, 9], Position::new(450.0, 600.0)),
        (vec![2, 10, 11, 12, 13], Position::new(600.0, 600.0)),
        (vec![3, 14, 15, 16], Position::new(600.0, 750.0)),
        (vec![17, 18, 19], Position::new(450.0, 750.0)),
    ];
    c.groups = clusters
        .into_iter()
        .map(|(members, center)| GroupConfig {
            members,
            center: Some(center),
            spread_m: 25.0,
            ..GroupConfig::default()
        })
        .collect();
    c
}
