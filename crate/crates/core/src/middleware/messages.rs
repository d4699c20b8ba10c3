//! Control messages exchanged by the middleware and their on-wire sizes.

use serde::{Deserialize, Serialize};

use super::task::{TaskId, TaskStatus};
use crate::NodeId;

/// Field widths in bytes.
const ID: u32 = 2;
const REAL: u32 = 4;
const COUNTER: u32 = 4;
const STATUS: u32 = 1;

/// Dynamic state advertised by information-update messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicInfo {
    pub queue_wait_s: f64,
    pub memory_bytes: u64,
    pub battery_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberInfo {
    pub member: NodeId,
    pub cpi: f64,
    pub cct_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationReason {
    LowBattery,
    ShortRouteLifetime,
    Overutilized,
    Underutilized,
    BetterNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlMessage {
    Nim {
        node: NodeId,
        cpi: f64,
        cct_s: f64,
        broadcast_id: u32,
    },
    Nirm {
        src: NodeId,
        dst: NodeId,
    },
    Nium {
        node: NodeId,
        info: DynamicInfo,
        dst: Option<NodeId>,
    },
    Mim {
        node: NodeId,
        members: Vec<MemberInfo>,
        broadcast_id: u32,
    },
    Mdirm {
        src: NodeId,
        members: Vec<NodeId>,
        dst: NodeId,
    },
    Mium {
        src: NodeId,
        member: NodeId,
        info: DynamicInfo,
        dst: Option<NodeId>,
    },
    Tim {
        node: NodeId,
        tasks: Vec<(TaskId, TaskStatus)>,
        dst: NodeId,
    },
    /// Consumer hands a task description to the master.
    Submit { task: TaskId, consumer: NodeId },
    /// Master tells a dispatcher where to send a task.
    Assign {
        task: TaskId,
        attempt: u32,
        provider: NodeId,
    },
    /// Dispatcher could not deliver code and input.
    DispatchFailed { task: TaskId, attempt: u32 },
    /// Consumer received the result.
    Result { task: TaskId, provider: NodeId },
    MigrationRequest {
        task: TaskId,
        src: NodeId,
        reason: MigrationReason,
        remaining_instructions: u64,
    },
    MigrationDecision {
        task: TaskId,
        target: Option<NodeId>,
    },
    /// The source kept the task after a decision it could not carry out.
    /// `failed` names the target whose image transfer broke.
    MigrationAborted {
        task: TaskId,
        src: NodeId,
        failed: Option<NodeId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Hello,
    DiscoveryRequest,
    DiscoveryReply,
    Nim,
    Nirm,
    Nium,
    Mim,
    Mdirm,
    Mium,
    Tim,
    Submit,
    Assign,
    DispatchFailed,
    Result,
    MigrationRequest,
    MigrationDecision,
    MigrationAborted,
    Data,
}

impl PacketKind {
    pub fn label(self) -> &'static str {
        match self {
            PacketKind::Hello => "hello",
            PacketKind::DiscoveryRequest => "disc_req",
            PacketKind::DiscoveryReply => "disc_rep",
            PacketKind::Nim => "nim",
            PacketKind::Nirm => "nirm",
            PacketKind::Nium => "nium",
            PacketKind::Mim => "mim",
            PacketKind::Mdirm => "mdirm",
            PacketKind::Mium => "mium",
            PacketKind::Tim => "tim",
            PacketKind::Submit => "submit",
            PacketKind::Assign => "assign",
            PacketKind::DispatchFailed => "dispatch_failed",
            PacketKind::Result => "result",
            PacketKind::MigrationRequest => "migration_request",
            PacketKind::MigrationDecision => "migration_decision",
            PacketKind::MigrationAborted => "migration_aborted",
            PacketKind::Data => "data",
        }
    }

    pub fn is_control(self) -> bool {
        self != PacketKind::Data
    }
}

/// Payload sizes of the network-layer packets that are not middleware messages.
pub const HELLO_PAYLOAD_BYTES: u32 = ID + COUNTER;
pub const DISCOVERY_REQUEST_PAYLOAD_BYTES: u32 = ID + REAL + COUNTER;
pub const DISCOVERY_REPLY_PAYLOAD_BYTES: u32 = 2 * ID + REAL + STATUS;

const DYNAMIC: u32 = 3 * REAL;

impl ControlMessage {
    pub fn kind(&self) -> PacketKind {
        match self {
            ControlMessage::Nim { .. } => PacketKind::Nim,
            ControlMessage::Nirm { .. } => PacketKind::Nirm,
            ControlMessage::Nium { .. } => PacketKind::Nium,
            ControlMessage::Mim { .. } => PacketKind::Mim,
            ControlMessage::Mdirm { .. } => PacketKind::Mdirm,
            ControlMessage::Mium { .. } => PacketKind::Mium,
            ControlMessage::Tim { .. } => PacketKind::Tim,
            ControlMessage::Submit { .. } => PacketKind::Submit,
            ControlMessage::Assign { .. } => PacketKind::Assign,
            ControlMessage::DispatchFailed { .. } => PacketKind::DispatchFailed,
            ControlMessage::Result { .. } => PacketKind::Result,
            ControlMessage::MigrationRequest { .. } => PacketKind::MigrationRequest,
            ControlMessage::MigrationDecision { .. } => PacketKind::MigrationDecision,
            ControlMessage::MigrationAborted { .. } => PacketKind::MigrationAborted,
        }
    }

    /// Payload bytes from the field layout, excluding the packet header.
    pub fn payload_bytes(&self) -> u32 {
        match self {
            ControlMessage::Nim { .. } => ID + 2 * REAL + COUNTER,
            ControlMessage::Nirm { .. } => 2 * ID,
            ControlMessage::Nium { .. } => 2 * ID + DYNAMIC,
            ControlMessage::Mim { members, .. } => {
                ID + COUNTER + members.len() as u32 * (ID + 2 * REAL)
            }
            ControlMessage::Mdirm { members, .. } => 2 * ID + members.len() as u32 * ID,
            ControlMessage::Mium { .. } => 3 * ID + DYNAMIC,
            ControlMessage::Tim { tasks, .. } => {
                2 * ID + tasks.len() as u32 * (COUNTER + STATUS)
            }
            ControlMessage::Submit { .. } => COUNTER + ID + 4 * COUNTER,
            ControlMessage::Assign { .. } => 2 * COUNTER + ID,
            ControlMessage::DispatchFailed { .. } => 2 * COUNTER,
            ControlMessage::Result { .. } => COUNTER + ID,
            ControlMessage::MigrationRequest { .. } => 2 * COUNTER + ID + STATUS,
            ControlMessage::MigrationDecision { .. } => COUNTER + ID,
            ControlMessage::MigrationAborted { .. } => COUNTER + 2 * ID,
        }
    }

    /// Total bytes on the air, split into as many packets as needed.
    pub fn wire_bytes(&self, header_bytes: u32, packet_bytes: u32) -> u32 {
        wire_bytes(self.payload_bytes(), header_bytes, packet_bytes)
    }
}

/// Bytes on the air for `payload` bytes when every packet of at most
/// `packet_bytes` carries a `header_bytes` header.
pub fn wire_bytes(payload: u32, header_bytes: u32, packet_bytes: u32) -> u32 {
    let per = packet_bytes - header_bytes;
    let packets = payload.div_ceil(per).max(1);
    payload + packets * header_bytes
}

/// Number of packets a message of `payload` bytes occupies.
pub fn packet_count(payload: u32, header_bytes: u32, packet_bytes: u32) -> u32 {
    payload.div_ceil(packet_bytes - header_bytes).max(1)
}
