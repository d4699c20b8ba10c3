//! Middleware layer: resource pool, task queue, control messages, cost
//! estimates, allocation and migration triggers.

pub mod allocation;
pub mod cost;
pub mod messages;
pub mod migration;
pub mod node;
pub mod pool;
pub mod task;

pub use allocation::{allocate, allocate_relaxed, Candidate, Estimate, PacketFormat, TaskDemand};
pub use messages::{ControlMessage, DynamicInfo, MemberInfo, MigrationReason, PacketKind};
pub use migration::{check_migration_triggers, MigrationConfig, MonitorInput};
pub use node::{NodeSpec, Role};
pub use pool::{Outgoing, ProtocolTimers, ResourcePool, UpdateTracker};
pub use task::{transition_allowed, TaskId, TaskQueue, TaskRecord, TaskSpec, TaskStatus};
