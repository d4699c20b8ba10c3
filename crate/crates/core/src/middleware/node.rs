use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Hosts the task queue and the allocation service.
    Smn,
    /// Executes tasks.
    Spn,
    /// Submits tasks and receives results.
    Scn,
}

/// Static capabilities of one cloud member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: Role,
    pub cpi: f64,
    pub cct_s: f64,
    /// Scheduler overhead for placing or removing a task on the CPU.
    pub phi_s: f64,
    pub p_static_w: f64,
    pub active_gates: f64,
    pub capacitance_f: f64,
    pub voltage_v: f64,
    pub frequency_hz: f64,
    /// Radio energy per transmitted packet used in allocation estimates.
    pub beta_j: f64,
    pub memory_bytes: u64,
    pub battery_j: f64,
}

impl NodeSpec {
    /// CPU power draw: static plus `A * C * V^2 * F`.
    pub fn alpha_w(&self) -> f64 {
        super::cost::cpu_power(
            self.p_static_w,
            self.active_gates,
            self.capacitance_f,
            self.voltage_v,
            self.frequency_hz,
        )
    }

    /// Instructions per second.
    pub fn speed(&self) -> f64 {
        1.0 / (self.cpi * self.cct_s)
    }
}
