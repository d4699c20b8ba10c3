//! Conditions under which a provider asks to move its running task.

use serde::{Deserialize, Serialize};

use super::messages::MigrationReason;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MigrationConfig {
    pub enabled: bool,
    pub check_period_s: f64,
    /// Battery fraction below which a node is about to fail.
    pub battery_fraction: f64,
    /// Local backlog over this window gives the utilization.
    pub utilization_window_s: f64,
    pub utilization_over: f64,
    /// 0 disables the underutilization trigger.
    pub utilization_under: f64,
    /// Relative completion-time gain a newly joined node must offer.
    pub better_node_margin: f64,
    /// Tasks this close to finishing are never moved.
    pub min_remaining_s: f64,
    pub max_per_task: u32,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            check_period_s: 5.0,
            battery_fraction: 0.1,
            utilization_window_s: 60.0,
            utilization_over: 4.0,
            utilization_under: 0.0,
            better_node_margin: 0.3,
            min_remaining_s: 5.0,
            max_per_task: 1,
        }
    }
}

/// Snapshot of a provider and its running task at a monitoring tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorInput {
    pub battery_j: f64,
    pub battery_capacity_j: f64,
    pub remaining_exec_s: f64,
    /// Predicted lifetime of the route back to the consumer, `None` if
    /// there is no route at all.
    pub route_lifetime_s: Option<f64>,
    /// Local work waiting behind and including the running task.
    pub backlog_s: f64,
    /// Completion time the best newly joined node would offer, if one joined.
    pub joined_node_ect_s: Option<f64>,
    pub migrations_so_far: u32,
}

pub fn check_migration_triggers(m: &MonitorInput, cfg: &MigrationConfig) -> Option<MigrationReason> {
    if !cfg.enabled
        || m.migrations_so_far >= cfg.max_per_task
        || m.remaining_exec_s < cfg.min_remaining_s
    {
        return None;
    }
    if m.battery_j < cfg.battery_fraction * m.battery_capacity_j {
        return Some(MigrationReason::LowBattery);
    }
    if m.route_lifetime_s.map_or(true, |l| l < m.remaining_exec_s) {
        return Some(MigrationReason::ShortRouteLifetime);
    }
    let utilization = m.backlog_s / cfg.utilization_window_s;
    if utilization > cfg.utilization_over {
        return Some(MigrationReason::Overutilized);
    }
    if utilization < cfg.utilization_under {
        return Some(MigrationReason::Underutilized);
    }
    if let Some(ect) = m.joined_node_ect_s {
        if ect < (1.0 - cfg.better_node_margin) * m.remaining_exec_s {
            return Some(MigrationReason::BetterNode);
        }
    }
    None
}
