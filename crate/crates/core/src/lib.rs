//! Discrete-event simulator of a mobile ad hoc cloud with power-controlled
//! routing, link-lifetime prediction and cost-driven task placement.

pub mod baselines;
pub mod check;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod middleware;
pub mod mobility;
pub mod netlayer;
pub mod radio;
pub mod sweep;
pub mod trace;
pub mod world;

pub type NodeId = usize;
