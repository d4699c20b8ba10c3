//! Network layer: estimates, lifetime prediction and routing tables.

pub mod estimate;
pub mod lifetime;
pub mod routing;

pub use estimate::{dtt_for_packets, estimate_dtt, link_quality, packets_for, PacketError};
pub use lifetime::{classify_lifetime, Interval, LifetimeBounds, LinkLifetimeModel, Prediction};
pub use routing::{select_route, RouteEntry, RouteError, RouteSelection, RoutingTableSet};
