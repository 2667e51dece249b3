//! Node graph, topic pub/sub and request/reply services.
//!
//! Delivery is in-process by default; [`tcp`] carries the same traffic
//! between processes.

mod core;
mod graph;
mod params;
mod queue;
pub mod tcp;

pub use self::core::{
    resolve_name, Bus, BusError, Message, Node, Publisher, Receiver, ServiceFn, ServiceHandle,
    Subscription, SubscriptionStats, Tier, DEFAULT_SERVICE_TIMEOUT,
};
pub use graph::{GraphDiff, GraphInfo, GraphShape, NodeInfo, ServiceInfo, TopicInfo};
pub use params::{ParamError, ParamValue, Params, ParamsExt};
