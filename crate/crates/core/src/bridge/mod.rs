//! WebSocket JSON gateway to the bus.
//!
//! Clients connect to `/ws` (with `?token=...` when a token is
//! configured) and exchange JSON text frames:
//!
//! ```text
//! -> {"op":"subscribe","topic":"/gaze_position/gaze_dir","id":"s1"}
//! <- {"op":"publish","topic":"/gaze_position/gaze_dir","payload":{"data":"left up"}}
//! -> {"op":"unsubscribe","topic":"/gaze_position/gaze_dir"}
//! -> {"op":"publish","topic":"cmd_vel_wheel","payload":{"linear":{"x":0,"y":0,"z":0},"angular":{"x":0,"y":0,"z":0}}}
//! -> {"op":"call_service","service":"gaze_detector","payload":{...},"id":"c1","timeout_ms":1000}
//! <- {"op":"service_response","id":"c1","service":"gaze_detector","result":true,"payload":{...}}
//! <- {"op":"status","id":"c2","level":"error","code":"UnknownService","path":"service","message":"..."}
//! ```
//!
//! `subscribe`, `unsubscribe` and `publish` envelopes that carry an `id`
//! are acknowledged with `{"op":"status","id":..,"level":"info","code":"Ok",..}`.
//! `publish` to a topic nobody has bound yet needs a `"schema"` field.
//! Failed calls produce a `status` error followed by a `service_response`
//! with `"result":false`, so every call with an id gets one response.
//! Status codes: `BadJson`, `BadEnvelope`, `BadOp`, `UnknownTopic`,
//! `UnknownSchema`, `UnknownService`, `SchemaViolation`, `NotSubscribed`,
//! `Timeout`, `ServiceFailed`, `InvalidName`, `BusError`.
//!
//! `GET /api/schemas` lists every registered message schema.

pub mod json;
mod server;

use std::net::SocketAddr;

use crate::bus::{Node, ParamError, Params, ParamsExt};
use crate::launch::{LaunchError, NodeFactories, NodeTask, RunningNode};

pub use json::{json_to_message, message_to_json, JsonError};
pub use server::{BridgeConfig, BridgeStats, WebBridge, DEFAULT_IMAGE_RATE, DEFAULT_OUTBOX};

pub const DEFAULT_PORT: u16 = 9090;

pub fn register(f: &mut NodeFactories) {
    f.insert("web_bridge", |p| config_from_params(p).map(drop), start);
}

/// `host` (127.0.0.1), `port` (9090, 0 picks a free port), `image_rate`
/// (15), `token` (empty means none), `queue` (64), `outbox` (256).
pub fn config_from_params(p: &Params) -> Result<BridgeConfig, ParamError> {
    let bad = |key: &str, reason: String| ParamError { key: key.into(), reason };
    let host = p.str_or("host", "127.0.0.1")?;
    let ip = host.parse().map_err(|_| bad("host", format!("{host:?} is not an IP address")))?;
    let port = p.u64_or("port", DEFAULT_PORT as u64)?;
    let port = u16::try_from(port).map_err(|_| bad("port", format!("{port} is not a port")))?;
    let image_rate = p.f64_or("image_rate", DEFAULT_IMAGE_RATE)?;
    if !(image_rate > 0.0 && image_rate <= 240.0) {
        return Err(bad("image_rate", "must be in (0, 240]".into()));
    }
    let token = p.str_or("token", "")?;
    let queue = p.u64_or("queue", 64)?;
    let outbox = p.u64_or("outbox", DEFAULT_OUTBOX as u64)?;
    if queue == 0 || outbox == 0 {
        return Err(bad(if queue == 0 { "queue" } else { "outbox" }, "must be positive".into()));
    }
    Ok(BridgeConfig {
        addr: SocketAddr::new(ip, port),
        image_rate,
        token: (!token.is_empty()).then(|| token.to_string()),
        queue: queue as usize,
        outbox: outbox as usize,
    })
}

fn start(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let cfg = config_from_params(node.params()).map_err(|source| LaunchError::BadParam { entry: entry.clone(), source })?;
    let addr = cfg.addr;
    let bridge = WebBridge::start(node.bus().clone(), cfg)
        .map_err(|e| LaunchError::Start { entry, message: format!("{addr}: {e}") })?;
    Ok(NodeTask::new(node).hold(bridge).boxed())
}
