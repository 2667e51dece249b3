//! Behavior profiles, robot definitions and the trigger pipeline behind
//! a REST interface.

pub mod actuator;
pub mod exp;
pub mod rest;
pub mod store;
pub mod types;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use crate::bus::{Node, ParamError, Params, ParamsExt};
use crate::http::HttpServer;
use crate::launch::{LaunchError, NodeFactories, NodeTask, RunningNode};

pub use exp::{ExpError, ExpPipeline, ACK_TOPIC, DEFAULT_ACK_TIMEOUT, FACE_TOPIC, SOUND_TOPIC};
pub use rest::{router, AppState};
pub use store::{AssetInfo, Store, StoreError};
pub use types::{
    ActuatorKind, Affect, BehaviorAck, BehaviorCommand, BehaviorProfile, Component, ExpRequest, ExpStatus,
    RobotDefinition, SensorKind, ValidationError,
};

/// Environment variable holding the REST listen port.
pub const PORT_ENV: &str = "SOCIALBOT_BEHAVIOR_PORT";
pub const DEFAULT_PORT: u16 = 8080;

/// Port from [`PORT_ENV`], or [`DEFAULT_PORT`].
pub fn port_from_env() -> Result<u16, String> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{PORT_ENV}={v:?} is not a port")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Store, trigger pipeline and HTTP server running together.
pub struct BehaviorService {
    state: AppState,
    server: HttpServer,
}

impl BehaviorService {
    pub fn start(
        node: Node,
        data_dir: impl Into<PathBuf>,
        addr: SocketAddr,
        ack_timeout: Duration,
    ) -> Result<BehaviorService, String> {
        let store = Store::open(data_dir).map_err(|e| e.to_string())?;
        let exp = ExpPipeline::new(node, ack_timeout).map_err(|e| e.to_string())?;
        let state = AppState { store: Arc::new(store), exp: Arc::new(exp) };
        let server = HttpServer::start(addr, router(state.clone())).map_err(|e| format!("{addr}: {e}"))?;
        Ok(BehaviorService { state, server })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.server.local_addr()
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.state.store
    }

    pub fn exp(&self) -> &Arc<ExpPipeline> {
        &self.state.exp
    }
}

pub fn register(f: &mut NodeFactories) {
    actuator::register(f);
    f.insert("behavior_service", |p| ServiceConfig::from_params(p).map(drop), start_service);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
    pub ack_timeout: Duration,
}

impl ServiceConfig {
    /// `data_dir` (required), `host` (127.0.0.1), `port` (env or 8080,
    /// 0 picks a free port) and `ack_timeout_ms` (2000).
    pub fn from_params(p: &Params) -> Result<ServiceConfig, ParamError> {
        let bad = |key: &str, reason: String| ParamError { key: key.into(), reason };
        let data_dir = p.str_or("data_dir", "")?;
        if data_dir.is_empty() {
            return Err(bad("data_dir", "required".into()));
        }
        let default_port = port_from_env().map_err(|r| bad("port", r))?;
        let port = p.u64_or("port", default_port as u64)?;
        let port = u16::try_from(port).map_err(|_| bad("port", format!("{port} is not a port")))?;
        let host = p.str_or("host", "127.0.0.1")?;
        let ip = host.parse().map_err(|_| bad("host", format!("{host:?} is not an IP address")))?;
        let ms = p.u64_or("ack_timeout_ms", DEFAULT_ACK_TIMEOUT.as_millis() as u64)?;
        if ms == 0 || ms > 60_000 {
            return Err(bad("ack_timeout_ms", "must be in 1..=60000".into()));
        }
        Ok(ServiceConfig { data_dir: data_dir.into(), addr: SocketAddr::new(ip, port), ack_timeout: Duration::from_millis(ms) })
    }
}

fn start_service(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let cfg = ServiceConfig::from_params(node.params())
        .map_err(|source| LaunchError::BadParam { entry: entry.clone(), source })?;
    let svc = BehaviorService::start(node.clone(), &cfg.data_dir, cfg.addr, cfg.ack_timeout)
        .map_err(|message| LaunchError::Start { entry, message })?;
    Ok(NodeTask::new(node).hold(svc).boxed())
}
