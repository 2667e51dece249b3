//! Launch files, package manifests and graph composition.
//!
//! A launch file is TOML:
//!
//! ```toml
//! package_paths = ["../packages_extra"]   # optional manifest directories
//!
//! [[node]]
//! package = "vision"          # package name from a manifest
//! node = "video_stream"       # node id inside that package
//! name = "camera"             # optional graph name, defaults to `node`
//! enabled = true              # optional, default true
//! params = { fps = 15 }       # scalars only
//! remap = { image_raw = "/camera/image" }
//! ```
//!
//! A package manifest is TOML too:
//!
//! ```toml
//! name = "face_tools"
//!
//! [[node]]
//! name = "face_counter"
//! tier = "external"
//! entry = "exec"              # or "builtin:<id>"
//! command = ["python3", "face_counter.py"]
//! ```
//!
//! `exec` nodes run as child processes in the manifest directory and
//! attach over TCP. They receive `SOCIALBOT_BUS`, `SOCIALBOT_NODE`,
//! `SOCIALBOT_TIER`, and JSON-encoded `SOCIALBOT_PARAMS` and
//! `SOCIALBOT_REMAP`.

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

use crate::bus::tcp::{BusServer, BUS_ENV};
use crate::bus::{resolve_name, Bus, BusError, GraphInfo, Node, ParamError, Params, Tier};

pub use config::{LaunchConfig, NodeEntry};
pub use manifest::{Entry, NodeSpec, Package, PackageRegistry};

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.as_ref().map_or("<launch>".to_string(), |p| p.display().to_string()))]
    Parse { path: Option<PathBuf>, message: String },
    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("unknown package {0:?}")]
    UnknownPackage(String),
    #[error("package {package:?} has no node {node:?}")]
    UnknownNode { package: String, node: String },
    #[error("package {0:?} is declared twice")]
    DuplicatePackage(String),
    #[error("no builtin factory {0:?}")]
    UnknownBuiltin(String),
    #[error("node entry {entry}: {source}")]
    BadParam { entry: String, source: ParamError },
    #[error("node entry {entry}: bad remap {from:?} -> {to:?}")]
    BadRemap { entry: String, from: String, to: String },
    #[error("node name {0} appears twice in the launch file")]
    DuplicateNode(String),
    #[error("node entry {entry}: {source}")]
    Bus { entry: String, source: BusError },
    #[error("node entry {entry}: {message}")]
    Start { entry: String, message: String },
}

/// A started node. Dropping it stops the node.
pub trait RunningNode: Send {
    fn name(&self) -> &str;
    /// Stops worker threads and releases bus endpoints.
    fn stop(self: Box<Self>);
}

/// Validates parameters without side effects.
pub type ValidateFn = fn(&Params) -> Result<(), ParamError>;
/// Starts a builtin on an already registered node.
pub type StartFn = fn(Node) -> Result<Box<dyn RunningNode>, LaunchError>;

#[derive(Clone, Copy)]
pub struct Builtin {
    pub validate: ValidateFn,
    pub start: StartFn,
}

/// Builtin node factories by id.
#[derive(Clone, Default)]
pub struct NodeFactories {
    map: BTreeMap<String, Builtin>,
}

impl fmt::Debug for NodeFactories {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.map.keys()).finish()
    }
}

impl NodeFactories {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every builtin shipped with the crate.
    pub fn standard() -> Self {
        let mut f = Self::new();
        crate::perception::nodes::register(&mut f);
        crate::audio::nodes::register(&mut f);
        crate::behavior::register(&mut f);
        crate::bridge::register(&mut f);
        f
    }

    pub fn insert(&mut self, id: &str, validate: ValidateFn, start: StartFn) {
        self.map.insert(id.to_string(), Builtin { validate, start });
    }

    pub fn get(&self, id: &str) -> Option<Builtin> {
        self.map.get(id).copied()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.map.keys().map(String::as_str).collect()
    }
}

/// Generic running node: owns endpoints and optional worker threads.
pub struct NodeTask {
    node: Node,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    resources: Vec<Box<dyn Send>>,
}

impl NodeTask {
    pub fn new(node: Node) -> Self {
        NodeTask { node, stop: Arc::new(AtomicBool::new(false)), workers: Vec::new(), resources: Vec::new() }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Flag observed by worker loops.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Keeps a publisher, subscription or service alive with the node.
    pub fn hold(mut self, resource: impl Send + 'static) -> Self {
        self.resources.push(Box::new(resource));
        self
    }

    pub fn spawn(mut self, name: &str, f: impl FnOnce(Arc<AtomicBool>) + Send + 'static) -> Self {
        let stop = self.stop.clone();
        let handle = thread::Builder::new()
            .name(format!("{}:{name}", self.node.name()))
            .spawn(move || f(stop))
            .expect("spawn node worker");
        self.workers.push(handle);
        self
    }

    pub fn boxed(self) -> Box<dyn RunningNode> {
        Box::new(self)
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        self.resources.clear();
        self.node.shutdown();
    }
}

impl RunningNode for NodeTask {
    fn name(&self) -> &str {
        self.node.name()
    }

    fn stop(mut self: Box<Self>) {
        self.halt();
    }
}

impl Drop for NodeTask {
    fn drop(&mut self) {
        self.halt();
    }
}

/// Sleeps in short steps; returns false once `stop` is set.
pub fn sleep_unless(stop: &AtomicBool, d: Duration) -> bool {
    let end = Instant::now() + d;
    loop {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        let now = Instant::now();
        if now >= end {
            return true;
        }
        thread::sleep((end - now).min(Duration::from_millis(20)));
    }
}

struct ExecNode {
    name: String,
    child: Child,
}

impl RunningNode for ExecNode {
    fn name(&self) -> &str {
        &self.name
    }

    fn stop(mut self: Box<Self>) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ExecNode {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Settings for [`launch`].
pub struct Launcher {
    pub packages: PackageRegistry,
    pub factories: NodeFactories,
    /// Time allowed for an exec node to attach.
    pub attach_timeout: Duration,
}

impl Default for Launcher {
    fn default() -> Self {
        Launcher {
            packages: PackageRegistry::builtin(),
            factories: NodeFactories::standard(),
            attach_timeout: Duration::from_secs(15),
        }
    }
}

/// The nodes started from one launch config.
pub struct LaunchedGraph {
    bus: Bus,
    server: Option<BusServer>,
    nodes: Vec<Box<dyn RunningNode>>,
}

impl fmt::Debug for LaunchedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LaunchedGraph").field("nodes", &self.node_names()).finish()
    }
}

impl LaunchedGraph {
    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn node_names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name()).collect()
    }

    pub fn graph_info(&self) -> GraphInfo {
        self.bus.graph_info()
    }

    /// Address of the TCP server started for exec nodes, if any.
    pub fn server_addr(&self) -> Option<std::net::SocketAddr> {
        self.server.as_ref().map(BusServer::local_addr)
    }

    /// Stops nodes in reverse start order.
    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        while let Some(n) = self.nodes.pop() {
            n.stop();
        }
        self.server = None;
    }
}

impl Drop for LaunchedGraph {
    fn drop(&mut self) {
        self.halt();
    }
}

impl Launcher {
    pub fn new(packages: PackageRegistry, factories: NodeFactories) -> Self {
        Launcher { packages, factories, attach_timeout: Duration::from_secs(15) }
    }

    /// Adds the manifest directories named by the config.
    pub fn with_config_paths(mut self, cfg: &LaunchConfig) -> Result<Self, LaunchError> {
        for p in &cfg.package_paths {
            self.packages.load_dir(p)?;
        }
        Ok(self)
    }

    /// Checks every enabled entry without touching the bus.
    pub fn validate(&self, cfg: &LaunchConfig) -> Result<(), LaunchError> {
        let mut names = BTreeSet::new();
        for e in cfg.enabled() {
            let spec = self.packages.resolve(&e.package, &e.node)?;
            let name = resolve_name(e.graph_name()).map_err(|source| LaunchError::Bus { entry: e.label(), source })?;
            if !names.insert(name.clone()) {
                return Err(LaunchError::DuplicateNode(name));
            }
            for (from, to) in &e.remap {
                if resolve_name(from).is_err() || resolve_name(to).is_err() {
                    return Err(LaunchError::BadRemap { entry: e.label(), from: from.clone(), to: to.clone() });
                }
            }
            if let Entry::Builtin(id) = &spec.entry {
                let b = self.factories.get(id).ok_or_else(|| LaunchError::UnknownBuiltin(id.clone()))?;
                (b.validate)(&e.params).map_err(|source| LaunchError::BadParam { entry: e.label(), source })?;
            }
        }
        Ok(())
    }

    /// Starts exactly the enabled entries, in file order. On failure every
    /// node started so far is stopped again.
    pub fn launch(&self, bus: &Bus, cfg: &LaunchConfig) -> Result<LaunchedGraph, LaunchError> {
        self.validate(cfg)?;
        let mut graph = LaunchedGraph { bus: bus.clone(), server: None, nodes: Vec::new() };
        for e in cfg.enabled() {
            let spec = self.packages.resolve(&e.package, &e.node)?;
            let running = match &spec.entry {
                Entry::Builtin(id) => {
                    let b = self.factories.get(id).ok_or_else(|| LaunchError::UnknownBuiltin(id.clone()))?;
                    let node = bus
                        .create_node_with(e.graph_name(), spec.tier, e.params.clone(), e.remap.clone())
                        .map_err(|source| LaunchError::Bus { entry: e.label(), source })?;
                    (b.start)(node)?
                }
                Entry::Exec { command, dir } => {
                    if graph.server.is_none() {
                        let server = BusServer::bind(bus.clone(), "127.0.0.1:0")
                            .map_err(|err| LaunchError::Start { entry: e.label(), message: err.to_string() })?;
                        graph.server = Some(server);
                    }
                    let addr = graph.server_addr().expect("server started");
                    self.spawn_exec(bus, e, spec.tier, command, dir, addr)?
                }
            };
            graph.nodes.push(running);
        }
        Ok(graph)
    }

    fn spawn_exec(
        &self,
        bus: &Bus,
        e: &NodeEntry,
        tier: Tier,
        command: &[String],
        dir: &std::path::Path,
        addr: std::net::SocketAddr,
    ) -> Result<Box<dyn RunningNode>, LaunchError> {
        let name = resolve_name(e.graph_name()).map_err(|source| LaunchError::Bus { entry: e.label(), source })?;
        let start_err = |message: String| LaunchError::Start { entry: e.label(), message };
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .current_dir(dir)
            .env(BUS_ENV, addr.to_string())
            .env("SOCIALBOT_NODE", &name)
            .env("SOCIALBOT_TIER", tier.as_str())
            .env("SOCIALBOT_PARAMS", serde_json::to_string(&e.params).expect("params serialize"))
            .env("SOCIALBOT_REMAP", serde_json::to_string(&e.remap).expect("remap serializes"))
            .stdin(Stdio::null())
            .spawn()
            .map_err(|err| start_err(format!("cannot run {:?}: {err}", command[0])))?;
        let deadline = Instant::now() + self.attach_timeout;
        loop {
            if bus.graph_info().node(&name).is_some() {
                return Ok(Box::new(ExecNode { name, child }));
            }
            if let Ok(Some(status)) = child.try_wait() {
                return Err(start_err(format!("process exited with {status} before attaching")));
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(start_err("process did not attach in time".into()));
            }
            thread::sleep(Duration::from_millis(10));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{ParamValue, ParamsExt};

    fn validate_ticks(p: &Params) -> Result<(), ParamError> {
        p.u64_or("ticks", 1).map(|_| ())
    }

    fn start_ticker(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
        let publisher = node
            .advertise("ticks", "std/String")
            .map_err(|source| LaunchError::Bus { entry: node.name().into(), source })?;
        Ok(NodeTask::new(node).hold(publisher).boxed())
    }

    fn launcher() -> Launcher {
        let mut packages = PackageRegistry::new();
        let text = "name='t'\n[[node]]\nname='ticker'\ntier='basic'\nentry='builtin:ticker'\n";
        packages.add(Package::parse(text, std::path::Path::new("."), None).unwrap()).unwrap();
        let mut factories = NodeFactories::new();
        factories.insert("ticker", validate_ticks, start_ticker);
        Launcher::new(packages, factories)
    }

    #[test]
    fn launch_and_stop() {
        let bus = Bus::with_std();
        let mut cfg = LaunchConfig::default();
        cfg.nodes.push(NodeEntry::new("t", "ticker"));
        let mut second = NodeEntry::new("t", "ticker");
        second.name = Some("ticker2".into());
        second.remap.insert("ticks".into(), "/other".into());
        cfg.nodes.push(second);
        let g = launcher().launch(&bus, &cfg).unwrap();
        let info = g.graph_info();
        assert_eq!(info.node_names(), ["/ticker", "/ticker2"]);
        assert_eq!(info.topic_names(), ["/other", "/ticks"]);
        g.stop();
        assert!(bus.graph_info().is_empty());
    }

    #[test]
    fn errors_name_the_entry() {
        let bus = Bus::with_std();
        let l = launcher();
        let mut cfg = LaunchConfig::default();
        cfg.nodes.push(NodeEntry::new("t", "ticker"));
        let mut bad = NodeEntry::new("t", "ticker");
        bad.name = Some("b".into());
        bad.params.insert("ticks".into(), ParamValue::Str("many".into()));
        cfg.nodes.push(bad);
        match l.launch(&bus, &cfg) {
            Err(LaunchError::BadParam { entry, source }) => {
                assert_eq!(entry, "t/ticker");
                assert_eq!(source.key, "ticks");
            }
            other => panic!("{other:?}"),
        }
        // Validation failed before anything started.
        assert!(bus.graph_info().is_empty());

        let mut cfg = LaunchConfig::default();
        cfg.nodes.push(NodeEntry::new("ghost", "x"));
        assert!(matches!(l.launch(&bus, &cfg), Err(LaunchError::UnknownPackage(p)) if p == "ghost"));
        cfg.nodes[0].enabled = false;
        assert!(l.launch(&bus, &cfg).unwrap().graph_info().is_empty());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut cfg = LaunchConfig::default();
        cfg.nodes.push(NodeEntry::new("t", "ticker"));
        cfg.nodes.push(NodeEntry::new("t", "ticker"));
        assert!(matches!(launcher().validate(&cfg), Err(LaunchError::DuplicateNode(_))));
    }
}
