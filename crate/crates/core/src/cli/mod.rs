//! Operator command line.
//!
//! ```text
//! socialbot launch <file> [--bus ADDR] [--duration-s S] [--check]
//! socialbot topic list [--bus ADDR]
//! socialbot topic echo <topic> [--count N] [--bus ADDR]
//! socialbot topic pub <topic> <json> [--schema NAME] [--bus ADDR]
//! socialbot service list [--bus ADDR]
//! socialbot service call <name> <json> [--timeout-ms MS] [--bus ADDR]
//! socialbot record <topic>... -o <out.bag> [--duration-s S] [--count N] [--bus ADDR]
//! socialbot play <in.bag> [--rate R] [--bus ADDR]
//! socialbot serve --data-dir DIR [--port P] [--sim] [--bridge-port P] [--bus ADDR]
//! socialbot store export --data-dir DIR [-o FILE]
//! socialbot store import --data-dir DIR <FILE>
//! ```
//!
//! The bus address defaults to `$SOCIALBOT_BUS`, then `127.0.0.1:11411`.
//! `serve` takes its REST port from `--port`, then `$SOCIALBOT_BEHAVIOR_PORT`,
//! then 8080.
//!
//! Exit codes: `0` success, `2` usage, file, config, JSON or bag errors,
//! `3` unknown package, node or builtin, `4` runtime errors (bus unreachable,
//! unknown topic or service, failed calls, node start failures).

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Once};
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::bag::{BagError, BagReader, BagWriter};
use crate::behavior::{self, BehaviorService, Store, DEFAULT_ACK_TIMEOUT};
use crate::bridge::{json_to_message, message_to_json, BridgeConfig, WebBridge};
use crate::bus::tcp::{BusServer, RemoteError, RemoteNode, BUS_ENV, DEFAULT_ADDR};
use crate::bus::{Bus, Tier};
use crate::codec::{closure_to_text, MessageValue};
use crate::launch::{LaunchConfig, LaunchError, Launcher, NodeFactories, RunningNode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "socialbot", version, about = "Social robot bus tooling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct BusArg {
    /// Bus server address.
    #[arg(long, global = true)]
    bus: Option<String>,
}

impl BusArg {
    fn addr(&self) -> String {
        self.bus
            .clone()
            .or_else(|| std::env::var(BUS_ENV).ok())
            .unwrap_or_else(|| DEFAULT_ADDR.to_string())
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Start the nodes of a launch file and serve the bus.
    Launch {
        config: PathBuf,
        #[arg(long)]
        duration_s: Option<f64>,
        /// Validate only.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        bus: BusArg,
    },
    #[command(subcommand)]
    /// Inspect, print or publish topics.
    Topic(TopicCmd),
    #[command(subcommand)]
    /// List or call services.
    Service(ServiceCmd),
    /// Record topics into a bag file.
    Record {
        #[arg(required = true)]
        topics: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long)]
        count: Option<u64>,
        #[command(flatten)]
        bus: BusArg,
    },
    /// Republish a bag with its original timing.
    Play {
        bag: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[command(flatten)]
        bus: BusArg,
    },
    /// Run the behavior REST service on an in-process bus.
    Serve {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: Option<u16>,
        /// Also run the simulated actuator.
        #[arg(long)]
        sim: bool,
        /// Also run the web bridge on this port.
        #[arg(long)]
        bridge_port: Option<u16>,
        #[arg(long, default_value_t = DEFAULT_ACK_TIMEOUT.as_millis() as u64)]
        ack_timeout_ms: u64,
        #[arg(long)]
        duration_s: Option<f64>,
        #[command(flatten)]
        bus: BusArg,
    },
    #[command(subcommand)]
    /// Dump or load the behavior store.
    Store(StoreCmd),
}

#[derive(Debug, Subcommand)]
enum TopicCmd {
    /// Topics with schema, publishers and subscribers.
    List {
        #[command(flatten)]
        bus: BusArg,
    },
    /// Print messages as they arrive.
    Echo {
        topic: String,
        #[arg(long)]
        count: Option<u64>,
        #[command(flatten)]
        bus: BusArg,
    },
    /// Publish one JSON message.
    Pub {
        topic: String,
        json: String,
        /// Schema for a topic that has no endpoints yet.
        #[arg(long)]
        schema: Option<String>,
        #[command(flatten)]
        bus: BusArg,
    },
}

#[derive(Debug, Subcommand)]
enum ServiceCmd {
    /// Services with request and response schemas.
    List {
        #[command(flatten)]
        bus: BusArg,
    },
    /// Call a service with a JSON request.
    Call {
        name: String,
        json: String,
        #[arg(long, default_value_t = 2000)]
        timeout_ms: u64,
        #[command(flatten)]
        bus: BusArg,
    },
}

#[derive(Debug, Subcommand)]
enum StoreCmd {
    /// Write the store as JSON to stdout.
    Export {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Replace the store contents from a JSON dump.
    Import {
        #[arg(long)]
        data_dir: PathBuf,
        file: PathBuf,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<LaunchError> for Failure {
    fn from(e: LaunchError) -> Self {
        let code = match e {
            LaunchError::UnknownPackage(_) | LaunchError::UnknownNode { .. } | LaunchError::UnknownBuiltin(_) => EXIT_UNKNOWN,
            LaunchError::Bus { .. } | LaunchError::Start { .. } => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<RemoteError> for Failure {
    fn from(e: RemoteError) -> Self {
        let message = match e.code() {
            "Transport" => e.to_string(),
            code if e.to_string().starts_with(code) => e.to_string(),
            code => format!("{code}: {e}"),
        };
        Failure::new(EXIT_RUNTIME, message)
    }
}

impl From<BagError> for Failure {
    fn from(e: BagError) -> Self {
        let code = match e {
            BagError::UnknownSchema(_) | BagError::UnknownTopic(_) => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        let message = match e {
            BagError::Corrupt { .. } => format!("BagCorrupt: {e}"),
            _ => e.to_string(),
        };
        Failure::new(code, message)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_USAGE, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

static STOP: AtomicBool = AtomicBool::new(false);
static HANDLER: Once = Once::new();

fn arm_interrupt() {
    HANDLER.call_once(|| {
        let _ = ctrlc::set_handler(|| STOP.store(true, Ordering::SeqCst));
    });
}

fn interrupted() -> bool {
    STOP.load(Ordering::SeqCst)
}

/// Sleeps until interrupted or until `duration` has elapsed.
fn wait(duration: Option<f64>) {
    let deadline = duration.map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0)));
    while !interrupted() && deadline.is_none_or(|d| Instant::now() < d) {
        thread::sleep(Duration::from_millis(20));
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli.cmd, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Cmd, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Cmd::Launch { config, duration_s, check, bus } => launch(&config, duration_s, check, &bus, out),
        Cmd::Topic(TopicCmd::List { bus }) => topic_list(&bus, out),
        Cmd::Topic(TopicCmd::Echo { topic, count, bus }) => topic_echo(&topic, count, &bus, out),
        Cmd::Topic(TopicCmd::Pub { topic, json, schema, bus }) => topic_pub(&topic, &json, schema.as_deref(), &bus, out),
        Cmd::Service(ServiceCmd::List { bus }) => service_list(&bus, out),
        Cmd::Service(ServiceCmd::Call { name, json, timeout_ms, bus }) => {
            service_call(&name, &json, Duration::from_millis(timeout_ms), &bus, out)
        }
        Cmd::Record { topics, out: path, duration_s, count, bus } => record(&topics, &path, duration_s, count, &bus, out),
        Cmd::Play { bag, rate, bus } => play(&bag, rate, &bus, out),
        Cmd::Serve { data_dir, host, port, sim, bridge_port, ack_timeout_ms, duration_s, bus } => {
            let opts = ServeOptions { data_dir, host, port, sim, bridge_port, ack_timeout_ms, duration_s };
            serve(opts, &bus, out)
        }
        Cmd::Store(StoreCmd::Export { data_dir, out: path }) => store_export(&data_dir, path.as_deref(), out),
        Cmd::Store(StoreCmd::Import { data_dir, file }) => store_import(&data_dir, &file, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) {
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn connect(bus: &BusArg, role: &str) -> Result<RemoteNode, Failure> {
    let addr = bus.addr();
    let name = format!("cli/{role}_{}", std::process::id());
    RemoteNode::connect(addr.as_str(), &name, Tier::External)
        .map_err(|e| Failure::new(EXIT_RUNTIME, format!("bus at {addr} unreachable: {e}")))
}

fn parse_json(text: &str) -> Result<serde_json::Value, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::new(EXIT_USAGE, format!("BadJson: {e}")))
}

fn bind_server(bus: &Bus, arg: &BusArg, out: &mut dyn Write) -> Result<BusServer, Failure> {
    let addr = arg.addr();
    let server = BusServer::bind(bus.clone(), addr.as_str())
        .map_err(|e| Failure::new(EXIT_RUNTIME, format!("cannot serve bus on {addr}: {e}")))?;
    say(out, format_args!("bus listening on {}", server.local_addr()));
    Ok(server)
}

fn launch(path: &Path, duration: Option<f64>, check: bool, bus_arg: &BusArg, out: &mut dyn Write) -> CmdResult {
    let cfg = LaunchConfig::from_file(path)?;
    let launcher = Launcher::default().with_config_paths(&cfg)?;
    launcher.validate(&cfg)?;
    if check {
        for e in cfg.enabled() {
            say(out, format_args!("{} {}/{}", e.graph_name(), e.package, e.node));
        }
        return Ok(());
    }
    arm_interrupt();
    STOP.store(false, Ordering::SeqCst);
    let bus = Bus::with_std();
    let server = bind_server(&bus, bus_arg, out)?;
    let graph = launcher.launch(&bus, &cfg)?;
    say(out, format_args!("started {} nodes: {}", graph.node_names().len(), graph.node_names().join(" ")));
    wait(duration);
    graph.stop();
    drop(server);
    say(out, "stopped");
    Ok(())
}

fn topic_list(bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    let node = connect(bus, "topic")?;
    let own = node.name().to_string();
    for t in node.graph_info()?.topics {
        let pubs: Vec<&String> = t.publishers.iter().filter(|p| **p != own).collect();
        let subs: Vec<&String> = t.subscribers.iter().filter(|p| **p != own).collect();
        if pubs.is_empty() && subs.is_empty() {
            continue;
        }
        say(out, format_args!("{} [{}] pub={} sub={}", t.name, t.schema, pubs.len(), subs.len()));
    }
    node.shutdown();
    Ok(())
}

/// One echo block: `field: <json>` per top-level field, then `----`.
pub fn format_echo(msg: &MessageValue) -> String {
    let json = message_to_json(msg);
    let mut s = String::new();
    if let serde_json::Value::Object(map) = json {
        for (k, v) in map {
            let _ = writeln!(s, "{k}: {v}");
        }
    }
    s.push_str("----\n");
    s
}

fn topic_echo(topic: &str, count: Option<u64>, bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    arm_interrupt();
    STOP.store(false, Ordering::SeqCst);
    let node = connect(bus, "echo")?;
    let rx = node.subscribe_queue(topic, None, 1024)?;
    let mut seen = 0;
    while !interrupted() && count.is_none_or(|c| seen < c) {
        match rx.recv_timeout(Duration::from_millis(100)) {
            Some(msg) => {
                let _ = out.write_all(format_echo(&msg).as_bytes());
                let _ = out.flush();
                seen += 1;
            }
            None if !node.is_connected() => return Err(Failure::new(EXIT_RUNTIME, "bus connection closed")),
            None => {}
        }
    }
    node.shutdown();
    Ok(())
}

fn topic_pub(topic: &str, json: &str, schema: Option<&str>, bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    let value = parse_json(json)?;
    let node = connect(bus, "pub")?;
    let schema_name = match schema {
        Some(s) => s.to_string(),
        None => {
            let key = crate::bus::resolve_name(topic).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
            let graph = node.graph_info()?;
            graph
                .topic(&key)
                .map(|t| t.schema.clone())
                .ok_or_else(|| Failure::new(EXIT_RUNTIME, format!("UnknownTopic: {key} has no endpoints; pass --schema")))?
        }
    };
    let schema = node
        .registry()
        .get(&schema_name)
        .ok_or_else(|| Failure::new(EXIT_RUNTIME, format!("UnknownSchema: {schema_name}")))?;
    let msg = json_to_message(&value, &schema)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("SchemaViolation at {}: {e}", e.path())))?;
    let publisher = node.advertise(topic, &schema_name)?;
    publisher.publish(&msg)?;
    // A graph round trip guarantees the server handled the publish frame.
    node.graph_info()?;
    node.shutdown();
    say(out, format_args!("published 1 message on {}", publisher.topic()));
    Ok(())
}

fn service_list(bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    let node = connect(bus, "service")?;
    for s in node.graph_info()?.services {
        say(out, format_args!("{} [{} -> {}] {}", s.name, s.request, s.response, s.provider));
    }
    node.shutdown();
    Ok(())
}

fn service_call(name: &str, json: &str, timeout: Duration, bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    let value = parse_json(json)?;
    let node = connect(bus, "call")?;
    let key = crate::bus::resolve_name(name).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let info = node
        .graph_info()?
        .service(&key)
        .cloned()
        .ok_or_else(|| Failure::new(EXIT_RUNTIME, format!("NotFound: service {key}")))?;
    let schema = node
        .registry()
        .get(&info.request)
        .ok_or_else(|| Failure::new(EXIT_RUNTIME, format!("UnknownSchema: {}", info.request)))?;
    let req = json_to_message(&value, &schema)
        .map_err(|e| Failure::new(EXIT_USAGE, format!("SchemaViolation at {}: {e}", e.path())))?;
    let resp = node.call_service(&key, &req, timeout)?;
    node.shutdown();
    say(out, message_to_json(&resp));
    Ok(())
}

fn record(topics: &[String], path: &Path, duration: Option<f64>, count: Option<u64>, bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    arm_interrupt();
    STOP.store(false, Ordering::SeqCst);
    let node = connect(bus, "record")?;
    let mut receivers = Vec::new();
    let mut seen = BTreeSet::new();
    for t in topics {
        let rx = node.subscribe_queue(t, None, 1 << 16)?;
        if seen.insert(rx.topic().to_string()) {
            receivers.push(rx);
        }
    }
    let decl: Vec<(String, String)> = receivers.iter().map(|r| (r.topic().to_string(), r.schema().to_string())).collect();
    let decl_refs: Vec<(&str, &str)> = decl.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut writer = BagWriter::create(path, node.registry(), &decl_refs)?;

    let (tx, rx) = mpsc::channel();
    let mut pumps = Vec::new();
    for r in receivers {
        let tx = tx.clone();
        pumps.push(thread::spawn(move || {
            while let Some(m) = r.recv() {
                if tx.send((r.topic().to_string(), m)).is_err() {
                    break;
                }
            }
        }));
    }
    drop(tx);
    say(out, format_args!("recording {} topics to {}", decl.len(), path.display()));

    let start = Instant::now();
    let deadline = duration.map(|s| start + Duration::from_secs_f64(s.max(0.0)));
    let mut written = 0u64;
    while !interrupted() && count.is_none_or(|c| written < c) && deadline.is_none_or(|d| Instant::now() < d) {
        match rx.recv_timeout(Duration::from_millis(20)) {
            Ok((topic, msg)) => {
                writer.write(start.elapsed().as_nanos() as u64, &topic, &msg)?;
                written += 1;
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
    }
    writer.flush()?;
    node.shutdown();
    drop(rx);
    for p in pumps {
        let _ = p.join();
    }
    say(out, format_args!("recorded {written} messages"));
    Ok(())
}

fn play(path: &Path, rate: f64, bus: &BusArg, out: &mut dyn Write) -> CmdResult {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Failure::new(EXIT_USAGE, "--rate must be positive"));
    }
    let mut reader = BagReader::open(path).map_err(|e| match e {
        BagError::Io(io) => Failure::new(EXIT_USAGE, format!("{}: {io}", path.display())),
        other => other.into(),
    })?;
    let topics = reader.topics().to_vec();
    let registry = reader.registry().clone();
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        say(out, "bag is empty");
        return Ok(());
    }
    arm_interrupt();
    STOP.store(false, Ordering::SeqCst);
    let node = connect(bus, "play")?;
    let names: Vec<&str> = topics.iter().map(|t| t.schema.name.as_str()).collect();
    node.register_schemas(&closure_to_text(&registry, &names))?;
    let mut publishers = std::collections::HashMap::new();
    for t in &topics {
        publishers.insert(t.name.clone(), node.advertise(&t.name, &t.schema.name)?);
    }
    let first = records[0].stamp_ns;
    let start = Instant::now();
    let mut sent = 0u64;
    for r in &records {
        if interrupted() {
            break;
        }
        let due = start + Duration::from_nanos(((r.stamp_ns - first) as f64 / rate) as u64);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        publishers[&r.topic].publish(&r.message)?;
        sent += 1;
    }
    node.graph_info()?;
    node.shutdown();
    say(out, format_args!("played {sent} messages"));
    Ok(())
}

struct ServeOptions {
    data_dir: PathBuf,
    host: String,
    port: Option<u16>,
    sim: bool,
    bridge_port: Option<u16>,
    ack_timeout_ms: u64,
    duration_s: Option<f64>,
}

fn serve(o: ServeOptions, bus_arg: &BusArg, out: &mut dyn Write) -> CmdResult {
    let port = match o.port {
        Some(p) => p,
        None => behavior::port_from_env().map_err(|e| Failure::new(EXIT_USAGE, e))?,
    };
    let ip = o.host.parse().map_err(|_| Failure::new(EXIT_USAGE, format!("{:?} is not an IP address", o.host)))?;
    if o.ack_timeout_ms == 0 {
        return Err(Failure::new(EXIT_USAGE, "--ack-timeout-ms must be positive"));
    }
    arm_interrupt();
    STOP.store(false, Ordering::SeqCst);
    let bus = Bus::with_std();
    let server = bind_server(&bus, bus_arg, out)?;
    let start_err = |e: String| Failure::new(EXIT_RUNTIME, e);
    let mut extras: Vec<Box<dyn RunningNode>> = Vec::new();
    if o.sim {
        let node = bus.create_node("actuator_sim", Tier::Basic).map_err(|e| start_err(e.to_string()))?;
        let b = NodeFactories::standard().get("actuator_sim").expect("actuator_sim is builtin");
        extras.push((b.start)(node)?);
    }
    let svc_node = bus.create_node("behavior_service", Tier::Service).map_err(|e| start_err(e.to_string()))?;
    let svc = BehaviorService::start(svc_node, &o.data_dir, SocketAddr::new(ip, port), Duration::from_millis(o.ack_timeout_ms))
        .map_err(start_err)?;
    say(out, format_args!("behavior REST on http://{}", svc.local_addr()));
    let bridge = match o.bridge_port {
        Some(p) => {
            let cfg = BridgeConfig { addr: SocketAddr::new(ip, p), ..BridgeConfig::default() };
            let b = WebBridge::start(bus.clone(), cfg).map_err(|e| start_err(format!("bridge: {e}")))?;
            say(out, format_args!("bridge on ws://{}/ws", b.local_addr()));
            Some(b)
        }
        None => None,
    };
    wait(o.duration_s);
    drop(bridge);
    drop(svc);
    while let Some(n) = extras.pop() {
        n.stop();
    }
    drop(server);
    say(out, "stopped");
    Ok(())
}

fn store_export(dir: &Path, path: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let store = Store::open(dir).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let dump = store.export().map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, dump).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", p.display())))?,
        None => {
            let _ = out.write_all(dump.as_bytes());
        }
    }
    Ok(())
}

fn store_import(dir: &Path, file: &Path, out: &mut dyn Write) -> CmdResult {
    let text = std::fs::read_to_string(file).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", file.display())))?;
    let store = Store::open(dir).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    store.import(&text).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    say(out, format_args!("imported {}", file.display()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{SchemaRegistry, StringMsg, TypedMessage};

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("socialbot").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn echo_format() {
        let reg = SchemaRegistry::with_std();
        let m = StringMsg::new("left up").to_message(&reg).unwrap();
        assert_eq!(format_echo(&m), "data: \"left up\"\n----\n");
    }

    #[test]
    fn usage_and_file_errors() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
        let (code, _, err) = run_args(&["launch", "/no/such/file.toml"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("/no/such/file.toml"), "{err}");
        let (code, _, err) = run_args(&["topic", "pub", "x", "{bad", "--bus", "127.0.0.1:1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("BadJson"), "{err}");
    }

    #[test]
    fn unreachable_bus() {
        let (code, _, err) = run_args(&["topic", "list", "--bus", "127.0.0.1:1"]);
        assert_eq!(code, EXIT_RUNTIME);
        assert!(err.contains("unreachable"), "{err}");
    }
}
