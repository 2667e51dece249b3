//! Cross-process transport.
//!
//! Every frame on the socket is one envelope:
//!
//! ```text
//! u32 LE  length of everything after this field (2 + n + payload)
//! u16 LE  n, topic-name length in bytes
//! n bytes topic name, UTF-8
//! ...     payload
//! ```
//!
//! For a data topic the payload is the codec encoding of one message, so
//! publishing `std/String "hi"` on `/chat` is
//!
//! ```text
//! 11 00 00 00  05 00  2f 63 68 61 74  06 00 00 00  02 00 00 00  68 69
//! ```
//!
//! Names starting with `@` are control envelopes. Requests from a client:
//! `@hello` `@advertise` `@subscribe` `@unsubscribe` `@graph` `@schemas`
//! `@register` carry JSON or schema text and are answered in order with
//! `@ok` or `@fail` (`{"error": code, "message": ..}`). `@call` carries
//! `u32 id, u32 timeout_ms, u16 len, service name, request bytes` and is
//! answered out of order by `@reply`: `u32 id, u8 status`, then on success
//! `u16 len, response schema name, response bytes`, or otherwise an error
//! message. Asynchronous failures (a bad data frame) arrive as `@error`.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver as ChanReceiver, SyncSender};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::core::{resolve_name, Bus, BusError, Message, Node, Publisher, Subscription, Tier};
use super::graph::GraphInfo;
use super::params::Params;
use super::queue::{DropOldestQueue, Pop};
use crate::codec::{
    closure_to_text, decode, encode, parse_schema_text, DecodeError, EncodeError, MessageSchema,
    MessageValue, SchemaRegistry,
};

pub const MAX_FRAME: usize = 64 << 20;
pub const DEFAULT_ADDR: &str = "127.0.0.1:11411";
/// Environment variable naming the bus address for attached processes.
pub const BUS_ENV: &str = "SOCIALBOT_BUS";

const STATUS_OK: u8 = 0;
const STATUS_NOT_FOUND: u8 = 1;
const STATUS_TIMEOUT: u8 = 2;
const STATUS_HANDLER: u8 = 3;
const STATUS_BAD_REQUEST: u8 = 4;

pub fn write_frame(w: &mut impl Write, topic: &str, payload: &[u8]) -> io::Result<()> {
    let name = topic.as_bytes();
    if name.len() > u16::MAX as usize || 2 + name.len() + payload.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    let len = (2 + name.len() + payload.len()) as u32;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&(name.len() as u16).to_le_bytes())?;
    w.write_all(name)?;
    w.write_all(payload)
}

/// `Ok(None)` on a clean end of stream between frames.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<(String, Vec<u8>)>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len) as usize;
    if !(2..=MAX_FRAME).contains(&len) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad frame length {len}")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let n = u16::from_le_bytes([body[0], body[1]]) as usize;
    if 2 + n > len {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "topic length exceeds frame"));
    }
    let topic = std::str::from_utf8(&body[2..2 + n])
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "topic is not UTF-8"))?
        .to_string();
    body.drain(..2 + n);
    Ok(Some((topic, body)))
}

#[derive(Debug, Serialize, Deserialize)]
struct Hello {
    name: String,
    tier: Tier,
    #[serde(default)]
    params: Params,
    #[serde(default)]
    remap: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopicRequest {
    topic: String,
    #[serde(default)]
    schema: Option<String>,
    #[serde(default)]
    capacity: Option<usize>,
}

fn bus_error_code(e: &BusError) -> &'static str {
    match e {
        BusError::NameInUse(_) => "NameInUse",
        BusError::InvalidName(_) => "InvalidName",
        BusError::SchemaConflict { .. } => "SchemaConflict",
        BusError::SchemaMismatch { .. } => "SchemaMismatch",
        BusError::UnknownSchema(_) => "UnknownSchema",
        BusError::PublisherClosed(_) => "PublisherClosed",
        BusError::NodeClosed(_) => "NodeClosed",
        BusError::NotFound(_) => "NotFound",
        BusError::Timeout { .. } => "Timeout",
        BusError::HandlerError(_) => "HandlerError",
        BusError::BadParam(_) => "BadParam",
    }
}

fn fail_payload(code: &str, message: impl std::fmt::Display) -> Vec<u8> {
    serde_json::to_vec(&json!({"error": code, "message": message.to_string()})).unwrap_or_default()
}

type ReplySlot = SyncSender<(u8, Vec<u8>)>;

/// Serves a bus to other processes until dropped.
pub struct BusServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<HashMap<u64, TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl BusServer {
    pub fn bind(bus: Bus, addr: impl ToSocketAddrs) -> io::Result<BusServer> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<HashMap<u64, TcpStream>>> = Arc::default();
        let accept = {
            let stop = stop.clone();
            let conns = conns.clone();
            thread::Builder::new().name("bus-accept".into()).spawn(move || {
                let ids = AtomicU64::new(0);
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let _ = stream.set_nodelay(true);
                    let id = ids.fetch_add(1, Ordering::Relaxed);
                    if let Ok(clone) = stream.try_clone() {
                        conns.lock().unwrap_or_else(|e| e.into_inner()).insert(id, clone);
                    }
                    let bus = bus.clone();
                    let conns = conns.clone();
                    let _ = thread::Builder::new().name(format!("bus-conn{id}")).spawn(move || {
                        serve_connection(bus, stream);
                        conns.lock().unwrap_or_else(|e| e.into_inner()).remove(&id);
                    });
                }
            })?
        };
        Ok(BusServer { addr: local, stop, conns, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn connection_count(&self) -> usize {
        self.conns.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl Drop for BusServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(500));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        for (_, s) in self.conns.lock().unwrap_or_else(|e| e.into_inner()).drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

type Outbound = SyncSender<(String, Vec<u8>)>;

struct Session {
    bus: Bus,
    node: Option<Node>,
    out: Outbound,
    publishers: HashMap<String, Publisher>,
    subscriptions: HashMap<String, Subscription>,
}

fn serve_connection(bus: Bus, stream: TcpStream) {
    let Ok(write_half) = stream.try_clone() else { return };
    let (tx, rx) = mpsc::sync_channel::<(String, Vec<u8>)>(256);
    let writer = thread::spawn(move || {
        let mut w = BufWriter::new(write_half);
        while let Ok((topic, payload)) = rx.recv() {
            if write_frame(&mut w, &topic, &payload).is_err() {
                break;
            }
            // Drain what is already queued before flushing.
            while let Ok((topic, payload)) = rx.try_recv() {
                if write_frame(&mut w, &topic, &payload).is_err() {
                    return;
                }
            }
            if w.flush().is_err() {
                break;
            }
        }
        if let Ok(s) = w.into_inner() {
            let _ = s.shutdown(Shutdown::Both);
        }
    });
    let mut session = Session {
        bus,
        node: None,
        out: tx,
        publishers: HashMap::new(),
        subscriptions: HashMap::new(),
    };
    let mut reader = BufReader::new(stream);
    while let Ok(Some((topic, payload))) = read_frame(&mut reader) {
        if let Some(op) = topic.strip_prefix('@') {
            session.control(op, &payload);
        } else {
            session.data(&topic, &payload);
        }
    }
    session.subscriptions.clear();
    session.publishers.clear();
    if let Some(node) = session.node.take() {
        node.shutdown();
    }
    drop(session);
    let _ = writer.join();
}

impl Session {
    fn reply(&self, result: Result<Vec<u8>, (String, String)>) {
        let frame = match result {
            Ok(body) => ("@ok".to_string(), body),
            Err((code, msg)) => ("@fail".to_string(), fail_payload(&code, msg)),
        };
        let _ = self.out.send(frame);
    }

    fn node(&self) -> Result<&Node, (String, String)> {
        self.node.as_ref().ok_or_else(|| ("NoHello".into(), "send @hello first".into()))
    }

    fn control(&mut self, op: &str, payload: &[u8]) {
        let result = match op {
            "hello" => self.hello(payload),
            "advertise" => self.advertise(payload),
            "subscribe" => self.subscribe(payload),
            "unsubscribe" => self.unsubscribe(payload),
            "graph" => serde_json::to_vec(&self.bus.graph_info()).map_err(|e| ("Internal".into(), e.to_string())),
            "schemas" => {
                let reg = self.bus.registry();
                let names = reg.names();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                Ok(closure_to_text(reg, &refs).into_bytes())
            }
            "register" => self.register(payload),
            "call" => {
                self.call(payload);
                return;
            }
            other => Err(("UnknownOp".into(), format!("unknown control op @{other}"))),
        };
        self.reply(result);
    }

    fn hello(&mut self, payload: &[u8]) -> Result<Vec<u8>, (String, String)> {
        if self.node.is_some() {
            return Err(("NameInUse".into(), "session already has a node".into()));
        }
        let hello: Hello = serde_json::from_slice(payload).map_err(|e| ("BadJson".into(), e.to_string()))?;
        let node = self
            .bus
            .create_node_with(&hello.name, hello.tier, hello.params, hello.remap)
            .map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        let name = node.name().to_string();
        self.node = Some(node);
        Ok(name.into_bytes())
    }

    fn register(&mut self, payload: &[u8]) -> Result<Vec<u8>, (String, String)> {
        let text = std::str::from_utf8(payload).map_err(|e| ("BadSchema".into(), e.to_string()))?;
        let defs = parse_schema_text(text).map_err(|e| ("BadSchema".into(), e.to_string()))?;
        self.bus.registry().register_all(defs).map_err(|e| ("SchemaError".into(), e.to_string()))?;
        Ok(Vec::new())
    }

    fn advertise(&mut self, payload: &[u8]) -> Result<Vec<u8>, (String, String)> {
        let req: TopicRequest = serde_json::from_slice(payload).map_err(|e| ("BadJson".into(), e.to_string()))?;
        let schema = req.schema.ok_or_else(|| ("BadJson".to_string(), "schema required".to_string()))?;
        let key = resolve_name(&req.topic).map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        if self.publishers.contains_key(&key) {
            return Ok(Vec::new());
        }
        let publisher = self.node()?.advertise(&key, &schema).map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        self.publishers.insert(key, publisher);
        Ok(Vec::new())
    }

    fn subscribe(&mut self, payload: &[u8]) -> Result<Vec<u8>, (String, String)> {
        let req: TopicRequest = serde_json::from_slice(payload).map_err(|e| ("BadJson".into(), e.to_string()))?;
        let key = resolve_name(&req.topic).map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        let node = self.node()?.clone();
        let resolved = node.resolve_topic(&key).map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        let schema = match req.schema {
            Some(s) => s,
            None => match self.bus.topic_schema(&resolved) {
                Some(s) => s.name.clone(),
                None => return Err(("UnknownTopic".into(), format!("no endpoints on {resolved}"))),
            },
        };
        if self.subscriptions.contains_key(&key) {
            return Ok(schema.into_bytes());
        }
        let out = self.out.clone();
        let label = key.clone();
        let sub = node
            .subscribe(&key, &schema, req.capacity.unwrap_or(64), move |msg: Message| {
                if let Ok(bytes) = encode(&msg) {
                    let _ = out.send((label.clone(), bytes));
                }
            })
            .map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        self.subscriptions.insert(key, sub);
        Ok(schema.into_bytes())
    }

    fn unsubscribe(&mut self, payload: &[u8]) -> Result<Vec<u8>, (String, String)> {
        let req: TopicRequest = serde_json::from_slice(payload).map_err(|e| ("BadJson".into(), e.to_string()))?;
        let key = resolve_name(&req.topic).map_err(|e| (bus_error_code(&e).into(), e.to_string()))?;
        self.subscriptions.remove(&key);
        Ok(Vec::new())
    }

    fn data(&mut self, topic: &str, payload: &[u8]) {
        let result = match self.publishers.get(topic) {
            None => Err(format!("{topic} is not advertised by this session")),
            Some(p) => decode(payload, p.schema())
                .map_err(|e| e.to_string())
                .and_then(|v| p.publish(v).map_err(|e| e.to_string())),
        };
        if let Err(msg) = result {
            let _ = self.out.send(("@error".into(), fail_payload("Publish", msg)));
        }
    }

    fn call(&mut self, payload: &[u8]) {
        let parsed = (|| {
            let id = u32::from_le_bytes(payload.get(0..4)?.try_into().ok()?);
            let timeout = u32::from_le_bytes(payload.get(4..8)?.try_into().ok()?);
            let n = u16::from_le_bytes(payload.get(8..10)?.try_into().ok()?) as usize;
            let name = std::str::from_utf8(payload.get(10..10 + n)?).ok()?.to_string();
            Some((id, timeout, name, payload[10 + n..].to_vec()))
        })();
        let Some((id, timeout_ms, name, request)) = parsed else {
            let _ = self.out.send(("@error".into(), fail_payload("BadCall", "malformed @call")));
            return;
        };
        let node = match self.node() {
            Ok(n) => n.clone(),
            Err((code, msg)) => {
                let _ = self.out.send(("@reply".into(), reply_payload(id, STATUS_BAD_REQUEST, format!("{code}: {msg}").as_bytes())));
                return;
            }
        };
        let out = self.out.clone();
        thread::spawn(move || {
            let (status, body) = remote_call(&node, &name, &request, timeout_ms);
            let _ = out.send(("@reply".into(), reply_payload(id, status, &body)));
        });
    }
}

fn reply_payload(id: u32, status: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + body.len());
    out.extend_from_slice(&id.to_le_bytes());
    out.push(status);
    out.extend_from_slice(body);
    out
}

fn remote_call(node: &Node, name: &str, request: &[u8], timeout_ms: u32) -> (u8, Vec<u8>) {
    let Some((req_schema, _)) = node.bus().service_schemas(name) else {
        return (STATUS_NOT_FOUND, format!("service {name} not found").into_bytes());
    };
    let req = match decode(request, &req_schema) {
        Ok(v) => v,
        Err(e) => return (STATUS_BAD_REQUEST, e.to_string().into_bytes()),
    };
    match node.call_service(name, req, Duration::from_millis(timeout_ms as u64)) {
        Ok(resp) => match encode(&resp) {
            Ok(bytes) => {
                let schema = resp.schema.name.as_bytes();
                let mut body = Vec::with_capacity(2 + schema.len() + bytes.len());
                body.extend_from_slice(&(schema.len() as u16).to_le_bytes());
                body.extend_from_slice(schema);
                body.extend_from_slice(&bytes);
                (STATUS_OK, body)
            }
            Err(e) => (STATUS_HANDLER, e.to_string().into_bytes()),
        },
        Err(BusError::NotFound(n)) => (STATUS_NOT_FOUND, format!("service {n} not found").into_bytes()),
        Err(e @ BusError::Timeout { .. }) => (STATUS_TIMEOUT, e.to_string().into_bytes()),
        Err(BusError::HandlerError(m)) => (STATUS_HANDLER, m.into_bytes()),
        Err(e) => (STATUS_BAD_REQUEST, e.to_string().into_bytes()),
    }
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("bus connection: {0}")]
    Io(#[from] io::Error),
    #[error("bus connection closed")]
    Disconnected,
    #[error("{code}: {message}")]
    Rejected { code: String, message: String },
    #[error("service {0} not found")]
    NotFound(String),
    #[error("call to {0} timed out")]
    Timeout(String),
    #[error("service handler failed: {0}")]
    HandlerError(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl RemoteError {
    /// Short error name as used in `@fail` replies.
    pub fn code(&self) -> &str {
        match self {
            RemoteError::Rejected { code, .. } => code,
            RemoteError::NotFound(_) => "NotFound",
            RemoteError::Timeout(_) => "Timeout",
            RemoteError::HandlerError(_) => "HandlerError",
            RemoteError::UnknownSchema(_) => "UnknownSchema",
            _ => "Transport",
        }
    }
}

type LocalQueue = Arc<DropOldestQueue<Message>>;

struct LocalTopic {
    schema: Arc<MessageSchema>,
    queues: Vec<(u64, LocalQueue)>,
}

struct ClientInner {
    name: OnceLock<String>,
    registry: Arc<SchemaRegistry>,
    writer: Mutex<BufWriter<TcpStream>>,
    stream: TcpStream,
    control: Mutex<ChanReceiver<(String, Vec<u8>)>>,
    subs: Mutex<HashMap<String, LocalTopic>>,
    pending: Mutex<HashMap<u32, ReplySlot>>,
    next_id: AtomicU32,
    errors: Mutex<Vec<String>>,
    reader: Mutex<Option<JoinHandle<()>>>,
    closed: Arc<AtomicBool>,
}

impl ClientInner {
    fn send(&self, topic: &str, payload: &[u8]) -> Result<(), RemoteError> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        write_frame(&mut *w, topic, payload)?;
        w.flush()?;
        Ok(())
    }

    fn request(&self, op: &str, payload: &[u8]) -> Result<Vec<u8>, RemoteError> {
        let rx = self.control.lock().unwrap_or_else(|e| e.into_inner());
        self.send(op, payload)?;
        match rx.recv() {
            Ok((kind, body)) if kind == "@ok" => Ok(body),
            Ok((_, body)) => {
                let v: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                Err(RemoteError::Rejected {
                    code: v["error"].as_str().unwrap_or("Unknown").to_string(),
                    message: v["message"].as_str().unwrap_or("").to_string(),
                })
            }
            Err(_) => Err(RemoteError::Disconnected),
        }
    }
}

impl Drop for ClientInner {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.get_mut().unwrap_or_else(|e| e.into_inner()).take() {
            if h.thread().id() != thread::current().id() {
                let _ = h.join();
            }
        }
    }
}

/// A node attached to a bus served by [`BusServer`] in another process.
#[derive(Clone)]
pub struct RemoteNode {
    inner: Arc<ClientInner>,
}

/// Options for [`RemoteNode::connect_with`].
#[derive(Debug, Clone)]
pub struct ConnectOptions {
    pub name: String,
    pub tier: Tier,
    pub params: Params,
    pub remap: BTreeMap<String, String>,
}

impl ConnectOptions {
    pub fn new(name: impl Into<String>, tier: Tier) -> Self {
        ConnectOptions { name: name.into(), tier, params: Params::new(), remap: BTreeMap::new() }
    }
}

impl RemoteNode {
    pub fn connect(addr: impl ToSocketAddrs, name: &str, tier: Tier) -> Result<RemoteNode, RemoteError> {
        Self::connect_with(addr, ConnectOptions::new(name, tier))
    }

    pub fn connect_with(addr: impl ToSocketAddrs, opts: ConnectOptions) -> Result<RemoteNode, RemoteError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        let writer = BufWriter::new(stream.try_clone()?);
        let (ctl_tx, ctl_rx) = mpsc::channel();
        let closed = Arc::new(AtomicBool::new(false));
        let inner = Arc::new(ClientInner {
            name: OnceLock::new(),
            registry: Arc::new(SchemaRegistry::new()),
            writer: Mutex::new(writer),
            stream,
            control: Mutex::new(ctl_rx),
            subs: Mutex::new(HashMap::new()),
            pending: Mutex::new(HashMap::new()),
            next_id: AtomicU32::new(1),
            errors: Mutex::new(Vec::new()),
            reader: Mutex::new(None),
            closed: closed.clone(),
        });
        let weak = Arc::downgrade(&inner);
        let handle = thread::Builder::new().name("bus-client".into()).spawn(move || {
            let mut r = BufReader::new(read_half);
            while let Ok(Some((topic, payload))) = read_frame(&mut r) {
                let Some(inner) = weak.upgrade() else { break };
                match topic.as_str() {
                    "@ok" | "@fail" => {
                        let _ = ctl_tx.send((topic, payload));
                    }
                    "@reply" if payload.len() >= 5 => {
                        let id = u32::from_le_bytes(payload[0..4].try_into().expect("4 bytes"));
                        let waiter = inner.pending.lock().unwrap_or_else(|e| e.into_inner()).remove(&id);
                        if let Some(w) = waiter {
                            let _ = w.send((payload[4], payload[5..].to_vec()));
                        }
                    }
                    "@error" => {
                        let msg = String::from_utf8_lossy(&payload).into_owned();
                        inner.errors.lock().unwrap_or_else(|e| e.into_inner()).push(msg);
                    }
                    t if !t.starts_with('@') => inner.deliver(t, &payload),
                    _ => {}
                }
            }
            closed.store(true, Ordering::SeqCst);
            if let Some(inner) = weak.upgrade() {
                for entry in inner.subs.lock().unwrap_or_else(|e| e.into_inner()).values() {
                    for (_, q) in &entry.queues {
                        q.close();
                    }
                }
                inner.pending.lock().unwrap_or_else(|e| e.into_inner()).clear();
            }
        })?;
        *inner.reader.lock().unwrap_or_else(|e| e.into_inner()) = Some(handle);

        let text = inner.request("@schemas", &[])?;
        let text = String::from_utf8(text).map_err(|e| RemoteError::Protocol(e.to_string()))?;
        let defs = parse_schema_text(&text).map_err(|e| RemoteError::Protocol(e.to_string()))?;
        inner.registry.register_all(defs).map_err(|e| RemoteError::Protocol(e.to_string()))?;
        let hello = Hello { name: opts.name, tier: opts.tier, params: opts.params, remap: opts.remap };
        let name = inner.request("@hello", &serde_json::to_vec(&hello).expect("hello serializes"))?;
        let _ = inner.name.set(String::from_utf8_lossy(&name).into_owned());
        Ok(RemoteNode { inner })
    }

    /// Connects to the address in `SOCIALBOT_BUS`, or the default address.
    pub fn connect_env(name: &str, tier: Tier) -> Result<RemoteNode, RemoteError> {
        let addr = std::env::var(BUS_ENV).unwrap_or_else(|_| DEFAULT_ADDR.to_string());
        Self::connect(addr.as_str(), name, tier)
    }

    pub fn name(&self) -> &str {
        self.inner.name.get().map_or("", String::as_str)
    }

    /// Schemas known to the remote bus at connect time plus later registrations.
    pub fn registry(&self) -> &Arc<SchemaRegistry> {
        &self.inner.registry
    }

    pub fn is_connected(&self) -> bool {
        !self.inner.closed.load(Ordering::SeqCst)
    }

    /// Asynchronous errors reported by the server since the last call.
    pub fn take_errors(&self) -> Vec<String> {
        std::mem::take(&mut *self.inner.errors.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn register_schemas(&self, text: &str) -> Result<(), RemoteError> {
        let defs = parse_schema_text(text).map_err(|e| RemoteError::Rejected { code: "BadSchema".into(), message: e.to_string() })?;
        self.inner.request("@register", text.as_bytes())?;
        self.inner
            .registry
            .register_all(defs)
            .map_err(|e| RemoteError::Rejected { code: "SchemaError".into(), message: e.to_string() })?;
        Ok(())
    }

    pub fn graph_info(&self) -> Result<GraphInfo, RemoteError> {
        let body = self.inner.request("@graph", &[])?;
        serde_json::from_slice(&body).map_err(|e| RemoteError::Protocol(e.to_string()))
    }

    pub fn advertise(&self, topic: &str, schema: &str) -> Result<RemotePublisher, RemoteError> {
        let topic = resolve_name(topic).map_err(|e| RemoteError::Rejected { code: "InvalidName".into(), message: e.to_string() })?;
        let schema_arc = self.inner.registry.get(schema).ok_or_else(|| RemoteError::UnknownSchema(schema.to_string()))?;
        let req = json!({"topic": topic, "schema": schema});
        self.inner.request("@advertise", req.to_string().as_bytes())?;
        Ok(RemotePublisher { node: self.clone(), topic, schema: schema_arc })
    }

    /// Pull subscription. With `schema = None` the topic must already be
    /// bound on the server.
    pub fn subscribe_queue(
        &self,
        topic: &str,
        schema: Option<&str>,
        capacity: usize,
    ) -> Result<RemoteReceiver, RemoteError> {
        let topic = resolve_name(topic).map_err(|e| RemoteError::Rejected { code: "InvalidName".into(), message: e.to_string() })?;
        let req = json!({"topic": topic, "schema": schema, "capacity": capacity.max(1)});
        let bound = self.inner.request("@subscribe", req.to_string().as_bytes())?;
        let bound = String::from_utf8_lossy(&bound).into_owned();
        let schema_arc = self.inner.registry.get(&bound).ok_or_else(|| RemoteError::UnknownSchema(bound.clone()))?;
        let queue: LocalQueue = Arc::new(DropOldestQueue::new(capacity));
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed) as u64;
        self.inner
            .subs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(topic.clone())
            .or_insert_with(|| LocalTopic { schema: schema_arc, queues: Vec::new() })
            .queues
            .push((id, queue.clone()));
        Ok(RemoteReceiver { node: self.clone(), topic, schema: bound, id, queue })
    }

    pub fn call_service(
        &self,
        service: &str,
        request: &MessageValue,
        timeout: Duration,
    ) -> Result<MessageValue, RemoteError> {
        let name = resolve_name(service).map_err(|e| RemoteError::Rejected { code: "InvalidName".into(), message: e.to_string() })?;
        let body = encode(request)?;
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::sync_channel(1);
        self.inner.pending.lock().unwrap_or_else(|e| e.into_inner()).insert(id, tx);
        let mut payload = Vec::with_capacity(10 + name.len() + body.len());
        payload.extend_from_slice(&id.to_le_bytes());
        payload.extend_from_slice(&(timeout.as_millis().min(u32::MAX as u128) as u32).to_le_bytes());
        payload.extend_from_slice(&(name.len() as u16).to_le_bytes());
        payload.extend_from_slice(name.as_bytes());
        payload.extend_from_slice(&body);
        self.inner.send("@call", &payload)?;
        // The server enforces the timeout; allow slack for the round trip.
        let reply = rx.recv_timeout(timeout + Duration::from_millis(1000));
        self.inner.pending.lock().unwrap_or_else(|e| e.into_inner()).remove(&id);
        let (status, body) = match reply {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => return Err(RemoteError::Timeout(name)),
            Err(mpsc::RecvTimeoutError::Disconnected) => return Err(RemoteError::Disconnected),
        };
        let text = || String::from_utf8_lossy(&body).into_owned();
        match status {
            STATUS_OK => {
                if body.len() < 2 {
                    return Err(RemoteError::Protocol("short @reply".into()));
                }
                let n = u16::from_le_bytes([body[0], body[1]]) as usize;
                let schema_name = body
                    .get(2..2 + n)
                    .and_then(|b| std::str::from_utf8(b).ok())
                    .ok_or_else(|| RemoteError::Protocol("bad @reply schema".into()))?;
                let schema = self
                    .inner
                    .registry
                    .get(schema_name)
                    .ok_or_else(|| RemoteError::UnknownSchema(schema_name.to_string()))?;
                Ok(decode(&body[2 + n..], &schema)?)
            }
            STATUS_NOT_FOUND => Err(RemoteError::NotFound(name)),
            STATUS_TIMEOUT => Err(RemoteError::Timeout(name)),
            STATUS_HANDLER => Err(RemoteError::HandlerError(text())),
            _ => Err(RemoteError::BadRequest(text())),
        }
    }

    /// Closes the connection; the server removes the node and its endpoints.
    pub fn shutdown(&self) {
        let _ = self.inner.stream.shutdown(Shutdown::Both);
    }
}

impl ClientInner {
    fn deliver(&self, topic: &str, payload: &[u8]) {
        let subs = self.subs.lock().unwrap_or_else(|e| e.into_inner());
        let Some(entry) = subs.get(topic) else { return };
        if let Ok(v) = decode(payload, &entry.schema) {
            let msg = Arc::new(v);
            for (_, q) in &entry.queues {
                q.push(msg.clone());
            }
        }
    }
}

pub struct RemotePublisher {
    node: RemoteNode,
    topic: String,
    schema: Arc<MessageSchema>,
}

impl RemotePublisher {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn publish(&self, value: &MessageValue) -> Result<(), RemoteError> {
        value.check_schema(&self.schema).map_err(|e| RemoteError::Rejected {
            code: "SchemaMismatch".into(),
            message: e.to_string(),
        })?;
        let bytes = encode(value)?;
        self.node.inner.send(&self.topic, &bytes)
    }
}

pub struct RemoteReceiver {
    node: RemoteNode,
    topic: String,
    schema: String,
    id: u64,
    queue: LocalQueue,
}

impl RemoteReceiver {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn schema(&self) -> &str {
        &self.schema
    }

    /// `None` on timeout or once the connection closed and the queue drained.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Message> {
        match self.queue.pop_timeout(Some(timeout)) {
            Pop::Item(m) => Some(m),
            _ => None,
        }
    }

    /// Blocks until a message arrives or the connection closes.
    pub fn recv(&self) -> Option<Message> {
        match self.queue.pop_timeout(None) {
            Pop::Item(m) => Some(m),
            _ => None,
        }
    }

    pub fn dropped(&self) -> u64 {
        self.queue.dropped()
    }
}

impl Drop for RemoteReceiver {
    fn drop(&mut self) {
        let mut subs = self.node.inner.subs.lock().unwrap_or_else(|e| e.into_inner());
        let last = match subs.get_mut(&self.topic) {
            Some(entry) => {
                entry.queues.retain(|(id, _)| *id != self.id);
                entry.queues.is_empty()
            }
            None => false,
        };
        if last {
            subs.remove(&self.topic);
            drop(subs);
            let req = json!({"topic": self.topic});
            let _ = self.node.inner.request("@unsubscribe", req.to_string().as_bytes());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{StringMsg, TypedMessage, Value};

    fn serve() -> (Bus, BusServer) {
        let bus = Bus::with_std();
        let server = BusServer::bind(bus.clone(), "127.0.0.1:0").unwrap();
        (bus, server)
    }

    #[test]
    fn envelope_bytes() {
        let reg = SchemaRegistry::with_std();
        let msg = StringMsg::new("hi").to_message(&reg).unwrap();
        let mut buf = Vec::new();
        write_frame(&mut buf, "/chat", &encode(&msg).unwrap()).unwrap();
        let expected: Vec<u8> = vec![
            0x11, 0, 0, 0, 5, 0, b'/', b'c', b'h', b'a', b't', 6, 0, 0, 0, 2, 0, 0, 0, b'h', b'i',
        ];
        assert_eq!(buf, expected);
        let (topic, payload) = read_frame(&mut buf.as_slice()).unwrap().unwrap();
        assert_eq!(topic, "/chat");
        assert_eq!(decode(&payload, &reg.get("std/String").unwrap()).unwrap(), msg);
        assert!(read_frame(&mut &buf[..buf.len() - 1]).is_err());
        assert!(read_frame(&mut &[][..]).unwrap().is_none());
    }

    #[test]
    fn remote_pub_sub_both_directions() {
        let (bus, server) = serve();
        let local = bus.create_node("local", Tier::Basic).unwrap();
        let local_pub = local.advertise("down", "std/String").unwrap();
        let local_rx = local.subscribe_queue("up", "std/String", 16).unwrap();

        let remote = RemoteNode::connect(server.local_addr(), "remote", Tier::External).unwrap();
        assert_eq!(remote.name(), "/remote");
        let rx = remote.subscribe_queue("down", None, 16).unwrap();
        assert_eq!(rx.schema(), "std/String");
        let up = remote.advertise("up", "std/String").unwrap();
        let msg = StringMsg::new("hello").to_message(remote.registry()).unwrap();
        up.publish(&msg).unwrap();
        let got = local_rx.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(got.get("data").and_then(Value::as_str), Some("hello"));

        local_pub.publish(StringMsg::new("back").to_message(bus.registry()).unwrap()).unwrap();
        let got = rx.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(got.get("data").and_then(Value::as_str), Some("back"));

        let g = remote.graph_info().unwrap();
        assert_eq!(g.node("/remote").unwrap().tier, Tier::External);
        assert!(g.topic("/up").unwrap().publishers.contains(&"/remote".to_string()));
    }

    #[test]
    fn unknown_topic_and_name_clash() {
        let (bus, server) = serve();
        let _n = bus.create_node("taken", Tier::Basic).unwrap();
        match RemoteNode::connect(server.local_addr(), "taken", Tier::External) {
            Err(e) => assert_eq!(e.code(), "NameInUse"),
            Ok(_) => panic!("duplicate name accepted"),
        }
        let remote = RemoteNode::connect(server.local_addr(), "r", Tier::External).unwrap();
        let err = remote.subscribe_queue("nothing_here", None, 1).err().unwrap();
        assert_eq!(err.code(), "UnknownTopic");
    }

    #[test]
    fn remote_service_calls() {
        let (bus, server) = serve();
        let n = bus.create_node("svc", Tier::Service).unwrap();
        let _h = n.register_service("echo", "std/String", "std/String", |r| Ok(r.clone())).unwrap();
        let _f = n.register_service("fail", "std/String", "std/String", |_| Err("bad".into())).unwrap();
        let remote = RemoteNode::connect(server.local_addr(), "caller", Tier::External).unwrap();
        let req = StringMsg::new("ping").to_message(remote.registry()).unwrap();
        let resp = remote.call_service("echo", &req, Duration::from_secs(2)).unwrap();
        assert_eq!(resp, req);
        assert!(matches!(remote.call_service("nope", &req, Duration::from_secs(1)), Err(RemoteError::NotFound(_))));
        assert!(matches!(remote.call_service("fail", &req, Duration::from_secs(1)), Err(RemoteError::HandlerError(m)) if m == "bad"));
    }

    #[test]
    fn disconnect_removes_remote_node() {
        let (bus, server) = serve();
        let local = bus.create_node("local", Tier::Basic).unwrap();
        let _p = local.advertise("down", "std/String").unwrap();
        let remote = RemoteNode::connect(server.local_addr(), "gone", Tier::External).unwrap();
        let _rx = remote.subscribe_queue("down", None, 4).unwrap();
        assert_eq!(bus.subscriber_count("down"), 1);
        remote.shutdown();
        let deadline = std::time::Instant::now() + Duration::from_secs(2);
        while bus.graph_info().node("/gone").is_some() && std::time::Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        assert!(bus.graph_info().node("/gone").is_none());
        assert_eq!(bus.subscriber_count("down"), 0);
    }

    #[test]
    fn registers_new_schemas() {
        let (bus, server) = serve();
        let remote = RemoteNode::connect(server.local_addr(), "ext", Tier::External).unwrap();
        remote.register_schemas("message ext/Face\nstring who\nf64 score\n").unwrap();
        assert!(bus.registry().get("ext/Face").is_some());
        let _p = remote.advertise("faces", "ext/Face").unwrap();
        assert_eq!(bus.topic_schema("faces").unwrap().name, "ext/Face");
    }
}
