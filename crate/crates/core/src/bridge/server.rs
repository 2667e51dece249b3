use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::{json, Map, Value as Json};
use tokio::sync::Notify;

use super::json::{json_to_message, message_to_json};
use crate::bus::{Bus, BusError, Node, Publisher, Subscription, Tier, DEFAULT_SERVICE_TIMEOUT};
use crate::codec::std_schemas as names;
use crate::http::HttpServer;

pub const DEFAULT_IMAGE_RATE: f64 = 15.0;
pub const DEFAULT_OUTBOX: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeConfig {
    pub addr: SocketAddr,
    /// Frames per second forwarded per image subscription.
    pub image_rate: f64,
    /// Required `token` query parameter, if set.
    pub token: Option<String>,
    /// Bus queue per subscription.
    pub queue: usize,
    /// Outbound envelopes buffered per session before the oldest
    /// `publish` envelope is dropped.
    pub outbox: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 9090)),
            image_rate: DEFAULT_IMAGE_RATE,
            token: None,
            queue: 64,
            outbox: DEFAULT_OUTBOX,
        }
    }
}

/// Bridge-wide counters.
#[derive(Debug, Default)]
pub struct BridgeStats {
    pub sessions_opened: AtomicU64,
    pub sessions_closed: AtomicU64,
    /// `publish` envelopes evicted from full session outboxes.
    pub dropped: AtomicU64,
}

#[derive(Clone)]
struct BridgeState {
    bus: Bus,
    cfg: Arc<BridgeConfig>,
    stats: Arc<BridgeStats>,
    next_session: Arc<AtomicU64>,
}

/// Running WebSocket gateway.
pub struct WebBridge {
    server: HttpServer,
    stats: Arc<BridgeStats>,
}

impl WebBridge {
    pub fn start(bus: Bus, cfg: BridgeConfig) -> std::io::Result<WebBridge> {
        let stats = Arc::new(BridgeStats::default());
        let addr = cfg.addr;
        let state = BridgeState { bus, cfg: Arc::new(cfg), stats: stats.clone(), next_session: Arc::default() };
        let router = Router::new()
            .route("/ws", get(upgrade))
            .route("/api/schemas", get(schemas))
            .with_state(state);
        Ok(WebBridge { server: HttpServer::start(addr, router)?, stats })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.server.local_addr()
    }

    pub fn stats(&self) -> &BridgeStats {
        &self.stats
    }
}

async fn schemas(State(st): State<BridgeState>) -> axum::Json<Json> {
    let list: Vec<Json> = st
        .bus
        .registry()
        .all()
        .iter()
        .map(|s| {
            let fields: Vec<Json> =
                s.fields.iter().map(|f| json!({"name": f.name, "type": f.ty.type_name()})).collect();
            json!({"name": s.name, "fields": fields})
        })
        .collect();
    axum::Json(json!({ "schemas": list }))
}

async fn upgrade(
    ws: WebSocketUpgrade,
    Query(q): Query<HashMap<String, String>>,
    State(st): State<BridgeState>,
) -> Response {
    if let Some(token) = &st.cfg.token {
        if q.get("token") != Some(token) {
            return (StatusCode::UNAUTHORIZED, axum::Json(json!({"error": "Unauthorized", "path": "token"}))).into_response();
        }
    }
    ws.on_upgrade(move |socket| run_session(socket, st))
}

/// Outbound envelopes for one session. Replies are never evicted.
struct Outbox {
    items: Mutex<VecDeque<(String, bool)>>,
    capacity: usize,
    notify: Notify,
    stats: Arc<BridgeStats>,
}

impl Outbox {
    fn push(&self, text: String, droppable: bool) {
        let mut q = self.items.lock().unwrap_or_else(|e| e.into_inner());
        if droppable && q.iter().filter(|(_, d)| *d).count() >= self.capacity {
            if let Some(i) = q.iter().position(|(_, d)| *d) {
                q.remove(i);
                self.stats.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        q.push_back((text, droppable));
        drop(q);
        self.notify.notify_one();
    }

    async fn pop(&self) -> String {
        loop {
            if let Some((text, _)) = self.items.lock().unwrap_or_else(|e| e.into_inner()).pop_front() {
                return text;
            }
            self.notify.notified().await;
        }
    }
}

struct Session {
    node: Node,
    cfg: Arc<BridgeConfig>,
    outbox: Arc<Outbox>,
    subscriptions: HashMap<String, Subscription>,
    publishers: HashMap<String, Publisher>,
}

async fn run_session(mut socket: WebSocket, st: BridgeState) {
    let n = st.next_session.fetch_add(1, Ordering::Relaxed) + 1;
    let Ok(node) = st.bus.create_node(&format!("web_bridge/session_{n}"), Tier::External) else {
        let _ = socket.send(WsMessage::Close(None)).await;
        return;
    };
    st.stats.sessions_opened.fetch_add(1, Ordering::Relaxed);
    let outbox = Arc::new(Outbox {
        items: Mutex::default(),
        capacity: st.cfg.outbox.max(1),
        notify: Notify::new(),
        stats: st.stats.clone(),
    });
    let mut session = Session {
        node,
        cfg: st.cfg.clone(),
        outbox: outbox.clone(),
        subscriptions: HashMap::new(),
        publishers: HashMap::new(),
    };
    loop {
        tokio::select! {
            inbound = socket.recv() => match inbound {
                Some(Ok(WsMessage::Text(text))) => session.handle(text.as_str()).await,
                Some(Ok(WsMessage::Binary(_))) => {
                    session.status("error", "BadJson", "binary frames are not supported", None, None)
                }
                Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            text = outbox.pop() => {
                if socket.send(WsMessage::Text(text.into())).await.is_err() {
                    break;
                }
            }
        }
    }
    tokio::task::spawn_blocking(move || {
        session.subscriptions.clear();
        session.publishers.clear();
        session.node.shutdown();
    })
    .await
    .ok();
    st.stats.sessions_closed.fetch_add(1, Ordering::Relaxed);
}

fn bus_code(e: &BusError) -> &'static str {
    match e {
        BusError::NotFound(_) => "UnknownService",
        BusError::Timeout { .. } => "Timeout",
        BusError::HandlerError(_) => "ServiceFailed",
        BusError::SchemaMismatch { .. } | BusError::SchemaConflict { .. } => "SchemaViolation",
        BusError::InvalidName(_) => "InvalidName",
        _ => "BusError",
    }
}

impl Session {
    fn send(&self, v: Json) {
        self.outbox.push(v.to_string(), false);
    }

    fn status(&self, level: &str, code: &str, message: impl ToString, id: Option<&str>, path: Option<&str>) {
        let mut m = Map::new();
        m.insert("op".into(), "status".into());
        if let Some(id) = id {
            m.insert("id".into(), id.into());
        }
        m.insert("level".into(), level.into());
        m.insert("code".into(), code.into());
        if let Some(p) = path {
            m.insert("path".into(), p.into());
        }
        m.insert("message".into(), message.to_string().into());
        self.send(Json::Object(m));
    }

    /// Success acknowledgement, only for envelopes that carry an id.
    fn ack(&self, id: Option<&str>, message: String) {
        if id.is_some() {
            self.status("info", "Ok", message, id, None);
        }
    }

    async fn handle(&mut self, text: &str) {
        let env: Json = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return self.status("error", "BadJson", e, None, None),
        };
        let Some(obj) = env.as_object() else {
            return self.status("error", "BadEnvelope", "envelope must be a JSON object", None, None);
        };
        let id = match obj.get("id") {
            None => None,
            Some(Json::String(s)) => Some(s.clone()),
            Some(_) => return self.status("error", "BadEnvelope", "id must be a string", None, Some("id")),
        };
        let id = id.as_deref();
        let field = |name: &str| obj.get(name).and_then(Json::as_str);
        match obj.get("op").and_then(Json::as_str) {
            Some("subscribe") => match field("topic") {
                Some(t) => self.subscribe(t, id),
                None => self.status("error", "BadEnvelope", "subscribe needs a topic", id, Some("topic")),
            },
            Some("unsubscribe") => match field("topic") {
                Some(t) => self.unsubscribe(t, id),
                None => self.status("error", "BadEnvelope", "unsubscribe needs a topic", id, Some("topic")),
            },
            Some("publish") => match (field("topic"), obj.get("payload")) {
                (Some(t), Some(p)) => self.publish(t, p, field("schema"), id),
                _ => self.status("error", "BadEnvelope", "publish needs topic and payload", id, None),
            },
            Some("call_service") => match (field("service"), obj.get("payload")) {
                (Some(s), Some(p)) => {
                    let timeout = obj
                        .get("timeout_ms")
                        .and_then(Json::as_u64)
                        .map_or(DEFAULT_SERVICE_TIMEOUT, Duration::from_millis);
                    self.call(s.to_string(), p.clone(), timeout, id).await
                }
                _ => self.status("error", "BadEnvelope", "call_service needs service and payload", id, None),
            },
            Some(op) => self.status("error", "BadOp", format!("unsupported op {op:?}"), id, Some("op")),
            None => self.status("error", "BadEnvelope", "missing op", id, Some("op")),
        }
    }

    fn subscribe(&mut self, topic: &str, id: Option<&str>) {
        let bus = self.node.bus().clone();
        let Some(schema) = crate::bus::resolve_name(topic).ok().and_then(|t| bus.topic_schema(&t)) else {
            return self.status("error", "UnknownTopic", format!("no topic {topic}"), id, Some("topic"));
        };
        let topic = crate::bus::resolve_name(topic).expect("resolved above");
        if self.subscriptions.contains_key(&topic) {
            return self.ack(id, format!("subscribed {topic}"));
        }
        let out = self.outbox.clone();
        let is_image = schema.name == names::IMAGE;
        let interval = if is_image && self.cfg.image_rate > 0.0 {
            Duration::from_secs_f64(1.0 / self.cfg.image_rate)
        } else {
            Duration::ZERO
        };
        // A queue of one keeps only the newest frame while throttled.
        let cap = if is_image { 1 } else { self.cfg.queue };
        let name = topic.clone();
        let mut next_slot = Instant::now();
        let sub = self.node.subscribe(&topic, &schema.name, cap, move |m| {
            if !interval.is_zero() {
                let now = Instant::now();
                if now < next_slot {
                    std::thread::sleep(next_slot - now);
                }
                next_slot = Instant::now().max(next_slot) + interval;
            }
            let env = json!({"op": "publish", "topic": name, "payload": message_to_json(&m)});
            out.push(env.to_string(), true);
        });
        match sub {
            Ok(sub) => {
                self.ack(id, format!("subscribed {topic}"));
                self.subscriptions.insert(topic, sub);
            }
            Err(e) => self.status("error", bus_code(&e), e, id, Some("topic")),
        }
    }

    fn unsubscribe(&mut self, topic: &str, id: Option<&str>) {
        let key = crate::bus::resolve_name(topic).unwrap_or_else(|_| topic.to_string());
        if self.subscriptions.remove(&key).is_none() {
            self.status("error", "NotSubscribed", format!("not subscribed to {topic}"), id, Some("topic"));
        } else {
            self.ack(id, format!("unsubscribed {key}"));
        }
    }

    fn publish(&mut self, topic: &str, payload: &Json, schema_hint: Option<&str>, id: Option<&str>) {
        let Ok(key) = crate::bus::resolve_name(topic) else {
            return self.status("error", "InvalidName", format!("invalid topic {topic:?}"), id, Some("topic"));
        };
        if !self.publishers.contains_key(&key) {
            let bus = self.node.bus();
            let schema = match (bus.topic_schema(&key), schema_hint) {
                (Some(s), _) => s.name.clone(),
                (None, Some(hint)) => hint.to_string(),
                (None, None) => {
                    return self.status("error", "UnknownTopic", format!("no topic {topic}"), id, Some("topic"))
                }
            };
            match self.node.advertise(&key, &schema) {
                Ok(p) => {
                    self.publishers.insert(key.clone(), p);
                }
                Err(BusError::UnknownSchema(s)) => {
                    return self.status("error", "UnknownSchema", format!("unknown schema {s}"), id, Some("schema"))
                }
                Err(e) => return self.status("error", bus_code(&e), e, id, Some("topic")),
            }
        }
        let publisher = &self.publishers[&key];
        let msg = match json_to_message(payload, publisher.schema()) {
            Ok(m) => m,
            Err(e) => {
                let path = format!("payload.{}", e.path());
                return self.status("error", "SchemaViolation", e, id, Some(&path));
            }
        };
        match publisher.publish(msg) {
            Ok(()) => self.ack(id, format!("published {key}")),
            Err(e) => self.status("error", bus_code(&e), e, id, None),
        }
    }

    async fn call(&mut self, service: String, payload: Json, timeout: Duration, id: Option<&str>) {
        let respond_err = |s: &Session, code: &str, message: String, path: Option<&str>| {
            s.status("error", code, &message, id, path);
            let mut m = Map::new();
            m.insert("op".into(), "service_response".into());
            if let Some(id) = id {
                m.insert("id".into(), id.into());
            }
            m.insert("service".into(), service.clone().into());
            m.insert("result".into(), false.into());
            m.insert("error".into(), code.into());
            s.send(Json::Object(m));
        };
        let name = crate::bus::resolve_name(&service).unwrap_or_else(|_| service.clone());
        let Some((req_schema, _)) = self.node.bus().service_schemas(&name) else {
            return respond_err(self, "UnknownService", format!("no service {service}"), Some("service"));
        };
        let request = match json_to_message(&payload, &req_schema) {
            Ok(m) => m,
            Err(e) => {
                let path = format!("payload.{}", e.path());
                return respond_err(self, "SchemaViolation", e.to_string(), Some(&path));
            }
        };
        let node = self.node.clone();
        let result = tokio::task::spawn_blocking(move || node.call_service(&name, request, timeout)).await;
        match result {
            Ok(Ok(resp)) => {
                let mut m = Map::new();
                m.insert("op".into(), "service_response".into());
                if let Some(id) = id {
                    m.insert("id".into(), id.into());
                }
                m.insert("service".into(), service.clone().into());
                m.insert("result".into(), true.into());
                m.insert("payload".into(), message_to_json(&resp));
                self.send(Json::Object(m));
            }
            Ok(Err(e)) => respond_err(self, bus_code(&e), e.to_string(), None),
            Err(e) => respond_err(self, "BusError", e.to_string(), None),
        }
    }
}
