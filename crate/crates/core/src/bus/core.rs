use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, OnceLock, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::thread::{self, JoinHandle, ThreadId};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{GraphInfo, NodeInfo, ServiceInfo, TopicInfo};
use super::params::{ParamError, Params};
use super::queue::{DropOldestQueue, Pop};
use crate::codec::{ConformanceError, MessageSchema, MessageValue, SchemaRegistry, TypedMessage};

/// Messages are immutable once published and shared between subscribers.
pub type Message = Arc<MessageValue>;

pub const DEFAULT_SERVICE_TIMEOUT: Duration = Duration::from_millis(2000);

/// Node taxonomy: I/O nodes, pipeline routers, skill services, and nodes
/// attached from outside the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Basic,
    Middleware,
    Service,
    External,
}

impl Tier {
    pub fn parse(s: &str) -> Option<Tier> {
        Some(match s {
            "basic" => Tier::Basic,
            "middleware" => Tier::Middleware,
            "service" | "services" => Tier::Service,
            "external" => Tier::External,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Basic => "basic",
            Tier::Middleware => "middleware",
            Tier::Service => "service",
            Tier::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BusError {
    #[error("name {0:?} is already in use")]
    NameInUse(String),
    #[error("invalid graph name {0:?}")]
    InvalidName(String),
    #[error("topic {topic} is bound to {bound}, not {requested}")]
    SchemaConflict { topic: String, bound: String, requested: String },
    #[error("message does not match the schema of {topic}: {source}")]
    SchemaMismatch { topic: String, source: ConformanceError },
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error("publisher on {0} is closed")]
    PublisherClosed(String),
    #[error("node {0} has been shut down")]
    NodeClosed(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("call to {service} timed out after {timeout_ms} ms")]
    Timeout { service: String, timeout_ms: u64 },
    #[error("service handler failed: {0}")]
    HandlerError(String),
    #[error(transparent)]
    BadParam(#[from] ParamError),
}

/// Canonical graph name: leading slash, `[A-Za-z0-9_]` segments.
pub fn resolve_name(name: &str) -> Result<String, BusError> {
    let trimmed = name.trim();
    let body = trimmed.strip_prefix('/').unwrap_or(trimmed);
    let valid = !body.is_empty()
        && body.split('/').all(|seg| {
            !seg.is_empty() && seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        });
    if valid {
        Ok(format!("/{body}"))
    } else {
        Err(BusError::InvalidName(name.to_string()))
    }
}

pub type ServiceFn = dyn Fn(&MessageValue) -> Result<MessageValue, String> + Send + Sync;

struct NodeRecord {
    id: u64,
    tier: Tier,
}

struct SubShared {
    topic: String,
    queue: DropOldestQueue<Message>,
    worker: Mutex<Option<JoinHandle<()>>>,
    worker_thread: OnceLock<ThreadId>,
    delivered: AtomicU64,
    faults: AtomicU64,
}

impl SubShared {
    /// Closes the queue and waits for an in-flight callback to return.
    fn stop(&self) {
        self.queue.close();
        if self.worker_thread.get() == Some(&thread::current().id()) {
            return;
        }
        let handle = self.worker.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(h) = handle {
            let _ = h.join();
        }
    }
}

struct SubEntry {
    node: String,
    shared: Arc<SubShared>,
}

struct TopicState {
    schema: Arc<MessageSchema>,
    publishers: BTreeMap<u64, String>,
    subscribers: BTreeMap<u64, SubEntry>,
}

struct ServiceState {
    id: u64,
    request: Arc<MessageSchema>,
    response: Arc<MessageSchema>,
    provider: String,
    handler: Arc<ServiceFn>,
}

#[derive(Default)]
struct State {
    nodes: BTreeMap<String, NodeRecord>,
    topics: BTreeMap<String, TopicState>,
    services: BTreeMap<String, ServiceState>,
}

struct BusInner {
    registry: Arc<SchemaRegistry>,
    state: RwLock<State>,
    ids: AtomicU64,
}

/// In-process message bus. Cloning shares the same graph.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<BusInner>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

impl Default for Bus {
    fn default() -> Self {
        Bus::with_std()
    }
}

impl Bus {
    pub fn new(registry: Arc<SchemaRegistry>) -> Bus {
        Bus {
            inner: Arc::new(BusInner {
                registry,
                state: RwLock::new(State::default()),
                ids: AtomicU64::new(1),
            }),
        }
    }

    /// Bus with the standard schema set registered.
    pub fn with_std() -> Bus {
        Bus::new(Arc::new(SchemaRegistry::with_std()))
    }

    pub fn registry(&self) -> &Arc<SchemaRegistry> {
        &self.inner.registry
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.inner.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.inner.state.write().unwrap_or_else(|e| e.into_inner())
    }

    fn next_id(&self) -> u64 {
        self.inner.ids.fetch_add(1, Ordering::Relaxed)
    }

    pub fn create_node(&self, name: &str, tier: Tier) -> Result<Node, BusError> {
        self.create_node_with(name, tier, Params::new(), BTreeMap::new())
    }

    /// Creates a node with parameters and topic remappings (`from -> to`).
    pub fn create_node_with(
        &self,
        name: &str,
        tier: Tier,
        params: Params,
        remaps: BTreeMap<String, String>,
    ) -> Result<Node, BusError> {
        let name = resolve_name(name)?;
        let mut resolved = BTreeMap::new();
        for (from, to) in remaps {
            resolved.insert(resolve_name(&from)?, resolve_name(&to)?);
        }
        let id = self.next_id();
        {
            let mut st = self.write();
            if st.nodes.contains_key(&name) {
                return Err(BusError::NameInUse(name));
            }
            st.nodes.insert(name.clone(), NodeRecord { id, tier });
        }
        Ok(Node {
            inner: Arc::new(NodeInner {
                bus: self.clone(),
                name,
                id,
                tier,
                params,
                remaps: resolved,
                alive: AtomicBool::new(true),
            }),
        })
    }

    fn remove_node(&self, name: &str, id: u64) {
        let stopped: Vec<Arc<SubShared>> = {
            let mut st = self.write();
            if st.nodes.get(name).map(|n| n.id) != Some(id) {
                return;
            }
            st.nodes.remove(name);
            let mut stopped = Vec::new();
            for topic in st.topics.values_mut() {
                topic.publishers.retain(|_, owner| owner != name);
                topic.subscribers.retain(|_, e| {
                    if e.node == name {
                        stopped.push(e.shared.clone());
                        false
                    } else {
                        true
                    }
                });
            }
            st.topics.retain(|_, t| !t.publishers.is_empty() || !t.subscribers.is_empty());
            st.services.retain(|_, s| s.provider != name);
            stopped
        };
        for s in stopped {
            s.stop();
        }
    }

    fn check_node(&self, st: &State, name: &str, id: u64) -> Result<(), BusError> {
        match st.nodes.get(name) {
            Some(n) if n.id == id => Ok(()),
            _ => Err(BusError::NodeClosed(name.to_string())),
        }
    }

    fn schema(&self, name: &str) -> Result<Arc<MessageSchema>, BusError> {
        self.inner.registry.get(name).ok_or_else(|| BusError::UnknownSchema(name.to_string()))
    }

    /// Binds `topic` to `schema` if unbound; errors if bound differently.
    fn bind<'a>(
        st: &'a mut State,
        topic: &str,
        schema: &Arc<MessageSchema>,
    ) -> Result<&'a mut TopicState, BusError> {
        let entry = st.topics.entry(topic.to_string()).or_insert_with(|| TopicState {
            schema: schema.clone(),
            publishers: BTreeMap::new(),
            subscribers: BTreeMap::new(),
        });
        if entry.schema.name != schema.name {
            return Err(BusError::SchemaConflict {
                topic: topic.to_string(),
                bound: entry.schema.name.clone(),
                requested: schema.name.clone(),
            });
        }
        Ok(entry)
    }

    fn add_subscriber(
        &self,
        node: &NodeInner,
        topic: &str,
        schema: &str,
        capacity: usize,
    ) -> Result<(u64, Arc<SubShared>), BusError> {
        let topic = node.resolve_topic(topic)?;
        let schema = self.schema(schema)?;
        let id = self.next_id();
        let shared = Arc::new(SubShared {
            topic: topic.clone(),
            queue: DropOldestQueue::new(capacity),
            worker: Mutex::new(None),
            worker_thread: OnceLock::new(),
            delivered: AtomicU64::new(0),
            faults: AtomicU64::new(0),
        });
        let mut st = self.write();
        self.check_node(&st, &node.name, node.id)?;
        let t = Self::bind(&mut st, &topic, &schema)?;
        t.subscribers.insert(id, SubEntry { node: node.name.clone(), shared: shared.clone() });
        Ok((id, shared))
    }

    fn remove_subscriber(&self, topic: &str, id: u64) -> Option<Arc<SubShared>> {
        let mut st = self.write();
        let t = st.topics.get_mut(topic)?;
        let entry = t.subscribers.remove(&id)?;
        if t.publishers.is_empty() && t.subscribers.is_empty() {
            st.topics.remove(topic);
        }
        Some(entry.shared)
    }

    fn remove_publisher(&self, topic: &str, id: u64) {
        let mut st = self.write();
        if let Some(t) = st.topics.get_mut(topic) {
            t.publishers.remove(&id);
            if t.publishers.is_empty() && t.subscribers.is_empty() {
                st.topics.remove(topic);
            }
        }
    }

    /// Consistent snapshot of nodes, topics and services.
    pub fn graph_info(&self) -> GraphInfo {
        let st = self.read();
        let nodes = st
            .nodes
            .iter()
            .map(|(name, n)| NodeInfo { name: name.clone(), tier: n.tier })
            .collect();
        let topics = st
            .topics
            .iter()
            .map(|(name, t)| {
                let mut publishers: Vec<String> = t.publishers.values().cloned().collect();
                let mut subscribers: Vec<String> =
                    t.subscribers.values().map(|e| e.node.clone()).collect();
                let publisher_count = publishers.len();
                let subscriber_count = subscribers.len();
                publishers.sort();
                publishers.dedup();
                subscribers.sort();
                subscribers.dedup();
                TopicInfo {
                    name: name.clone(),
                    schema: t.schema.name.clone(),
                    publishers,
                    subscribers,
                    publisher_count,
                    subscriber_count,
                }
            })
            .collect();
        let services = st
            .services
            .iter()
            .map(|(name, s)| ServiceInfo {
                name: name.clone(),
                request: s.request.name.clone(),
                response: s.response.name.clone(),
                provider: s.provider.clone(),
            })
            .collect();
        GraphInfo { nodes, topics, services }
    }

    /// Schema bound to a topic, if any endpoint exists.
    pub fn topic_schema(&self, topic: &str) -> Option<Arc<MessageSchema>> {
        let topic = resolve_name(topic).ok()?;
        self.read().topics.get(&topic).map(|t| t.schema.clone())
    }

    pub fn service_schemas(&self, service: &str) -> Option<(Arc<MessageSchema>, Arc<MessageSchema>)> {
        let service = resolve_name(service).ok()?;
        self.read().services.get(&service).map(|s| (s.request.clone(), s.response.clone()))
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        let Ok(topic) = resolve_name(topic) else { return 0 };
        self.read().topics.get(&topic).map_or(0, |t| t.subscribers.len())
    }

    fn call(
        &self,
        service: &str,
        request: MessageValue,
        timeout: Duration,
    ) -> Result<MessageValue, BusError> {
        let name = resolve_name(service)?;
        let (handler, req_schema, resp_schema) = {
            let st = self.read();
            let s = st.services.get(&name).ok_or_else(|| BusError::NotFound(name.clone()))?;
            (s.handler.clone(), s.request.clone(), s.response.clone())
        };
        request
            .check_schema(&req_schema)
            .map_err(|source| BusError::SchemaMismatch { topic: name.clone(), source })?;
        let (tx, rx) = mpsc::sync_channel(1);
        let svc = name.clone();
        thread::Builder::new()
            .name(format!("svc{name}"))
            .spawn(move || {
                let result = match catch_unwind(AssertUnwindSafe(|| handler(&request))) {
                    Ok(Ok(resp)) => resp
                        .check_schema(&resp_schema)
                        .map(|_| resp)
                        .map_err(|e| BusError::HandlerError(format!("bad response: {e}"))),
                    Ok(Err(msg)) => Err(BusError::HandlerError(msg)),
                    Err(_) => Err(BusError::HandlerError(format!("handler for {svc} panicked"))),
                };
                // The caller may have timed out and dropped the receiver.
                let _ = tx.send(result);
            })
            .expect("spawn service thread");
        match rx.recv_timeout(timeout) {
            Ok(r) => r,
            Err(_) => Err(BusError::Timeout { service: name, timeout_ms: timeout.as_millis() as u64 }),
        }
    }
}

struct NodeInner {
    bus: Bus,
    name: String,
    id: u64,
    tier: Tier,
    params: Params,
    remaps: BTreeMap<String, String>,
    alive: AtomicBool,
}

impl NodeInner {
    fn resolve_topic(&self, topic: &str) -> Result<String, BusError> {
        let t = resolve_name(topic)?;
        Ok(self.remaps.get(&t).cloned().unwrap_or(t))
    }
}

impl Drop for NodeInner {
    fn drop(&mut self) {
        if self.alive.swap(false, Ordering::SeqCst) {
            self.bus.remove_node(&self.name, self.id);
        }
    }
}

/// A named participant in the graph. Clones share one registration; the
/// node leaves the graph on `shutdown` or when the last clone drops.
#[derive(Clone)]
pub struct Node {
    inner: Arc<NodeInner>,
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Node").field("name", &self.inner.name).field("tier", &self.inner.tier).finish()
    }
}

impl Node {
    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn tier(&self) -> Tier {
        self.inner.tier
    }

    pub fn bus(&self) -> &Bus {
        &self.inner.bus
    }

    pub fn params(&self) -> &Params {
        &self.inner.params
    }

    /// Applies this node's remappings to a topic name.
    pub fn resolve_topic(&self, topic: &str) -> Result<String, BusError> {
        self.inner.resolve_topic(topic)
    }

    pub fn is_alive(&self) -> bool {
        self.inner.alive.load(Ordering::SeqCst)
    }

    /// Removes the node with all of its publishers, subscriptions and services.
    pub fn shutdown(&self) {
        if self.inner.alive.swap(false, Ordering::SeqCst) {
            self.inner.bus.remove_node(&self.inner.name, self.inner.id);
        }
    }

    pub fn advertise(&self, topic: &str, schema: &str) -> Result<Publisher, BusError> {
        let bus = &self.inner.bus;
        let topic = self.resolve_topic(topic)?;
        let schema = bus.schema(schema)?;
        let id = bus.next_id();
        let mut st = bus.write();
        bus.check_node(&st, &self.inner.name, self.inner.id)?;
        let t = Bus::bind(&mut st, &topic, &schema)?;
        t.publishers.insert(id, self.inner.name.clone());
        Ok(Publisher { bus: bus.clone(), topic, schema, id })
    }

    /// Callback subscription. Callbacks for one subscription run serially on
    /// a dedicated thread; a panicking callback is counted and skipped.
    pub fn subscribe<F>(
        &self,
        topic: &str,
        schema: &str,
        queue_capacity: usize,
        callback: F,
    ) -> Result<Subscription, BusError>
    where
        F: FnMut(Message) + Send + 'static,
    {
        let (id, shared) = self.inner.bus.add_subscriber(&self.inner, topic, schema, queue_capacity)?;
        let worker_shared = shared.clone();
        let mut callback = callback;
        let handle = thread::Builder::new()
            .name(format!("sub{}", shared.topic))
            .spawn(move || {
                let _ = worker_shared.worker_thread.set(thread::current().id());
                loop {
                    match worker_shared.queue.pop_timeout(None) {
                        Pop::Item(msg) => {
                            if catch_unwind(AssertUnwindSafe(|| callback(msg))).is_ok() {
                                worker_shared.delivered.fetch_add(1, Ordering::Relaxed);
                            } else {
                                worker_shared.faults.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                        Pop::Closed => break,
                        Pop::Empty => {}
                    }
                }
            })
            .expect("spawn subscription worker");
        *shared.worker.lock().unwrap_or_else(|e| e.into_inner()) = Some(handle);
        Ok(Subscription { bus: self.inner.bus.clone(), id, shared })
    }

    /// Pull-style subscription; messages are taken with `recv*`.
    pub fn subscribe_queue(
        &self,
        topic: &str,
        schema: &str,
        queue_capacity: usize,
    ) -> Result<Receiver, BusError> {
        let (id, shared) = self.inner.bus.add_subscriber(&self.inner, topic, schema, queue_capacity)?;
        Ok(Receiver { bus: self.inner.bus.clone(), id, shared })
    }

    pub fn register_service<F>(
        &self,
        service: &str,
        request_schema: &str,
        response_schema: &str,
        handler: F,
    ) -> Result<ServiceHandle, BusError>
    where
        F: Fn(&MessageValue) -> Result<MessageValue, String> + Send + Sync + 'static,
    {
        let bus = &self.inner.bus;
        let name = resolve_name(service)?;
        let request = bus.schema(request_schema)?;
        let response = bus.schema(response_schema)?;
        let id = bus.next_id();
        let mut st = bus.write();
        bus.check_node(&st, &self.inner.name, self.inner.id)?;
        if st.services.contains_key(&name) {
            return Err(BusError::NameInUse(name));
        }
        st.services.insert(
            name.clone(),
            ServiceState {
                id,
                request,
                response,
                provider: self.inner.name.clone(),
                handler: Arc::new(handler),
            },
        );
        Ok(ServiceHandle { bus: bus.clone(), name, id })
    }

    pub fn call_service(
        &self,
        service: &str,
        request: MessageValue,
        timeout: Duration,
    ) -> Result<MessageValue, BusError> {
        if !self.is_alive() {
            return Err(BusError::NodeClosed(self.inner.name.clone()));
        }
        self.inner.bus.call(service, request, timeout)
    }
}

/// Publishing endpoint on one topic.
pub struct Publisher {
    bus: Bus,
    topic: String,
    schema: Arc<MessageSchema>,
    id: u64,
}

impl fmt::Debug for Publisher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Publisher").field("topic", &self.topic).finish()
    }
}

impl Publisher {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn schema(&self) -> &Arc<MessageSchema> {
        &self.schema
    }

    /// Delivers to every current subscriber. With no subscribers the
    /// message is discarded.
    pub fn publish(&self, value: MessageValue) -> Result<(), BusError> {
        value
            .check_schema(&self.schema)
            .map_err(|source| BusError::SchemaMismatch { topic: self.topic.clone(), source })?;
        let msg = Arc::new(value);
        let st = self.bus.read();
        let t = st
            .topics
            .get(&self.topic)
            .filter(|t| t.publishers.contains_key(&self.id))
            .ok_or_else(|| BusError::PublisherClosed(self.topic.clone()))?;
        for sub in t.subscribers.values() {
            sub.shared.queue.push(msg.clone());
        }
        Ok(())
    }

    pub fn publish_typed<T: TypedMessage>(&self, value: &T) -> Result<(), BusError> {
        let msg = MessageValue { schema: self.schema.clone(), fields: value.to_fields() };
        self.publish(msg)
    }

    pub fn subscriber_count(&self) -> usize {
        self.bus.read().topics.get(&self.topic).map_or(0, |t| t.subscribers.len())
    }
}

impl Drop for Publisher {
    fn drop(&mut self) {
        self.bus.remove_publisher(&self.topic, self.id);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SubscriptionStats {
    /// Messages handed to the callback (callback subscriptions) or
    /// received via `recv` (queue subscriptions).
    pub delivered: u64,
    /// Messages evicted from a full queue.
    pub dropped: u64,
    /// Callbacks that panicked.
    pub faults: u64,
}

/// Callback subscription handle; unsubscribes on drop.
pub struct Subscription {
    bus: Bus,
    id: u64,
    shared: Arc<SubShared>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.shared.topic
    }

    pub fn stats(&self) -> SubscriptionStats {
        SubscriptionStats {
            delivered: self.shared.delivered.load(Ordering::Relaxed),
            dropped: self.shared.queue.dropped(),
            faults: self.shared.faults.load(Ordering::Relaxed),
        }
    }

    /// After this returns no further callbacks run.
    pub fn unsubscribe(self) {}
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.bus.remove_subscriber(&self.shared.topic, self.id);
        self.shared.stop();
    }
}

/// Pull subscription handle; unsubscribes on drop.
pub struct Receiver {
    bus: Bus,
    id: u64,
    shared: Arc<SubShared>,
}

impl Receiver {
    pub fn topic(&self) -> &str {
        &self.shared.topic
    }

    /// Waits up to `timeout`; `None` on timeout or after the node shut down.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Message> {
        match self.shared.queue.pop_timeout(Some(timeout)) {
            Pop::Item(m) => {
                self.shared.delivered.fetch_add(1, Ordering::Relaxed);
                Some(m)
            }
            _ => None,
        }
    }

    pub fn try_recv(&self) -> Option<Message> {
        self.recv_timeout(Duration::ZERO)
    }

    pub fn is_closed(&self) -> bool {
        self.shared.queue.is_closed()
    }

    pub fn pending(&self) -> usize {
        self.shared.queue.len()
    }

    pub fn capacity(&self) -> usize {
        self.shared.queue.capacity()
    }

    pub fn stats(&self) -> SubscriptionStats {
        SubscriptionStats {
            delivered: self.shared.delivered.load(Ordering::Relaxed),
            dropped: self.shared.queue.dropped(),
            faults: 0,
        }
    }

    pub fn enqueued(&self) -> u64 {
        self.shared.queue.enqueued()
    }
}

impl Drop for Receiver {
    fn drop(&mut self) {
        self.bus.remove_subscriber(&self.shared.topic, self.id);
        self.shared.queue.close();
    }
}

/// Registered service; unregisters on drop.
pub struct ServiceHandle {
    bus: Bus,
    name: String,
    id: u64,
}

impl ServiceHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unregister(self) {}
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let mut st = self.bus.write();
        if st.services.get(&self.name).map(|s| s.id) == Some(self.id) {
            st.services.remove(&self.name);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{StringMsg, Value};
    use std::sync::mpsc::channel;
    use std::time::Instant;

    fn string_msg(bus: &Bus, s: &str) -> MessageValue {
        StringMsg::new(s).to_message(bus.registry()).unwrap()
    }

    fn text(m: &Message) -> String {
        m.get("data").and_then(Value::as_str).unwrap().to_string()
    }

    #[test]
    fn names_normalize() {
        assert_eq!(resolve_name("image_raw").unwrap(), "/image_raw");
        assert_eq!(resolve_name("/gaze_position/gaze_dir").unwrap(), "/gaze_position/gaze_dir");
        assert!(resolve_name("").is_err());
        assert!(resolve_name("a//b").is_err());
        assert!(resolve_name("a b").is_err());
    }

    #[test]
    fn node_lifecycle() {
        let bus = Bus::with_std();
        let n = bus.create_node("video_stream", Tier::Basic).unwrap();
        assert_eq!(bus.graph_info().node("/video_stream").unwrap().tier, Tier::Basic);
        assert_eq!(
            bus.create_node("/video_stream", Tier::Basic).unwrap_err(),
            BusError::NameInUse("/video_stream".into())
        );
        let _sub = n.subscribe_queue("image_raw", "std/Image", 4).unwrap();
        n.shutdown();
        let g = bus.graph_info();
        assert!(g.is_empty(), "{g:?}");
        assert!(matches!(n.advertise("x", "std/String"), Err(BusError::NodeClosed(_))));
        // The name is free again.
        bus.create_node("video_stream", Tier::Basic).unwrap();
    }

    #[test]
    fn drop_of_last_clone_shuts_down() {
        let bus = Bus::with_std();
        let n = bus.create_node("a", Tier::Service).unwrap();
        let n2 = n.clone();
        drop(n);
        assert_eq!(bus.graph_info().nodes.len(), 1);
        drop(n2);
        assert!(bus.graph_info().nodes.is_empty());
    }

    #[test]
    fn schema_binding() {
        let bus = Bus::with_std();
        let n = bus.create_node("cam", Tier::Basic).unwrap();
        let _p1 = n.advertise("image_raw", "std/Image").unwrap();
        let _p2 = n.advertise("image_raw", "std/Image").unwrap();
        assert_eq!(bus.graph_info().topic("/image_raw").unwrap().publisher_count, 2);
        match n.advertise("image_raw", "std/Twist") {
            Err(BusError::SchemaConflict { bound, requested, .. }) => {
                assert_eq!((bound.as_str(), requested.as_str()), ("std/Image", "std/Twist"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(n.subscribe_queue("image_raw", "std/String", 1), Err(BusError::SchemaConflict { .. })));
        assert!(matches!(n.advertise("t", "std/Nope"), Err(BusError::UnknownSchema(_))));
    }

    #[test]
    fn subscriber_binds_first() {
        let bus = Bus::with_std();
        let n = bus.create_node("n", Tier::Basic).unwrap();
        let _r = n.subscribe_queue("cmd_vel_wheel", "std/Twist", 1).unwrap();
        assert_eq!(bus.topic_schema("cmd_vel_wheel").unwrap().name, "std/Twist");
        assert!(n.advertise("cmd_vel_wheel", "std/String").is_err());
    }

    #[test]
    fn ordered_delivery_and_fan_out() {
        let bus = Bus::with_std();
        let a = bus.create_node("a", Tier::Basic).unwrap();
        let b = bus.create_node("b", Tier::Middleware).unwrap();
        let p = a.advertise("chat", "std/String").unwrap();
        let r1 = b.subscribe_queue("chat", "std/String", 200).unwrap();
        let (tx, rx) = channel();
        let _s = b
            .subscribe("chat", "std/String", 200, move |m| tx.send(text(&m)).unwrap())
            .unwrap();
        for i in 1..=100 {
            p.publish(string_msg(&bus, &i.to_string())).unwrap();
        }
        for i in 1..=100 {
            assert_eq!(text(&r1.recv_timeout(Duration::from_secs(1)).unwrap()), i.to_string());
            assert_eq!(rx.recv_timeout(Duration::from_secs(1)).unwrap(), i.to_string());
        }
        assert!(r1.try_recv().is_none());
    }

    #[test]
    fn late_subscriber_sees_only_later_messages() {
        let bus = Bus::with_std();
        let n = bus.create_node("n", Tier::Basic).unwrap();
        let p = n.advertise("chat", "std/String").unwrap();
        p.publish(string_msg(&bus, "early")).unwrap();
        let r = n.subscribe_queue("chat", "std/String", 8).unwrap();
        p.publish(string_msg(&bus, "late")).unwrap();
        assert_eq!(text(&r.try_recv().unwrap()), "late");
        assert!(r.try_recv().is_none());
    }

    #[test]
    fn publish_checks_schema() {
        let bus = Bus::with_std();
        let n = bus.create_node("n", Tier::Basic).unwrap();
        let p = n.advertise("cmd_vel_wheel", "std/Twist").unwrap();
        let err = p.publish(string_msg(&bus, "x")).unwrap_err();
        assert!(matches!(err, BusError::SchemaMismatch { .. }));
        // No subscribers: accepted and discarded.
        let zero = MessageValue::default_of(bus.registry().get("std/Twist").unwrap());
        p.publish(zero).unwrap();
    }

    #[test]
    fn capacity_one_keeps_first_and_newest() {
        let bus = Bus::with_std();
        let n = bus.create_node("n", Tier::Basic).unwrap();
        let p = n.advertise("chat", "std/String").unwrap();
        let (gate_tx, gate_rx) = channel::<()>();
        let (seen_tx, seen_rx) = channel();
        let (started_tx, started_rx) = channel();
        let sub = n
            .subscribe("chat", "std/String", 1, move |m| {
                let t = text(&m);
                if t == "1" {
                    started_tx.send(()).unwrap();
                    gate_rx.recv().unwrap();
                }
                seen_tx.send(t).unwrap();
            })
            .unwrap();
        p.publish(string_msg(&bus, "1")).unwrap();
        started_rx.recv_timeout(Duration::from_secs(2)).unwrap();
        for i in 2..=10 {
            p.publish(string_msg(&bus, &i.to_string())).unwrap();
        }
        gate_tx.send(()).unwrap();
        let seen: Vec<String> = (0..2).map(|_| seen_rx.recv_timeout(Duration::from_secs(2)).unwrap()).collect();
        assert_eq!(seen, ["1", "10"]);
        assert!(seen_rx.recv_timeout(Duration::from_millis(50)).is_err());
        assert_eq!(sub.stats(), SubscriptionStats { delivered: 2, dropped: 8, faults: 0 });
    }

    #[test]
    fn unsubscribe_stops_callbacks() {
        let bus = Bus::with_std();
        let n = bus.create_node("n", Tier::Basic).unwrap();
        let p = n.advertise("chat", "std/String").unwrap();
        let hits = Arc::new(AtomicU64::new(0));
        let h = hits.clone();
        let sub = n
            .subscribe("chat", "std/String", 16, move |_| {
                h.fetch_add(1, Ordering::SeqCst);
            })
            .unwrap();
        sub.unsubscribe();
        let before = hits.load(Ordering::SeqCst);
        p.publish(string_msg(&bus, "x")).unwrap();
        thread::sleep(Duration::from_millis(20));
        assert_eq!(hits.load(Ordering::SeqCst), before);
        assert_eq!(bus.graph_info().topic("/chat").unwrap().subscriber_count, 0);
    }

    #[test]
    fn panicking_callback_is_isolated() {
        let bus = Bus::with_std();
        let n = bus.create_node("n", Tier::Basic).unwrap();
        let p = n.advertise("chat", "std/String").unwrap();
        let bad = n.subscribe("chat", "std/String", 16, |_| panic!("injected")).unwrap();
        let good = n.subscribe_queue("chat", "std/String", 16).unwrap();
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        for i in 0..3 {
            p.publish(string_msg(&bus, &i.to_string())).unwrap();
        }
        let deadline = Instant::now() + Duration::from_secs(2);
        while bad.stats().faults < 3 && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        std::panic::set_hook(prev);
        assert_eq!(bad.stats().faults, 3);
        for i in 0..3 {
            assert_eq!(text(&good.try_recv().unwrap()), i.to_string());
        }
        p.publish(string_msg(&bus, "after")).unwrap();
        assert_eq!(text(&good.recv_timeout(Duration::from_secs(1)).unwrap()), "after");
    }

    #[test]
    fn services() {
        let bus = Bus::with_std();
        let n = bus.create_node("svc", Tier::Service).unwrap();
        let h = n
            .register_service("echo", "std/String", "std/String", |req| Ok(req.clone()))
            .unwrap();
        assert!(matches!(
            n.register_service("echo", "std/String", "std/String", |r| Ok(r.clone())),
            Err(BusError::NameInUse(_))
        ));
        let info = bus.graph_info();
        let s = info.service("/echo").unwrap();
        assert_eq!((s.provider.as_str(), s.request.as_str()), ("/svc", "std/String"));
        let resp = n.call_service("echo", string_msg(&bus, "r"), DEFAULT_SERVICE_TIMEOUT).unwrap();
        assert_eq!(resp, string_msg(&bus, "r"));
        drop(h);
        assert_eq!(
            n.call_service("echo", string_msg(&bus, "r"), DEFAULT_SERVICE_TIMEOUT).unwrap_err(),
            BusError::NotFound("/echo".into())
        );
        assert!(matches!(
            n.call_service("nope", string_msg(&bus, "r"), DEFAULT_SERVICE_TIMEOUT),
            Err(BusError::NotFound(_))
        ));
    }

    #[test]
    fn service_errors_and_timeout() {
        let bus = Bus::with_std();
        let n = bus.create_node("svc", Tier::Service).unwrap();
        let _f = n.register_service("fail", "std/String", "std/String", |_| Err("nope".into())).unwrap();
        let _s = n
            .register_service("slow", "std/String", "std/String", |r| {
                thread::sleep(Duration::from_millis(300));
                Ok(r.clone())
            })
            .unwrap();
        assert_eq!(
            n.call_service("fail", string_msg(&bus, ""), DEFAULT_SERVICE_TIMEOUT).unwrap_err(),
            BusError::HandlerError("nope".into())
        );
        let t0 = Instant::now();
        let err = n.call_service("slow", string_msg(&bus, ""), Duration::from_millis(50)).unwrap_err();
        assert!(matches!(err, BusError::Timeout { timeout_ms: 50, .. }));
        assert!(t0.elapsed() < Duration::from_millis(250));
        // The late reply goes nowhere; the next call is unaffected.
        thread::sleep(Duration::from_millis(350));
        let ok = n.call_service("slow", string_msg(&bus, "y"), DEFAULT_SERVICE_TIMEOUT).unwrap();
        assert_eq!(ok, string_msg(&bus, "y"));
    }

    #[test]
    fn remap_applies_to_endpoints() {
        let bus = Bus::with_std();
        let remap = BTreeMap::from([("in".to_string(), "/image_raw/landmarked".to_string())]);
        let n = bus.create_node_with("viewer", Tier::External, Params::new(), remap).unwrap();
        let r = n.subscribe_queue("in", "std/Image", 1).unwrap();
        assert_eq!(r.topic(), "/image_raw/landmarked");
        assert!(bus.graph_info().topic("/image_raw/landmarked").is_some());
    }

    #[test]
    fn graph_is_consistent_under_churn() {
        let bus = Bus::with_std();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let bus = bus.clone();
                thread::spawn(move || {
                    for j in 0..50 {
                        let n = bus.create_node(&format!("n{i}_{j}"), Tier::Basic).unwrap();
                        let _p = n.advertise("shared", "std/String").unwrap();
                        let _r = n.subscribe_queue("shared", "std/String", 2).unwrap();
                        assert!(bus.graph_info().is_consistent());
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(bus.graph_info().is_empty());
    }
}
