//! Behavior triggers: one face command and one sound command per request,
//! completed by actuator acknowledgements.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::types::{BehaviorAck, BehaviorCommand, BehaviorProfile, ExpRequest, ExpStatus};
use crate::bus::{BusError, Node, Publisher, Subscription};
use crate::codec::std_schemas as names;
use crate::codec::TypedMessage;

pub const FACE_TOPIC: &str = "behavior/face";
pub const SOUND_TOPIC: &str = "behavior/sound";
pub const ACK_TOPIC: &str = "behavior/ack";
pub const DEFAULT_ACK_TIMEOUT: Duration = Duration::from_millis(2000);

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Bus(#[from] BusError),
}

struct Pending {
    request: ExpRequest,
    deadline: Instant,
    face_acked: bool,
    sound_acked: bool,
}

impl Pending {
    fn complete_if_acked(&mut self) {
        if self.request.status == ExpStatus::Dispatched && self.face_acked && self.sound_acked {
            self.advance(ExpStatus::Completed, None);
        }
    }

    fn advance(&mut self, next: ExpStatus, error: Option<String>) {
        if self.request.status.can_become(next) {
            self.request.status = next;
            self.request.history.push(next);
            if error.is_some() {
                self.request.error = error;
            }
        }
    }
}

#[derive(Default)]
struct Shared {
    requests: Mutex<HashMap<String, Pending>>,
    changed: Condvar,
    stop: AtomicBool,
}

impl Shared {
    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Pending>> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn on_ack(&self, ack: BehaviorAck) {
        let mut map = self.lock();
        let Some(p) = map.get_mut(&ack.request_id) else { return };
        if p.request.status.is_terminal() {
            return;
        }
        if !ack.ok {
            p.advance(ExpStatus::Failed, Some(format!("actuator rejected {} command", ack.kind)));
        } else {
            match ack.kind.as_str() {
                "face" => p.face_acked = true,
                "sound" => p.sound_acked = true,
                _ => return,
            }
            p.complete_if_acked();
        }
        self.changed.notify_all();
    }

    fn expire(&self) {
        let mut map = self.lock();
        while !self.stop.load(Ordering::SeqCst) {
            let now = Instant::now();
            let mut next: Option<Instant> = None;
            for p in map.values_mut().filter(|p| !p.request.status.is_terminal()) {
                if p.deadline <= now {
                    p.advance(ExpStatus::Failed, Some("no actuator acknowledgement before timeout".into()));
                    self.changed.notify_all();
                } else {
                    next = Some(next.map_or(p.deadline, |n| n.min(p.deadline)));
                }
            }
            let wait = next.map_or(Duration::from_millis(200), |n| n.saturating_duration_since(now));
            map = self.changed.wait_timeout(map, wait).unwrap_or_else(|e| e.into_inner()).0;
        }
    }
}

/// Publishes behavior commands and tracks each request until it completes
/// or times out.
pub struct ExpPipeline {
    node: Node,
    face: Publisher,
    sound: Publisher,
    dispatch: Mutex<()>,
    shared: Arc<Shared>,
    counter: AtomicU64,
    timeout: Duration,
    _acks: Subscription,
    watchdog: Option<JoinHandle<()>>,
}

impl ExpPipeline {
    pub fn new(node: Node, timeout: Duration) -> Result<ExpPipeline, BusError> {
        let face = node.advertise(FACE_TOPIC, names::BEHAVIOR_COMMAND)?;
        let sound = node.advertise(SOUND_TOPIC, names::BEHAVIOR_COMMAND)?;
        let shared = Arc::new(Shared::default());
        let s = shared.clone();
        let acks = node.subscribe(ACK_TOPIC, names::BEHAVIOR_ACK, 256, move |m| {
            if let Ok(ack) = BehaviorAck::from_message(&m) {
                s.on_ack(ack);
            }
        })?;
        let s = shared.clone();
        let watchdog = thread::Builder::new()
            .name("exp-watchdog".into())
            .spawn(move || s.expire())
            .expect("spawn watchdog");
        Ok(ExpPipeline {
            node,
            face,
            sound,
            dispatch: Mutex::new(()),
            shared,
            counter: AtomicU64::new(0),
            timeout,
            _acks: acks,
            watchdog: Some(watchdog),
        })
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Accepts and dispatches a trigger for an existing profile.
    pub fn trigger(&self, profile: &BehaviorProfile) -> Result<ExpRequest, ExpError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let request_id = format!("exp-{n:06}");
        let requested_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
        let request = ExpRequest {
            request_id: request_id.clone(),
            profile_id: profile.id.clone(),
            requested_at,
            status: ExpStatus::Accepted,
            history: vec![ExpStatus::Accepted],
            error: None,
        };
        self.shared.lock().insert(
            request_id.clone(),
            Pending { request, deadline: Instant::now() + self.timeout, face_acked: false, sound_acked: false },
        );
        let sent = {
            let _g = self.dispatch.lock().unwrap_or_else(|e| e.into_inner());
            let cmd = |kind: &str, asset: &str| BehaviorCommand {
                request_id: request_id.clone(),
                kind: kind.into(),
                asset: asset.into(),
            };
            self.face
                .publish_typed(&cmd("face", &profile.face_asset))
                .and_then(|_| self.sound.publish_typed(&cmd("sound", &profile.sound_asset)))
        };
        {
            let mut map = self.shared.lock();
            let p = map.get_mut(&request_id).expect("inserted above");
            match &sent {
                Ok(()) => {
                    p.advance(ExpStatus::Dispatched, None);
                    p.complete_if_acked();
                }
                Err(e) => p.advance(ExpStatus::Failed, Some(e.to_string())),
            }
        }
        self.shared.changed.notify_all();
        sent?;
        Ok(self.get(&request_id).expect("inserted above"))
    }

    pub fn get(&self, request_id: &str) -> Option<ExpRequest> {
        self.shared.lock().get(request_id).map(|p| p.request.clone())
    }

    /// Blocks until the request is terminal or `limit` elapses.
    pub fn wait(&self, request_id: &str, limit: Duration) -> Option<ExpRequest> {
        let end = Instant::now() + limit;
        let mut map = self.shared.lock();
        loop {
            let req = map.get(request_id)?.request.clone();
            let now = Instant::now();
            if req.status.is_terminal() || now >= end {
                return Some(req);
            }
            map = self.shared.changed.wait_timeout(map, end - now).unwrap_or_else(|e| e.into_inner()).0;
        }
    }
}

impl Drop for ExpPipeline {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.changed.notify_all();
        if let Some(h) = self.watchdog.take() {
            let _ = h.join();
        }
    }
}
