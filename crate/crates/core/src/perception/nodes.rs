//! Builtin vision nodes.
//!
//! | id                   | in                        | out                                   |
//! |----------------------|---------------------------|---------------------------------------|
//! | `video_stream`       | -                         | `image_raw`, `camera_info`            |
//! | `opencv_client`      | `image_raw`, `camera_info`| `image_cv2`                           |
//! | `landmark_detection` | `image_cv2`               | `landmarks`, `image_raw/landmarked`   |
//! | `face_emotion`       | `image_cv2`               | `face_emotion`                        |
//! | `gaze_detector`      | service `gaze_detector`   |                                       |
//! | `gaze_position`      | `landmarks`               | `/gaze_position/gaze_dir`             |
//!
//! Every subscribing node takes a `queue` parameter (default 64).

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::convert::{array_to_image, image_to_array};
use super::emotion::classify_emotion;
use super::face::{render_frame, Expression, Projection, Schedule, SyntheticScene};
use super::gaze::{estimate_gaze, GazeParams};
use super::landmarks::{backend_by_name, detect_landmarks, LandmarkBackend, LandmarkSet};
use super::overlay::render_overlay;
use crate::bag::BagReader;
use crate::bus::{BusError, Node, ParamError, Params, ParamsExt, Publisher};
use crate::codec::std_schemas as names;
use crate::codec::{CameraInfo, Header, ImageFrame, NdArrayFrame, StringMsg, TypedMessage};
use crate::launch::{sleep_unless, LaunchError, NodeFactories, NodeTask, RunningNode};

pub const IMAGE_RAW: &str = "image_raw";
pub const CAMERA_INFO: &str = "camera_info";
pub const IMAGE_CV2: &str = "image_cv2";
pub const LANDMARKS: &str = "landmarks";
pub const LANDMARKED: &str = "image_raw/landmarked";
pub const FACE_EMOTION: &str = "face_emotion";
pub const GAZE_DIR: &str = "/gaze_position/gaze_dir";
pub const GAZE_SERVICE: &str = "gaze_detector";

const DEFAULT_QUEUE: u64 = 64;

pub fn register(f: &mut NodeFactories) {
    f.insert("video_stream", |p| VideoConfig::from_params(p).map(drop), start_video);
    f.insert("opencv_client", validate_queue, start_convert);
    f.insert("landmark_detection", validate_detector, start_landmarks);
    f.insert("face_emotion", validate_detector, start_emotion);
    f.insert("gaze_detector", |p| GazeParams::from_params(p).map(drop), start_gaze_service);
    f.insert("gaze_position", validate_gaze_client, start_gaze_position);
}

fn bus_err(node: &Node) -> impl Fn(BusError) -> LaunchError + '_ {
    move |source| LaunchError::Bus { entry: node.name().to_string(), source }
}

fn queue(p: &Params) -> Result<usize, ParamError> {
    match p.u64_or("queue", DEFAULT_QUEUE)? {
        0 => Err(ParamError { key: "queue".into(), reason: "must be at least 1".into() }),
        n => Ok(n as usize),
    }
}

fn validate_queue(p: &Params) -> Result<(), ParamError> {
    queue(p).map(drop)
}

fn backend(p: &Params) -> Result<Box<dyn LandmarkBackend>, ParamError> {
    let name = p.str_or("backend", "fiducial")?;
    backend_by_name(name)
        .ok_or_else(|| ParamError { key: "backend".into(), reason: format!("unknown landmark backend {name:?}") })
}

fn validate_detector(p: &Params) -> Result<(), ParamError> {
    queue(p)?;
    backend(p).map(drop)
}

fn now_ns() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64)
}

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("video source unavailable: {0}")]
    SourceUnavailable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VideoSource {
    Synthetic(Schedule),
    Bag(PathBuf),
}

/// Parsed `video_stream` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoConfig {
    pub source: VideoSource,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// 0 means unbounded.
    pub max_frames: u64,
    pub start_delay: Duration,
}

impl VideoConfig {
    pub fn from_params(p: &Params) -> Result<Self, ParamError> {
        let bad = |key: &str, reason: String| ParamError { key: key.into(), reason };
        let fps = p.f64_or("fps", 15.0)?;
        if !(fps > 0.0 && fps <= 1000.0) {
            return Err(bad("fps", format!("{fps} is outside (0, 1000]")));
        }
        let width = p.u64_or("width", 320)?;
        let height = p.u64_or("height", 240)?;
        for (key, v) in [("width", width), ("height", height)] {
            if !(8..=4096).contains(&v) {
                return Err(bad(key, format!("{v} is outside 8..=4096")));
            }
        }
        let source = match p.str_or("source", "synthetic")? {
            "synthetic" => VideoSource::Synthetic(match p.str_or("schedule", "static")? {
                "static" => Schedule::Static(SyntheticScene {
                    head_pitch: p.f64_or("head_pitch", 0.0)?,
                    head_yaw: p.f64_or("head_yaw", 0.0)?,
                    eye_pitch: p.f64_or("eye_pitch", 0.0)?,
                    eye_yaw: p.f64_or("eye_yaw", 0.0)?,
                    expression: Expression {
                        smile: p.f64_or("smile", 0.0)?,
                        brow_raise: p.f64_or("brow_raise", 0.0)?,
                        mouth_open: p.f64_or("mouth_open", 0.0)?,
                        anger: p.f64_or("anger", 0.0)?,
                    },
                    seed: p.u64_or("seed", 0)?,
                }),
                "gaze_demo" => Schedule::GazeDemo,
                "blank" => Schedule::Blank,
                "sweep" => Schedule::Sweep,
                other => return Err(bad("schedule", format!("unknown schedule {other:?}"))),
            }),
            "bag" => match p.str_or("path", "")? {
                "" => return Err(bad("path", "required when source = \"bag\"".into())),
                path => VideoSource::Bag(PathBuf::from(path)),
            },
            other => return Err(bad("source", format!("unknown source {other:?}"))),
        };
        Ok(VideoConfig {
            source,
            fps,
            width: width as u32,
            height: height as u32,
            max_frames: p.u64_or("max_frames", 0)?,
            start_delay: Duration::from_millis(p.u64_or("start_delay_ms", 0)?),
        })
    }
}

fn start_video(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let cfg = VideoConfig::from_params(node.params())
        .map_err(|source| LaunchError::BadParam { entry: node.name().into(), source })?;
    let images = node.advertise(IMAGE_RAW, names::IMAGE).map_err(bus_err(&node))?;
    let info = node.advertise(CAMERA_INFO, names::CAMERA_INFO).map_err(bus_err(&node))?;
    let task = NodeTask::new(node.clone());
    match cfg.source.clone() {
        VideoSource::Synthetic(schedule) => {
            Ok(task.spawn("video", move |stop| run_synthetic(&cfg, &schedule, &images, &info, &stop)).boxed())
        }
        VideoSource::Bag(path) => {
            let reader = BagReader::open(&path).map_err(|e| LaunchError::Start {
                entry: node.name().into(),
                message: VideoError::SourceUnavailable(format!("{}: {e}", path.display())).to_string(),
            })?;
            Ok(task.spawn("video", move |stop| run_bag(&cfg, reader, &images, &info, &stop)).boxed())
        }
    }
}

fn run_synthetic(
    cfg: &VideoConfig,
    schedule: &Schedule,
    images: &Publisher,
    info: &Publisher,
    stop: &std::sync::atomic::AtomicBool,
) {
    if !sleep_unless(stop, cfg.start_delay) {
        return;
    }
    let proj = Projection::for_size(cfg.width, cfg.height);
    let period = Duration::from_secs_f64(1.0 / cfg.fps);
    let info_every = (cfg.fps.round() as u64).max(1);
    let start = Instant::now();
    let mut frame = 0u64;
    while cfg.max_frames == 0 || frame < cfg.max_frames {
        let due = start + period.mul_f64(frame as f64);
        if !sleep_unless(stop, due.saturating_duration_since(Instant::now())) {
            return;
        }
        let header = Header { seq: frame, stamp_ns: now_ns(), frame_id: "camera".into() };
        if frame.is_multiple_of(info_every) {
            let mut ci = CameraInfo::for_size(cfg.width, cfg.height);
            ci.header = header.clone();
            let _ = info.publish_typed(&ci);
        }
        let mut img = render_frame(schedule, frame, &proj);
        img.header = header;
        if images.publish_typed(&img).is_err() {
            return;
        }
        frame += 1;
    }
}

fn run_bag(
    cfg: &VideoConfig,
    reader: BagReader,
    images: &Publisher,
    info: &Publisher,
    stop: &std::sync::atomic::AtomicBool,
) {
    if !sleep_unless(stop, cfg.start_delay) {
        return;
    }
    let start = Instant::now();
    let mut first = None;
    let mut frames = 0u64;
    for rec in reader {
        let Ok(rec) = rec else { return };
        let target = match rec.message.schema_name() {
            names::IMAGE => images,
            names::CAMERA_INFO => info,
            _ => continue,
        };
        let t0 = *first.get_or_insert(rec.stamp_ns);
        let due = start + Duration::from_nanos(rec.stamp_ns.saturating_sub(t0));
        if !sleep_unless(stop, due.saturating_duration_since(Instant::now())) {
            return;
        }
        if target.publish(rec.message).is_err() {
            return;
        }
        if std::ptr::eq(target, images) {
            frames += 1;
            if cfg.max_frames != 0 && frames >= cfg.max_frames {
                return;
            }
        }
    }
}

/// Counters shared by the converter callbacks.
#[derive(Debug, Default)]
struct ConvertStats {
    converted: AtomicU64,
    rejected: AtomicU64,
}

fn start_convert(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let cap = queue(node.params()).map_err(|source| LaunchError::BadParam { entry: node.name().into(), source })?;
    let out = node.advertise(IMAGE_CV2, names::NDARRAY).map_err(bus_err(&node))?;
    let latest_info: Arc<Mutex<Option<(u32, u32)>>> = Arc::default();
    let stats = Arc::new(ConvertStats::default());
    let info_slot = latest_info.clone();
    let info_sub = node
        .subscribe(CAMERA_INFO, names::CAMERA_INFO, 4, move |m| {
            if let Ok(ci) = CameraInfo::from_message(&m) {
                *info_slot.lock().unwrap_or_else(|e| e.into_inner()) = Some((ci.width, ci.height));
            }
        })
        .map_err(bus_err(&node))?;
    let counters = stats.clone();
    let image_sub = node
        .subscribe(IMAGE_RAW, names::IMAGE, cap, move |m| {
            let Ok(img) = ImageFrame::from_message(&m) else {
                counters.rejected.fetch_add(1, Ordering::Relaxed);
                return;
            };
            let info = *latest_info.lock().unwrap_or_else(|e| e.into_inner());
            if info.is_some_and(|dims| dims != (img.width, img.height)) {
                counters.rejected.fetch_add(1, Ordering::Relaxed);
                return;
            }
            match image_to_array(&img) {
                Ok(arr) if out.publish_typed(&arr).is_ok() => {
                    counters.converted.fetch_add(1, Ordering::Relaxed);
                }
                _ => {
                    counters.rejected.fetch_add(1, Ordering::Relaxed);
                }
            }
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(info_sub).hold(image_sub).hold(stats).boxed())
}

fn start_landmarks(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let bad = |source| LaunchError::BadParam { entry: entry.clone(), source };
    let cap = queue(node.params()).map_err(bad)?;
    let backend = backend(node.params()).map_err(bad)?;
    let marks = node.advertise(LANDMARKS, names::LANDMARK_SET).map_err(bus_err(&node))?;
    let overlay = node.advertise(LANDMARKED, names::IMAGE).map_err(bus_err(&node))?;
    let sub = node
        .subscribe(IMAGE_CV2, names::NDARRAY, cap, move |m| {
            let Ok(frame) = NdArrayFrame::from_message(&m) else { return };
            let Ok(set) = detect_landmarks(&frame, backend.as_ref()) else { return };
            let _ = marks.publish_typed(&set);
            if let Ok(mut img) = array_to_image(&frame) {
                img.header = frame.header.clone();
                let _ = overlay.publish_typed(&render_overlay(&img, &set));
            }
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(sub).boxed())
}

fn start_emotion(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let bad = |source| LaunchError::BadParam { entry: entry.clone(), source };
    let cap = queue(node.params()).map_err(bad)?;
    let backend = backend(node.params()).map_err(bad)?;
    let out = node.advertise(FACE_EMOTION, names::EMOTION_ESTIMATE).map_err(bus_err(&node))?;
    let sub = node
        .subscribe(IMAGE_CV2, names::NDARRAY, cap, move |m| {
            let Ok(frame) = NdArrayFrame::from_message(&m) else { return };
            let Ok(set) = detect_landmarks(&frame, backend.as_ref()) else { return };
            if let Ok(estimate) = classify_emotion(&set) {
                let _ = out.publish_typed(&estimate);
            }
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(sub).boxed())
}

fn start_gaze_service(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let params = GazeParams::from_params(node.params())
        .map_err(|source| LaunchError::BadParam { entry: node.name().into(), source })?;
    let registry = node.bus().registry().clone();
    let handle = node
        .register_service(GAZE_SERVICE, names::LANDMARK_SET, names::GAZE_ESTIMATE, move |req| {
            let set = LandmarkSet::from_message(req).map_err(|e| e.to_string())?;
            let estimate = estimate_gaze(&set, &params).map_err(|e| e.to_string())?;
            estimate.to_message(&registry).map_err(|e| e.to_string())
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(handle).boxed())
}

fn gaze_client_timeout(p: &Params) -> Result<Duration, ParamError> {
    Ok(Duration::from_millis(p.u64_or("timeout_ms", 1000)?))
}

fn validate_gaze_client(p: &Params) -> Result<(), ParamError> {
    queue(p)?;
    gaze_client_timeout(p)?;
    p.str_or("service", GAZE_SERVICE).map(drop)
}

fn start_gaze_position(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let bad = |source| LaunchError::BadParam { entry: entry.clone(), source };
    let cap = queue(node.params()).map_err(bad)?;
    let timeout = gaze_client_timeout(node.params()).map_err(bad)?;
    let service = node.params().str_or("service", GAZE_SERVICE).map_err(bad)?.to_string();
    let out = node.advertise(GAZE_DIR, names::STRING).map_err(bus_err(&node))?;
    let caller = node.clone();
    let sub = node
        .subscribe(LANDMARKS, names::LANDMARK_SET, cap, move |m| {
            if !m.get("face_detected").and_then(|v| v.as_bool()).unwrap_or(false) {
                return;
            }
            let Ok(reply) = caller.call_service(&service, (*m).clone(), timeout) else { return };
            if let Some(label) = reply.get("label").and_then(|v| v.as_str()) {
                let _ = out.publish_typed(&StringMsg::new(label));
            }
        })
        .map_err(bus_err(&node))?;
    Ok(NodeTask::new(node).hold(sub).boxed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{Bus, ParamValue, Tier};
    use crate::perception::emotion::EmotionEstimate;
    use crate::perception::gaze::GazeEstimate;

    fn params(pairs: &[(&str, ParamValue)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn start(bus: &Bus, id: &str, p: Params) -> Box<dyn RunningNode> {
        let mut f = NodeFactories::new();
        register(&mut f);
        let b = f.get(id).unwrap();
        (b.validate)(&p).unwrap();
        let node = bus.create_node_with(id, Tier::Middleware, p, Default::default()).unwrap();
        (b.start)(node).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(VideoConfig::from_params(&Params::new()).is_ok());
        let e = VideoConfig::from_params(&params(&[("fps", ParamValue::Int(0))])).unwrap_err();
        assert_eq!(e.key, "fps");
        let e = VideoConfig::from_params(&params(&[("source", ParamValue::Str("bag".into()))])).unwrap_err();
        assert_eq!(e.key, "path");
        assert!(validate_detector(&params(&[("backend", ParamValue::Str("mediapipe".into()))])).is_err());
    }

    #[test]
    fn missing_bag_is_source_unavailable() {
        let bus = Bus::with_std();
        let p = params(&[
            ("source", ParamValue::Str("bag".into())),
            ("path", ParamValue::Str("/nonexistent/x.bag".into())),
        ]);
        let node = bus.create_node_with("video_stream", Tier::Basic, p, Default::default()).unwrap();
        let err = start_video(node).err().unwrap();
        assert!(err.to_string().contains("unavailable"), "{err}");
    }

    #[test]
    fn gaze_demo_pipeline() {
        let bus = Bus::with_std();
        let probe = bus.create_node("probe", Tier::Basic).unwrap();
        let dirs = probe.subscribe_queue(GAZE_DIR, names::STRING, 64).unwrap();
        let emotions = probe.subscribe_queue(FACE_EMOTION, names::EMOTION_ESTIMATE, 64).unwrap();
        let overlays = probe.subscribe_queue(LANDMARKED, names::IMAGE, 64).unwrap();
        let nodes = vec![
            start(&bus, "gaze_detector", Params::new()),
            start(&bus, "gaze_position", Params::new()),
            start(&bus, "landmark_detection", Params::new()),
            start(&bus, "face_emotion", Params::new()),
            start(&bus, "opencv_client", Params::new()),
            start(
                &bus,
                "video_stream",
                params(&[
                    ("schedule", ParamValue::Str("gaze_demo".into())),
                    ("fps", ParamValue::Int(60)),
                    ("max_frames", ParamValue::Int(8)),
                ]),
            ),
        ];
        let mut labels = Vec::new();
        while labels.len() < 8 {
            let m = dirs.recv_timeout(Duration::from_secs(5)).expect("gaze label");
            labels.push(StringMsg::from_message(&m).unwrap().data);
        }
        let expect = ["left up", "left up", "left up", "left up with head being up"];
        assert_eq!(labels[..4], expect);
        assert_eq!(labels[4..], expect);
        for _ in 0..8 {
            let e = EmotionEstimate::from_message(&emotions.recv_timeout(Duration::from_secs(5)).unwrap()).unwrap();
            assert_eq!(e.label.as_str(), "neutral");
        }
        let img = ImageFrame::from_message(&overlays.recv_timeout(Duration::from_secs(5)).unwrap()).unwrap();
        assert_eq!((img.width, img.height), (320, 240));
        for n in nodes {
            n.stop();
        }
        assert_eq!(bus.graph_info().node_names(), ["/probe"]);
    }

    #[test]
    fn gaze_service_reports_missing_landmark() {
        let bus = Bus::with_std();
        let svc = start(&bus, "gaze_detector", Params::new());
        let caller = bus.create_node("caller", Tier::Basic).unwrap();
        let req = LandmarkSet::default().to_message(bus.registry()).unwrap();
        let err = caller.call_service(GAZE_SERVICE, req, Duration::from_secs(1)).unwrap_err();
        assert!(err.to_string().contains("eye_outer_L"), "{err}");
        let set = crate::perception::face::analytic_landmarks(
            &SyntheticScene::default(),
            &Projection::for_size(320, 240),
        );
        let reply = caller
            .call_service(GAZE_SERVICE, set.to_message(bus.registry()).unwrap(), Duration::from_secs(1))
            .unwrap();
        assert_eq!(GazeEstimate::from_message(&reply).unwrap().label, "center");
        svc.stop();
    }
}
