mod common;

use std::time::{Duration, Instant};

use common::{cli, Proc};
use socialbot::bag::{BagReader, BagWriter};
use socialbot::bridge::message_to_json;
use socialbot::bus::tcp::BusServer;
use socialbot::bus::{Bus, Tier};
use socialbot::codec::std_schemas as names;
use socialbot::codec::{encode, Header, ImageFrame, StringMsg, TwistCommand, TypedMessage};
use socialbot::launch::{NodeFactories, RunningNode};
use socialbot::perception::{analytic_landmarks, Projection, SyntheticScene};

fn serve(bus: &Bus) -> (BusServer, String) {
    let server = BusServer::bind(bus.clone(), "127.0.0.1:0").unwrap();
    let addr = server.local_addr().to_string();
    (server, addr)
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn wait_until(limit: Duration, mut f: impl FnMut() -> bool) -> bool {
    let t0 = Instant::now();
    while t0.elapsed() < limit {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    false
}

#[test]
fn launch_bad_path_names_the_file() {
    let out = cli(&["launch", "/definitely/missing.launch.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/definitely/missing.launch.toml"));
}

#[test]
fn launch_unknown_package_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.launch.toml");
    std::fs::write(&f, "[[node]]\npackage = \"ghost\"\nnode = \"n\"\n").unwrap();
    let out = cli(&["launch", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("\"ghost\""));
}

#[test]
fn launch_check_lists_bundled_graphs() {
    for file in ["vision", "audio", "behavior", "lab"] {
        let path = common::crate_dir().join(format!("launch/{file}.launch.toml"));
        let out = cli(&["launch", "--check", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{file}: {}", text(&out.stderr));
    }
}

#[test]
fn vision_launch_echo_and_interrupt() {
    let port = common::free_port();
    let bus = format!("127.0.0.1:{port}");
    let cfg = common::crate_dir().join("launch/vision.launch.toml");
    let p = Proc::spawn(&["launch", cfg.to_str().unwrap(), "--bus", &bus], &common::crate_dir());
    p.wait_for("started 6 nodes", Duration::from_secs(10));

    let out = cli(&["topic", "echo", "/gaze_position/gaze_dir", "--count", "8", "--bus", &bus]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let transcript = text(&out.stdout);
    let lines: Vec<&str> = transcript.lines().collect();
    assert_eq!(lines.len(), 16);
    for pair in lines.chunks(2) {
        assert!(
            pair[0] == r#"data: "left up""# || pair[0] == r#"data: "left up with head being up""#,
            "{transcript}"
        );
        assert_eq!(pair[1], "----");
    }

    let list = text(&cli(&["topic", "list", "--bus", &bus]).stdout);
    assert!(list.contains("/gaze_position/gaze_dir [std/String]"), "{list}");
    let missing = cli(&["topic", "echo", "/nope", "--bus", &bus]);
    assert_eq!(missing.status.code(), Some(4));
    assert!(text(&missing.stderr).contains("UnknownTopic"));

    p.interrupt();
    p.wait_for("stopped", Duration::from_secs(5));
    assert_eq!(p.finish(Duration::from_secs(5)), Some(0));
}

#[test]
fn echo_transcript_is_byte_stable() {
    let bus = Bus::with_std();
    let (_server, addr) = serve(&bus);
    let node = bus.create_node("script", Tier::Basic).unwrap();
    let publisher = node.advertise("/gaze_position/gaze_dir", names::STRING).unwrap();
    let echo = Proc::spawn(&["topic", "echo", "/gaze_position/gaze_dir", "--count", "4", "--bus", &addr], &common::crate_dir());
    assert!(wait_until(Duration::from_secs(5), || bus.subscriber_count("/gaze_position/gaze_dir") == 1));
    for label in ["left up", "left up", "left up", "left up with head being up"] {
        publisher.publish_typed(&StringMsg::new(label)).unwrap();
    }
    let lines: Vec<String> = (0..8).map(|_| echo.wait_for("", Duration::from_secs(5))).collect();
    let expected = "data: \"left up\"\n----\ndata: \"left up\"\n----\ndata: \"left up\"\n----\ndata: \"left up with head being up\"\n----\n";
    assert_eq!(lines.join("\n") + "\n", expected);
    assert_eq!(echo.finish(Duration::from_secs(5)), Some(0));
}

#[test]
fn pub_injects_one_zero_twist() {
    let bus = Bus::with_std();
    let (_server, addr) = serve(&bus);
    let probe = bus.create_node("probe", Tier::Basic).unwrap();
    let rx = probe.subscribe_queue("cmd_vel_wheel", names::TWIST, 8).unwrap();
    let zero = r#"{"linear":{"x":0,"y":0,"z":0},"angular":{"x":0,"y":0,"z":0}}"#;
    let out = cli(&["topic", "pub", "cmd_vel_wheel", zero, "--bus", &addr]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let got = TwistCommand::from_message(&rx.recv_timeout(Duration::from_secs(2)).unwrap()).unwrap();
    assert_eq!(got, TwistCommand::default());
    assert!(rx.recv_timeout(Duration::from_millis(100)).is_none());

    let bad = cli(&["topic", "pub", "cmd_vel_wheel", "{\"linear\":", "--bus", &addr]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stderr).contains("BadJson"));
    let wrong = cli(&["topic", "pub", "cmd_vel_wheel", r#"{"linear":{"x":0}}"#, "--bus", &addr]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(text(&wrong.stderr).contains("linear.y"), "{}", text(&wrong.stderr));
}

#[test]
fn service_call_on_symmetric_face() {
    let bus = Bus::with_std();
    let (_server, addr) = serve(&bus);
    let node = bus.create_node("gaze_detector", Tier::Service).unwrap();
    let b = NodeFactories::standard().get("gaze_detector").unwrap();
    let running: Box<dyn RunningNode> = (b.start)(node).unwrap();

    let set = analytic_landmarks(&SyntheticScene::default(), &Projection::for_size(320, 240));
    let req = message_to_json(&set.to_message(bus.registry()).unwrap()).to_string();
    let out = cli(&["service", "call", "gaze_detector", &req, "--bus", &addr]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let resp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resp["head_yaw_deg"].as_f64(), Some(0.0));
    assert_eq!(resp["label"], "center");

    let listed = text(&cli(&["service", "list", "--bus", &addr]).stdout);
    assert!(listed.contains("/gaze_detector [std/LandmarkSet -> std/GazeEstimate]"), "{listed}");
    let ghost = cli(&["service", "call", "ghost", "{}", "--bus", &addr]);
    assert_eq!(ghost.status.code(), Some(4));
    assert!(text(&ghost.stderr).contains("NotFound"));
    let malformed = cli(&["service", "call", "gaze_detector", "{oops", "--bus", &addr]);
    assert_eq!(malformed.status.code(), Some(2));
    assert!(text(&malformed.stderr).contains("BadJson"));
    running.stop();
}

#[test]
fn record_then_play_is_faithful() {
    let dir = tempfile::tempdir().unwrap();
    let bag = dir.path().join("cam.bag");
    let bag_s = bag.to_str().unwrap().to_string();

    // Source graph: a 15 fps camera.
    let src = Bus::with_std();
    let (_s1, addr1) = serve(&src);
    let cam = src.create_node("cam", Tier::Basic).unwrap();
    let img = cam.advertise("image_raw", names::IMAGE).unwrap();
    let stop = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
    let stop2 = stop.clone();
    let feeder = std::thread::spawn(move || {
        let mut seq = 0u64;
        while !stop2.load(std::sync::atomic::Ordering::SeqCst) {
            let mut f = ImageFrame::black(16, 12);
            f.header = Header::new(seq, seq * 66_666_667);
            let n = f.data.len();
            f.data[(seq as usize) % n] = seq as u8;
            img.publish_typed(&f).unwrap();
            seq += 1;
            std::thread::sleep(Duration::from_millis(66));
        }
    });
    let out = cli(&["record", "image_raw", "-o", &bag_s, "--duration-s", "2", "--bus", &addr1]);
    stop.store(true, std::sync::atomic::Ordering::SeqCst);
    feeder.join().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let (_, records) = BagReader::read_all(&bag).unwrap();
    assert!(records.len() >= 25, "only {} frames recorded", records.len());

    // Replay graph with a probe.
    let dst = Bus::with_std();
    let (_s2, addr2) = serve(&dst);
    let probe = dst.create_node("probe", Tier::Basic).unwrap();
    let rx = probe.subscribe_queue("image_raw", names::IMAGE, 4096).unwrap();
    let player = Proc::spawn(&["play", &bag_s, "--bus", &addr2], &common::crate_dir());
    let t0 = Instant::now();
    let mut arrivals = Vec::new();
    while let Some(m) = rx.recv_timeout(Duration::from_secs(3)) {
        arrivals.push((t0.elapsed(), m));
        if arrivals.len() == records.len() {
            break;
        }
    }
    assert_eq!(player.finish(Duration::from_secs(5)), Some(0));
    assert_eq!(arrivals.len(), records.len());
    for ((_, got), rec) in arrivals.iter().zip(&records) {
        assert_eq!(encode(got).unwrap(), encode(&rec.message).unwrap());
    }
    // Relative timing of the replay against the recorded stamps.
    let base_t = arrivals[0].0;
    let base_s = records[0].stamp_ns;
    for ((t, _), rec) in arrivals.iter().zip(&records) {
        let want = Duration::from_nanos(rec.stamp_ns - base_s).as_secs_f64();
        let got = (*t - base_t).as_secs_f64();
        assert!((got - want).abs() <= 0.010, "drift {:.4}s", got - want);
    }
}

#[test]
fn empty_and_truncated_bags() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.bag");
    let reg = socialbot::codec::SchemaRegistry::with_std();
    let mut w = BagWriter::create(&empty, &reg, &[("/image_raw", names::IMAGE)]).unwrap();
    w.flush().unwrap();
    drop(w);
    let t0 = Instant::now();
    let out = cli(&["play", empty.to_str().unwrap(), "--bus", "127.0.0.1:1"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(t0.elapsed() < Duration::from_secs(2));

    let full = dir.path().join("full.bag");
    let mut w = BagWriter::create(&full, &reg, &[("/chat", names::STRING)]).unwrap();
    for i in 0..3 {
        w.write(i * 1000, "/chat", &StringMsg::new(format!("m{i}")).to_message(&reg).unwrap()).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    let bytes = std::fs::read(&full).unwrap();
    let cut = dir.path().join("cut.bag");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let out = cli(&["play", cut.to_str().unwrap(), "--bus", "127.0.0.1:1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("BagCorrupt") && err.contains("at byte"), "{err}");
}

#[test]
fn unreachable_bus_is_a_runtime_error() {
    let out = cli(&["topic", "list", "--bus", "127.0.0.1:1"]);
    assert_eq!(out.status.code(), Some(4));
}
