use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::Value;
use socialbot::bridge::{BridgeConfig, WebBridge};
use socialbot::bus::{Bus, Tier};
use socialbot::codec::std_schemas as names;
use socialbot::codec::{Header, ImageFrame, StringMsg, TwistCommand, TypedMessage};
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn bridge(bus: &Bus, cfg: BridgeConfig) -> WebBridge {
    WebBridge::start(bus.clone(), BridgeConfig { addr: SocketAddr::from(([127, 0, 0, 1], 0)), ..cfg }).unwrap()
}

async fn connect(addr: SocketAddr, query: &str) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws{query}")).await.unwrap().0
}

async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::text(text)).await.unwrap();
}

async fn recv(ws: &mut Ws) -> String {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(3), ws.next()).await.expect("reply in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return t.to_string();
        }
    }
}

async fn recv_json(ws: &mut Ws) -> Value {
    serde_json::from_str(&recv(ws).await).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn subscribe_receives_gaze_labels() {
    let bus = Bus::with_std();
    let b = bridge(&bus, BridgeConfig::default());
    let probe = bus.create_node("probe", Tier::Basic).unwrap();
    let gaze = probe.advertise("/gaze_position/gaze_dir", names::STRING).unwrap();
    let mut ws = connect(b.local_addr(), "").await;
    send(&mut ws, r#"{"op":"subscribe","topic":"/gaze_position/gaze_dir","id":"s1"}"#).await;
    let ack = recv_json(&mut ws).await;
    assert_eq!((ack["level"].as_str(), ack["id"].as_str()), (Some("info"), Some("s1")));
    gaze.publish_typed(&StringMsg::new("left up")).unwrap();
    assert_eq!(
        recv(&mut ws).await,
        r#"{"op":"publish","topic":"/gaze_position/gaze_dir","payload":{"data":"left up"}}"#
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn publish_reaches_bus_and_errors_keep_session() {
    let bus = Bus::with_std();
    let b = bridge(&bus, BridgeConfig::default());
    let probe = bus.create_node("probe", Tier::Basic).unwrap();
    let rx = probe.subscribe_queue("cmd_vel_wheel", names::TWIST, 8).unwrap();
    let mut ws = connect(b.local_addr(), "").await;

    send(&mut ws, "{not json").await;
    let e = recv_json(&mut ws).await;
    assert_eq!((e["op"].as_str(), e["code"].as_str()), (Some("status"), Some("BadJson")));

    let bad = r#"{"op":"publish","topic":"cmd_vel_wheel","id":"p0","payload":{"linear":{"x":0,"y":0},"angular":{"x":0,"y":0,"z":0}}}"#;
    send(&mut ws, bad).await;
    let e = recv_json(&mut ws).await;
    assert_eq!((e["code"].as_str(), e["path"].as_str()), (Some("SchemaViolation"), Some("payload.linear.z")));

    let zero = r#"{"op":"publish","topic":"cmd_vel_wheel","id":"p1","payload":{"linear":{"x":0,"y":0,"z":0},"angular":{"x":0,"y":0,"z":0}}}"#;
    send(&mut ws, zero).await;
    assert_eq!(recv_json(&mut ws).await["code"], "Ok");
    let t = TwistCommand::from_message(&rx.recv_timeout(Duration::from_secs(2)).unwrap()).unwrap();
    assert_eq!(t, TwistCommand::default());

    send(&mut ws, r#"{"op":"subscribe","topic":"/nope","id":"s9"}"#).await;
    assert_eq!(recv_json(&mut ws).await["code"], "UnknownTopic");
    send(&mut ws, r#"{"op":"fly"}"#).await;
    assert_eq!(recv_json(&mut ws).await["code"], "BadOp");
}

#[tokio::test(flavor = "multi_thread")]
async fn service_calls_are_correlated() {
    let bus = Bus::with_std();
    let b = bridge(&bus, BridgeConfig::default());
    let provider = bus.create_node("provider", Tier::Service).unwrap();
    let _svc = provider
        .register_service("shout", names::STRING, names::STRING, |req| {
            let s = StringMsg::from_message(req).map_err(|e| e.to_string())?;
            Ok(StringMsg::new(s.data.to_uppercase()).to_message(&socialbot::codec::SchemaRegistry::with_std()).unwrap())
        })
        .unwrap();
    let mut ws = connect(b.local_addr(), "").await;
    send(&mut ws, r#"{"op":"call_service","service":"shout","id":"c1","payload":{"data":"hi"}}"#).await;
    assert_eq!(
        recv(&mut ws).await,
        r#"{"op":"service_response","id":"c1","service":"shout","result":true,"payload":{"data":"HI"}}"#
    );
    send(&mut ws, r#"{"op":"call_service","service":"ghost","id":"c2","payload":{}}"#).await;
    let status = recv_json(&mut ws).await;
    assert_eq!((status["op"].as_str(), status["code"].as_str()), (Some("status"), Some("UnknownService")));
    let resp = recv_json(&mut ws).await;
    assert_eq!((resp["op"].as_str(), resp["id"].as_str(), resp["result"].as_bool()), (Some("service_response"), Some("c2"), Some(false)));
}

#[tokio::test(flavor = "multi_thread")]
async fn disconnect_removes_session_subscriptions() {
    let bus = Bus::with_std();
    let b = bridge(&bus, BridgeConfig::default());
    let probe = bus.create_node("probe", Tier::Basic).unwrap();
    let _p = probe.advertise("face_emotion", names::EMOTION_ESTIMATE).unwrap();
    let before = bus.graph_info();
    let mut ws = connect(b.local_addr(), "").await;
    send(&mut ws, r#"{"op":"subscribe","topic":"face_emotion","id":"s"}"#).await;
    recv(&mut ws).await;
    assert_eq!(bus.subscriber_count("/face_emotion"), 1);
    ws.close(None).await.unwrap();
    drop(ws);
    let t0 = Instant::now();
    while b.stats().sessions_closed.load(Ordering::SeqCst) < 1 && t0.elapsed() < Duration::from_secs(3) {
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(bus.subscriber_count("/face_emotion"), 0);
    assert_eq!(bus.graph_info(), before);
}

#[tokio::test(flavor = "multi_thread")]
async fn images_are_rate_limited_keeping_the_newest() {
    let bus = Bus::with_std();
    let b = bridge(&bus, BridgeConfig { image_rate: 15.0, ..BridgeConfig::default() });
    let cam = bus.create_node("cam", Tier::Basic).unwrap();
    let img = cam.advertise("image_raw", names::IMAGE).unwrap();
    let mut ws = connect(b.local_addr(), "").await;
    send(&mut ws, r#"{"op":"subscribe","topic":"image_raw","id":"s"}"#).await;
    recv(&mut ws).await;
    for seq in 0..30u64 {
        let mut f = ImageFrame::black(4, 4);
        f.header = Header::new(seq, 0);
        img.publish_typed(&f).unwrap();
    }
    let mut seqs = Vec::new();
    while let Ok(Some(Ok(Message::Text(t)))) = tokio::time::timeout(Duration::from_millis(400), ws.next()).await {
        let v: Value = serde_json::from_str(&t).unwrap();
        seqs.push(v["payload"]["header"]["seq"].as_u64().unwrap());
    }
    assert!(seqs.len() <= 3, "{seqs:?}");
    assert_eq!(seqs.last(), Some(&29));
}

#[tokio::test(flavor = "multi_thread")]
async fn token_and_schema_listing() {
    let bus = Bus::with_std();
    let b = bridge(&bus, BridgeConfig { token: Some("s3cret".into()), ..BridgeConfig::default() });
    let addr = b.local_addr();
    assert!(tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.is_err());
    let mut ws = connect(addr, "?token=s3cret").await;
    send(&mut ws, r#"{"op":"subscribe","topic":"x","id":"a"}"#).await;
    assert_eq!(recv_json(&mut ws).await["code"], "UnknownTopic");

    let body = tokio::task::spawn_blocking(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        write!(s, "GET /api/schemas HTTP/1.0\r\nHost: x\r\n\r\n").unwrap();
        let mut out = String::new();
        s.read_to_string(&mut out).unwrap();
        out
    })
    .await
    .unwrap();
    let json = &body[body.find("\r\n\r\n").unwrap() + 4..];
    let v: Value = serde_json::from_str(json).unwrap();
    let twist = v["schemas"].as_array().unwrap().iter().find(|s| s["name"] == names::TWIST).unwrap();
    assert_eq!(twist["fields"][0]["name"], "linear");
}
