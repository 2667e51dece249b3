//! Starts the WebSocket bridge on an ephemeral port and drives it with a
//! scripted client: subscribe, publish, a service call and an error.
//!
//! ```text
//! cargo run --example web_bridge
//! ```

use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use socialbot::bridge::{BridgeConfig, WebBridge};
use socialbot::bus::{Bus, Tier};
use socialbot::codec::std_schemas as names;
use socialbot::codec::StringMsg;
use socialbot::launch::NodeFactories;

#[tokio::main(flavor = "multi_thread", worker_threads = 2)]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bus = Bus::with_std();
    let bridge = WebBridge::start(bus.clone(), BridgeConfig { addr: SocketAddr::from(([127, 0, 0, 1], 0)), ..Default::default() })?;
    let gaze = (NodeFactories::standard().get("gaze_detector").expect("builtin").start)(bus.create_node("gaze_detector", Tier::Service)?)?;
    let robot = bus.create_node("robot", Tier::Basic)?;
    let labels = robot.advertise("/gaze_position/gaze_dir", names::STRING)?;
    let wheels = robot.subscribe_queue("cmd_vel_wheel", names::TWIST, 8)?;

    let url = format!("ws://{}/ws", bridge.local_addr());
    println!("bridge at {url}");
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await?;
    let script = [
        r#"{"op":"subscribe","topic":"/gaze_position/gaze_dir","id":"s1"}"#,
        r#"{"op":"publish","topic":"cmd_vel_wheel","id":"p1","payload":{"linear":{"x":0.2,"y":0,"z":0},"angular":{"x":0,"y":0,"z":0.5}}}"#,
        r#"{"op":"call_service","service":"ghost","id":"c1","payload":{}}"#,
        r#"{"op":"subscribe","topic":"/no/such/topic","id":"s2"}"#,
    ];
    for frame in script {
        println!("-> {frame}");
        ws.send(Message::text(frame)).await?;
        while let Ok(Some(Ok(Message::Text(reply)))) = tokio::time::timeout(Duration::from_millis(300), ws.next()).await {
            println!("<- {reply}");
        }
    }
    labels.publish_typed(&StringMsg::new("left up"))?;
    if let Ok(Some(Ok(Message::Text(m)))) = tokio::time::timeout(Duration::from_secs(1), ws.next()).await {
        println!("<- {m}");
    }
    if let Some(t) = wheels.recv_timeout(Duration::from_millis(200)) {
        println!("bus received the browser's twist: {:?}", t.fields);
    }
    ws.close(None).await?;
    gaze.stop();
    Ok(())
}
