//! Behavior service with the actuator simulator: stores assets and a
//! profile, triggers it over REST and follows the request to completion.
//!
//! ```text
//! cargo run --example behavior_rest
//! ```

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use socialbot::behavior::BehaviorService;
use socialbot::bus::{Bus, Tier};
use socialbot::launch::NodeFactories;

fn request(addr: SocketAddr, method: &str, path: &str, body: &[u8]) -> std::io::Result<String> {
    let mut s = TcpStream::connect(addr)?;
    write!(s, "{method} {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Length: {}\r\n", body.len())?;
    if body.first() == Some(&b'{') {
        write!(s, "Content-Type: application/json\r\n")?;
    }
    s.write_all(b"\r\n")?;
    s.write_all(body)?;
    let mut out = String::new();
    s.read_to_string(&mut out)?;
    let status = out.lines().next().unwrap_or_default().to_string();
    let body = out.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Ok(format!("{status}  {body}"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = std::env::temp_dir().join(format!("socialbot-behavior-{}", std::process::id()));
    let bus = Bus::with_std();
    let sim = (NodeFactories::standard().get("actuator_sim").expect("builtin").start)(bus.create_node("actuator_sim", Tier::Basic)?)?;
    let svc = BehaviorService::start(
        bus.create_node("behavior_service", Tier::Service)?,
        &data,
        SocketAddr::from(([127, 0, 0, 1], 0)),
        Duration::from_secs(2),
    )?;
    let addr = svc.local_addr();
    println!("behavior REST on http://{addr}, data in {}", data.display());

    println!("{}", request(addr, "PUT", "/api/assets/smile.png", b"\x89PNG demo")?);
    println!("{}", request(addr, "PUT", "/api/assets/hello.wav", b"RIFF demo")?);
    let profile = br#"{"id":"greet","affect_label":"happy","face_asset":"smile.png","sound_asset":"hello.wav","description":"smile and say hello"}"#;
    println!("{}", request(addr, "POST", "/api/profiles", profile)?);
    let accepted = request(addr, "POST", "/api/exp/greet", b"")?;
    println!("{accepted}");

    let id = accepted.split("\"request_id\":\"").nth(1).and_then(|s| s.split('"').next()).ok_or("no request id")?;
    let done = svc.exp().wait(id, Duration::from_secs(3)).ok_or("request vanished")?;
    println!("{id}: {:?} via {:?}", done.status, done.history);

    drop(svc);
    sim.stop();
    std::fs::remove_dir_all(&data)?;
    Ok(())
}
