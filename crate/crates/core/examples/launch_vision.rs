//! Launches the bundled vision graph in process and prints the first gaze
//! labels, the same stream `socialbot topic echo /gaze_position/gaze_dir`
//! shows against a running `socialbot launch`.
//!
//! ```text
//! cargo run --example launch_vision
//! ```

use std::path::Path;
use std::time::Duration;

use socialbot::bus::{Bus, Tier};
use socialbot::codec::std_schemas as names;
use socialbot::codec::{StringMsg, TypedMessage};
use socialbot::launch::{LaunchConfig, Launcher};
use socialbot::perception::nodes::GAZE_DIR;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("launch/vision.launch.toml");
    let cfg = LaunchConfig::from_file(&file)?;
    let launcher = Launcher::default().with_config_paths(&cfg)?;
    launcher.validate(&cfg)?;

    let bus = Bus::with_std();
    let probe = bus.create_node("probe", Tier::Basic)?;
    let labels = probe.subscribe_queue(GAZE_DIR, names::STRING, 64)?;
    let graph = launcher.launch(&bus, &cfg)?;
    println!("started {}", graph.node_names().join(", "));

    for _ in 0..8 {
        let m = labels.recv_timeout(Duration::from_secs(5)).ok_or("no gaze label within 5 s")?;
        println!("data: {:?}\n----", StringMsg::from_message(&m)?.data);
    }
    for t in graph.graph_info().topics {
        println!("{:<32} {:<22} {} -> {}", t.name, t.schema, t.publishers.join(","), t.subscribers.join(","));
    }
    graph.stop();
    Ok(())
}
