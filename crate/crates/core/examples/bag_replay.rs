//! Writes a small bag of timestamped messages and reads it back, the file
//! format behind `socialbot record` and `socialbot play`.
//!
//! ```text
//! cargo run --example bag_replay
//! ```

use socialbot::bag::{BagReader, BagWriter};
use socialbot::codec::std_schemas as names;
use socialbot::codec::{SchemaRegistry, StringMsg, TwistCommand, TypedMessage, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::with_std();
    let path = std::env::temp_dir().join(format!("socialbot-example-{}.bag", std::process::id()));
    let mut bag = BagWriter::create(&path, &reg, &[("/gaze_position/gaze_dir", names::STRING), ("/cmd_vel_wheel", names::TWIST)])?;
    for i in 0..5u64 {
        let label = if i % 2 == 0 { "left up" } else { "center" };
        bag.write(i * 66_666_667, "/gaze_position/gaze_dir", &StringMsg::new(label).to_message(&reg)?)?;
        let twist = TwistCommand { linear: Vector3 { x: 0.1 * i as f64, ..Default::default() }, ..Default::default() };
        bag.write(i * 66_666_667 + 1_000, "/cmd_vel_wheel", &twist.to_message(&reg)?)?;
    }
    println!("wrote {} records to {}", bag.records(), path.display());
    bag.flush()?;
    drop(bag);

    let (topics, records) = BagReader::read_all(&path)?;
    for t in &topics {
        println!("topic {} [{}]", t.name, t.schema.name);
    }
    for r in &records {
        let shown = match r.message.schema_name() {
            names::STRING => format!("{:?}", StringMsg::from_message(&r.message)?.data),
            _ => format!("linear.x={:.1}", TwistCommand::from_message(&r.message)?.linear.x),
        };
        println!("{:>6.1} ms  {:<26} {shown}", r.stamp_ns as f64 / 1e6, r.topic);
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
