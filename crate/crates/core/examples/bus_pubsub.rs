//! In-process bus: two nodes, a topic, a service, bounded queues and the
//! graph view that `socialbot topic list` prints.
//!
//! ```text
//! cargo run --example bus_pubsub
//! ```

use std::time::Duration;

use socialbot::bus::{Bus, Tier};
use socialbot::codec::std_schemas as names;
use socialbot::codec::{StringMsg, TypedMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bus = Bus::with_std();
    let talker = bus.create_node("talker", Tier::Basic)?;
    let listener = bus.create_node("listener", Tier::Middleware)?;

    let chatter = talker.advertise("chatter", names::STRING)?;
    let inbox = listener.subscribe_queue("chatter", names::STRING, 16)?;
    for i in 0..3 {
        chatter.publish_typed(&StringMsg::new(format!("hello {i}")))?;
    }
    while let Some(m) = inbox.recv_timeout(Duration::from_millis(100)) {
        println!("listener got {:?}", StringMsg::from_message(&m)?.data);
    }

    // A capacity-1 queue keeps only the newest message and counts the rest.
    let latest = listener.subscribe_queue("chatter", names::STRING, 1)?;
    for i in 0..100 {
        chatter.publish_typed(&StringMsg::new(format!("burst {i}")))?;
    }
    let kept = StringMsg::from_message(&latest.try_recv().expect("one message kept"))?.data;
    println!("capacity-1 queue kept {kept:?}, dropped {}", latest.stats().dropped);

    let reg = bus.registry().clone();
    let _shout = listener.register_service("shout", names::STRING, names::STRING, move |req| {
        let s = StringMsg::from_message(req).map_err(|e| e.to_string())?;
        StringMsg::new(s.data.to_uppercase()).to_message(&reg).map_err(|e| e.to_string())
    })?;
    let reply = talker.call_service("shout", StringMsg::new("quiet please").to_message(bus.registry())?, Duration::from_secs(1))?;
    println!("service /shout replied {:?}", StringMsg::from_message(&reply)?.data);

    let graph = bus.graph_info();
    for t in &graph.topics {
        println!("topic {} [{}] pubs={:?} subs={:?}", t.name, t.schema, t.publishers, t.subscribers);
    }
    for s in &graph.services {
        println!("service {} {} -> {} by {}", s.name, s.request, s.response, s.provider);
    }
    Ok(())
}
