//! Simulated hardware layer: acknowledges behavior commands and reports
//! wheel commands.

use std::time::Duration;

use crate::bus::{BusError, Node, ParamError, Params, ParamsExt};
use crate::codec::std_schemas as names;
use crate::codec::{StringMsg, TwistCommand, TypedMessage};
use crate::launch::{LaunchError, NodeFactories, NodeTask, RunningNode};

use super::exp::{ACK_TOPIC, FACE_TOPIC, SOUND_TOPIC};
use super::types::{BehaviorAck, BehaviorCommand};

pub const WHEEL_TOPIC: &str = "cmd_vel_wheel";
pub const STATE_TOPIC: &str = "actuator/state";

pub fn register(f: &mut NodeFactories) {
    f.insert("actuator_sim", |p| SimConfig::from_params(p).map(drop), start);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub ack_delay: Duration,
    /// Value of `ok` in every acknowledgement.
    pub accept: bool,
    pub queue: usize,
}

impl SimConfig {
    pub fn from_params(p: &Params) -> Result<SimConfig, ParamError> {
        let delay = p.u64_or("ack_delay_ms", 20)?;
        if delay > 10_000 {
            return Err(ParamError { key: "ack_delay_ms".into(), reason: "must be at most 10000".into() });
        }
        let queue = p.u64_or("queue", 64)?;
        if queue == 0 {
            return Err(ParamError { key: "queue".into(), reason: "must be positive".into() });
        }
        Ok(SimConfig { ack_delay: Duration::from_millis(delay), accept: p.bool_or("accept", true)?, queue: queue as usize })
    }
}

fn start(node: Node) -> Result<Box<dyn RunningNode>, LaunchError> {
    let entry = node.name().to_string();
    let cfg = SimConfig::from_params(node.params()).map_err(|source| LaunchError::BadParam { entry: entry.clone(), source })?;
    let bus = |source: BusError| LaunchError::Bus { entry: entry.clone(), source };
    let ack = std::sync::Arc::new(node.advertise(ACK_TOPIC, names::BEHAVIOR_ACK).map_err(bus)?);
    let state = node.advertise(STATE_TOPIC, names::STRING).map_err(bus)?;
    let mut task = NodeTask::new(node.clone());
    for topic in [FACE_TOPIC, SOUND_TOPIC] {
        let ack = ack.clone();
        let cfg = cfg.clone();
        let sub = node
            .subscribe(topic, names::BEHAVIOR_COMMAND, cfg.queue, move |m| {
                let Ok(cmd) = BehaviorCommand::from_message(&m) else { return };
                std::thread::sleep(cfg.ack_delay);
                let _ = ack.publish_typed(&BehaviorAck { request_id: cmd.request_id, kind: cmd.kind, ok: cfg.accept });
            })
            .map_err(bus)?;
        task = task.hold(sub);
    }
    let wheels = node
        .subscribe(WHEEL_TOPIC, names::TWIST, cfg.queue, move |m| {
            let Ok(t) = TwistCommand::from_message(&m) else { return };
            let _ = state.publish_typed(&StringMsg::new(format!(
                "wheels linear={:.3} angular={:.3}",
                t.linear.x, t.angular.z
            )));
        })
        .map_err(bus)?;
    Ok(task.hold(wheels).hold(ack).boxed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::exp::{ExpPipeline, DEFAULT_ACK_TIMEOUT};
    use crate::behavior::types::{Affect, BehaviorProfile, ExpStatus};
    use crate::bus::{Bus, ParamValue, Tier};
    use crate::codec::Vector3;

    fn sim(bus: &Bus, p: Params) -> Box<dyn RunningNode> {
        let mut f = NodeFactories::new();
        register(&mut f);
        let b = f.get("actuator_sim").unwrap();
        (b.validate)(&p).unwrap();
        (b.start)(bus.create_node_with("actuator_sim", Tier::Basic, p, Default::default()).unwrap()).unwrap()
    }

    fn profile() -> BehaviorProfile {
        BehaviorProfile {
            id: "p".into(),
            affect_label: Affect::Neutral,
            face_asset: "f".into(),
            sound_asset: "s".into(),
            description: String::new(),
        }
    }

    #[test]
    fn sim_completes_triggers() {
        let bus = Bus::with_std();
        let _sim = sim(&bus, Params::new());
        let exp = ExpPipeline::new(bus.create_node("behavior", Tier::Service).unwrap(), DEFAULT_ACK_TIMEOUT).unwrap();
        let req = exp.trigger(&profile()).unwrap();
        assert_eq!(exp.wait(&req.request_id, Duration::from_secs(2)).unwrap().status, ExpStatus::Completed);
    }

    #[test]
    fn rejecting_sim_fails_triggers() {
        let bus = Bus::with_std();
        let _sim = sim(&bus, [("accept".to_string(), ParamValue::Bool(false))].into());
        let exp = ExpPipeline::new(bus.create_node("behavior", Tier::Service).unwrap(), DEFAULT_ACK_TIMEOUT).unwrap();
        let req = exp.trigger(&profile()).unwrap();
        assert_eq!(exp.wait(&req.request_id, Duration::from_secs(2)).unwrap().status, ExpStatus::Failed);
    }

    #[test]
    fn wheel_state() {
        let bus = Bus::with_std();
        let _sim = sim(&bus, Params::new());
        let probe = bus.create_node("probe", Tier::Basic).unwrap();
        let rx = probe.subscribe_queue(STATE_TOPIC, names::STRING, 4).unwrap();
        let tw = probe.advertise(WHEEL_TOPIC, names::TWIST).unwrap();
        let v = |x| Vector3 { x, y: 0.0, z: 0.0 };
        tw.publish_typed(&TwistCommand { linear: v(0.5), angular: Vector3 { x: 0.0, y: 0.0, z: -1.0 } }).unwrap();
        let m = StringMsg::from_message(&rx.recv_timeout(Duration::from_secs(1)).unwrap()).unwrap();
        assert_eq!(m.data, "wheels linear=0.500 angular=-1.000");
    }

    #[test]
    fn bad_params() {
        let p: Params = [("ack_delay_ms".to_string(), ParamValue::Int(20_000))].into();
        assert_eq!(SimConfig::from_params(&p).unwrap_err().key, "ack_delay_ms");
    }
}
