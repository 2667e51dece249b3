use std::collections::BTreeSet;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::codec::std_schemas as names;
use crate::codec::{FieldReader, TypedError, TypedMessage, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {reason}")]
pub struct ValidationError {
    pub path: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ValidationError { path: path.into(), reason: reason.into() }
    }
}

/// Body that failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BodyError {
    #[error("malformed JSON: {0}")]
    BadJson(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Parses JSON into `T`, reporting the path of the first offending field.
pub fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, BodyError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    match serde_path_to_error::deserialize::<_, T>(de) {
        Ok(v) => Ok(v),
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_data() {
                let path = if path == "." { String::new() } else { path };
                Err(ValidationError::new(path, inner.to_string()).into())
            } else {
                Err(BodyError::BadJson(inner.to_string()))
            }
        }
    }
}

/// Ids for profiles and assets: 1 to 64 of `[A-Za-z0-9_.-]`, not starting
/// with a dot.
pub fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn check_id(path: &str, id: &str) -> Result<(), ValidationError> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(ValidationError::new(path, format!("invalid id {id:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Affect {
    Neutral,
    Happy,
    Sad,
    Surprised,
    Angry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorProfile {
    pub id: String,
    pub affect_label: Affect,
    pub face_asset: String,
    pub sound_asset: String,
    #[serde(default)]
    pub description: String,
}

impl BehaviorProfile {
    /// Shape checks; asset existence is checked by the store.
    pub fn validate(&self) -> Result<(), ValidationError> {
        check_id("id", &self.id)?;
        check_id("face_asset", &self.face_asset)?;
        check_id("sound_asset", &self.sound_asset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorKind {
    WheelPair,
    Servo,
    DcMotor,
    Speaker,
    Display,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Camera,
    Microphone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component<K> {
    pub name: String,
    pub kind: K,
    #[serde(default)]
    pub params: Map<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDefinition {
    pub robot_name: String,
    #[serde(default)]
    pub actuators: Vec<Component<ActuatorKind>>,
    #[serde(default)]
    pub sensors: Vec<Component<SensorKind>>,
}

impl RobotDefinition {
    /// Component names are unique across actuators and sensors.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.robot_name.trim().is_empty() {
            return Err(ValidationError::new("robot_name", "must not be empty"));
        }
        let mut seen = BTreeSet::new();
        let names = self
            .actuators
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("actuators[{i}].name"), &c.name))
            .chain(self.sensors.iter().enumerate().map(|(i, c)| (format!("sensors[{i}].name"), &c.name)));
        for (path, name) in names {
            if name.trim().is_empty() {
                return Err(ValidationError::new(path, "must not be empty"));
            }
            if !seen.insert(name.as_str()) {
                return Err(ValidationError::new(path, format!("duplicate component name {name:?}")));
            }
        }
        Ok(())
    }

    pub fn has_actuator(&self, kind: ActuatorKind) -> bool {
        self.actuators.iter().any(|a| a.kind == kind)
    }

    pub fn has_sensor(&self, kind: SensorKind) -> bool {
        self.sensors.iter().any(|s| s.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpStatus {
    Accepted,
    Dispatched,
    Completed,
    Failed,
}

impl ExpStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, ExpStatus::Completed | ExpStatus::Failed)
    }

    /// Forward-only: accepted, dispatched, completed; failed from any
    /// non-terminal state.
    pub fn can_become(self, next: ExpStatus) -> bool {
        match next {
            ExpStatus::Failed => !self.is_terminal(),
            _ => !self.is_terminal() && next > self,
        }
    }
}

impl fmt::Display for ExpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpStatus::Accepted => "accepted",
            ExpStatus::Dispatched => "dispatched",
            ExpStatus::Completed => "completed",
            ExpStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpRequest {
    pub request_id: String,
    pub profile_id: String,
    /// Milliseconds since the Unix epoch.
    pub requested_at: u64,
    pub status: ExpStatus,
    /// Every status taken, in order.
    pub history: Vec<ExpStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `kind` is `"face"` or `"sound"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorCommand {
    pub request_id: String,
    pub kind: String,
    pub asset: String,
}

impl TypedMessage for BehaviorCommand {
    const SCHEMA: &'static str = names::BEHAVIOR_COMMAND;

    fn to_fields(&self) -> Vec<Value> {
        vec![
            Value::String(self.request_id.clone()),
            Value::String(self.kind.clone()),
            Value::String(self.asset.clone()),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        Ok(BehaviorCommand { request_id: r.string()?, kind: r.string()?, asset: r.string()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorAck {
    pub request_id: String,
    pub kind: String,
    pub ok: bool,
}

impl TypedMessage for BehaviorAck {
    const SCHEMA: &'static str = names::BEHAVIOR_ACK;

    fn to_fields(&self) -> Vec<Value> {
        vec![Value::String(self.request_id.clone()), Value::String(self.kind.clone()), Value::Bool(self.ok)]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        Ok(BehaviorAck { request_id: r.string()?, kind: r.string()?, ok: r.bool()? })
    }
}
