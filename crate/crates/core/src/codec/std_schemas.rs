use super::schema::SchemaDef;
use super::text::parse_schema_text;

pub const STD_SCHEMAS: &str = include_str!("../../schemas/std.msg");

pub const HEADER: &str = "std/Header";
pub const STRING: &str = "std/String";
pub const VECTOR3: &str = "std/Vector3";
pub const TWIST: &str = "std/Twist";
pub const IMAGE: &str = "std/Image";
pub const CAMERA_INFO: &str = "std/CameraInfo";
pub const NDARRAY: &str = "std/NdArray";
pub const AUDIO_CHUNK: &str = "std/AudioChunk";
pub const LANDMARK: &str = "std/Landmark";
pub const LANDMARK_SET: &str = "std/LandmarkSet";
pub const GAZE_ESTIMATE: &str = "std/GazeEstimate";
pub const EMOTION_ESTIMATE: &str = "std/EmotionEstimate";
pub const BEHAVIOR_COMMAND: &str = "std/BehaviorCommand";
pub const BEHAVIOR_ACK: &str = "std/BehaviorAck";

pub fn std_defs() -> Vec<SchemaDef> {
    parse_schema_text(STD_SCHEMAS).expect("bundled schema file parses")
}
