//! Vision pipeline: synthetic video, image conversion, landmark detection,
//! overlay, emotion classification and gaze estimation.

pub mod convert;
pub mod emotion;
pub mod face;
pub mod gaze;
pub mod landmarks;
pub mod nodes;
pub mod overlay;

pub use convert::{array_to_image, image_to_array, ConvertError};
pub use emotion::{classify_emotion, EmotionError, EmotionEstimate, EmotionLabel};
pub use face::{analytic_landmarks, render, render_frame, Expression, Projection, Schedule, SyntheticScene};
pub use gaze::{estimate_gaze, gaze_label, GazeError, GazeEstimate, GazeParams};
pub use landmarks::{
    backend_by_name, detect_landmarks, DetectError, FiducialBackend, Landmark, LandmarkBackend, LandmarkSet,
    NullBackend, REQUIRED,
};
pub use overlay::render_overlay;
