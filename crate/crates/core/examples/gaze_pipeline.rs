//! Runs the perception skills by hand on rendered synthetic faces: pixel
//! landmark detection, emotion classification and the gaze label.
//!
//! ```text
//! cargo run --example gaze_pipeline
//! ```

use socialbot::perception::{
    analytic_landmarks, classify_emotion, detect_landmarks, estimate_gaze, gaze_label, image_to_array, render,
    Expression, FiducialBackend, GazeParams, Projection, SyntheticScene,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let proj = Projection::for_size(320, 240);
    let params = GazeParams::default();
    let scenes = [
        ("straight ahead", SyntheticScene::default()),
        ("smiling", SyntheticScene { expression: Expression::smile(1.0), ..Default::default() }),
        ("eyes up-left", SyntheticScene { eye_yaw: -20.0, eye_pitch: 20.0, ..Default::default() }),
        (
            "eyes up-left, head up",
            SyntheticScene { eye_yaw: -20.0, eye_pitch: 20.0, head_pitch: 25.0, ..Default::default() },
        ),
        ("head turned right", SyntheticScene { head_yaw: 25.0, ..Default::default() }),
    ];
    for (what, scene) in scenes {
        let frame = image_to_array(&render(&scene, &proj))?;
        let marks = detect_landmarks(&frame, &FiducialBackend)?;
        let emotion = classify_emotion(&marks)?;
        let gaze = estimate_gaze(&marks, &params)?;
        let truth = gaze_label(scene.gaze_yaw(), scene.gaze_pitch(), scene.head_pitch, &params);
        println!(
            "{what:<22} emotion={:<9} gaze={:<28} truth={truth:<28} head_yaw={:+.1} head_pitch={:+.1}",
            emotion.label.as_str(),
            format!("{:?}", gaze.label),
            gaze.head_yaw_deg,
            gaze.head_pitch_deg,
        );
        let exact = analytic_landmarks(&scene, &proj);
        debug_assert_eq!(exact.points.len(), marks.points.len());
    }
    Ok(())
}
