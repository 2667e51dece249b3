//! Geometric expression heuristic over face landmarks.
//!
//! All measures are in image coordinates (y down) divided by the eye-line
//! to mouth-line distance `L`:
//!
//! * `e`: mouth-corner elevation above the mouth center,
//! * `g`: brow height above the eye line, scored as `z = (g - 0.3) / 0.05`,
//! * `m`: mouth opening, `mouth_bottom - mouth_top`.
//!
//! Rules, first match wins: surprised (`z >= 2`, `m >= 0.3`), angry
//! (`z <= -1`, `m <= 0.14`), happy (`e >= 0.03`), sad (`e <= -0.03`),
//! otherwise neutral.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::landmarks::LandmarkSet;
use crate::codec::std_schemas as names;
use crate::codec::{FieldReader, Header, TypedError, TypedMessage, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmotionLabel {
    Neutral,
    Happy,
    Sad,
    Surprised,
    Angry,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 5] =
        [EmotionLabel::Neutral, EmotionLabel::Happy, EmotionLabel::Sad, EmotionLabel::Surprised, EmotionLabel::Angry];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprised => "surprised",
            EmotionLabel::Angry => "angry",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = TypedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EmotionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| TypedError::Invalid { what: "emotion label", reason: format!("{s:?}") })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionEstimate {
    pub header: Header,
    pub label: EmotionLabel,
    pub confidence: f64,
}

impl TypedMessage for EmotionEstimate {
    const SCHEMA: &'static str = names::EMOTION_ESTIMATE;

    fn to_fields(&self) -> Vec<Value> {
        vec![self.header.to_value(), Value::String(self.label.as_str().into()), Value::F64(self.confidence)]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        let header = Header::read_nested(r)?;
        let label = r.string()?.parse()?;
        let confidence = r.f64()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TypedError::Invalid { what: "emotion confidence", reason: confidence.to_string() });
        }
        Ok(EmotionEstimate { header, label, confidence })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmotionError {
    #[error("no face in landmark set")]
    NoFace,
    #[error("missing landmark {0}")]
    MissingLandmark(&'static str),
    #[error("degenerate face geometry")]
    Degenerate,
}

/// Shape measures the rules operate on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceMeasures {
    pub corner_lift: f64,
    pub brow_z: f64,
    pub mouth_open: f64,
}

pub fn measure(set: &LandmarkSet) -> Result<FaceMeasures, EmotionError> {
    if !set.face_detected {
        return Err(EmotionError::NoFace);
    }
    let y = |name: &'static str| set.get(name).map(|p| p.y).ok_or(EmotionError::MissingLandmark(name));
    let eyes = (y("eye_outer_L")? + y("eye_outer_R")? + y("eye_inner_L")? + y("eye_inner_R")?) / 4.0;
    let (top, bottom) = (y("mouth_top")?, y("mouth_bottom")?);
    let mouth = (top + bottom) / 2.0;
    let span = mouth - eyes;
    if span <= 0.0 {
        return Err(EmotionError::Degenerate);
    }
    let corners = (y("mouth_L")? + y("mouth_R")?) / 2.0;
    let brows = (y("brow_L")? + y("brow_R")?) / 2.0;
    Ok(FaceMeasures {
        corner_lift: (mouth - corners) / span,
        brow_z: ((eyes - brows) / span - 0.3) / 0.05,
        mouth_open: (bottom - top) / span,
    })
}

pub fn classify_measures(m: &FaceMeasures) -> (EmotionLabel, f64) {
    let (e, z, o) = (m.corner_lift, m.brow_z, m.mouth_open);
    let c = |v: f64| v.clamp(0.0, 1.0);
    if z >= 2.0 && o >= 0.3 {
        (EmotionLabel::Surprised, c(0.5 + 0.1 * z))
    } else if z <= -1.0 && o <= 0.14 {
        (EmotionLabel::Angry, c(0.5 + 0.2 * -z))
    } else if e >= 0.03 {
        (EmotionLabel::Happy, c(0.5 + e / 0.15 * 0.5))
    } else if e <= -0.03 {
        (EmotionLabel::Sad, c(0.5 + -e / 0.15 * 0.5))
    } else {
        let spread = (e.abs() / 0.03).max(z.abs() / 2.0).max((o - 0.2).abs() / 0.1);
        (EmotionLabel::Neutral, c(1.0 - 0.5 * spread).max(0.2))
    }
}

pub fn classify_emotion(set: &LandmarkSet) -> Result<EmotionEstimate, EmotionError> {
    let (label, confidence) = classify_measures(&measure(set)?);
    Ok(EmotionEstimate { header: set.header.clone(), label, confidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SchemaRegistry;
    use crate::perception::face::{analytic_landmarks, Expression, Projection, SyntheticScene};

    fn classify(expression: Expression, head_pitch: f64, head_yaw: f64) -> EmotionEstimate {
        let scene = SyntheticScene { expression, head_pitch, head_yaw, ..Default::default() };
        classify_emotion(&analytic_landmarks(&scene, &Projection::for_size(320, 240))).unwrap()
    }

    #[test]
    fn neutral_face() {
        let e = classify(Expression::neutral(), 0.0, 0.0);
        assert_eq!(e.label, EmotionLabel::Neutral);
        assert!(e.confidence > 0.9, "{e:?}");
    }

    #[test]
    fn expression_sweep() {
        for pose in [(0.0, 0.0), (10.0, -15.0), (-10.0, 15.0)] {
            for s in [0.4, 0.7, 1.0] {
                let e = classify(Expression::smile(s), pose.0, pose.1);
                assert_eq!(e.label, EmotionLabel::Happy, "smile {s} {pose:?}");
                assert!(e.confidence >= 0.6, "{e:?}");
            }
            assert_eq!(classify(Expression::smile(-0.6), pose.0, pose.1).label, EmotionLabel::Sad);
            assert_eq!(classify(Expression::surprise(), pose.0, pose.1).label, EmotionLabel::Surprised);
            assert_eq!(classify(Expression::anger(), pose.0, pose.1).label, EmotionLabel::Angry);
            assert_eq!(classify(Expression::neutral(), pose.0, pose.1).label, EmotionLabel::Neutral);
        }
    }

    #[test]
    fn no_face() {
        assert_eq!(classify_emotion(&LandmarkSet::default()), Err(EmotionError::NoFace));
    }

    #[test]
    fn message_roundtrip() {
        let reg = SchemaRegistry::with_std();
        let e = classify(Expression::surprise(), 0.0, 0.0);
        assert_eq!(EmotionEstimate::from_message(&e.to_message(&reg).unwrap()).unwrap(), e);
        assert!((0.0..=1.0).contains(&e.confidence));
    }
}
