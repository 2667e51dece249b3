//! Closed-form head pose and gaze from face landmarks.
//!
//! ```text
//! head_yaw   = k_yaw   * (dL - dR) / (dL + dR)
//! head_pitch = k_pitch * (r0 - r),  r = (y_nose - y_eyes) / (y_mouth - y_eyes)
//! gaze_yaw   = head_yaw   + k_e * mean pupil dx
//! gaze_pitch = head_pitch + k_e * mean pupil dy
//! ```
//!
//! `dL`, `dR` are horizontal distances from the nose tip to the outer eye
//! corners. `y_eyes` is the mean of the four eye corners and `y_mouth` the
//! midpoint of `mouth_top` and `mouth_bottom`. Pupil `dx` is the offset from
//! the eye-corner midpoint over half the corner distance; `dy` is the upward
//! offset over a quarter of the eye-to-mouth distance. Positive yaw points
//! to image-right, positive pitch up.
//!
//! Coordinates are first snapped to multiples of 2^-20, which makes the
//! horizontal mirror `x -> 1 - x` exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::landmarks::LandmarkSet;
use crate::bus::{ParamError, Params, ParamsExt};
use crate::codec::std_schemas as names;
use crate::codec::{FieldReader, Header, TypedError, TypedMessage, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeParams {
    pub k_yaw: f64,
    pub k_pitch: f64,
    pub r0: f64,
    pub k_e: f64,
    pub theta_gaze: f64,
    pub theta_head: f64,
}

impl Default for GazeParams {
    fn default() -> Self {
        GazeParams { k_yaw: 60.0, k_pitch: 90.0, r0: 0.45, k_e: 30.0, theta_gaze: 10.0, theta_head: 15.0 }
    }
}

impl GazeParams {
    pub fn from_params(p: &Params) -> Result<Self, ParamError> {
        let d = Self::default();
        Ok(GazeParams {
            k_yaw: p.f64_or("k_yaw", d.k_yaw)?,
            k_pitch: p.f64_or("k_pitch", d.k_pitch)?,
            r0: p.f64_or("r0", d.r0)?,
            k_e: p.f64_or("k_e", d.k_e)?,
            theta_gaze: p.f64_or("theta_gaze", d.theta_gaze)?,
            theta_head: p.f64_or("theta_head", d.theta_head)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GazeEstimate {
    pub header: Header,
    pub head_pitch_deg: f64,
    pub head_yaw_deg: f64,
    pub gaze_pitch_deg: f64,
    pub gaze_yaw_deg: f64,
    pub label: String,
}

impl TypedMessage for GazeEstimate {
    const SCHEMA: &'static str = names::GAZE_ESTIMATE;

    fn to_fields(&self) -> Vec<Value> {
        vec![
            self.header.to_value(),
            Value::F64(self.head_pitch_deg),
            Value::F64(self.head_yaw_deg),
            Value::F64(self.gaze_pitch_deg),
            Value::F64(self.gaze_yaw_deg),
            Value::String(self.label.clone()),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        Ok(GazeEstimate {
            header: Header::read_nested(r)?,
            head_pitch_deg: r.f64()?,
            head_yaw_deg: r.f64()?,
            gaze_pitch_deg: r.f64()?,
            gaze_yaw_deg: r.f64()?,
            label: r.string()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GazeError {
    #[error("missing landmark {0}")]
    MissingLandmark(String),
    #[error("degenerate landmark geometry: {0}")]
    Degenerate(&'static str),
}

/// Label for gaze and head angles in degrees.
///
/// Horizontal part `left`/`right`, vertical part `up`/`down`, each omitted
/// inside the threshold; `center` if both are omitted; then an optional
/// ` with head being up` / ` with head being down`.
pub fn gaze_label(gaze_yaw: f64, gaze_pitch: f64, head_pitch: f64, p: &GazeParams) -> String {
    let h = if gaze_yaw < -p.theta_gaze {
        Some("left")
    } else if gaze_yaw > p.theta_gaze {
        Some("right")
    } else {
        None
    };
    let v = if gaze_pitch > p.theta_gaze {
        Some("up")
    } else if gaze_pitch < -p.theta_gaze {
        Some("down")
    } else {
        None
    };
    let mut label = match (h, v) {
        (None, None) => "center".to_string(),
        (Some(a), None) | (None, Some(a)) => a.to_string(),
        (Some(a), Some(b)) => format!("{a} {b}"),
    };
    if head_pitch > p.theta_head {
        label.push_str(" with head being up");
    } else if head_pitch < -p.theta_head {
        label.push_str(" with head being down");
    }
    label
}

fn snap(v: f64) -> f64 {
    const GRID: f64 = (1u64 << 20) as f64;
    (v * GRID).round() / GRID
}

pub fn estimate_gaze(set: &LandmarkSet, p: &GazeParams) -> Result<GazeEstimate, GazeError> {
    let pt = |name: &str| {
        set.get(name)
            .map(|l| (snap(l.x), snap(l.y)))
            .ok_or_else(|| GazeError::MissingLandmark(name.to_string()))
    };
    let (eo_l, ei_l, eo_r, ei_r) = (pt("eye_outer_L")?, pt("eye_inner_L")?, pt("eye_outer_R")?, pt("eye_inner_R")?);
    let (pu_l, pu_r) = (pt("pupil_L")?, pt("pupil_R")?);
    let nose = pt("nose_tip")?;
    let (m_top, m_bottom) = (pt("mouth_top")?, pt("mouth_bottom")?);

    let d_l = (nose.0 - eo_l.0).abs();
    let d_r = (eo_r.0 - nose.0).abs();
    if d_l + d_r == 0.0 {
        return Err(GazeError::Degenerate("outer eye corners coincide with the nose"));
    }
    let head_yaw = p.k_yaw * (d_l - d_r) / (d_l + d_r);

    let y_eyes = ((eo_l.1 + eo_r.1) + (ei_l.1 + ei_r.1)) / 4.0;
    let y_mouth = (m_top.1 + m_bottom.1) / 2.0;
    let span = y_mouth - y_eyes;
    if span <= 0.0 {
        return Err(GazeError::Degenerate("mouth is not below the eyes"));
    }
    let r = (nose.1 - y_eyes) / span;
    let head_pitch = p.k_pitch * (p.r0 - r);

    let half_height = span / 4.0;
    let pupil = |outer: (f64, f64), inner: (f64, f64), pupil: (f64, f64)| -> Result<(f64, f64), GazeError> {
        let half_width = (outer.0 - inner.0).abs() / 2.0;
        if half_width == 0.0 {
            return Err(GazeError::Degenerate("eye corners coincide"));
        }
        let cx = (outer.0 + inner.0) / 2.0;
        let cy = (outer.1 + inner.1) / 2.0;
        Ok(((pupil.0 - cx) / half_width, (cy - pupil.1) / half_height))
    };
    let (dx_l, dy_l) = pupil(eo_l, ei_l, pu_l)?;
    let (dx_r, dy_r) = pupil(eo_r, ei_r, pu_r)?;
    let gaze_yaw = head_yaw + p.k_e * ((dx_l + dx_r) / 2.0);
    let gaze_pitch = head_pitch + p.k_e * ((dy_l + dy_r) / 2.0);

    Ok(GazeEstimate {
        header: set.header.clone(),
        head_pitch_deg: head_pitch,
        head_yaw_deg: head_yaw,
        gaze_pitch_deg: gaze_pitch,
        gaze_yaw_deg: gaze_yaw,
        label: gaze_label(gaze_yaw, gaze_pitch, head_pitch, p),
    })
}
