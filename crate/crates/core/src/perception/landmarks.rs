use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::std_schemas as names;
use crate::codec::{
    FieldReader, FlatArray, FlatData, Header, NdArrayFrame, TypedError, TypedMessage, Value,
};

/// Face points that must be present whenever `face_detected` is set. The
/// position in this list plus one is the fiducial id.
pub const REQUIRED: [&str; 14] = [
    "eye_outer_L",
    "eye_inner_L",
    "eye_outer_R",
    "eye_inner_R",
    "pupil_L",
    "pupil_R",
    "nose_tip",
    "mouth_L",
    "mouth_R",
    "mouth_top",
    "mouth_bottom",
    "brow_L",
    "brow_R",
    "chin",
];

/// One named point, normalized to the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub depth: Option<f64>,
}

impl Landmark {
    /// Clamps coordinates into `[0, 1]`.
    pub fn new(name: &str, x: f64, y: f64) -> Self {
        Landmark { name: name.to_string(), x: clamp01(x), y: clamp01(y), depth: None }
    }
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSet {
    pub header: Header,
    pub image_width: u32,
    pub image_height: u32,
    pub face_detected: bool,
    pub points: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn empty(header: Header, width: u32, height: u32) -> Self {
        LandmarkSet { header, image_width: width, image_height: height, face_detected: false, points: Vec::new() }
    }

    pub fn get(&self, name: &str) -> Option<&Landmark> {
        self.points.iter().find(|p| p.name == name)
    }

    /// First required name that is absent, if any.
    pub fn missing_required(&self) -> Option<&'static str> {
        REQUIRED.iter().copied().find(|n| self.get(n).is_none())
    }

    /// Horizontal mirror: `x -> 1 - x` and `_L` / `_R` names swapped.
    pub fn mirrored(&self) -> LandmarkSet {
        let points = self
            .points
            .iter()
            .map(|p| Landmark { name: swap_side(&p.name), x: 1.0 - p.x, y: p.y, depth: p.depth })
            .collect();
        LandmarkSet { points, ..self.clone() }
    }
}

fn swap_side(name: &str) -> String {
    if let Some(stem) = name.strip_suffix("_L") {
        format!("{stem}_R")
    } else if let Some(stem) = name.strip_suffix("_R") {
        format!("{stem}_L")
    } else {
        name.to_string()
    }
}

impl TypedMessage for LandmarkSet {
    const SCHEMA: &'static str = names::LANDMARK_SET;

    fn to_fields(&self) -> Vec<Value> {
        let points = self
            .points
            .iter()
            .map(|p| {
                Value::Message(vec![
                    Value::String(p.name.clone()),
                    Value::F64(p.x),
                    Value::F64(p.y),
                    Value::Bool(p.depth.is_some()),
                    Value::F64(p.depth.unwrap_or(0.0)),
                ])
            })
            .collect();
        vec![
            self.header.to_value(),
            Value::U32(self.image_width),
            Value::U32(self.image_height),
            Value::Bool(self.face_detected),
            Value::Array(points),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        let header = Header::read_nested(r)?;
        let image_width = r.u32()?;
        let image_height = r.u32()?;
        let face_detected = r.bool()?;
        let mut points = Vec::new();
        for v in r.array()? {
            let fields = v.as_message().ok_or(TypedError::Invalid { what: "landmark", reason: "not a message".into() })?;
            let mut pr = FieldReader::nested(names::LANDMARK, fields);
            let name = pr.string()?;
            let x = pr.f64()?;
            let y = pr.f64()?;
            let has_depth = pr.bool()?;
            let depth = pr.f64()?;
            let mut p = Landmark::new(&name, x, y);
            p.depth = has_depth.then_some(depth);
            points.push(p);
        }
        Ok(LandmarkSet { header, image_width, image_height, face_detected, points })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectError {
    #[error("expected a u8 array of shape [h, w, 3], got {dtype} {shape:?}")]
    BadShape { dtype: &'static str, shape: Vec<usize> },
}

/// Landmark detector interface.
pub trait LandmarkBackend: Send + Sync {
    fn name(&self) -> &'static str;
    /// `pixels` is row-major RGB, `width * height * 3` bytes. Returns the
    /// detected face points, or an empty list when there is no face.
    fn detect(&self, width: usize, height: usize, pixels: &[u8]) -> Vec<Landmark>;
}

/// Reads the renderer's fiducial markers.
#[derive(Debug, Default, Clone, Copy)]
pub struct FiducialBackend;

impl LandmarkBackend for FiducialBackend {
    fn name(&self) -> &'static str {
        "fiducial"
    }

    fn detect(&self, width: usize, height: usize, pixels: &[u8]) -> Vec<Landmark> {
        let mut xs: BTreeMap<u8, (usize, usize, u8)> = BTreeMap::new();
        let mut ys: BTreeMap<u8, u8> = BTreeMap::new();
        for (i, px) in pixels.chunks_exact(3).enumerate() {
            let (x, y) = (i % width, i / width);
            match px[0] {
                255 => {
                    xs.insert(px[1], (x, y, px[2]));
                }
                253 | 254 => {
                    ys.insert(px[1], px[2]);
                }
                _ => {}
            }
        }
        let sub = |b: u8| (b as f64 + 0.5) / 256.0;
        let found: Vec<Landmark> = REQUIRED
            .iter()
            .enumerate()
            .filter_map(|(k, name)| {
                let id = k as u8 + 1;
                let (x, y, bx) = *xs.get(&id)?;
                let by = *ys.get(&id)?;
                Some(Landmark::new(
                    name,
                    (x as f64 + sub(bx)) / width as f64,
                    (y as f64 + sub(by)) / height as f64,
                ))
            })
            .collect();
        if found.len() == REQUIRED.len() {
            found
        } else {
            Vec::new()
        }
    }
}

/// Never finds a face.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullBackend;

impl LandmarkBackend for NullBackend {
    fn name(&self) -> &'static str {
        "none"
    }

    fn detect(&self, _: usize, _: usize, _: &[u8]) -> Vec<Landmark> {
        Vec::new()
    }
}

pub fn backend_by_name(name: &str) -> Option<Box<dyn LandmarkBackend>> {
    match name {
        "fiducial" => Some(Box::new(FiducialBackend)),
        "none" => Some(Box::new(NullBackend)),
        _ => None,
    }
}

/// Runs `backend` on an `[h, w, 3]` u8 frame.
pub fn detect_landmarks(frame: &NdArrayFrame, backend: &dyn LandmarkBackend) -> Result<LandmarkSet, DetectError> {
    let (h, w, pixels) = rgb_view(&frame.array)?;
    let points = backend.detect(w, h, pixels);
    Ok(LandmarkSet {
        header: frame.header.clone(),
        image_width: w as u32,
        image_height: h as u32,
        face_detected: !points.is_empty(),
        points,
    })
}

pub(crate) fn rgb_view(array: &FlatArray) -> Result<(usize, usize, &[u8]), DetectError> {
    match (&array.data, array.shape.as_slice()) {
        (FlatData::U8(px), &[h, w, 3]) => Ok((h, w, px.as_slice())),
        _ => Err(DetectError::BadShape { dtype: array.dtype().name(), shape: array.shape.clone() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SchemaRegistry;
    use crate::perception::convert::image_to_array;
    use crate::perception::face::{analytic_landmarks, render, Projection, SyntheticScene};

    #[test]
    fn fiducials_recover_analytic_positions() {
        let proj = Projection::for_size(320, 240);
        let scene = SyntheticScene::default();
        let frame = image_to_array(&render(&scene, &proj)).unwrap();
        let set = detect_landmarks(&frame, &FiducialBackend).unwrap();
        assert!(set.face_detected);
        let truth = analytic_landmarks(&scene, &proj);
        for name in REQUIRED {
            let (a, b) = (set.get(name).unwrap(), truth.get(name).unwrap());
            assert!((a.x - b.x).abs() < 0.01 && (a.y - b.y).abs() < 0.01, "{name}");
        }
    }

    #[test]
    fn blank_and_bad_shape() {
        let frame = NdArrayFrame {
            header: Header::default(),
            array: FlatArray::new(vec![4, 4, 3], FlatData::U8(vec![0; 48])).unwrap(),
        };
        let set = detect_landmarks(&frame, &FiducialBackend).unwrap();
        assert!(!set.face_detected && set.points.is_empty());
        let bad = NdArrayFrame {
            header: Header::default(),
            array: FlatArray::new(vec![4, 4, 3], FlatData::F32(vec![0.0; 48])).unwrap(),
        };
        assert!(matches!(detect_landmarks(&bad, &FiducialBackend), Err(DetectError::BadShape { dtype: "f32", .. })));
    }

    #[test]
    fn message_roundtrip_and_mirror() {
        let reg = SchemaRegistry::with_std();
        let mut set = analytic_landmarks(&SyntheticScene { head_yaw: 10.0, ..Default::default() }, &Projection::for_size(64, 48));
        set.points[0].depth = Some(1.5);
        let back = LandmarkSet::from_message(&set.to_message(&reg).unwrap()).unwrap();
        assert_eq!(back, set);
        let m = set.mirrored();
        assert_eq!(m.get("eye_outer_R").unwrap().x, 1.0 - set.get("eye_outer_L").unwrap().x);
        assert_eq!(m.mirrored().get("chin"), set.get("chin"));
    }
}
