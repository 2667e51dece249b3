//! Parametric face model, analytic landmarks and the synthetic renderer.
//!
//! Face coordinates: x toward image-right, y up, z toward the camera, in
//! units of the eye-line to mouth-line distance. The head is rotated by
//! yaw about y, then by pitch about x, and projected orthographically.
//!
//! Landmarks are also written into the frame as fiducials: two adjacent
//! pixels with `R = 255` (x) and `R = 254` (y, to the right) or `253` (y,
//! to the left), `G` = landmark id, `B` = sub-pixel fraction in 1/256.
//! Nothing else the renderer draws has `R >= 250`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::landmarks::{Landmark, LandmarkSet, REQUIRED};
use crate::codec::{Header, ImageFrame};

/// Horizontal distance from the face midline to the outer eye corner.
pub const EYE_OUTER_X: f64 = 2.0 / 3.0;
/// Half the inner-to-outer eye corner distance.
pub const EYE_HALF_WIDTH: f64 = 0.25;
pub const EYE_CENTER_X: f64 = EYE_OUTER_X - EYE_HALF_WIDTH;
pub const NOSE_DROP: f64 = 0.45;
pub const NOSE_DEPTH: f64 = 2.0 / std::f64::consts::PI;
pub const EYEBALL_RADIUS: f64 = 6.0 / std::f64::consts::PI * EYE_HALF_WIDTH;
pub const MOUTH_Y: f64 = -1.0;
pub const MOUTH_HALF_WIDTH: f64 = 0.35;
pub const MOUTH_HALF_OPEN: f64 = 0.1;
pub const BROW_Y: f64 = 0.3;
pub const CHIN_Y: f64 = -1.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Expression {
    /// Mouth-corner lift, -1 (frown) ..= 1 (smile).
    pub smile: f64,
    /// Brow lift, 0 ..= 1.
    pub brow_raise: f64,
    /// Jaw opening, 0 ..= 1.
    pub mouth_open: f64,
    /// Brow drop with lip compression, 0 ..= 1.
    pub anger: f64,
}

impl Expression {
    pub fn neutral() -> Self {
        Self::default()
    }

    pub fn smile(amount: f64) -> Self {
        Expression { smile: amount, ..Self::default() }
    }

    pub fn surprise() -> Self {
        Expression { brow_raise: 1.0, mouth_open: 0.8, ..Self::default() }
    }

    pub fn anger() -> Self {
        Expression { anger: 1.0, ..Self::default() }
    }
}

/// Ground truth for one rendered frame. Angles in degrees: yaw positive
/// toward image-right, pitch positive up. Eye angles are relative to the
/// head.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyntheticScene {
    pub head_pitch: f64,
    pub head_yaw: f64,
    pub eye_pitch: f64,
    pub eye_yaw: f64,
    pub expression: Expression,
    pub seed: u64,
}

impl SyntheticScene {
    pub fn gaze_yaw(&self) -> f64 {
        self.head_yaw + self.eye_yaw
    }

    pub fn gaze_pitch(&self) -> f64 {
        self.head_pitch + self.eye_pitch
    }

    /// Face points in head coordinates, before rotation.
    pub fn model_points(&self) -> Vec<(&'static str, [f64; 3])> {
        let e = &self.expression;
        let corner_y = MOUTH_Y + 0.15 * e.smile;
        let corner_x = MOUTH_HALF_WIDTH * (1.0 - 0.2 * e.anger);
        let half_open = MOUTH_HALF_OPEN + 0.15 * e.mouth_open - 0.075 * e.anger;
        let brow_y = BROW_Y + 0.2 * e.brow_raise - 0.1 * e.anger;
        let (a, b) = (self.eye_yaw.to_radians(), self.eye_pitch.to_radians());
        let pupil = |cx: f64| {
            [
                cx + EYEBALL_RADIUS * a.sin() * b.cos(),
                EYEBALL_RADIUS * b.sin(),
                EYEBALL_RADIUS * (a.cos() * b.cos() - 1.0),
            ]
        };
        let inner = EYE_OUTER_X - 2.0 * EYE_HALF_WIDTH;
        vec![
            ("eye_outer_L", [-EYE_OUTER_X, 0.0, 0.0]),
            ("eye_inner_L", [-inner, 0.0, 0.0]),
            ("eye_outer_R", [EYE_OUTER_X, 0.0, 0.0]),
            ("eye_inner_R", [inner, 0.0, 0.0]),
            ("pupil_L", pupil(-EYE_CENTER_X)),
            ("pupil_R", pupil(EYE_CENTER_X)),
            ("nose_tip", [0.0, -NOSE_DROP, NOSE_DEPTH]),
            ("mouth_L", [-corner_x, corner_y, 0.0]),
            ("mouth_R", [corner_x, corner_y, 0.0]),
            ("mouth_top", [0.0, MOUTH_Y + half_open, 0.0]),
            ("mouth_bottom", [0.0, MOUTH_Y - half_open, 0.0]),
            ("brow_L", [-EYE_CENTER_X, brow_y, 0.0]),
            ("brow_R", [EYE_CENTER_X, brow_y, 0.0]),
            ("chin", [0.0, CHIN_Y, 0.0]),
        ]
    }

    /// Rotated point; the returned `y` is still up-positive.
    pub fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        let (t, f) = (self.head_yaw.to_radians(), self.head_pitch.to_radians());
        let x1 = p[0] * t.cos() + p[2] * t.sin();
        let z1 = -p[0] * t.sin() + p[2] * t.cos();
        let y2 = p[1] * f.cos() + z1 * f.sin();
        let z2 = -p[1] * f.sin() + z1 * f.cos();
        [x1, y2, z2]
    }
}

/// Placement of the face in an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub width: u32,
    pub height: u32,
    /// Pixels per face unit.
    pub scale: f64,
    /// Pixel position of the face origin (mid eye line).
    pub origin: (f64, f64),
}

impl Projection {
    pub fn for_size(width: u32, height: u32) -> Self {
        Projection {
            width,
            height,
            scale: height.min(width) as f64 / 4.0,
            origin: (width as f64 / 2.0, height as f64 * 0.4),
        }
    }

    /// Continuous pixel coordinates of a rotated point.
    pub fn to_pixels(&self, p: [f64; 3]) -> (f64, f64) {
        (self.origin.0 + self.scale * p[0], self.origin.1 - self.scale * p[1])
    }

    pub fn normalize(&self, px: (f64, f64)) -> (f64, f64) {
        (
            (px.0 / self.width as f64).clamp(0.0, 1.0),
            (px.1 / self.height as f64).clamp(0.0, 1.0),
        )
    }
}

/// Exact landmark positions for a scene, normalized to the frame.
pub fn analytic_landmarks(scene: &SyntheticScene, proj: &Projection) -> LandmarkSet {
    let points = scene
        .model_points()
        .into_iter()
        .map(|(name, p)| {
            let (x, y) = proj.normalize(proj.to_pixels(scene.rotate(p)));
            Landmark::new(name, x, y)
        })
        .collect();
    LandmarkSet {
        header: Header::default(),
        image_width: proj.width,
        image_height: proj.height,
        face_detected: true,
        points,
    }
}

const SKIN: [u8; 3] = [205, 170, 140];
const EYE_WHITE: [u8; 3] = [240, 240, 240];
const PUPIL: [u8; 3] = [30, 30, 60];
const FEATURE: [u8; 3] = [90, 50, 40];
const LIPS: [u8; 3] = [150, 40, 40];

struct Canvas<'a> {
    img: &'a mut ImageFrame,
}

impl Canvas<'_> {
    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width && (y as u32) < self.img.height {
            self.img.set_pixel(x as u32, y as u32, rgb);
        }
    }

    fn ellipse(&mut self, c: (f64, f64), rx: f64, ry: f64, rgb: [u8; 3]) {
        if rx <= 0.0 || ry <= 0.0 {
            return;
        }
        for y in (c.1 - ry).floor() as i64..=(c.1 + ry).ceil() as i64 {
            for x in (c.0 - rx).floor() as i64..=(c.0 + rx).ceil() as i64 {
                let dx = (x as f64 + 0.5 - c.0) / rx;
                let dy = (y as f64 + 0.5 - c.1) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.put(x, y, rgb);
                }
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), rgb: [u8; 3]) {
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1) * 2;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.put((a.0 + t * (b.0 - a.0)).floor() as i64, (a.1 + t * (b.1 - a.1)).floor() as i64, rgb);
        }
    }
}

/// Renders a scene: seeded background, cartoon face, then fiducials.
pub fn render(scene: &SyntheticScene, proj: &Projection) -> ImageFrame {
    let mut img = ImageFrame::black(proj.width, proj.height);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    for px in img.data.chunks_exact_mut(3) {
        let g: u8 = rng.gen_range(20..=120);
        px.copy_from_slice(&[g, g, g.saturating_add(10)]);
    }
    let pts: Vec<(&str, (f64, f64))> = scene
        .model_points()
        .into_iter()
        .map(|(n, p)| (n, proj.to_pixels(scene.rotate(p))))
        .collect();
    let at = |name: &str| pts.iter().find(|(n, _)| *n == name).map(|(_, p)| *p).expect("model point");
    let s = proj.scale;
    let mut c = Canvas { img: &mut img };
    let head = proj.to_pixels(scene.rotate([0.0, -0.5, 0.0]));
    c.ellipse(head, 1.15 * s, 1.4 * s, SKIN);
    for side in ["L", "R"] {
        let o = at(&format!("eye_outer_{side}"));
        let i = at(&format!("eye_inner_{side}"));
        let mid = ((o.0 + i.0) / 2.0, (o.1 + i.1) / 2.0);
        c.ellipse(mid, (o.0 - i.0).abs() / 2.0 + 1.0, 0.09 * s, EYE_WHITE);
        c.ellipse(at(&format!("pupil_{side}")), 0.07 * s, 0.07 * s, PUPIL);
        let brow = at(&format!("brow_{side}"));
        c.line((brow.0 - 0.18 * s, brow.1), (brow.0 + 0.18 * s, brow.1), FEATURE);
    }
    let nose = at("nose_tip");
    c.ellipse(nose, 0.06 * s, 0.05 * s, FEATURE);
    let (ml, mr, mt, mb) = (at("mouth_L"), at("mouth_R"), at("mouth_top"), at("mouth_bottom"));
    for (a, b) in [(ml, mt), (mt, mr), (mr, mb), (mb, ml)] {
        c.line(a, b, LIPS);
    }
    let marks = analytic_landmarks(scene, proj);
    for p in &marks.points {
        if let Some(id) = REQUIRED.iter().position(|n| *n == p.name) {
            write_fiducial(&mut img, id as u8 + 1, p.x, p.y);
        }
    }
    img
}

fn frac_byte(v: f64) -> u8 {
    (v.fract() * 256.0).floor().clamp(0.0, 255.0) as u8
}

/// Writes one landmark marker at normalized `(x, y)`.
pub fn write_fiducial(img: &mut ImageFrame, id: u8, x: f64, y: f64) {
    let (w, h) = (img.width, img.height);
    if w < 2 || h == 0 {
        return;
    }
    let fx = (x * w as f64).clamp(0.0, w as f64 - 1e-9);
    let fy = (y * h as f64).clamp(0.0, h as f64 - 1e-9);
    let (px, py) = (fx.floor() as u32, fy.floor() as u32);
    img.set_pixel(px, py, [255, id, frac_byte(fx)]);
    if px + 1 < w {
        img.set_pixel(px + 1, py, [254, id, frac_byte(fy)]);
    } else {
        img.set_pixel(px - 1, py, [253, id, frac_byte(fy)]);
    }
}

/// Scene schedule used by the video source.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// The same scene every frame.
    Static(SyntheticScene),
    /// Three frames of "left up", then one with the head tilted up; repeats.
    GazeDemo,
    /// No face.
    Blank,
    /// Cycles through head and gaze directions.
    Sweep,
}

impl Schedule {
    /// `None` for a frame without a face.
    pub fn scene(&self, frame: u64) -> Option<SyntheticScene> {
        match self {
            Schedule::Static(s) => Some(SyntheticScene { seed: s.seed.wrapping_add(frame), ..*s }),
            Schedule::Blank => None,
            Schedule::GazeDemo => {
                let tilted = frame % 4 == 3;
                Some(SyntheticScene {
                    head_pitch: if tilted { 25.0 } else { 0.0 },
                    head_yaw: 0.0,
                    eye_pitch: if tilted { 0.0 } else { 20.0 },
                    eye_yaw: -20.0,
                    expression: Expression::neutral(),
                    seed: frame,
                })
            }
            Schedule::Sweep => {
                const ANGLES: [f64; 5] = [-20.0, -10.0, 0.0, 10.0, 20.0];
                let i = frame as usize;
                Some(SyntheticScene {
                    head_pitch: ANGLES[(i / 25) % 5] * 0.5,
                    head_yaw: ANGLES[(i / 5) % 5] * 0.5,
                    eye_pitch: ANGLES[(i / 3) % 5],
                    eye_yaw: ANGLES[i % 5],
                    expression: Expression::neutral(),
                    seed: frame,
                })
            }
        }
    }
}

/// Frame for a schedule slot: a rendered face or plain background.
pub fn render_frame(schedule: &Schedule, frame: u64, proj: &Projection) -> ImageFrame {
    match schedule.scene(frame) {
        Some(scene) => render(&scene, proj),
        None => {
            let mut img = ImageFrame::black(proj.width, proj.height);
            let mut rng = ChaCha8Rng::seed_from_u64(frame);
            for px in img.data.chunks_exact_mut(3) {
                let g: u8 = rng.gen_range(20..=120);
                px.copy_from_slice(&[g, g, g.saturating_add(10)]);
            }
            img
        }
    }
}
