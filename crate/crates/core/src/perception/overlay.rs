use super::landmarks::LandmarkSet;
use crate::codec::ImageFrame;

pub const MARKER: [u8; 3] = [0, 255, 0];

/// Draws a 3x3 green marker centered on each landmark. Everything else is
/// copied through, and applying it twice gives the same bytes.
pub fn render_overlay(frame: &ImageFrame, landmarks: &LandmarkSet) -> ImageFrame {
    let mut out = frame.clone();
    let (w, h) = (frame.width as i64, frame.height as i64);
    if w == 0 || h == 0 {
        return out;
    }
    for p in &landmarks.points {
        let cx = ((p.x * w as f64).floor() as i64).min(w - 1);
        let cy = ((p.y * h as f64).floor() as i64).min(h - 1);
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                if (0..w).contains(&x) && (0..h).contains(&y) {
                    out.set_pixel(x as u32, y as u32, MARKER);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Header;
    use crate::perception::face::{analytic_landmarks, render, Projection, SyntheticScene};
    use crate::perception::landmarks::Landmark;

    fn single(x: f64, y: f64) -> LandmarkSet {
        LandmarkSet {
            header: Header::default(),
            image_width: 8,
            image_height: 6,
            face_detected: true,
            points: vec![Landmark::new("nose_tip", x, y)],
        }
    }

    #[test]
    fn passthrough_without_landmarks() {
        let img = render(&SyntheticScene::default(), &Projection::for_size(40, 30));
        assert_eq!(render_overlay(&img, &LandmarkSet::default()), img);
    }

    #[test]
    fn marker_centered() {
        let out = render_overlay(&ImageFrame::black(8, 6), &single(0.5, 0.5));
        for y in 0..6 {
            for x in 0..8 {
                let lit = (3..=5).contains(&x) && (2..=4).contains(&y);
                assert_eq!(out.pixel(x, y) == MARKER, lit, "({x},{y})");
            }
        }
    }

    #[test]
    fn edge_marker_is_clipped() {
        let out = render_overlay(&ImageFrame::black(8, 6), &single(1.0, 0.0));
        assert_eq!(out.pixel(7, 0), MARKER);
        assert_eq!(out.pixel(6, 1), MARKER);
        assert_eq!(out.pixel(5, 0), [0, 0, 0]);
    }

    #[test]
    fn idempotent_and_local() {
        let proj = Projection::for_size(64, 48);
        let scene = SyntheticScene { head_yaw: 12.0, seed: 4, ..Default::default() };
        let img = render(&scene, &proj);
        let marks = analytic_landmarks(&scene, &proj);
        let once = render_overlay(&img, &marks);
        assert_eq!(render_overlay(&once, &marks), once);
        for y in 0..48u32 {
            for x in 0..64u32 {
                let near = marks.points.iter().any(|p| {
                    let (cx, cy) = ((p.x * 64.0).floor() as i64, (p.y * 48.0).floor() as i64);
                    (x as i64 - cx).abs() <= 1 && (y as i64 - cy).abs() <= 1
                });
                if !near {
                    assert_eq!(once.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }
}
