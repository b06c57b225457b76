use super::{GapConfig, State};
use crate::geometry::{Pose2, Rect};
use crate::rng::mix64;
use crate::trajectory::{CameraConfig, Image};

const EE_RADIUS: f64 = 0.012;
const DOOR_HALF_THICKNESS: f64 = 0.008;

/// Colors of every scene element under one texture set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Palette {
    pub table: [f64; 3],
    pub floor: [f64; 3],
    pub source_region: [f64; 3],
    pub target_region: [f64; 3],
    pub door: [f64; 3],
    pub ee_open: [f64; 3],
    pub ee_closed: [f64; 3],
    /// Per-channel gain and offset applied to object base colors.
    pub object_gain: [f64; 3],
    pub object_offset: [f64; 3],
}

/// Added to every background color channel by palette 1.
pub const COUSIN_BRIGHTENING: f64 = 18.0;

pub fn palette(id: u32) -> Palette {
    match id {
        0 => Palette {
            table: [200.0, 180.0, 150.0],
            floor: [60.0, 60.0, 60.0],
            source_region: [188.0, 168.0, 138.0],
            target_region: [120.0, 160.0, 200.0],
            door: [150.0, 90.0, 40.0],
            ee_open: [245.0, 245.0, 245.0],
            ee_closed: [25.0, 25.0, 25.0],
            object_gain: [1.0, 1.0, 1.0],
            object_offset: [0.0, 0.0, 0.0],
        },
        1 => {
            // The cousin look: a uniformly brighter scene with slightly
            // re-tinted objects.
            let up = |c: [f64; 3]| c.map(|v| (v + COUSIN_BRIGHTENING).min(255.0));
            let base = palette(0);
            Palette {
                table: up(base.table),
                floor: up(base.floor),
                source_region: up(base.source_region),
                target_region: up(base.target_region),
                door: up(base.door),
                object_gain: [0.95, 1.04, 0.96],
                object_offset: [4.0, 0.0, 0.0],
                ..base
            }
        }
        _ => {
            // Procedural texture sets for any further ids.
            let h = mix64(id as u64);
            let byte = |k: u32| ((h >> (8 * k)) & 0xff) as f64;
            let tone = |k: u32, lo: f64, span: f64| lo + span * byte(k) / 255.0;
            Palette {
                table: [tone(0, 150.0, 90.0), tone(1, 150.0, 90.0), tone(2, 150.0, 90.0)],
                floor: [tone(3, 20.0, 60.0); 3],
                source_region: [tone(0, 140.0, 90.0), tone(1, 140.0, 90.0), tone(2, 140.0, 90.0)],
                target_region: [tone(4, 60.0, 150.0), tone(5, 60.0, 150.0), tone(6, 60.0, 150.0)],
                door: [tone(7, 80.0, 100.0), 90.0, 60.0],
                ee_open: [245.0, 245.0, 245.0],
                ee_closed: [25.0, 25.0, 25.0],
                object_gain: [tone(5, 0.7, 0.5), tone(6, 0.7, 0.5), tone(7, 0.7, 0.5)],
                object_offset: [0.0, 0.0, 0.0],
            }
        }
    }
}

fn object_color(p: &Palette, base: [u8; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = (base[k] as f64 * p.object_gain[k] + p.object_offset[k]).clamp(0.0, 255.0);
    }
    c
}

/// Signed distance from a point to an axis-aligned box.
fn box_sdf(r: &Rect, x: f64, y: f64) -> f64 {
    let (cx, cy) = r.center();
    let qx = (x - cx).abs() - 0.5 * r.width();
    let qy = (y - cy).abs() - 0.5 * r.height();
    let outside = qx.max(0.0).hypot(qy.max(0.0));
    outside + qx.max(qy).min(0.0)
}

fn segment_sdf(a: (f64, f64), b: (f64, f64), x: f64, y: f64) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (x - a.0, y - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (apx - t * abx).hypot(apy - t * aby)
}

enum Shape {
    Box(Rect),
    Disk(f64, f64, f64),
    Capsule((f64, f64), (f64, f64), f64),
}

impl Shape {
    fn sdf(&self, x: f64, y: f64) -> f64 {
        match self {
            Shape::Box(r) => box_sdf(r, x, y),
            Shape::Disk(cx, cy, rad) => (x - cx).hypot(y - cy) - rad,
            Shape::Capsule(a, b, half) => segment_sdf(*a, *b, x, y) - half,
        }
    }
}

/// Rasterizes the scene as seen through `cam` composed with the gap's camera
/// offset. Edges are anti-aliased by signed-distance coverage so small
/// object motions change pixel intensities smoothly.
pub fn render(s: &State, cam: &CameraConfig, gap: &GapConfig) -> Image {
    let view = if gap.camera_offset == Pose2::identity() {
        *cam
    } else {
        cam.offset_by(&gap.camera_offset)
    };
    let pal = palette(gap.palette_id);
    let (h, w) = view.resolution;
    let (win_w, win_h) = view.window;
    let pixel = (win_w / w as f64).min(win_h / h as f64);

    let table = super::table_rect();
    let mut layers: Vec<(Shape, [f64; 3])> = Vec::new();
    if let Some((source, target)) = s.regions {
        layers.push((Shape::Box(source), pal.source_region));
        layers.push((Shape::Box(target), pal.target_region));
    }
    if let Some(door) = s.door {
        let leaf = door.leaf_pose();
        let tip = leaf.transform_point(door.length, 0.0);
        layers.push((
            Shape::Capsule((leaf.x, leaf.y), tip, DOOR_HALF_THICKNESS),
            pal.door,
        ));
    }
    for o in &s.objects {
        layers.push((
            Shape::Disk(o.pose.x, o.pose.y, o.radius),
            object_color(&pal, o.color),
        ));
    }
    let ee_color = if s.gripper < super::GRIPPER_CLOSE_BELOW {
        pal.ee_closed
    } else {
        pal.ee_open
    };
    layers.push((Shape::Disk(s.ee.x, s.ee.y, EE_RADIUS), ee_color));

    let mut data = Vec::with_capacity((h * w * 3) as usize);
    for row in 0..h {
        let v = (0.5 - (row as f64 + 0.5) / h as f64) * win_h;
        for col in 0..w {
            let u = ((col as f64 + 0.5) / w as f64 - 0.5) * win_w;
            let (x, y) = view.center.transform_point(u, v);
            let mut c = if table.contains(x, y) {
                pal.table
            } else {
                pal.floor
            };
            for (shape, color) in &layers {
                let cov = (0.5 - shape.sdf(x, y) / pixel).clamp(0.0, 1.0);
                if cov > 0.0 {
                    for k in 0..3 {
                        c[k] += cov * (color[k] - c[k]);
                    }
                }
            }
            data.extend(c.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    Image {
        height: h,
        width: w,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{reset, WorldConfig};

    fn scene() -> (State, WorldConfig) {
        let c = WorldConfig::pick_place_real();
        let mut s = reset(&c, 4).unwrap();
        s.objects[0].pose = Pose2::translation(0.16, 0.25);
        s.ee = Pose2::translation(0.40, 0.45);
        (s, c)
    }

    #[test]
    fn rendering_is_deterministic() {
        let (s, c) = scene();
        assert_eq!(render(&s, &c.camera, &c.gap), render(&s, &c.camera, &c.gap));
    }

    #[test]
    fn identity_offset_equals_no_gap() {
        let (s, c) = scene();
        let plain = render(&s, &c.camera, &GapConfig::default());
        let gap = GapConfig {
            camera_offset: Pose2::identity(),
            ..GapConfig::default()
        };
        assert_eq!(plain, render(&s, &c.camera, &gap));
    }

    #[test]
    fn camera_offset_commutes_with_camera_pose() {
        let (s, c) = scene();
        let delta = Pose2::new(0.03, -0.02, 0.1);
        let moved = c.camera.offset_by(&delta);
        let gap = GapConfig {
            camera_offset: delta,
            ..GapConfig::default()
        };
        assert_eq!(
            render(&s, &moved, &GapConfig::default()),
            render(&s, &c.camera, &gap)
        );
    }

    fn object_column_centroid(with: &Image, without: &Image) -> f64 {
        let (mut sum, mut mass) = (0.0, 0.0);
        for r in 0..with.height {
            for col in 0..with.width {
                let a = with.pixel(r, col);
                let b = without.pixel(r, col);
                let d: f64 = (0..3).map(|k| (a[k] as f64 - b[k] as f64).abs()).sum();
                sum += d * col as f64;
                mass += d;
            }
        }
        sum / mass
    }

    #[test]
    fn half_window_offset_shifts_by_half_resolution() {
        // Oracle: pixel shift = offset / (window / resolution) = 0.25 / (0.5 / 32) = 16.
        let (mut s, c) = scene();
        s.ee = Pose2::translation(0.49, 0.02);
        s.objects[0].pose = Pose2::translation(0.31, 0.24);
        s.regions = None;
        let mut empty = s.clone();
        empty.objects.clear();
        let shift = GapConfig {
            camera_offset: Pose2::translation(0.25, 0.0),
            ..GapConfig::default()
        };
        let base = object_column_centroid(
            &render(&s, &c.camera, &GapConfig::default()),
            &render(&empty, &c.camera, &GapConfig::default()),
        );
        let moved = object_column_centroid(
            &render(&s, &c.camera, &shift),
            &render(&empty, &c.camera, &shift),
        );
        assert!((base - moved - 16.0).abs() < 0.05, "{base} -> {moved}");
    }

    #[test]
    fn palette_changes_colors_not_layout() {
        let (s, c) = scene();
        let a = render(&s, &c.camera, &GapConfig::default());
        let b = render(
            &s,
            &c.camera,
            &GapConfig {
                palette_id: 1,
                ..GapConfig::default()
            },
        );
        assert_ne!(a, b);
        assert_eq!((a.height, a.width), (b.height, b.width));
    }
}
