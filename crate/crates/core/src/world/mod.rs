//! TwinWorld: a deterministic planar tabletop with a point end-effector,
//! circular objects and an optional hinged door.
//!
//! The same world plays every role in the workbench. One configuration is
//! treated as the real-proxy domain; gapped variants of it (camera offset,
//! palette, object scale, action noise, init region) act as digital cousins
//! and prior-task simulations.

mod collect;
mod expert;
mod render;

pub use collect::{
    collect_demos, episode_to_trajectory, manifest_for, observe, proprio_of, run_episode,
    scene_tags, Controller, Episode, ExpertController,
};
pub use expert::{ExpertParams, ScriptedExpert};
pub use render::{palette, render, Palette};

use crate::geometry::{wrap_angle, Pose2, Rect};
use crate::rng::{derive_seed, rng_from};
use crate::trajectory::{Action, Bound, CameraConfig, DynamicsParams};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const PROPRIO_DIM: usize = 4;
pub const ACTION_DIM: usize = 4;
/// Gripper commands below this value close the gripper.
pub const GRIPPER_CLOSE_BELOW: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("placement failure: could not place {0} without overlap")]
    PlacementFailure(String),
    #[error("task/state mismatch: {0}")]
    TaskStateMismatch(&'static str),
    #[error("expert failure: {successes} successes in {attempts} attempts")]
    ExpertFailure { successes: usize, attempts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: String,
    pub instance: u32,
    /// Nominal radius in meters, before the gap's geometry scale.
    pub radius: f64,
    pub color: [u8; 3],
}

impl ObjectSpec {
    pub fn new(category: &str, instance: u32, radius: f64, color: [u8; 3]) -> Self {
        Self {
            category: category.to_string(),
            instance,
            radius,
            color,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    PickPlace {
        source_region: Rect,
        target_region: Rect,
    },
    CloseDoor {
        threshold_deg: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Doubles as the task id recorded on trajectories.
    pub language_tag: String,
}

impl TaskSpec {
    pub fn pick_place(tag: &str, source_region: Rect, target_region: Rect) -> Self {
        Self {
            kind: TaskKind::PickPlace {
                source_region,
                target_region,
            },
            language_tag: tag.to_string(),
        }
    }

    pub fn close_door(tag: &str) -> Self {
        Self {
            kind: TaskKind::CloseDoor { threshold_deg: 5.0 },
            language_tag: tag.to_string(),
        }
    }
}

/// The knobs along which a simulated domain departs from the real one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub camera_offset: Pose2,
    pub palette_id: u32,
    pub geometry_scale: f64,
    pub action_noise_std: f64,
    pub init_region_override: Option<Rect>,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            camera_offset: Pose2::identity(),
            palette_id: 0,
            geometry_scale: 1.0,
            action_noise_std: 0.0,
            init_region_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorSpec {
    pub length: f64,
    /// Initial opening angle range in degrees.
    pub angle_range_deg: (f64, f64),
}

impl Default for DoorSpec {
    fn default() -> Self {
        Self {
            length: 0.12,
            angle_range_deg: (85.0, 115.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub task: TaskSpec,
    pub gap: GapConfig,
    pub camera: CameraConfig,
    pub table: Rect,
    pub init_region: Rect,
    /// When set, initial positions are drawn only from the outer band of the
    /// init region whose width is this fraction of each dimension.
    #[serde(default)]
    pub init_band: Option<f64>,
    pub object_set: Vec<ObjectSpec>,
    pub objects_per_episode: usize,
    pub episode_horizon: u32,
    pub home: Pose2,
    pub grasp_radius: f64,
    pub max_translation: f64,
    pub max_rotation: f64,
    #[serde(default)]
    pub door: DoorSpec,
    #[serde(default)]
    pub expert: ExpertParams,
}

impl WorldConfig {
    pub fn task_id(&self) -> &str {
        &self.task.language_tag
    }

    /// Init region after applying the gap override.
    pub fn effective_init_region(&self) -> Rect {
        self.gap.init_region_override.unwrap_or(self.init_region)
    }

    pub fn effective_camera(&self) -> CameraConfig {
        self.camera.offset_by(&self.gap.camera_offset)
    }

    pub fn action_bounds(&self) -> Vec<Bound> {
        vec![
            Bound::new(-self.max_translation, self.max_translation),
            Bound::new(-self.max_translation, self.max_translation),
            Bound::new(-self.max_rotation, self.max_rotation),
            Bound::new(0.0, 1.0),
        ]
    }

    pub fn dynamics(&self) -> DynamicsParams {
        DynamicsParams {
            action_noise_std: self.gap.action_noise_std,
            geometry_scale: self.gap.geometry_scale,
            grasp_radius: self.grasp_radius,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidConfig(m));
        if self.episode_horizon < 1 {
            return bad("episode_horizon must be >= 1".into());
        }
        if !self.table.has_positive_area() {
            return bad("table has no area".into());
        }
        let region = self.effective_init_region();
        if !self.table.contains_rect(&region) {
            return bad(format!("init region {region:?} leaves the table"));
        }
        if !(self.gap.geometry_scale > 0.0) {
            return bad("geometry_scale must be > 0".into());
        }
        if !(self.gap.action_noise_std >= 0.0) {
            return bad("action_noise_std must be >= 0".into());
        }
        if let Some(b) = self.init_band {
            if !(b > 0.0 && b < 0.5) {
                return bad(format!("init_band {b} not in (0, 0.5)"));
            }
        }
        if self.camera.window.0 <= 0.0 || self.camera.window.1 <= 0.0 {
            return bad("camera window must be positive".into());
        }
        if !(self.max_translation > 0.0 && self.max_rotation > 0.0) {
            return bad("action bounds must be positive".into());
        }
        match &self.task.kind {
            TaskKind::PickPlace {
                source_region,
                target_region,
            } => {
                if source_region.intersects(target_region) {
                    return bad("source and target regions overlap".into());
                }
                if self.object_set.is_empty() || self.objects_per_episode == 0 {
                    return bad("pick-place needs at least one object".into());
                }
            }
            TaskKind::CloseDoor { threshold_deg } => {
                if !(*threshold_deg > 0.0 && *threshold_deg < 90.0) {
                    return bad(format!("door threshold {threshold_deg} not in (0, 90)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: usize,
    pub pose: Pose2,
    pub radius: f64,
    pub category: String,
    pub instance: u32,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Door {
    /// Hinge position; `theta` is the closed direction.
    pub hinge: Pose2,
    pub length: f64,
    /// Opening angle in degrees, 0 = closed.
    pub angle_deg: f64,
}

impl Door {
    /// Pose whose heading follows the door leaf; the reference frame used
    /// when retargeting door-pushing motions.
    pub fn leaf_pose(&self) -> Pose2 {
        Pose2::new(
            self.hinge.x,
            self.hinge.y,
            self.hinge.theta + self.angle_deg.to_radians(),
        )
    }

    /// Polar coordinates `(r, angle_deg)` of a point around the hinge,
    /// measured from the closed direction.
    pub fn polar(&self, x: f64, y: f64) -> (f64, f64) {
        let local = self.hinge.relative(&Pose2::translation(x, y));
        (local.x.hypot(local.y), local.y.atan2(local.x).to_degrees())
    }

    pub fn tip(&self) -> (f64, f64) {
        self.leaf_pose().transform_point(self.length, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub ee: Pose2,
    /// Gripper open fraction in `[0, 1]`.
    pub gripper: f64,
    pub held_object: Option<usize>,
    /// Whether the task object has been grasped at any point.
    pub picked: bool,
    pub objects: Vec<SceneObject>,
    pub door: Option<Door>,
    /// Source and target regions painted on the table, if any.
    pub regions: Option<(Rect, Rect)>,
    pub step_count: u32,
    /// Keys the per-step dynamics noise.
    pub noise_seed: u64,
}

impl State {
    pub fn object(&self, id: usize) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum SuccessLevel {
    Failure,
    Partial,
    Full,
}

impl SuccessLevel {
    pub fn value(self) -> f64 {
        match self {
            SuccessLevel::Failure => 0.0,
            SuccessLevel::Partial => 0.5,
            SuccessLevel::Full => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        match v {
            x if x == 0.0 => Some(SuccessLevel::Failure),
            x if x == 0.5 => Some(SuccessLevel::Partial),
            x if x == 1.0 => Some(SuccessLevel::Full),
            _ => None,
        }
    }
}

impl fmt::Display for SuccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

const PLACEMENT_TRIES: usize = 1000;

fn sample_in_region<R: Rng>(rng: &mut R, region: &Rect, band: Option<f64>) -> (f64, f64) {
    loop {
        let x = region.min_x + rng.random::<f64>() * region.width();
        let y = region.min_y + rng.random::<f64>() * region.height();
        match band {
            None => return (x, y),
            Some(b) => {
                let inner = region.inner(b);
                let in_inner =
                    x > inner.min_x && x < inner.max_x && y > inner.min_y && y < inner.max_y;
                if !in_inner {
                    return (x, y);
                }
            }
        }
    }
}

/// Initial state for an episode; a pure function of `(config, episode_seed)`.
pub fn reset(config: &WorldConfig, episode_seed: u64) -> Result<State, WorldError> {
    config.validate()?;
    let mut rng = rng_from(derive_seed(episode_seed, "reset", 0));
    let region = config.effective_init_region();
    let mut state = State {
        ee: config.home,
        gripper: 1.0,
        held_object: None,
        picked: false,
        objects: Vec::new(),
        door: None,
        regions: None,
        step_count: 0,
        noise_seed: derive_seed(episode_seed, "dynamics", 0),
    };
    match &config.task.kind {
        TaskKind::PickPlace {
            source_region,
            target_region,
        } => {
            state.regions = Some((*source_region, *target_region));
            for id in 0..config.objects_per_episode {
                let spec = &config.object_set[rng.random_range(0..config.object_set.len())];
                let radius = spec.radius * config.gap.geometry_scale;
                let mut placed = None;
                for _ in 0..PLACEMENT_TRIES {
                    let (x, y) = sample_in_region(&mut rng, &region, config.init_band);
                    let clear = state
                        .objects
                        .iter()
                        .all(|o| o.pose.distance(&Pose2::translation(x, y)) >= o.radius + radius);
                    if clear {
                        placed = Some((x, y));
                        break;
                    }
                }
                let (x, y) = placed.ok_or_else(|| {
                    WorldError::PlacementFailure(format!("{} objects", config.objects_per_episode))
                })?;
                state.objects.push(SceneObject {
                    id,
                    pose: Pose2::translation(x, y),
                    radius,
                    category: spec.category.clone(),
                    instance: spec.instance,
                    color: spec.color,
                });
            }
        }
        TaskKind::CloseDoor { .. } => {
            let (x, y) = sample_in_region(&mut rng, &region, config.init_band);
            let (lo, hi) = config.door.angle_range_deg;
            let angle = lo + rng.random::<f64>() * (hi - lo);
            state.door = Some(Door {
                hinge: Pose2::translation(x, y),
                length: config.door.length * config.gap.geometry_scale,
                angle_deg: angle,
            });
        }
    }
    Ok(state)
}

/// Kinematic transition. Out-of-bounds commands and motions are clamped.
pub fn step(s: &State, a: &Action, config: &WorldConfig) -> State {
    let bounds = config.action_bounds();
    let mut a = a.clone();
    a.delta.resize(ACTION_DIM, 0.0);
    a.clamp_to(&bounds);
    let (dx, dy, dtheta, grip) = (a.delta[0], a.delta[1], a.delta[2], a.delta[3]);

    let (nx, ny) = if config.gap.action_noise_std > 0.0 {
        let mut rng = rng_from(derive_seed(s.noise_seed, "step", s.step_count as u64));
        let std = config.gap.action_noise_std;
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        (std * nx, std * ny)
    } else {
        (0.0, 0.0)
    };

    let mut next = s.clone();
    let (x, y) = config.table.clamp_point(s.ee.x + dx + nx, s.ee.y + dy + ny);
    next.ee = Pose2::new(x, y, wrap_angle(s.ee.theta + dtheta));
    let (mx, my) = (next.ee.x - s.ee.x, next.ee.y - s.ee.y);
    next.gripper = grip;

    if let Some(h) = next.held_object {
        if let Some(o) = next.objects.iter_mut().find(|o| o.id == h) {
            o.pose = Pose2::new(o.pose.x + mx, o.pose.y + my, o.pose.theta);
        }
    }

    if grip < GRIPPER_CLOSE_BELOW {
        if next.held_object.is_none() {
            let ee = next.ee;
            let nearest = next
                .objects
                .iter()
                .map(|o| (o.id, o.pose.distance(&ee)))
                .filter(|(_, d)| *d <= config.grasp_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((id, _)) = nearest {
                next.held_object = Some(id);
                if id == 0 {
                    next.picked = true;
                }
            }
        }
    } else {
        next.held_object = None;
    }

    if let Some(door) = next.door.as_mut() {
        let (_, before) = door.polar(s.ee.x, s.ee.y);
        let (r, after) = door.polar(next.ee.x, next.ee.y);
        let reach = r >= 0.2 * door.length && r <= door.length * 1.05;
        if reach && before >= door.angle_deg && after < door.angle_deg {
            door.angle_deg = after.max(0.0);
        }
    }

    next.step_count = s.step_count + 1;
    next
}

/// Scores a state against a task: pick-place earns 0.5 for a pick and 1.0
/// once the object rests released inside the target region; door closing
/// succeeds below the angle threshold.
pub fn check_success(s: &State, task: &TaskSpec) -> Result<SuccessLevel, WorldError> {
    match &task.kind {
        TaskKind::PickPlace { target_region, .. } => {
            let obj = s
                .object(0)
                .ok_or(WorldError::TaskStateMismatch("pick-place task without objects"))?;
            if s.held_object == Some(0) {
                Ok(SuccessLevel::Partial)
            } else if target_region.contains(obj.pose.x, obj.pose.y) {
                Ok(SuccessLevel::Full)
            } else if s.picked {
                Ok(SuccessLevel::Partial)
            } else {
                Ok(SuccessLevel::Failure)
            }
        }
        TaskKind::CloseDoor { threshold_deg } => {
            let door = s
                .door
                .ok_or(WorldError::TaskStateMismatch("door task without a door"))?;
            Ok(if door.angle_deg < *threshold_deg {
                SuccessLevel::Full
            } else {
                SuccessLevel::Failure
            })
        }
    }
}

pub fn table_rect() -> Rect {
    Rect::new(0.0, 0.0, 0.5, 0.5)
}

fn default_camera() -> CameraConfig {
    CameraConfig {
        center: Pose2::translation(0.25, 0.25),
        window: (0.5, 0.5),
        resolution: (32, 32),
    }
}

/// Source and target regions of the target pick-place task.
pub fn target_task_regions() -> (Rect, Rect) {
    (
        Rect::new(0.03, 0.13, 0.22, 0.37),
        Rect::new(0.33, 0.17, 0.46, 0.33),
    )
}

pub fn real_objects() -> Vec<ObjectSpec> {
    vec![
        ObjectSpec::new("cup", 0, 0.025, [200, 40, 40]),
        ObjectSpec::new("cup", 1, 0.027, [220, 110, 30]),
        ObjectSpec::new("can", 0, 0.022, [40, 60, 200]),
        ObjectSpec::new("can", 1, 0.023, [30, 140, 150]),
    ]
}

/// Cousin assets: same categories, different instances.
pub fn cousin_objects() -> Vec<ObjectSpec> {
    vec![
        ObjectSpec::new("cup", 2, 0.026, [190, 60, 90]),
        ObjectSpec::new("cup", 3, 0.024, [170, 30, 30]),
        ObjectSpec::new("can", 2, 0.021, [60, 80, 170]),
        ObjectSpec::new("can", 3, 0.024, [20, 110, 190]),
    ]
}

/// Categories never present in real-proxy demos.
pub fn novel_objects() -> Vec<ObjectSpec> {
    vec![
        ObjectSpec::new("lemon", 0, 0.020, [230, 210, 40]),
        ObjectSpec::new("cucumber", 0, 0.024, [40, 150, 50]),
        ObjectSpec::new("milk", 0, 0.028, [235, 235, 225]),
    ]
}

impl WorldConfig {
    /// The real-proxy pick-place world.
    pub fn pick_place_real() -> Self {
        let (source, target) = target_task_regions();
        Self {
            task: TaskSpec::pick_place("pick_place_cup", source, target),
            gap: GapConfig {
                action_noise_std: 0.001,
                ..GapConfig::default()
            },
            camera: default_camera(),
            table: table_rect(),
            init_region: source,
            init_band: None,
            object_set: real_objects(),
            objects_per_episode: 1,
            episode_horizon: 120,
            home: Pose2::new(0.27, 0.25, 0.0),
            grasp_radius: 0.03,
            max_translation: 0.02,
            max_rotation: 0.2,
            door: DoorSpec::default(),
            expert: ExpertParams::default(),
        }
    }

    /// A digital cousin of [`WorldConfig::pick_place_real`]: same task,
    /// categories and camera placement, but cousin instances, a brighter
    /// palette, scaled geometry and its own dynamics noise.
    pub fn pick_place_cousin() -> Self {
        let mut c = Self::pick_place_real();
        c.gap = GapConfig {
            camera_offset: Pose2::identity(),
            palette_id: 1,
            geometry_scale: 1.1,
            action_noise_std: 0.002,
            init_region_override: None,
        };
        c.object_set = cousin_objects();
        c
    }

    /// Task-agnostic prior data: pick-place with other region pairs and
    /// object categories than the target task.
    pub fn pick_place_prior(variant: usize) -> Self {
        let mut c = Self::pick_place_cousin();
        let (source, target, tag) = match variant % 3 {
            0 => (
                Rect::new(0.25, 0.04, 0.45, 0.20),
                Rect::new(0.04, 0.34, 0.18, 0.47),
                "prior_bottom_to_topleft",
            ),
            1 => (
                Rect::new(0.08, 0.30, 0.30, 0.46),
                Rect::new(0.34, 0.03, 0.47, 0.15),
                "prior_top_to_bottomright",
            ),
            _ => (
                Rect::new(0.30, 0.28, 0.46, 0.46),
                Rect::new(0.04, 0.04, 0.18, 0.18),
                "prior_right_to_bottomleft",
            ),
        };
        c.task = TaskSpec::pick_place(tag, source, target);
        c.init_region = source;
        c.object_set = novel_objects();
        c
    }

    pub fn close_door_real() -> Self {
        let mut c = Self::pick_place_real();
        c.task = TaskSpec::close_door("close_door");
        c.init_region = Rect::new(0.15, 0.14, 0.30, 0.24);
        c.object_set = Vec::new();
        c.objects_per_episode = 0;
        c.home = Pose2::new(0.40, 0.40, 0.0);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_noise() -> WorldConfig {
        let mut c = WorldConfig::pick_place_real();
        c.gap.action_noise_std = 0.0;
        c
    }

    #[test]
    fn reset_is_deterministic() {
        let c = WorldConfig::pick_place_real();
        assert_eq!(reset(&c, 42).unwrap(), reset(&c, 42).unwrap());
        assert_ne!(reset(&c, 42).unwrap(), reset(&c, 43).unwrap());
    }

    #[test]
    fn reset_mean_is_region_center() {
        let c = WorldConfig::pick_place_real();
        let n = 1000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for seed in 0..n {
            let s = reset(&c, seed).unwrap();
            sx += s.objects[0].pose.x;
            sy += s.objects[0].pose.y;
        }
        let (cx, cy) = c.init_region.center();
        assert!((sx / n as f64 - cx).abs() < 0.02 * c.init_region.width());
        assert!((sy / n as f64 - cy).abs() < 0.02 * c.init_region.height());
    }

    #[test]
    fn override_region_is_respected() {
        let mut c = WorldConfig::pick_place_real();
        let o = Rect::new(0.10, 0.20, 0.14, 0.26);
        c.gap.init_region_override = Some(o);
        for seed in 0..200 {
            let s = reset(&c, seed).unwrap();
            assert!(o.contains(s.objects[0].pose.x, s.objects[0].pose.y));
        }
    }

    #[test]
    fn band_sampling_avoids_the_center() {
        let mut c = WorldConfig::pick_place_real();
        c.init_band = Some(0.2);
        let inner = c.init_region.inner(0.2);
        for seed in 0..300 {
            let p = reset(&c, seed).unwrap().objects[0].pose;
            assert!(c.init_region.contains(p.x, p.y));
            assert!(!(p.x > inner.min_x && p.x < inner.max_x && p.y > inner.min_y && p.y < inner.max_y));
        }
    }

    #[test]
    fn tiny_region_is_a_placement_failure() {
        let mut c = WorldConfig::pick_place_real();
        c.objects_per_episode = 3;
        c.gap.init_region_override = Some(Rect::new(0.1, 0.1, 0.101, 0.101));
        assert!(matches!(reset(&c, 0), Err(WorldError::PlacementFailure(_))));
    }

    #[test]
    fn zero_action_only_advances_the_clock() {
        let c = no_noise();
        let s = reset(&c, 3).unwrap();
        let n = step(&s, &Action::new(vec![0.0, 0.0, 0.0, 1.0]), &c);
        assert_eq!(n.step_count, 1);
        assert_eq!(State { step_count: 0, ..n }, s);
    }

    #[test]
    fn grasp_when_object_at_ee() {
        let c = no_noise();
        let mut s = reset(&c, 3).unwrap();
        s.ee = s.objects[0].pose;
        let n = step(&s, &Action::new(vec![0.0, 0.0, 0.0, 0.0]), &c);
        assert_eq!(n.held_object, Some(0));
        assert!(n.picked);
        // Carry then release.
        let m = step(&n, &Action::new(vec![0.01, 0.0, 0.0, 0.0]), &c);
        assert!((m.objects[0].pose.x - n.objects[0].pose.x - 0.01).abs() < 1e-12);
        let r = step(&m, &Action::new(vec![0.01, 0.0, 0.0, 1.0]), &c);
        assert_eq!(r.held_object, None);
        let r2 = step(&r, &Action::new(vec![0.01, 0.0, 0.0, 1.0]), &c);
        assert_eq!(r2.objects[0].pose, r.objects[0].pose);
    }

    #[test]
    fn grasp_out_of_reach_does_nothing() {
        let c = no_noise();
        let mut s = reset(&c, 3).unwrap();
        s.ee = Pose2::translation(s.objects[0].pose.x + 0.05, s.objects[0].pose.y);
        let n = step(&s, &Action::new(vec![0.0, 0.0, 0.0, 0.0]), &c);
        assert_eq!(n.held_object, None);
    }

    #[test]
    fn noise_variance_matches_std() {
        // Monte Carlo: after 100 zero-command steps the per-axis variance
        // of the displacement is 100 * std^2.
        let mut c = WorldConfig::pick_place_real();
        c.gap.action_noise_std = 0.001;
        c.home = Pose2::translation(0.25, 0.25);
        let episodes = 2000;
        let mut dx = Vec::with_capacity(episodes);
        let mut dy = Vec::with_capacity(episodes);
        for seed in 0..episodes as u64 {
            let mut s = reset(&c, seed).unwrap();
            let start = s.ee;
            for _ in 0..100 {
                s = step(&s, &Action::new(vec![0.0, 0.0, 0.0, 1.0]), &c);
            }
            dx.push(s.ee.x - start.x);
            dy.push(s.ee.y - start.y);
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let want = 100.0 * 0.001f64.powi(2);
        assert!((var(&dx) / want - 1.0).abs() < 0.2, "{}", var(&dx) / want);
        assert!((var(&dy) / want - 1.0).abs() < 0.2, "{}", var(&dy) / want);
    }

    #[test]
    fn motion_is_clamped_to_table() {
        let c = no_noise();
        let mut s = reset(&c, 0).unwrap();
        s.ee = Pose2::translation(0.495, 0.495);
        let n = step(&s, &Action::new(vec![0.5, 0.5, 0.0, 1.0]), &c);
        assert!(n.ee.x <= 0.5 && n.ee.y <= 0.5);
        assert!((n.ee.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn door_below_threshold_is_success() {
        let c = WorldConfig::close_door_real();
        let mut s = reset(&c, 0).unwrap();
        s.door.as_mut().unwrap().angle_deg = 4.9;
        assert_eq!(check_success(&s, &c.task).unwrap(), SuccessLevel::Full);
        s.door.as_mut().unwrap().angle_deg = 5.0;
        assert_eq!(check_success(&s, &c.task).unwrap(), SuccessLevel::Failure);
    }

    #[test]
    fn held_object_outside_target_is_partial() {
        let c = no_noise();
        let mut s = reset(&c, 1).unwrap();
        s.held_object = Some(0);
        s.picked = true;
        assert_eq!(check_success(&s, &c.task).unwrap(), SuccessLevel::Partial);
    }

    #[test]
    fn untouched_object_is_failure() {
        let c = no_noise();
        let s = reset(&c, 1).unwrap();
        assert_eq!(check_success(&s, &c.task).unwrap(), SuccessLevel::Failure);
    }

    #[test]
    fn released_in_target_is_full() {
        let c = no_noise();
        let mut s = reset(&c, 1).unwrap();
        let TaskKind::PickPlace { target_region, .. } = c.task.kind else {
            unreachable!()
        };
        let (x, y) = target_region.center();
        s.objects[0].pose = Pose2::translation(x, y);
        s.picked = true;
        assert_eq!(check_success(&s, &c.task).unwrap(), SuccessLevel::Full);
    }

    #[test]
    fn mismatched_task_is_an_error() {
        let c = no_noise();
        let s = reset(&c, 1).unwrap();
        let door = TaskSpec::close_door("close_door");
        assert!(matches!(
            check_success(&s, &door),
            Err(WorldError::TaskStateMismatch(_))
        ));
    }

    #[test]
    fn door_is_pushed_closed_from_the_open_side() {
        let mut c = WorldConfig::close_door_real();
        c.gap.action_noise_std = 0.0;
        let mut s = reset(&c, 5).unwrap();
        let door = s.door.unwrap();
        // Place the ee just on the open side of the leaf, then sweep.
        let p = door
            .hinge
            .compose(&Pose2::new(0.0, 0.0, (door.angle_deg + 2.0).to_radians()))
            .transform_point(0.08, 0.0);
        s.ee = Pose2::translation(p.0, p.1);
        let q = door
            .hinge
            .compose(&Pose2::new(0.0, 0.0, (door.angle_deg - 6.0).to_radians()))
            .transform_point(0.08, 0.0);
        let n = step(&s, &Action::new(vec![q.0 - p.0, q.1 - p.1, 0.0, 1.0]), &c);
        let d = n.door.unwrap();
        assert!((d.angle_deg - (door.angle_deg - 6.0)).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut c = WorldConfig::pick_place_real();
        c.gap.geometry_scale = 0.0;
        assert!(c.validate().is_err());
        let mut c = WorldConfig::pick_place_real();
        c.init_region = Rect::new(-0.1, 0.0, 0.2, 0.2);
        assert!(c.validate().is_err());
        let mut c = WorldConfig::pick_place_real();
        c.episode_horizon = 0;
        assert!(c.validate().is_err());
        for k in 0..3 {
            WorldConfig::pick_place_prior(k).validate().unwrap();
        }
        WorldConfig::pick_place_cousin().validate().unwrap();
        WorldConfig::close_door_real().validate().unwrap();
    }
}
