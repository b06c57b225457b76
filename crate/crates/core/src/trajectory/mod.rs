//! Trajectory and dataset data model shared by every stage of the pipeline.

mod storage;

pub use storage::{load_dataset, save_dataset, StorageError, MAGIC, SCHEMA_VERSION};

use crate::geometry::{Pose2, Rect};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Row-major `H×W×3` 8-bit color image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: u32,
    pub width: u32,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(height: u32, width: u32, rgb: [u8; 3]) -> Self {
        let n = (height * width) as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn pixel(&self, row: u32, col: u32) -> [u8; 3] {
        let i = ((row * self.width + col) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn is_consistent(&self) -> bool {
        self.data.len() == (self.height * self.width * 3) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub image: Image,
    /// End-effector pose `(x, y, theta)` followed by gripper open fraction.
    pub proprio: Vec<f64>,
}

/// Per-step command: `(dx, dy, dtheta, gripper)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub delta: Vec<f64>,
}

impl Action {
    pub fn new(delta: Vec<f64>) -> Self {
        Self { delta }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            delta: vec![0.0; dim],
        }
    }

    pub fn clamp_to(&mut self, bounds: &[Bound]) {
        for (v, b) in self.delta.iter_mut().zip(bounds) {
            *v = v.clamp(b.lo, b.hi);
        }
    }
}

/// Closed interval a single action component must lie in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: ObservationFrame,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceTag {
    RealProxy,
    DigitalCousin,
    Prior,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceTag::RealProxy => "real",
            SourceTag::DigitalCousin => "dc",
            SourceTag::Prior => "prior",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    HumanProxy,
    MimicGenLite,
}

/// Identity of an object that was present in an episode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectTag {
    pub category: String,
    pub instance: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub task_id: String,
    /// One of `0.0`, `0.5`, `1.0`.
    pub success: f64,
    pub source: SourceTag,
    /// Episode seed; replaying the actions from a reset with this seed
    /// re-derives every intermediate state.
    pub seed: u64,
    pub generator: Generator,
    pub objects: Vec<ObjectTag>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }
}

/// View window over the table and its pixel resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub center: Pose2,
    /// Window width and height in meters.
    pub window: (f64, f64),
    /// `(H, W)` in pixels.
    pub resolution: (u32, u32),
}

impl CameraConfig {
    /// Returns the camera with its view pose composed with `offset`.
    pub fn offset_by(&self, offset: &Pose2) -> CameraConfig {
        CameraConfig {
            center: self.center.compose(offset),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub action_noise_std: f64,
    pub geometry_scale: f64,
    pub grasp_radius: f64,
}

/// Declared data-composition factors of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionManifest {
    pub object_categories: BTreeSet<String>,
    pub object_instances: BTreeMap<String, u32>,
    pub init_region: Rect,
    pub camera: CameraConfig,
    pub texture_ids: BTreeSet<u32>,
    pub dynamics: DynamicsParams,
    pub task_ids: BTreeSet<String>,
    pub proprio_dim: usize,
    pub action_bounds: Vec<Bound>,
}

impl CompositionManifest {
    pub fn action_dim(&self) -> usize {
        self.action_bounds.len()
    }

    /// Manifest-level invariants.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !self.init_region.has_positive_area() {
            v.push(Violation::InitRegionArea);
        }
        if self.camera.window.0 <= 0.0 || self.camera.window.1 <= 0.0 {
            v.push(Violation::CameraWindow);
        }
        for cat in self.object_instances.keys() {
            if !self.object_categories.contains(cat) {
                v.push(Violation::UndeclaredCategory(cat.clone()));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub source: SourceTag,
    pub manifest: CompositionManifest,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Total number of (observation, action) pairs.
    pub fn frame_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Keeps only the first `n` trajectories.
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            trajectories: self.trajectories.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    /// All violations across the manifest and every trajectory.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.manifest.violations();
        for (i, t) in self.trajectories.iter().enumerate() {
            if let Err(vs) = validate_trajectory(t, &self.manifest) {
                out.extend(vs.into_iter().map(|v| Violation::InTrajectory(i, Box::new(v))));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("empty trajectory")]
    Empty,
    #[error("success not in {{0,0.5,1}}: {0}")]
    Success(f64),
    #[error("image dims: step {step} is {got_h}x{got_w}, manifest declares {want_h}x{want_w}")]
    ImageDims {
        step: usize,
        got_h: u32,
        got_w: u32,
        want_h: u32,
        want_w: u32,
    },
    #[error("image buffer length does not match its dims at step {0}")]
    ImageBuffer(usize),
    #[error("proprio dim at step {step}: got {got}, want {want}")]
    ProprioDim { step: usize, got: usize, want: usize },
    #[error("action dim at step {step}: got {got}, want {want}")]
    ActionDim { step: usize, got: usize, want: usize },
    #[error("action component {component} out of bounds at step {step}: {value}")]
    ActionBounds {
        step: usize,
        component: usize,
        value: f64,
    },
    #[error("non-finite value at step {0}")]
    NonFinite(usize),
    #[error("task {0:?} not declared in manifest")]
    UnknownTask(String),
    #[error("object category {0:?} not declared in manifest")]
    UndeclaredCategory(String),
    #[error("init region has no positive area")]
    InitRegionArea,
    #[error("camera window must be positive")]
    CameraWindow,
    #[error("trajectory {0}: {1}")]
    InTrajectory(usize, Box<Violation>),
}

pub fn is_success_level(v: f64) -> bool {
    v == 0.0 || v == 0.5 || v == 1.0
}

/// Checks a trajectory against the type invariants and a manifest's
/// declared dimensions. Violations are collected, not raised.
pub fn validate_trajectory(t: &Trajectory, m: &CompositionManifest) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if t.steps.is_empty() {
        v.push(Violation::Empty);
    }
    if !is_success_level(t.success) {
        v.push(Violation::Success(t.success));
    }
    if !m.task_ids.contains(&t.task_id) {
        v.push(Violation::UnknownTask(t.task_id.clone()));
    }
    for o in &t.objects {
        if !m.object_categories.contains(&o.category) {
            v.push(Violation::UndeclaredCategory(o.category.clone()));
        }
    }
    let (want_h, want_w) = m.camera.resolution;
    for (i, s) in t.steps.iter().enumerate() {
        let img = &s.obs.image;
        if img.height != want_h || img.width != want_w {
            v.push(Violation::ImageDims {
                step: i,
                got_h: img.height,
                got_w: img.width,
                want_h,
                want_w,
            });
        } else if !img.is_consistent() {
            v.push(Violation::ImageBuffer(i));
        }
        if s.obs.proprio.len() != m.proprio_dim {
            v.push(Violation::ProprioDim {
                step: i,
                got: s.obs.proprio.len(),
                want: m.proprio_dim,
            });
        }
        if s.action.delta.len() != m.action_dim() {
            v.push(Violation::ActionDim {
                step: i,
                got: s.action.delta.len(),
                want: m.action_dim(),
            });
        }
        if s.obs.proprio.iter().chain(&s.action.delta).any(|x| !x.is_finite()) {
            v.push(Violation::NonFinite(i));
            continue;
        }
        for (c, (a, b)) in s.action.delta.iter().zip(&m.action_bounds).enumerate() {
            if !b.contains(*a) {
                v.push(Violation::ActionBounds {
                    step: i,
                    component: c,
                    value: *a,
                });
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConcatError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("source tags differ ({0} vs {1}) and no override was given")]
    SourceMismatch(SourceTag, SourceTag),
}

/// Pools two datasets. The manifest becomes the union of both inputs:
/// set-valued fields are unioned, instance counts are recounted from the
/// pooled trajectories, the init region becomes the bounding rectangle and
/// camera/dynamics are taken from `a`.
pub fn concat_datasets(
    a: &Dataset,
    b: &Dataset,
    tag_override: Option<SourceTag>,
) -> Result<Dataset, ConcatError> {
    let source = match tag_override {
        Some(t) => t,
        None if a.source == b.source => a.source,
        None => return Err(ConcatError::SourceMismatch(a.source, b.source)),
    };
    if a.is_empty() && tag_override.is_none() {
        return Ok(b.clone());
    }
    if b.is_empty() && tag_override.is_none() {
        return Ok(a.clone());
    }
    let (ma, mb) = (&a.manifest, &b.manifest);
    if ma.camera.resolution != mb.camera.resolution {
        return Err(ConcatError::DimensionMismatch(format!(
            "image {:?} vs {:?}",
            ma.camera.resolution, mb.camera.resolution
        )));
    }
    if ma.proprio_dim != mb.proprio_dim {
        return Err(ConcatError::DimensionMismatch(format!(
            "proprio {} vs {}",
            ma.proprio_dim, mb.proprio_dim
        )));
    }
    if ma.action_dim() != mb.action_dim() {
        return Err(ConcatError::DimensionMismatch(format!(
            "action {} vs {}",
            ma.action_dim(),
            mb.action_dim()
        )));
    }
    let trajectories: Vec<Trajectory> = a
        .trajectories
        .iter()
        .chain(&b.trajectories)
        .cloned()
        .map(|mut t| {
            t.source = source;
            t
        })
        .collect();
    let action_bounds = ma
        .action_bounds
        .iter()
        .zip(&mb.action_bounds)
        .map(|(x, y)| Bound::new(x.lo.min(y.lo), x.hi.max(y.hi)))
        .collect();
    let mut object_instances = count_instances(&trajectories);
    for (cat, n) in ma.object_instances.iter().chain(&mb.object_instances) {
        let e = object_instances.entry(cat.clone()).or_insert(0);
        *e = (*e).max(*n);
    }
    let manifest = CompositionManifest {
        object_categories: ma.object_categories.union(&mb.object_categories).cloned().collect(),
        object_instances,
        init_region: ma.init_region.bounding_union(&mb.init_region),
        camera: ma.camera,
        texture_ids: ma.texture_ids.union(&mb.texture_ids).cloned().collect(),
        dynamics: ma.dynamics,
        task_ids: ma.task_ids.union(&mb.task_ids).cloned().collect(),
        proprio_dim: ma.proprio_dim,
        action_bounds,
    };
    Ok(Dataset {
        name: format!("{}+{}", a.name, b.name),
        source,
        manifest,
        trajectories,
    })
}

/// Distinct instances per category over a set of trajectories.
pub fn count_instances(trajectories: &[Trajectory]) -> BTreeMap<String, u32> {
    let mut seen: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for t in trajectories {
        for o in &t.objects {
            seen.entry(o.category.clone()).or_default().insert(o.instance);
        }
    }
    seen.into_iter().map(|(k, v)| (k, v.len() as u32)).collect()
}
