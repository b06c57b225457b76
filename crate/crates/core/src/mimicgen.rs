//! Demonstration multiplication by segment retargeting.
//!
//! Source demos are split at grasp/release/door events into object-centric
//! segments. For a fresh scene each segment's end-effector path is carried
//! along by the rigid transform taking its reference pose in the source
//! episode to the same reference in the new scene, consecutive segments are
//! joined by linear interpolation, and the stitched plan is executed
//! open-loop. Only fully successful replays are kept.

use crate::geometry::{wrap_angle, Pose2, Rect};
use crate::rng::{derive_seed, rng_from};
use crate::trajectory::{Action, Dataset, Generator, SourceTag, Trajectory};
use crate::world::{
    self, check_success, episode_to_trajectory, manifest_for, observe, reset, Episode, State,
    SuccessLevel, TaskKind, WorldConfig, WorldError,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-step rotation limit used when interpolating between segments.
pub const CONNECT_MAX_ROTATION: f64 = 0.1;
pub const DEFAULT_MAX_STEP: f64 = 0.02;
/// Attempts allowed per requested success.
pub const ATTEMPT_BUDGET_FACTOR: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum MimicError {
    #[error("unsegmentable demo: {0}")]
    Unsegmentable(String),
    #[error("out of workspace")]
    OutOfWorkspace,
    #[error("no source demonstrations")]
    NoSources,
    #[error("source {index} does not replay in this world: {reason}")]
    IncompatibleSource { index: usize, reason: String },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryKind {
    GraspEvent(usize),
    ReleaseEvent(usize),
    DoorContactEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubtaskBoundary {
    pub kind: BoundaryKind,
    pub frame_index: usize,
}

/// What a segment's motion is expressed relative to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Object(usize),
    /// Center of the placement region, a static pseudo-object.
    TargetRegion,
    DoorLeaf,
}

impl Reference {
    /// Pose of this reference in `s`, if present.
    pub fn pose_in(&self, s: &State, config: &WorldConfig) -> Option<Pose2> {
        match self {
            Reference::Object(id) => s.object(*id).map(|o| o.pose),
            Reference::TargetRegion => match &config.task.kind {
                TaskKind::PickPlace { target_region, .. } => {
                    let (x, y) = target_region.center();
                    Some(Pose2::translation(x, y))
                }
                TaskKind::CloseDoor { .. } => None,
            },
            Reference::DoorLeaf => s.door.map(|d| d.leaf_pose()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Index of the first source frame covered by this segment.
    pub start: usize,
    /// End-effector poses before each action plus the pose after the last,
    /// so `poses.len() == gripper.len() + 1`.
    pub poses: Vec<Pose2>,
    /// Gripper command per frame.
    pub gripper: Vec<f64>,
    pub reference: Reference,
    pub reference_pose: Pose2,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.gripper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gripper.is_empty()
    }

    pub fn first_pose(&self) -> Pose2 {
        self.poses[0]
    }

    pub fn last_pose(&self) -> Pose2 {
        *self.poses.last().expect("segment poses are nonempty")
    }

    /// Actions as finite differences of consecutive poses.
    pub fn actions(&self) -> Vec<Action> {
        self.poses
            .windows(2)
            .zip(&self.gripper)
            .map(|(w, g)| {
                Action::new(vec![
                    w[1].x - w[0].x,
                    w[1].y - w[0].y,
                    wrap_angle(w[1].theta - w[0].theta),
                    *g,
                ])
            })
            .collect()
    }

    pub fn fits_in(&self, workspace: &Rect) -> bool {
        self.poses.iter().all(|p| workspace.contains(p.x, p.y))
    }
}

/// Re-derives every state of a stored episode by replaying its actions from
/// a reset with the stored seed.
pub fn replay_states(t: &Trajectory, config: &WorldConfig) -> Result<Vec<State>, WorldError> {
    let mut s = reset(config, t.seed)?;
    let mut states = Vec::with_capacity(t.len() + 1);
    states.push(s.clone());
    for a in t.actions() {
        s = world::step(&s, a, config);
        states.push(s.clone());
    }
    Ok(states)
}

/// Grasp, release and door events in a replayed episode.
pub fn detect_boundaries(states: &[State]) -> Vec<SubtaskBoundary> {
    let mut out = Vec::new();
    for (k, w) in states.windows(2).enumerate() {
        match (w[0].held_object, w[1].held_object) {
            (None, Some(id)) => out.push(SubtaskBoundary {
                kind: BoundaryKind::GraspEvent(id),
                frame_index: k,
            }),
            (Some(id), None) => out.push(SubtaskBoundary {
                kind: BoundaryKind::ReleaseEvent(id),
                frame_index: k,
            }),
            _ => {}
        }
    }
    if let (Some(first), true) = (states.first(), states.len() > 1) {
        if first.door.is_some() {
            out.push(SubtaskBoundary {
                kind: BoundaryKind::DoorContactEnd,
                frame_index: states.len() - 2,
            });
        }
    }
    out
}

/// Splits a source demo into object-centric segments. `replay` must hold the
/// `len + 1` states visited by the demo.
pub fn segment_source(
    t: &Trajectory,
    replay: &[State],
    config: &WorldConfig,
) -> Result<Vec<Segment>, MimicError> {
    if t.is_empty() || replay.len() != t.len() + 1 {
        return Err(MimicError::Unsegmentable(format!(
            "{} frames but {} replay states",
            t.len(),
            replay.len()
        )));
    }
    let mut bounds = detect_boundaries(replay);
    if bounds.is_empty() {
        return Err(MimicError::Unsegmentable("no grasp, release or door events".into()));
    }
    let last = t.len() - 1;
    bounds.last_mut().unwrap().frame_index = last;
    let mut segments = Vec::with_capacity(bounds.len());
    let mut start = 0;
    for b in bounds {
        if b.frame_index < start {
            continue;
        }
        let end = b.frame_index;
        let reference = match b.kind {
            BoundaryKind::GraspEvent(id) => Reference::Object(id),
            BoundaryKind::ReleaseEvent(_) => Reference::TargetRegion,
            BoundaryKind::DoorContactEnd => Reference::DoorLeaf,
        };
        let reference_pose = reference.pose_in(&replay[start], config).ok_or_else(|| {
            MimicError::Unsegmentable(format!("reference {reference:?} missing at frame {start}"))
        })?;
        segments.push(Segment {
            start,
            poses: replay[start..=end + 1].iter().map(|s| s.ee).collect(),
            gripper: t.steps[start..=end].iter().map(|s| s.action.delta[3]).collect(),
            reference,
            reference_pose,
        });
        start = end + 1;
    }
    Ok(segments)
}

/// Carries a segment rigidly along with its reference:
/// every pose `p` becomes `new_ref ∘ ref⁻¹ ∘ p`.
pub fn transform_segment(
    seg: &Segment,
    new_reference_pose: Pose2,
    workspace: &Rect,
) -> Result<Segment, MimicError> {
    let transform = new_reference_pose.compose(&seg.reference_pose.inverse());
    let poses = if new_reference_pose == seg.reference_pose {
        seg.poses.clone()
    } else {
        seg.poses.iter().map(|p| transform.compose(p)).collect()
    };
    let out = Segment {
        poses,
        reference_pose: new_reference_pose,
        ..seg.clone()
    };
    if out.fits_in(workspace) {
        Ok(out)
    } else {
        Err(MimicError::OutOfWorkspace)
    }
}

/// Straight-line interpolation with equal steps no longer than `max_step`
/// (and no more than [`CONNECT_MAX_ROTATION`] of turn per step).
pub fn connect(prev_end: Pose2, next_start: Pose2, max_step: f64, gripper: f64) -> Vec<Action> {
    assert!(max_step > 0.0, "max_step must be positive");
    let dx = next_start.x - prev_end.x;
    let dy = next_start.y - prev_end.y;
    let dtheta = wrap_angle(next_start.theta - prev_end.theta);
    let dist = dx.hypot(dy);
    let steps = ((dist / max_step) - 1e-9)
        .ceil()
        .max(((dtheta.abs() / CONNECT_MAX_ROTATION) - 1e-9).ceil())
        .max(0.0) as usize;
    if steps == 0 {
        return Vec::new();
    }
    let n = steps as f64;
    (0..steps)
        .map(|_| Action::new(vec![dx / n, dy / n, dtheta / n, gripper]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub attempts: usize,
    pub successes: usize,
    pub generation_success_rate: f64,
    pub out_of_workspace: usize,
    pub failed_replays: usize,
    /// Set when the attempt budget ran out before reaching the target.
    pub budget_exhausted: bool,
    pub per_attempt_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub max_step: f64,
    pub source_tag: SourceTag,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            max_step: DEFAULT_MAX_STEP,
            source_tag: SourceTag::DigitalCousin,
        }
    }
}

/// Stitches retargeted segments into an action plan for the scene `s0`.
pub fn plan_for_scene(
    segments: &[Segment],
    s0: &State,
    config: &WorldConfig,
    max_step: f64,
) -> Result<Vec<Action>, MimicError> {
    let mut plan = Vec::new();
    let mut cur = s0.ee;
    let mut grip = s0.gripper;
    for seg in segments {
        let new_ref = seg
            .reference
            .pose_in(s0, config)
            .ok_or_else(|| MimicError::Unsegmentable(format!("{:?} absent", seg.reference)))?;
        let moved = transform_segment(seg, new_ref, &config.table)?;
        plan.extend(connect(cur, moved.first_pose(), max_step, grip));
        plan.extend(moved.actions());
        cur = moved.last_pose();
        grip = *moved.gripper.last().unwrap_or(&grip);
    }
    Ok(plan)
}

/// Executes a plan open-loop from the reset of `episode_seed`, recording
/// observations.
pub fn execute_plan(
    plan: &[Action],
    config: &WorldConfig,
    episode_seed: u64,
) -> Result<Episode, WorldError> {
    let mut s = reset(config, episode_seed)?;
    let mut steps = Vec::with_capacity(plan.len());
    let mut states = vec![s.clone()];
    let bounds = config.action_bounds();
    for a in plan {
        let mut a = a.clone();
        a.clamp_to(&bounds);
        let obs = observe(&s, config);
        s = world::step(&s, &a, config);
        steps.push(crate::trajectory::Step { obs, action: a });
        states.push(s.clone());
    }
    let success = check_success(&s, &config.task)?;
    Ok(Episode {
        seed: episode_seed,
        steps,
        states,
        final_state: s,
        success,
    })
}

/// Segments every source after checking that it replays in `config`.
pub fn prepare_sources(
    sources: &Dataset,
    config: &WorldConfig,
) -> Result<Vec<Vec<Segment>>, MimicError> {
    if sources.is_empty() {
        return Err(MimicError::NoSources);
    }
    sources
        .trajectories
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let states = replay_states(t, config)?;
            for (k, step) in t.steps.iter().enumerate() {
                if step.obs.proprio != world::proprio_of(&states[k]) {
                    return Err(MimicError::IncompatibleSource {
                        index,
                        reason: format!("proprio diverges at frame {k}"),
                    });
                }
            }
            segment_source(t, &states, config)
        })
        .collect()
}

/// Generates up to `n_target` successful demos from `sources` in the world
/// described by `config`. Exhausting the attempt budget is not an error: the
/// partial dataset is returned with `budget_exhausted` set.
pub fn generate(
    sources: &Dataset,
    config: &WorldConfig,
    n_target: usize,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<(Dataset, GenerationReport), MimicError> {
    config.validate()?;
    let segmented = prepare_sources(sources, config)?;
    let budget = ATTEMPT_BUDGET_FACTOR * n_target;
    let mut report = GenerationReport {
        attempts: 0,
        successes: 0,
        generation_success_rate: 0.0,
        out_of_workspace: 0,
        failed_replays: 0,
        budget_exhausted: false,
        per_attempt_seeds: Vec::new(),
    };
    let mut trajectories = Vec::with_capacity(n_target);
    while trajectories.len() < n_target && report.attempts < budget {
        let attempt_seed = derive_seed(seed, "mimicgen-attempt", report.attempts as u64);
        report.attempts += 1;
        report.per_attempt_seeds.push(attempt_seed);
        let pick = rng_from(derive_seed(attempt_seed, "source", 0)).random_range(0..segmented.len());
        let s0 = reset(config, attempt_seed)?;
        let plan = match plan_for_scene(&segmented[pick], &s0, config, opts.max_step) {
            Ok(p) => p,
            Err(MimicError::OutOfWorkspace) => {
                report.out_of_workspace += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if plan.is_empty() || plan.len() > config.episode_horizon as usize {
            report.failed_replays += 1;
            continue;
        }
        let ep = execute_plan(&plan, config, attempt_seed)?;
        if ep.success == SuccessLevel::Full {
            trajectories.push(episode_to_trajectory(
                ep,
                config,
                opts.source_tag,
                Generator::MimicGenLite,
            ));
        } else {
            report.failed_replays += 1;
        }
    }
    report.successes = trajectories.len();
    report.generation_success_rate = if report.attempts == 0 {
        0.0
    } else {
        report.successes as f64 / report.attempts as f64
    };
    report.budget_exhausted = report.successes < n_target;
    let dataset = Dataset {
        name: format!("{}-{}-generated", config.task_id(), opts.source_tag),
        source: opts.source_tag,
        manifest: manifest_for(config, &trajectories),
        trajectories,
    };
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{collect_demos, GapConfig};

    fn quiet_world() -> WorldConfig {
        let mut c = WorldConfig::pick_place_real();
        c.gap = GapConfig::default();
        c
    }

    fn sources(c: &WorldConfig, n: usize) -> Dataset {
        collect_demos(c, n, 17, SourceTag::DigitalCousin).unwrap()
    }

    #[test]
    fn pick_place_demo_has_two_segments_covering_all_frames() {
        let c = quiet_world();
        let d = sources(&c, 3);
        for t in &d.trajectories {
            let states = replay_states(t, &c).unwrap();
            let segs = segment_source(t, &states, &c).unwrap();
            assert_eq!(segs.len(), 2);
            assert_eq!(segs.iter().map(Segment::len).sum::<usize>(), t.len());
            assert_eq!(segs[0].start, 0);
            assert_eq!(segs[1].start, segs[0].len());
            assert_eq!(segs[0].reference, Reference::Object(0));
            assert_eq!(segs[1].reference, Reference::TargetRegion);
        }
    }

    #[test]
    fn door_demo_is_one_segment() {
        let mut c = WorldConfig::close_door_real();
        c.gap.action_noise_std = 0.0;
        let d = collect_demos(&c, 2, 5, SourceTag::DigitalCousin).unwrap();
        for t in &d.trajectories {
            let states = replay_states(t, &c).unwrap();
            let segs = segment_source(t, &states, &c).unwrap();
            assert_eq!(segs.len(), 1);
            assert_eq!(segs[0].reference, Reference::DoorLeaf);
            assert_eq!(segs[0].len(), t.len());
        }
    }

    #[test]
    fn eventless_demo_is_unsegmentable() {
        let c = quiet_world();
        let mut t = sources(&c, 1).trajectories[0].clone();
        t.steps.truncate(3);
        let states = replay_states(&t, &c).unwrap();
        assert!(matches!(
            segment_source(&t, &states, &c),
            Err(MimicError::Unsegmentable(_))
        ));
    }

    fn toy_segment() -> Segment {
        Segment {
            start: 0,
            poses: (0..6)
                .map(|k| Pose2::new(0.10 + 0.01 * k as f64, 0.20 - 0.005 * k as f64, 0.05 * k as f64))
                .collect(),
            gripper: vec![1.0, 1.0, 1.0, 1.0, 0.0],
            reference: Reference::Object(0),
            reference_pose: Pose2::new(0.15, 0.18, 0.0),
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let seg = toy_segment();
        let out = transform_segment(&seg, seg.reference_pose, &world::table_rect()).unwrap();
        assert_eq!(out, seg);
    }

    #[test]
    fn translation_shifts_x() {
        let seg = toy_segment();
        let r = seg.reference_pose;
        let out =
            transform_segment(&seg, Pose2::new(r.x + 0.1, r.y, r.theta), &world::table_rect()).unwrap();
        for (a, b) in seg.poses.iter().zip(&out.poses) {
            assert!((b.x - a.x - 0.1).abs() < 1e-12);
            assert!((b.y - a.y).abs() < 1e-12);
        }
        assert_eq!(out.gripper, seg.gripper);
    }

    #[test]
    fn rotation_preserves_distances_to_reference() {
        // Oracle: brute-force |ee - reference| per frame before and after.
        let seg = toy_segment();
        let r = seg.reference_pose;
        let new_ref = Pose2::new(r.x, r.y, r.theta + std::f64::consts::FRAC_PI_2);
        let out = transform_segment(&seg, new_ref, &world::table_rect()).unwrap();
        for (a, b) in seg.poses.iter().zip(&out.poses) {
            let d0 = (a.x - r.x).hypot(a.y - r.y);
            let d1 = (b.x - new_ref.x).hypot(b.y - new_ref.y);
            assert!((d0 - d1).abs() < 1e-12);
            let rel0 = r.relative(a);
            let rel1 = new_ref.relative(b);
            assert!((rel0.x - rel1.x).abs() < 1e-9 && (rel0.y - rel1.y).abs() < 1e-9);
            assert!(wrap_angle(rel0.theta - rel1.theta).abs() < 1e-9);
        }
    }

    #[test]
    fn leaving_the_table_is_out_of_workspace() {
        let seg = toy_segment();
        let r = seg.reference_pose;
        assert_eq!(
            transform_segment(&seg, Pose2::new(r.x - 0.2, r.y, 0.0), &world::table_rect()),
            Err(MimicError::OutOfWorkspace)
        );
    }

    #[test]
    fn actions_are_finite_differences() {
        let seg = toy_segment();
        let acts = seg.actions();
        assert_eq!(acts.len(), seg.len());
        let mut p = seg.poses[0];
        for a in &acts {
            p = Pose2::new(p.x + a.delta[0], p.y + a.delta[1], p.theta + a.delta[2]);
        }
        assert!(p.distance(&seg.last_pose()) < 1e-12);
    }

    #[test]
    fn connect_coincident_is_empty() {
        let p = Pose2::new(0.1, 0.2, 0.3);
        assert!(connect(p, p, 0.02, 1.0).is_empty());
    }

    #[test]
    fn connect_tenth_of_a_meter_in_five_equal_steps() {
        // Oracle: ceil(0.1 / 0.02) = 5; summing displacements recovers the gap.
        let a = Pose2::new(0.1, 0.1, 0.0);
        let b = Pose2::new(0.2, 0.1, 0.0);
        let acts = connect(a, b, 0.02, 0.0);
        assert_eq!(acts.len(), 5);
        let lens: Vec<f64> = acts.iter().map(|a| a.delta[0].hypot(a.delta[1])).collect();
        assert!(lens.iter().all(|l| (l - lens[0]).abs() < 1e-15 && *l <= 0.02 + 1e-12));
        let end = acts.iter().fold((a.x, a.y), |(x, y), a| (x + a.delta[0], y + a.delta[1]));
        assert!((end.0 - b.x).abs() < 1e-9 && (end.1 - b.y).abs() < 1e-9);
    }

    #[test]
    fn identity_replay_reproduces_source() {
        let c = quiet_world();
        let d = sources(&c, 3);
        let segmented = prepare_sources(&d, &c).unwrap();
        for (t, segs) in d.trajectories.iter().zip(&segmented) {
            let s0 = reset(&c, t.seed).unwrap();
            let plan = plan_for_scene(segs, &s0, &c, DEFAULT_MAX_STEP).unwrap();
            assert_eq!(plan.len(), t.len());
            let ep = execute_plan(&plan, &c, t.seed).unwrap();
            assert_eq!(ep.success, SuccessLevel::Full);
            let src = replay_states(t, &c).unwrap();
            for (a, b) in src.iter().zip(&ep.states) {
                assert!(a.ee.distance(&b.ee) < 1e-6);
            }
            let (p, q) = (src.last().unwrap().objects[0].pose, ep.final_state.objects[0].pose);
            assert!(p.distance(&q) < 1e-6);
        }
    }

    #[test]
    fn generation_is_deterministic_and_pure() {
        let c = WorldConfig::pick_place_cousin();
        let src = collect_demos(&c, 4, 1, SourceTag::DigitalCousin).unwrap();
        let opts = GenerateOptions::default();
        let (a, ra) = generate(&src, &c, 10, 5, &opts).unwrap();
        let (b, rb) = generate(&src, &c, 10, 5, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(a.trajectories.iter().all(|t| t.success == 1.0));
        assert_eq!(ra.attempts, ra.successes + ra.out_of_workspace + ra.failed_replays);
        assert!(a.validate().is_empty());
    }

    #[test]
    fn generated_trajectories_replay_from_their_seed() {
        let c = WorldConfig::pick_place_cousin();
        let src = collect_demos(&c, 3, 2, SourceTag::DigitalCousin).unwrap();
        let (d, _) = generate(&src, &c, 3, 9, &GenerateOptions::default()).unwrap();
        for t in &d.trajectories {
            let states = replay_states(t, &c).unwrap();
            assert_eq!(check_success(states.last().unwrap(), &c.task).unwrap(), SuccessLevel::Full);
        }
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let mut c = WorldConfig::pick_place_cousin();
        let src = collect_demos(&c, 2, 2, SourceTag::DigitalCousin).unwrap();
        c.episode_horizon = 10;
        let (d, r) = generate(&src, &c, 2, 0, &GenerateOptions::default()).unwrap();
        assert!(d.is_empty());
        assert!(r.budget_exhausted);
        assert_eq!(r.attempts, 40);
    }
}

#[cfg(test)]
mod throughput {
    use super::*;
    use crate::world::collect_demos;

    #[test]
    fn hundred_from_ten_sources_at_half_rate_or_better() {
        let c = WorldConfig::pick_place_real();
        let src = collect_demos(&c, 10, 3, SourceTag::RealProxy).unwrap();
        let (d, r) = generate(&src, &c, 100, 11, &GenerateOptions::default()).unwrap();
        assert_eq!(d.len(), 100);
        assert!(r.generation_success_rate >= 0.5, "{r:?}");
    }
}
