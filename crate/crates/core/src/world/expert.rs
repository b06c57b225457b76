use super::{State, TaskKind, TaskSpec, WorldConfig, GRIPPER_CLOSE_BELOW};
use crate::geometry::{wrap_angle, Pose2};
use crate::trajectory::Action;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    /// Proportional gain on the position error.
    pub gain: f64,
    /// Distance at which a subgoal counts as reached.
    pub tolerance: f64,
    /// Std of the per-episode waypoint jitter, meters.
    pub jitter_std: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            gain: 0.5,
            tolerance: 0.006,
            jitter_std: 0.005,
        }
    }
}

/// Scripted demonstrator standing in for a human teleoperator.
///
/// Subgoals are perturbed once per episode by seeded waypoint jitter, so
/// demonstrations differ while `act` stays a pure function of the state.
#[derive(Debug, Clone)]
pub struct ScriptedExpert {
    task: TaskSpec,
    params: ExpertParams,
    max_translation: f64,
    max_rotation: f64,
    grasp_jitter: (f64, f64),
    place_jitter: (f64, f64),
}

fn jitter<R: Rng>(rng: &mut R, std: f64) -> (f64, f64) {
    if std <= 0.0 {
        return (0.0, 0.0);
    }
    let n = Normal::new(0.0, std).expect("finite std");
    let clip = 2.0 * std;
    (
        n.sample(rng).clamp(-clip, clip),
        n.sample(rng).clamp(-clip, clip),
    )
}

impl ScriptedExpert {
    pub fn new<R: Rng>(config: &WorldConfig, rng: &mut R) -> Self {
        let params = config.expert.clone();
        let grasp_jitter = jitter(rng, params.jitter_std);
        let place_jitter = jitter(rng, 2.0 * params.jitter_std);
        Self {
            task: config.task.clone(),
            params,
            max_translation: config.max_translation,
            max_rotation: config.max_rotation,
            grasp_jitter,
            place_jitter,
        }
    }

    fn move_toward(&self, s: &State, tx: f64, ty: f64, gripper: f64) -> Action {
        let (ex, ey) = (tx - s.ee.x, ty - s.ee.y);
        let (mut dx, mut dy) = (self.params.gain * ex, self.params.gain * ey);
        let norm = dx.hypot(dy);
        if norm > self.max_translation {
            dx *= self.max_translation / norm;
            dy *= self.max_translation / norm;
        }
        let dtheta = (-self.params.gain * wrap_angle(s.ee.theta))
            .clamp(-self.max_rotation, self.max_rotation);
        Action::new(vec![dx, dy, dtheta, gripper])
    }

    pub fn act(&self, s: &State) -> Action {
        match &self.task.kind {
            TaskKind::PickPlace { target_region, .. } => {
                let tol = self.params.tolerance;
                if s.held_object == Some(0) {
                    let (cx, cy) = target_region.center();
                    let (tx, ty) = (cx + self.place_jitter.0, cy + self.place_jitter.1);
                    let arrived = s.ee.distance(&Pose2::translation(tx, ty)) < tol;
                    self.move_toward(s, tx, ty, if arrived { 1.0 } else { 0.0 })
                } else if s.gripper < GRIPPER_CLOSE_BELOW {
                    // Closed on nothing: reopen in place.
                    Action::new(vec![0.0, 0.0, 0.0, 1.0])
                } else {
                    let Some(obj) = s.object(0) else {
                        return Action::new(vec![0.0, 0.0, 0.0, 1.0]);
                    };
                    let (tx, ty) = (
                        obj.pose.x + self.grasp_jitter.0,
                        obj.pose.y + self.grasp_jitter.1,
                    );
                    let arrived = s.ee.distance(&Pose2::translation(tx, ty)) < tol;
                    self.move_toward(s, tx, ty, if arrived { 0.0 } else { 1.0 })
                }
            }
            TaskKind::CloseDoor { .. } => {
                let Some(door) = s.door else {
                    return Action::new(vec![0.0, 0.0, 0.0, 1.0]);
                };
                let radius = 0.75 * door.length + self.grasp_jitter.0.abs();
                let (r, angle) = door.polar(s.ee.x, s.ee.y);
                let engaged = (r - radius).abs() < 0.02
                    && angle >= door.angle_deg - 1.0
                    && angle <= door.angle_deg + 25.0;
                let at = |deg: f64| {
                    door.hinge
                        .compose(&Pose2::new(0.0, 0.0, deg.to_radians()))
                        .transform_point(radius, 0.0)
                };
                let (tx, ty) = if engaged {
                    at((angle - 10.0).max(-8.0))
                } else {
                    at(door.angle_deg + 12.0)
                };
                let mut a = self.move_toward(s, tx, ty, 1.0);
                if engaged {
                    // Sweep at full speed once in contact.
                    let n = a.delta[0].hypot(a.delta[1]);
                    if n > 1e-12 {
                        let k = self.max_translation / n;
                        let full = (tx - s.ee.x).hypot(ty - s.ee.y);
                        let k = k.min(full / n);
                        a.delta[0] *= k;
                        a.delta[1] *= k;
                    }
                }
                a
            }
        }
    }
}
