use super::{
    check_success, render, reset, step, ScriptedExpert, State, SuccessLevel, WorldConfig,
    WorldError,
};
use crate::rng::{derive_seed, rng_from};
use crate::trajectory::{
    count_instances, Action, CompositionManifest, Dataset, Generator, ObjectTag,
    ObservationFrame, SourceTag, Step, Trajectory,
};

/// Anything that can drive the world for an episode.
pub trait Controller {
    fn begin_episode(&mut self, episode_seed: u64, initial: &State);
    fn act(&mut self, state: &State, obs: &ObservationFrame) -> Action;
    /// Controllers that read only the state can skip rendering.
    fn needs_observation(&self) -> bool {
        true
    }
}

pub fn proprio_of(s: &State) -> Vec<f64> {
    vec![s.ee.x, s.ee.y, s.ee.theta, s.gripper]
}

pub fn observe(s: &State, config: &WorldConfig) -> ObservationFrame {
    ObservationFrame {
        image: render(s, &config.camera, &config.gap),
        proprio: proprio_of(s),
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub seed: u64,
    pub steps: Vec<Step>,
    /// Every visited state including the initial one, when recorded.
    pub states: Vec<State>,
    pub final_state: State,
    pub success: SuccessLevel,
}

/// Runs one closed-loop episode until full success or the horizon.
pub fn run_episode(
    config: &WorldConfig,
    episode_seed: u64,
    ctl: &mut dyn Controller,
    record: bool,
) -> Result<Episode, WorldError> {
    let mut s = reset(config, episode_seed)?;
    ctl.begin_episode(episode_seed, &s);
    let bounds = config.action_bounds();
    let mut steps = Vec::new();
    let mut states = Vec::new();
    if record {
        states.push(s.clone());
    }
    let blank = ObservationFrame {
        image: crate::trajectory::Image {
            height: 0,
            width: 0,
            data: Vec::new(),
        },
        proprio: proprio_of(&s),
    };
    let mut success = check_success(&s, &config.task)?;
    while s.step_count < config.episode_horizon && success != SuccessLevel::Full {
        let obs = if record || ctl.needs_observation() {
            observe(&s, config)
        } else {
            ObservationFrame {
                proprio: proprio_of(&s),
                ..blank.clone()
            }
        };
        let mut a = ctl.act(&s, &obs);
        a.delta.resize(bounds.len(), 0.0);
        a.clamp_to(&bounds);
        s = step(&s, &a, config);
        if record {
            steps.push(Step { obs, action: a });
            states.push(s.clone());
        }
        success = check_success(&s, &config.task)?;
    }
    Ok(Episode {
        seed: episode_seed,
        steps,
        states,
        final_state: s,
        success,
    })
}

/// Drives the scripted expert; its waypoint jitter is keyed by the episode
/// seed so any demonstration can be regenerated from its stored seed.
pub struct ExpertController {
    config: WorldConfig,
    expert: Option<ScriptedExpert>,
}

impl ExpertController {
    pub fn new(config: &WorldConfig) -> Self {
        Self {
            config: config.clone(),
            expert: None,
        }
    }
}

impl Controller for ExpertController {
    fn begin_episode(&mut self, episode_seed: u64, _initial: &State) {
        let mut rng = rng_from(derive_seed(episode_seed, "expert", 0));
        self.expert = Some(ScriptedExpert::new(&self.config, &mut rng));
    }

    fn act(&mut self, state: &State, _obs: &ObservationFrame) -> Action {
        self.expert
            .as_ref()
            .expect("begin_episode called before act")
            .act(state)
    }

    fn needs_observation(&self) -> bool {
        false
    }
}

pub fn scene_tags(s: &State) -> Vec<ObjectTag> {
    let mut tags: Vec<ObjectTag> = s
        .objects
        .iter()
        .map(|o| ObjectTag {
            category: o.category.clone(),
            instance: o.instance,
        })
        .collect();
    if s.door.is_some() {
        tags.push(ObjectTag {
            category: "door".into(),
            instance: 0,
        });
    }
    tags
}

pub fn episode_to_trajectory(
    ep: Episode,
    config: &WorldConfig,
    source: SourceTag,
    generator: Generator,
) -> Trajectory {
    let objects = scene_tags(ep.states.first().unwrap_or(&ep.final_state));
    Trajectory {
        steps: ep.steps,
        task_id: config.task_id().to_string(),
        success: ep.success.value(),
        source,
        seed: ep.seed,
        generator,
        objects,
    }
}

/// Manifest declared by a world config for a set of trajectories collected
/// in it; categories and instances are those that occur in the data.
pub fn manifest_for(config: &WorldConfig, trajectories: &[Trajectory]) -> CompositionManifest {
    let object_instances = count_instances(trajectories);
    CompositionManifest {
        object_categories: object_instances.keys().cloned().collect(),
        object_instances,
        init_region: config.effective_init_region(),
        camera: config.effective_camera(),
        texture_ids: [config.gap.palette_id].into_iter().collect(),
        dynamics: config.dynamics(),
        task_ids: [config.task_id().to_string()].into_iter().collect(),
        proprio_dim: super::PROPRIO_DIM,
        action_bounds: config.action_bounds(),
    }
}

/// Collects `n` successful scripted demonstrations, discarding failures.
pub fn collect_demos(
    config: &WorldConfig,
    n: usize,
    seed: u64,
    source: SourceTag,
) -> Result<Dataset, WorldError> {
    config.validate()?;
    let budget = 10 * n.max(1);
    let mut ctl = ExpertController::new(config);
    let mut trajectories = Vec::with_capacity(n);
    let mut attempts = 0;
    while trajectories.len() < n && attempts < budget {
        let ep_seed = derive_seed(seed, "collect", attempts as u64);
        attempts += 1;
        let ep = run_episode(config, ep_seed, &mut ctl, true)?;
        if ep.success == SuccessLevel::Full {
            trajectories.push(episode_to_trajectory(ep, config, source, Generator::HumanProxy));
        }
    }
    if trajectories.len() < n || 2 * trajectories.len() < attempts {
        return Err(WorldError::ExpertFailure {
            successes: trajectories.len(),
            attempts,
        });
    }
    Ok(Dataset {
        name: format!("{}-{}-demos", config.task_id(), source),
        source,
        manifest: manifest_for(config, &trajectories),
        trajectories,
    })
}
