use super::{forward, PolicyParams};
use crate::rng::derive_seed;
use crate::trajectory::{Action, ObservationFrame};
use crate::world::{run_episode, Controller, State, WorldConfig, WorldError};
use serde::{Deserialize, Serialize};

/// Closed-loop wrapper that acts from observations only.
pub struct PolicyController<'a> {
    pub params: &'a PolicyParams,
}

impl Controller for PolicyController<'_> {
    fn begin_episode(&mut self, _episode_seed: u64, _initial: &State) {}

    fn act(&mut self, _state: &State, obs: &ObservationFrame) -> Action {
        forward(self.params, obs).unwrap_or_else(|_| Action::zeros(self.params.action_dim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean: f64,
    pub per_episode: Vec<f64>,
}

/// Episode `k` of an evaluation with seed `seed` starts from
/// `reset(config, derive_seed(seed, "eval", k))`, so every controller
/// evaluated with the same seed faces the same initial scenes.
pub fn evaluate_controller(
    ctl: &mut dyn Controller,
    config: &WorldConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport, WorldError> {
    let mut per_episode = Vec::with_capacity(n_episodes);
    for k in 0..n_episodes {
        let ep = run_episode(config, derive_seed(seed, "eval", k as u64), ctl, false)?;
        per_episode.push(ep.success.value());
    }
    let mean = if per_episode.is_empty() {
        0.0
    } else {
        per_episode.iter().sum::<f64>() / per_episode.len() as f64
    };
    Ok(EvalReport { mean, per_episode })
}

pub fn evaluate(
    params: &PolicyParams,
    config: &WorldConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport, WorldError> {
    evaluate_controller(&mut PolicyController { params }, config, n_episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Mlp;
    use crate::rng::rng_from;
    use crate::world::ExpertController;

    #[test]
    fn expert_scores_high() {
        let c = WorldConfig::pick_place_real();
        let r = evaluate_controller(&mut ExpertController::new(&c), &c, 100, 3).unwrap();
        assert!(r.mean >= 0.95, "{}", r.mean);
    }

    #[test]
    fn random_policy_scores_low_and_repeats() {
        let c = WorldConfig::pick_place_real();
        let net = Mlp::random(&[68, 128, 128, 4], &mut rng_from(9));
        let p = PolicyParams::new(net, 8, c.action_bounds());
        let a = evaluate(&p, &c, 50, 1).unwrap();
        assert!(a.mean <= 0.1, "{}", a.mean);
        assert_eq!(a, evaluate(&p, &c, 50, 1).unwrap());
        assert!(a.per_episode.iter().all(|v| [0.0, 0.5, 1.0].contains(v)));
    }
}
