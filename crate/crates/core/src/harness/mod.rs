//! Experiment protocols: co-training mix tables, ratio sweeps, data scaling,
//! camera ablation and generalization tests, with CSV/JSON emission.

mod data;
mod protocols;
mod results;

pub use data::{build_dc, build_prior, build_real, Datasets};
pub use protocols::{plan_cells, run_cell, run_cells, run_experiment, Cell};
pub use results::{
    emit_results, to_csv, read_results_csv, render_report, summarize_rows, ConditionSummary, ResultRow,
    RESULTS_CSV, SUMMARY_JSON, TIMINGS_CSV,
};

use crate::geometry::Pose2;
use crate::mimicgen::MimicError;
use crate::policy::{PolicyError, TrainConfig};
use crate::trajectory::ConcatError;
use crate::world::{novel_objects, ObjectSpec, WorldConfig, WorldError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Caps the number of cells trained concurrently.
pub const THREADS_ENV: &str = "COTRAIN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    MixTable,
    RatioSweep,
    RealScaling,
    SimQuantity,
    CameraAblation,
    UnseenPositions,
    UnseenObjects,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::MixTable => "mix_table",
            Protocol::RatioSweep => "ratio_sweep",
            Protocol::RealScaling => "real_scaling",
            Protocol::SimQuantity => "sim_quantity",
            Protocol::CameraAblation => "camera_ablation",
            Protocol::UnseenPositions => "unseen_positions",
            Protocol::UnseenObjects => "unseen_objects",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| format!("unknown protocol {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub protocol: Protocol,
    pub world_real: WorldConfig,
    pub world_dc: WorldConfig,
    #[serde(default)]
    pub worlds_prior: Vec<WorldConfig>,
    pub n_real_demos: usize,
    pub n_dc_demos: usize,
    #[serde(default)]
    pub n_prior_demos: usize,
    /// Expert demos collected in the DC world as generation sources.
    #[serde(default = "default_dc_sources")]
    pub n_dc_sources: usize,
    /// Sim-pool probability for every protocol except the ratio sweep.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_real_count_grid")]
    pub real_count_grid: Vec<usize>,
    #[serde(default = "default_sim_count_grid")]
    pub sim_count_grid: Vec<usize>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seeds every dataset the experiment collects or generates.
    #[serde(default)]
    pub data_seed: u64,
    /// Training hyperparameters; `seed` is replaced per cell.
    #[serde(default)]
    pub train: TrainConfig,
    /// Camera offset applied to the DC world in the misaligned ablation arm.
    #[serde(default = "default_misaligned_offset")]
    pub misaligned_camera_offset: Pose2,
    /// Border band, as a fraction of each init-region dimension, used for
    /// real demos in the unseen-positions protocol.
    #[serde(default = "default_border_band")]
    pub border_band: f64,
    /// Objects absent from real demos, added to DC data and used for
    /// evaluation in the unseen-objects protocol.
    #[serde(default = "novel_objects")]
    pub held_out_objects: Vec<ObjectSpec>,
}

fn default_dc_sources() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.9
}
fn default_alpha_grid() -> Vec<f64> {
    vec![0.0, 0.5, 0.9, 0.99, 0.995, 0.999]
}
fn default_real_count_grid() -> Vec<usize> {
    vec![10, 25, 50, 100]
}
fn default_sim_count_grid() -> Vec<usize> {
    vec![50, 200, 1000]
}
fn default_eval_episodes() -> usize {
    100
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_misaligned_offset() -> Pose2 {
    Pose2::new(0.05, 0.03, 0.15)
}
fn default_border_band() -> f64 {
    0.2
}

impl ExperimentConfig {
    /// Desk-scale defaults for `protocol` on the pick-place task.
    pub fn pick_place(name: &str, protocol: Protocol) -> Self {
        Self {
            name: name.into(),
            protocol,
            world_real: WorldConfig::pick_place_real(),
            world_dc: WorldConfig::pick_place_cousin(),
            worlds_prior: (0..3).map(WorldConfig::pick_place_prior).collect(),
            n_real_demos: 10,
            n_dc_demos: 1000,
            n_prior_demos: 600,
            n_dc_sources: default_dc_sources(),
            alpha: default_alpha(),
            alpha_grid: default_alpha_grid(),
            real_count_grid: default_real_count_grid(),
            sim_count_grid: default_sim_count_grid(),
            eval_episodes: default_eval_episodes(),
            seeds: default_seeds(),
            data_seed: 0,
            train: TrainConfig::default(),
            misaligned_camera_offset: default_misaligned_offset(),
            border_band: default_border_band(),
            held_out_objects: novel_objects(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        self.world_real.validate()?;
        self.world_dc.validate()?;
        for w in &self.worlds_prior {
            w.validate()?;
        }
        match self.protocol {
            Protocol::RatioSweep if self.alpha_grid.is_empty() => return bad("alpha_grid is empty"),
            Protocol::RatioSweep if self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) => {
                return bad("alpha_grid values must lie in [0, 1]")
            }
            Protocol::RealScaling if self.real_count_grid.is_empty() || self.real_count_grid.contains(&0) => {
                return bad("real_count_grid must be nonempty and positive")
            }
            Protocol::SimQuantity if self.sim_count_grid.is_empty() => {
                return bad("sim_count_grid is empty")
            }
            Protocol::UnseenPositions if !(self.border_band > 0.0 && self.border_band < 0.5) => {
                return bad("border_band must lie in (0, 0.5)")
            }
            Protocol::UnseenObjects if self.held_out_objects.is_empty() => {
                return bad("held_out_objects is empty")
            }
            Protocol::MixTable if self.n_prior_demos > 0 && self.worlds_prior.is_empty() => {
                return bad("n_prior_demos set without worlds_prior")
            }
            _ => {}
        }
        if self.n_real_demos == 0 && self.protocol != Protocol::RealScaling {
            return bad("n_real_demos must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Mimic(#[from] MimicError),
    #[error(transparent)]
    Concat(#[from] ConcatError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("corrupt results file: {0}")]
    Results(String),
}
