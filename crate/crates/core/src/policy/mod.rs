//! Visuomotor regression policy.
//!
//! Observations are reduced to an `image_side x image_side` grayscale
//! thumbnail concatenated with proprioception, standardized, and mapped by a
//! tanh MLP to an action. Actions are learned in a scaled space where each
//! component is divided by the magnitude of its bound, so the regression
//! targets are all of order one.

mod checkpoint;
mod eval;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use eval::{evaluate, evaluate_controller, EvalReport, PolicyController};
pub use mlp::{mse, Layer, Mlp, Tape};
pub use train::{
    checkpoint_steps, learning_rate_at, train, weighted_input_stats, Checkpoint, FeatureCache, OptimizerKind,
    TrainConfig, TrainOutcome,
};

use crate::trajectory::{Action, Bound, ObservationFrame};
use ndarray::{Array2, ArrayView2};
use thiserror::Error;

pub const DEFAULT_IMAGE_SIDE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("diverged: non-finite loss at step {step}")]
    Diverged { step: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
}

/// Grayscale block-average thumbnail followed by proprioception.
pub fn features(obs: &ObservationFrame, side: usize) -> Vec<f64> {
    let (h, w) = (obs.image.height as usize, obs.image.width as usize);
    let mut sums = vec![0.0; side * side];
    let mut counts = vec![0usize; side * side];
    for r in 0..h {
        let br = r * side / h;
        for c in 0..w {
            let bc = c * side / w;
            let p = &obs.image.data[3 * (r * w + c)..3 * (r * w + c) + 3];
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            sums[br * side + bc] += y / 255.0;
            counts[br * side + bc] += 1;
        }
    }
    let mut out: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    out.extend(&obs.proprio);
    out
}

/// Per-component divisor mapping raw actions into the learned space.
pub fn action_scale(bounds: &[Bound]) -> Vec<f64> {
    bounds
        .iter()
        .map(|b| {
            let m = b.lo.abs().max(b.hi.abs());
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub net: Mlp,
    pub image_side: usize,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub action_bounds: Vec<Bound>,
}

impl PolicyParams {
    /// Network over `image_side² + proprio_dim` inputs with identity
    /// input standardization.
    pub fn new(net: Mlp, image_side: usize, action_bounds: Vec<Bound>) -> Self {
        let n = net.input_dim();
        Self {
            net,
            image_side,
            input_mean: vec![0.0; n],
            input_std: vec![1.0; n],
            action_bounds,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn proprio_dim(&self) -> usize {
        self.input_dim() - self.image_side * self.image_side
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        let n = self.input_dim();
        if self.image_side * self.image_side > n {
            return Err(PolicyError::DimensionMismatch(format!(
                "{n} inputs cannot hold a {0}x{0} thumbnail",
                self.image_side
            )));
        }
        if self.input_mean.len() != n || self.input_std.len() != n {
            return Err(PolicyError::DimensionMismatch("input statistics".into()));
        }
        if self.action_bounds.len() != self.action_dim() {
            return Err(PolicyError::DimensionMismatch(format!(
                "{} bounds for {} outputs",
                self.action_bounds.len(),
                self.action_dim()
            )));
        }
        for w in self.net.layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(PolicyError::DimensionMismatch("layer chain".into()));
            }
        }
        Ok(())
    }

    pub fn standardize(&self, raw: &mut [f64]) {
        for ((v, m), s) in raw.iter_mut().zip(&self.input_mean).zip(&self.input_std) {
            *v = (*v - m) / s;
        }
    }

    /// Standardized network input for one observation.
    pub fn input_of(&self, obs: &ObservationFrame) -> Result<Vec<f64>, PolicyError> {
        if obs.proprio.len() != self.proprio_dim() {
            return Err(PolicyError::DimensionMismatch(format!(
                "proprio {} vs {}",
                obs.proprio.len(),
                self.proprio_dim()
            )));
        }
        if (obs.image.height as usize) < self.image_side || (obs.image.width as usize) < self.image_side {
            return Err(PolicyError::DimensionMismatch("image smaller than thumbnail".into()));
        }
        let mut x = features(obs, self.image_side);
        self.standardize(&mut x);
        Ok(x)
    }

    /// Raw action before clamping.
    pub fn action_unclamped(&self, obs: &ObservationFrame) -> Result<Action, PolicyError> {
        let y = self.net.forward_one(&self.input_of(obs)?);
        let scale = action_scale(&self.action_bounds);
        Ok(Action::new(y.iter().zip(&scale).map(|(v, s)| v * s).collect()))
    }

    pub fn scale_action(&self, a: &Action) -> Vec<f64> {
        a.delta
            .iter()
            .zip(action_scale(&self.action_bounds))
            .map(|(v, s)| v / s)
            .collect()
    }
}

/// Deterministic action for `obs`, clamped to the bounds.
pub fn forward(params: &PolicyParams, obs: &ObservationFrame) -> Result<Action, PolicyError> {
    let mut a = params.action_unclamped(obs)?;
    a.clamp_to(&params.action_bounds);
    Ok(a)
}

fn batch_arrays(
    params: &PolicyParams,
    batch: &[(&ObservationFrame, &Action)],
) -> Result<(Array2<f64>, Array2<f64>), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let (n, d) = (params.input_dim(), params.action_dim());
    let mut x = Array2::zeros((batch.len(), n));
    let mut y = Array2::zeros((batch.len(), d));
    for (i, (obs, a)) in batch.iter().enumerate() {
        if a.delta.len() != d {
            return Err(PolicyError::DimensionMismatch(format!("action {} vs {d}", a.delta.len())));
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&params.input_of(obs)?));
        y.row_mut(i).assign(&ndarray::ArrayView1::from(&params.scale_action(a)));
    }
    Ok((x, y))
}

/// Mean squared error in scaled action space over a batch.
pub fn loss(params: &PolicyParams, batch: &[(&ObservationFrame, &Action)]) -> Result<f64, PolicyError> {
    let (x, y) = batch_arrays(params, batch)?;
    Ok(params.net.loss(x.view(), y.view()))
}

/// Gradient of [`loss`] with respect to the network parameters.
pub fn grad(params: &PolicyParams, batch: &[(&ObservationFrame, &Action)]) -> Result<Mlp, PolicyError> {
    let (x, y) = batch_arrays(params, batch)?;
    Ok(params.net.loss_and_grad(x.view(), y.view()).1)
}

pub(crate) fn loss_rows(net: &Mlp, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Vec<f64> {
    let pred = net.forward(x);
    pred.rows()
        .into_iter()
        .zip(y.rows())
        .map(|(p, t)| {
            p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
        })
        .collect()
}
