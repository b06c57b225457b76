use super::{action_scale, features, loss_rows, Mlp, PolicyError, PolicyParams, DEFAULT_IMAGE_SIDE};
use crate::rng::{derive_seed, rng_from};
use crate::sampler::{MixtureSampler, MixtureSpec, Pool, SampleKey};
use crate::trajectory::{Bound, Dataset};
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub checkpoint_count: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub image_side: usize,
    /// Lower bound on the per-input std used for standardization. Keeps
    /// near-constant pixels from turning small color shifts into large
    /// standardized inputs.
    pub min_input_std: f64,
    /// Learning rate at the last step as a fraction of `learning_rate`,
    /// reached by cosine decay. 1.0 keeps the rate constant.
    pub lr_final_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            checkpoint_count: 3,
            seed: 0,
            hidden: vec![128, 128],
            image_side: DEFAULT_IMAGE_SIDE,
            min_input_std: 0.02,
            lr_final_fraction: 0.05,
        }
    }
}

/// Cosine decay from `learning_rate` at step 1 toward
/// `lr_final_fraction * learning_rate`.
pub fn learning_rate_at(config: &TrainConfig, step: usize) -> f64 {
    let f = config.lr_final_fraction;
    let progress = (step - 1) as f64 / config.steps as f64;
    config.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if self.checkpoint_count < 1 || self.steps < self.checkpoint_count {
            return bad("need steps >= checkpoint_count >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.image_side == 0 {
            return bad("image_side must be positive");
        }
        if !(self.min_input_std >= 0.0) {
            return bad("min_input_std must be nonnegative");
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return bad("lr_final_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Steps at which checkpoints are taken: `ceil(k * steps / count)`.
pub fn checkpoint_steps(steps: usize, count: usize) -> Vec<usize> {
    (1..=count).map(|k| (k * steps).div_ceil(count)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub step: usize,
    /// Mixture-weighted loss over every training frame.
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    /// Mixture-weighted loss of the initial parameters.
    pub initial_loss: f64,
    pub seed: u64,
}

/// Standardized inputs and scaled targets for every frame of the datasets
/// that carry probability mass.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    blocks: BTreeMap<(Pool, usize), Block>,
}

#[derive(Debug, Clone)]
struct Block {
    x: Array2<f64>,
    y: Array2<f64>,
    frame_offsets: Vec<usize>,
    /// Probability of each individual frame in this block.
    p: f64,
}

impl FeatureCache {
    fn build(
        spec: &MixtureSpec,
        sampler: &MixtureSampler,
        side: usize,
    ) -> Result<(Self, Vec<Bound>, usize), PolicyError> {
        let mut blocks = BTreeMap::new();
        let mut dims: Option<(usize, Vec<Bound>)> = None;
        for (pool, j, d) in spec.datasets() {
            let probe = SampleKey {
                pool,
                dataset_index: j,
                trajectory_index: 0,
                frame_index: 0,
            };
            if d.frame_count() == 0 || sampler.probability(&probe) == 0.0 {
                continue;
            }
            let p = sampler.probability(&probe);
            let (proprio, bounds) = dims.get_or_insert_with(|| {
                (d.manifest.proprio_dim, d.manifest.action_bounds.clone())
            });
            if d.manifest.proprio_dim != *proprio || d.manifest.action_bounds.len() != bounds.len() {
                return Err(PolicyError::DimensionMismatch(format!(
                    "dataset {} disagrees on observation/action dims",
                    d.name
                )));
            }
            blocks.insert((pool, j), Block::from_dataset(d, side, &action_scale(bounds), p)?);
        }
        let (proprio, bounds) =
            dims.ok_or_else(|| PolicyError::DimensionMismatch("no frames carry mass".into()))?;
        Ok((Self { blocks }, bounds, side * side + proprio))
    }

    fn row(&self, key: &SampleKey) -> (&Block, usize) {
        let b = &self.blocks[&(key.pool, key.dataset_index)];
        (b, b.frame_offsets[key.trajectory_index] + key.frame_index)
    }

    fn standardize(&mut self, mean: &[f64], std: &[f64]) {
        for b in self.blocks.values_mut() {
            for mut row in b.x.rows_mut() {
                for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
                    *v = (*v - m) / s;
                }
            }
        }
    }

    /// Probability-weighted mean and std of the raw inputs, accumulated real
    /// pool first.
    fn stats(&self, n: usize, floor: f64) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; n];
        for b in self.blocks.values() {
            for row in b.x.rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += b.p * v;
                }
            }
        }
        let mut var = vec![0.0; n];
        for b in self.blocks.values() {
            for row in b.x.rows() {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += b.p * (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = v.max(0.0).sqrt();
                if s > 1e-8 {
                    s.max(floor)
                } else {
                    1.0
                }
            })
            .collect();
        (mean, std)
    }

    /// `sum_i p_i * loss_i`, which equals `alpha * L_sim + (1 - alpha) * L_real`.
    pub fn objective(&self, net: &Mlp) -> f64 {
        self.blocks
            .values()
            .map(|b| b.p * loss_rows(net, b.x.view(), b.y.view()).iter().sum::<f64>())
            .sum()
    }

    fn gather(&self, keys: &[SampleKey], x: &mut Array2<f64>, y: &mut Array2<f64>) {
        for (i, k) in keys.iter().enumerate() {
            let (b, r) = self.row(k);
            x.row_mut(i).assign(&b.x.row(r));
            y.row_mut(i).assign(&b.y.row(r));
        }
    }
}

impl Block {
    fn from_dataset(d: &Dataset, side: usize, scale: &[f64], p: f64) -> Result<Self, PolicyError> {
        let frames = d.frame_count();
        let first = &d.trajectories.iter().find(|t| !t.is_empty()).unwrap().steps[0];
        let n = side * side + first.obs.proprio.len();
        let mut x = Array2::zeros((frames, n));
        let mut y = Array2::zeros((frames, scale.len()));
        let mut frame_offsets = Vec::with_capacity(d.len() + 1);
        let mut r = 0;
        for t in &d.trajectories {
            frame_offsets.push(r);
            for s in &t.steps {
                let f = features(&s.obs, side);
                if f.len() != n || s.action.delta.len() != scale.len() {
                    return Err(PolicyError::DimensionMismatch(format!("frame in {}", d.name)));
                }
                x.row_mut(r).assign(&ndarray::ArrayView1::from(&f));
                for (k, (a, sc)) in s.action.delta.iter().zip(scale).enumerate() {
                    y[[r, k]] = a / sc;
                }
                r += 1;
            }
        }
        frame_offsets.push(r);
        Ok(Self { x, y, frame_offsets, p })
    }
}

/// Probability-weighted input mean and std under the mixture.
pub fn weighted_input_stats(
    spec: &MixtureSpec,
    image_side: usize,
) -> Result<(Vec<f64>, Vec<f64>), PolicyError> {
    let sampler = MixtureSampler::new(spec)?;
    let (cache, _, n) = FeatureCache::build(spec, &sampler, image_side)?;
    Ok(cache.stats(n, 0.0))
}

struct Optimizer {
    kind: OptimizerKind,
    m: Mlp,
    v: Mlp,
    t: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, like: &Mlp) -> Self {
        let zeros = Mlp::zeros(&like.sizes());
        Self {
            kind,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn update(&mut self, net: &mut Mlp, g: &Mlp, lr: f64) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (l, gl) in net.layers.iter_mut().zip(&g.layers) {
                    l.w.scaled_add(-lr, &gl.w);
                    l.b.scaled_add(-lr, &gl.b);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let step = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                for (((l, gl), ml), vl) in net
                    .layers
                    .iter_mut()
                    .zip(&g.layers)
                    .zip(&mut self.m.layers)
                    .zip(&mut self.v.layers)
                {
                    Zip::from(&mut l.w).and(&gl.w).and(&mut ml.w).and(&mut vl.w).for_each(step);
                    Zip::from(&mut l.b).and(&gl.b).and(&mut ml.b).and(&mut vl.b).for_each(step);
                }
            }
        }
    }
}

/// Minimizes the co-training objective by minibatch descent on batches drawn
/// from the mixture, snapshotting at equally spaced steps. Deterministic in
/// `config.seed`.
pub fn train(spec: &MixtureSpec, config: &TrainConfig) -> Result<TrainOutcome, PolicyError> {
    config.validate()?;
    let sampler = MixtureSampler::new(spec)?;
    let (mut cache, bounds, n) = FeatureCache::build(spec, &sampler, config.image_side)?;
    let (mean, std) = cache.stats(n, config.min_input_std);
    cache.standardize(&mean, &std);

    let mut sizes = vec![n];
    sizes.extend(&config.hidden);
    sizes.push(bounds.len());
    let mut net = Mlp::random(&sizes, &mut rng_from(derive_seed(config.seed, "policy-init", 0)));
    let mut batch_rng = rng_from(derive_seed(config.seed, "policy-batch", 0));
    let mut opt = Optimizer::new(config.optimizer, &net);
    let snapshot = |net: &Mlp| PolicyParams {
        net: net.clone(),
        image_side: config.image_side,
        input_mean: mean.clone(),
        input_std: std.clone(),
        action_bounds: bounds.clone(),
    };

    let initial_loss = cache.objective(&net);
    let marks = checkpoint_steps(config.steps, config.checkpoint_count);
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut x = Array2::zeros((config.batch_size, n));
    let mut y = Array2::zeros((config.batch_size, bounds.len()));
    for step in 1..=config.steps {
        let keys = sampler.sample_batch(config.batch_size, &mut batch_rng);
        cache.gather(&keys, &mut x, &mut y);
        let (loss, g) = net.loss_and_grad(x.view(), y.view());
        if !loss.is_finite() {
            return Err(PolicyError::Diverged { step });
        }
        let lr = learning_rate_at(config, step);
        opt.update(&mut net, &g, lr);
        if marks.contains(&step) {
            let train_loss = cache.objective(&net);
            if !train_loss.is_finite() || !net.is_finite() {
                return Err(PolicyError::Diverged { step });
            }
            checkpoints.push(Checkpoint {
                params: snapshot(&net),
                step,
                train_loss,
            });
        }
    }
    Ok(TrainOutcome {
        checkpoints,
        initial_loss,
        seed: config.seed,
    })
}
