//! Co-training mixture sampling.
//!
//! A batch element comes from the sim pool with probability `alpha` and from
//! the real pool otherwise. Within the real pool every frame of every dataset
//! is equally likely. Within the sim pool dataset `j` receives a share
//! `sim_subweights[j]` of the sim mass, spread uniformly over its frames.
//! Sampling this way in expectation reproduces the weighted objective
//! `alpha * L_sim + (1 - alpha) * L_real`.

use crate::trajectory::Dataset;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pool {
    Real,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub pool: Pool,
    pub dataset_index: usize,
    pub trajectory_index: usize,
    pub frame_index: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("empty pool: {0:?} pool has no frames but receives probability mass")]
    EmptyPool(Pool),
    #[error("sim subweights invalid: {0}")]
    InvalidSubweights(String),
    #[error("sim dataset {0} has no frames but a positive subweight")]
    EmptyDataset(usize),
}

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub real_pool: Vec<Arc<Dataset>>,
    pub sim_pool: Vec<Arc<Dataset>>,
    /// Probability of drawing from the sim pool.
    pub alpha: f64,
    /// Share of the sim mass per sim dataset; uniform when absent.
    pub sim_subweights: Option<Vec<f64>>,
}

impl MixtureSpec {
    pub fn new(real_pool: Vec<Arc<Dataset>>, sim_pool: Vec<Arc<Dataset>>, alpha: f64) -> Self {
        Self {
            real_pool,
            sim_pool,
            alpha,
            sim_subweights: None,
        }
    }

    pub fn real_only(real_pool: Vec<Arc<Dataset>>) -> Self {
        Self::new(real_pool, Vec::new(), 0.0)
    }

    pub fn sim_only(sim_pool: Vec<Arc<Dataset>>) -> Self {
        Self::new(Vec::new(), sim_pool, 1.0)
    }

    pub fn subweights(&self) -> Vec<f64> {
        match &self.sim_subweights {
            Some(w) => w.clone(),
            None => {
                let n = self.sim_pool.len();
                vec![1.0 / n as f64; n]
            }
        }
    }

    pub fn dataset(&self, pool: Pool, index: usize) -> &Dataset {
        match pool {
            Pool::Real => &self.real_pool[index],
            Pool::Sim => &self.sim_pool[index],
        }
    }

    /// Datasets of both pools, real first.
    pub fn datasets(&self) -> impl Iterator<Item = (Pool, usize, &Dataset)> {
        let real = self.real_pool.iter().enumerate().map(|(i, d)| (Pool::Real, i, &**d));
        let sim = self.sim_pool.iter().enumerate().map(|(i, d)| (Pool::Sim, i, &**d));
        real.chain(sim)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SamplerError::InvalidAlpha(self.alpha));
        }
        let w = self.subweights();
        if w.len() != self.sim_pool.len() {
            return Err(SamplerError::InvalidSubweights(format!(
                "{} weights for {} sim datasets",
                w.len(),
                self.sim_pool.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SamplerError::InvalidSubweights("negative or non-finite".into()));
        }
        if !w.is_empty() && (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SamplerError::InvalidSubweights(format!(
                "sum {} != 1",
                w.iter().sum::<f64>()
            )));
        }
        if self.alpha > 0.0 {
            if self.sim_pool.is_empty() {
                return Err(SamplerError::EmptyPool(Pool::Sim));
            }
            for (j, d) in self.sim_pool.iter().enumerate() {
                if w[j] > 0.0 && d.frame_count() == 0 {
                    return Err(SamplerError::EmptyDataset(j));
                }
            }
        }
        if self.alpha < 1.0 && self.real_pool.iter().all(|d| d.frame_count() == 0) {
            return Err(SamplerError::EmptyPool(Pool::Real));
        }
        Ok(())
    }
}

/// The expected share of each batch drawn from (sim, real).
pub fn effective_loss_weighting(spec: &MixtureSpec) -> (f64, f64) {
    (spec.alpha, 1.0 - spec.alpha)
}

/// Cumulative frame offsets of a dataset's trajectories.
fn frame_offsets(d: &Dataset) -> Vec<usize> {
    let mut out = Vec::with_capacity(d.len() + 1);
    let mut acc = 0;
    out.push(0);
    for t in &d.trajectories {
        acc += t.len();
        out.push(acc);
    }
    out
}

fn locate(offsets: &[usize], k: usize) -> (usize, usize) {
    let t = offsets.partition_point(|&o| o <= k) - 1;
    (t, k - offsets[t])
}

/// Exact per-frame sampling probabilities plus the index structures used to
/// draw from them.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    alpha: f64,
    real_dataset_offsets: Vec<usize>,
    real_frame_offsets: Vec<Vec<usize>>,
    sim_frame_offsets: Vec<Vec<usize>>,
    sim_weights: Vec<f64>,
    sim_cumulative: Vec<f64>,
}

impl MixtureSampler {
    pub fn new(spec: &MixtureSpec) -> Result<Self, SamplerError> {
        spec.validate()?;
        let real_frame_offsets: Vec<Vec<usize>> =
            spec.real_pool.iter().map(|d| frame_offsets(d)).collect();
        let mut real_dataset_offsets = vec![0];
        for o in &real_frame_offsets {
            real_dataset_offsets.push(real_dataset_offsets.last().unwrap() + o.last().unwrap());
        }
        let sim_weights = spec.subweights();
        let mut acc = 0.0;
        let sim_cumulative = sim_weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            alpha: spec.alpha,
            real_dataset_offsets,
            real_frame_offsets,
            sim_frame_offsets: spec.sim_pool.iter().map(|d| frame_offsets(d)).collect(),
            sim_weights,
            sim_cumulative,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn real_frames(&self) -> usize {
        *self.real_dataset_offsets.last().unwrap()
    }

    pub fn sim_frames(&self, j: usize) -> usize {
        *self.sim_frame_offsets[j].last().unwrap()
    }

    /// Probability that one draw returns exactly `key`.
    pub fn probability(&self, key: &SampleKey) -> f64 {
        match key.pool {
            Pool::Real => {
                if self.alpha >= 1.0 {
                    0.0
                } else {
                    (1.0 - self.alpha) / self.real_frames() as f64
                }
            }
            Pool::Sim => {
                let w = self.sim_weights[key.dataset_index];
                if self.alpha <= 0.0 || w <= 0.0 {
                    0.0
                } else {
                    self.alpha * w / self.sim_frames(key.dataset_index) as f64
                }
            }
        }
    }

    /// Every frame of the mixture with positive probability, real first.
    pub fn table(&self) -> Vec<(SampleKey, f64)> {
        let mut out = Vec::new();
        let mut push = |pool, j: usize, offsets: &[usize]| {
            for t in 0..offsets.len() - 1 {
                for f in 0..offsets[t + 1] - offsets[t] {
                    let key = SampleKey {
                        pool,
                        dataset_index: j,
                        trajectory_index: t,
                        frame_index: f,
                    };
                    let p = self.probability(&key);
                    if p > 0.0 {
                        out.push((key, p));
                    }
                }
            }
        };
        for (j, o) in self.real_frame_offsets.iter().enumerate() {
            push(Pool::Real, j, o);
        }
        for (j, o) in self.sim_frame_offsets.iter().enumerate() {
            push(Pool::Sim, j, o);
        }
        out
    }

    fn pick_sim_dataset(&self, v: f64) -> usize {
        let target = v * self.sim_cumulative.last().copied().unwrap_or(1.0);
        let mut last_positive = 0;
        for (j, (&c, &w)) in self.sim_cumulative.iter().zip(&self.sim_weights).enumerate() {
            if w > 0.0 {
                if target < c {
                    return j;
                }
                last_positive = j;
            }
        }
        last_positive
    }

    /// One draw. Always consumes the pool coin first so runs at the two
    /// boundary ratios match single-pool runs draw for draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleKey {
        let u: f64 = rng.random();
        if u < self.alpha {
            let j = self.pick_sim_dataset(rng.random());
            let (t, f) = locate(&self.sim_frame_offsets[j], rng.random_range(0..self.sim_frames(j)));
            SampleKey {
                pool: Pool::Sim,
                dataset_index: j,
                trajectory_index: t,
                frame_index: f,
            }
        } else {
            let k = rng.random_range(0..self.real_frames());
            let (j, local) = locate(&self.real_dataset_offsets, k);
            let (t, f) = locate(&self.real_frame_offsets[j], local);
            SampleKey {
                pool: Pool::Real,
                dataset_index: j,
                trajectory_index: t,
                frame_index: f,
            }
        }
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<SampleKey> {
        (0..batch_size).map(|_| self.sample(rng)).collect()
    }
}

pub fn assign_weights(spec: &MixtureSpec) -> Result<Vec<(SampleKey, f64)>, SamplerError> {
    Ok(MixtureSampler::new(spec)?.table())
}

pub fn sample_batch<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<SampleKey>, SamplerError> {
    Ok(MixtureSampler::new(spec)?.sample_batch(batch_size, rng))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::trajectory::fixtures;
    use proptest::prelude::*;

    /// A dataset with one trajectory per entry of `lengths`.
    pub(crate) fn sized(lengths: &[usize]) -> Arc<Dataset> {
        let mut d = fixtures::dataset(0, &["cup"]);
        d.trajectories = lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| fixtures::trajectory(len, i as u64, "cup"))
            .collect();
        Arc::new(d)
    }

    fn spec(real: &[usize], sims: &[&[usize]], alpha: f64) -> MixtureSpec {
        MixtureSpec::new(vec![sized(real)], sims.iter().map(|s| sized(s)).collect(), alpha)
    }

    #[test]
    fn half_ratio_equal_sizes_is_uniform() {
        let t = assign_weights(&spec(&[5, 5], &[&[4, 6]], 0.5)).unwrap();
        assert_eq!(t.len(), 20);
        assert!(t.iter().all(|(_, p)| (p - 0.05).abs() < 1e-15));
    }

    #[test]
    fn high_ratio_arithmetic() {
        // 0.99 / 1000 and 0.01 / 20.
        let t = assign_weights(&spec(&[20], &[&[1000]], 0.99)).unwrap();
        for (k, p) in &t {
            let want = if k.pool == Pool::Sim { 0.00099 } else { 0.0005 };
            assert!((p - want).abs() < 1e-15, "{k:?} {p}");
        }
    }

    #[test]
    fn zero_ratio_has_no_sim_mass() {
        let t = assign_weights(&spec(&[3, 7], &[&[10]], 0.0)).unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.iter().all(|(k, p)| k.pool == Pool::Real && (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn real_pool_is_merged() {
        let s = MixtureSpec::new(vec![sized(&[2]), sized(&[6])], vec![sized(&[4])], 0.5);
        let m = MixtureSampler::new(&s).unwrap();
        for (k, p) in m.table() {
            if k.pool == Pool::Real {
                assert!((p - 0.5 / 8.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_pool_errors() {
        let s = MixtureSpec::new(vec![sized(&[3])], vec![], 0.5);
        assert_eq!(MixtureSampler::new(&s).unwrap_err(), SamplerError::EmptyPool(Pool::Sim));
        let s = MixtureSpec::new(vec![], vec![sized(&[3])], 0.5);
        assert_eq!(MixtureSampler::new(&s).unwrap_err(), SamplerError::EmptyPool(Pool::Real));
        assert!(MixtureSampler::new(&MixtureSpec::sim_only(vec![sized(&[3])])).is_ok());
        assert!(MixtureSampler::new(&MixtureSpec::real_only(vec![sized(&[3])])).is_ok());
        let mut s = spec(&[2], &[&[2], &[2]], 0.5);
        s.sim_subweights = Some(vec![0.7, 0.2]);
        assert!(matches!(MixtureSampler::new(&s), Err(SamplerError::InvalidSubweights(_))));
        assert_eq!(
            MixtureSampler::new(&spec(&[2], &[&[2]], 1.5)).unwrap_err(),
            SamplerError::InvalidAlpha(1.5)
        );
    }

    #[test]
    fn loss_weighting_is_alpha_pair() {
        for (a, w) in [(0.9, (0.9, 0.1)), (0.99, (0.99, 0.01)), (0.5, (0.5, 0.5))] {
            let (s, r) = effective_loss_weighting(&spec(&[2], &[&[2]], a));
            assert!((s - w.0).abs() < 1e-15 && (r - w.1).abs() < 1e-15);
        }
    }

    #[test]
    fn sim_fraction_binomial_bound() {
        let m = MixtureSampler::new(&spec(&[20], &[&[100], &[50]], 0.9)).unwrap();
        let b = m.sample_batch(100_000, &mut rng_from(3));
        let frac = b.iter().filter(|k| k.pool == Pool::Sim).count() as f64 / 1e5;
        assert!((frac - 0.9).abs() <= 0.0028, "{frac}");
    }

    #[test]
    fn unit_ratio_draws_only_sim() {
        let m = MixtureSampler::new(&spec(&[20], &[&[30]], 1.0)).unwrap();
        assert!(m.sample_batch(5000, &mut rng_from(1)).iter().all(|k| k.pool == Pool::Sim));
    }

    #[test]
    fn draws_follow_table() {
        // Oracle: chi-square-free check, each key's frequency within 5 sigma.
        let s = {
            let mut s = spec(&[3, 2], &[&[4], &[1, 1]], 0.6);
            s.sim_subweights = Some(vec![0.25, 0.75]);
            s
        };
        let m = MixtureSampler::new(&s).unwrap();
        let n = 200_000;
        let draws = m.sample_batch(n, &mut rng_from(8));
        for (k, p) in m.table() {
            let c = draws.iter().filter(|d| **d == k).count() as f64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c - n as f64 * p).abs() < 5.0 * sd, "{k:?}: {c} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn boundary_ratio_matches_single_pool_stream() {
        let real = sized(&[5, 9]);
        let sim = sized(&[7]);
        let mixed = MixtureSampler::new(&MixtureSpec::new(vec![real.clone()], vec![sim.clone()], 0.0)).unwrap();
        let alone = MixtureSampler::new(&MixtureSpec::real_only(vec![real.clone()])).unwrap();
        assert_eq!(mixed.sample_batch(500, &mut rng_from(4)), alone.sample_batch(500, &mut rng_from(4)));
        let mixed = MixtureSampler::new(&MixtureSpec::new(vec![real], vec![sim.clone()], 1.0)).unwrap();
        let alone = MixtureSampler::new(&MixtureSpec::sim_only(vec![sim])).unwrap();
        assert_eq!(mixed.sample_batch(500, &mut rng_from(4)), alone.sample_batch(500, &mut rng_from(4)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn probabilities_sum_to_one(
            alpha in 0.0f64..=1.0,
            real in prop::collection::vec(1usize..6, 1..4),
            sims in prop::collection::vec(prop::collection::vec(1usize..6, 1..4), 1..4),
            raw in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let sim_refs: Vec<&[usize]> = sims.iter().map(|v| v.as_slice()).collect();
            let mut s = spec(&real, &sim_refs, alpha);
            let w = &raw[..sims.len()];
            let total: f64 = w.iter().sum();
            s.sim_subweights = Some(w.iter().map(|v| v / total).collect());
            let t = assign_weights(&s).unwrap();
            let sum: f64 = t.iter().map(|(_, p)| p).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "{}", sum);
        }

        #[test]
        fn doubling_sim_keeps_pool_mass(alpha in 0.01f64..0.99, lens in prop::collection::vec(1usize..6, 1..5)) {
            let once = spec(&[4], &[&lens], alpha);
            let doubled: Vec<usize> = lens.iter().chain(&lens).copied().collect();
            let twice = spec(&[4], &[&doubled], alpha);
            let mass = |s: &MixtureSpec| -> (f64, f64) {
                let t = assign_weights(s).unwrap();
                let sim: f64 = t.iter().filter(|(k, _)| k.pool == Pool::Sim).map(|(_, p)| p).sum();
                let per = t.iter().find(|(k, _)| k.pool == Pool::Sim).unwrap().1;
                (sim, per)
            };
            let (m1, p1) = mass(&once);
            let (m2, p2) = mass(&twice);
            prop_assert!((m1 - m2).abs() < 1e-12);
            prop_assert!((p1 - 2.0 * p2).abs() < 1e-15);
        }

        #[test]
        fn same_seed_same_stream(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
            let m = MixtureSampler::new(&spec(&[3, 4], &[&[5], &[2]], alpha)).unwrap();
            prop_assert_eq!(m.sample_batch(64, &mut rng_from(seed)), m.sample_batch(64, &mut rng_from(seed)));
        }
    }
}
