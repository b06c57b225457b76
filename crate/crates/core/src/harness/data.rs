use super::{ExperimentConfig, ExperimentError};
use crate::mimicgen::{generate, GenerateOptions};
use crate::rng::derive_seed;
use crate::trajectory::{concat_datasets, Dataset, SourceTag};
use crate::world::{collect_demos, WorldConfig};
use std::sync::Arc;

pub fn build_real(world: &WorldConfig, n: usize, data_seed: u64) -> Result<Dataset, ExperimentError> {
    Ok(collect_demos(world, n, derive_seed(data_seed, "real", 0), SourceTag::RealProxy)?)
}

/// Expert sources in the DC world multiplied to `n` demos by generation.
/// `stream` separates datasets built from differently configured worlds.
pub fn build_dc(
    world: &WorldConfig,
    n_sources: usize,
    n: usize,
    data_seed: u64,
    stream: u64,
) -> Result<Dataset, ExperimentError> {
    let sources = collect_demos(
        world,
        n_sources,
        derive_seed(data_seed, "dc-sources", stream),
        SourceTag::DigitalCousin,
    )?;
    let (d, _) = generate(
        &sources,
        world,
        n,
        derive_seed(data_seed, "dc-generate", stream),
        &GenerateOptions::default(),
    )?;
    Ok(d)
}

/// `n` prior demos split as evenly as possible across `worlds`.
pub fn build_prior(worlds: &[WorldConfig], n: usize, data_seed: u64) -> Result<Dataset, ExperimentError> {
    let k = worlds.len();
    let mut out: Option<Dataset> = None;
    for (i, w) in worlds.iter().enumerate() {
        let share = n / k + usize::from(i < n % k);
        if share == 0 {
            continue;
        }
        let d = collect_demos(w, share, derive_seed(data_seed, "prior", i as u64), SourceTag::Prior)?;
        out = Some(match out {
            None => d,
            Some(acc) => concat_datasets(&acc, &d, Some(SourceTag::Prior))?,
        });
    }
    let mut d = out.ok_or_else(|| ExperimentError::Config("no prior data requested".into()))?;
    d.name = "prior".into();
    Ok(d)
}

/// The datasets shared by every cell of one experiment.
#[derive(Debug, Clone, Default)]
pub struct Datasets {
    pub real: Option<Arc<Dataset>>,
    pub dc: Option<Arc<Dataset>>,
    pub prior: Option<Arc<Dataset>>,
}

impl Datasets {
    pub fn standard(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let real = build_real(&cfg.world_real, cfg.n_real_demos, cfg.data_seed)?;
        let dc = if cfg.n_dc_demos > 0 {
            Some(Arc::new(build_dc(&cfg.world_dc, cfg.n_dc_sources, cfg.n_dc_demos, cfg.data_seed, 0)?))
        } else {
            None
        };
        Ok(Self {
            real: Some(Arc::new(real)),
            dc,
            prior: None,
        })
    }
}
