use super::data::{build_dc, build_prior, build_real, Datasets};
use super::results::ResultRow;
use super::{ExperimentConfig, ExperimentError, Protocol, THREADS_ENV};
use crate::geometry::Pose2;
use crate::policy::{evaluate, train, PolicyError, TrainConfig};
use crate::rng::derive_seed;
use crate::sampler::MixtureSpec;
use crate::trajectory::Dataset;
use crate::world::WorldConfig;
use rayon::prelude::*;
use std::sync::Arc;
use std::time::Instant;

/// One trained policy and the conditions it is scored under. Every
/// evaluation world yields its own result row.
#[derive(Debug, Clone)]
pub struct Cell {
    pub seed: u64,
    pub spec: MixtureSpec,
    pub evals: Vec<(String, WorldConfig)>,
}

fn real_only(real: &Arc<Dataset>) -> MixtureSpec {
    MixtureSpec::real_only(vec![real.clone()])
}

fn cotrain(real: &Arc<Dataset>, sim: Option<&Arc<Dataset>>, alpha: f64) -> MixtureSpec {
    match sim {
        Some(s) if alpha > 0.0 => MixtureSpec::new(vec![real.clone()], vec![s.clone()], alpha),
        _ => real_only(real),
    }
}

/// Real pool against several sim datasets, each taking an equal share of
/// the sim mass.
fn cotrain_many(real: &Arc<Dataset>, sims: Vec<Arc<Dataset>>, alpha: f64) -> MixtureSpec {
    if sims.is_empty() || alpha == 0.0 {
        return real_only(real);
    }
    MixtureSpec::new(vec![real.clone()], sims, alpha)
}

fn truncate(d: &Arc<Dataset>, n: usize) -> Arc<Dataset> {
    if n >= d.len() {
        d.clone()
    } else {
        Arc::new(d.truncated(n))
    }
}

fn fmt_alpha(a: f64) -> String {
    format!("alpha={a}")
}

/// Builds every dataset the protocol needs and lays out its cells,
/// condition-major then seed.
pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>, ExperimentError> {
    cfg.validate()?;
    let real_world = &cfg.world_real;
    // (training spec, evaluations) per condition group, before seeds.
    let mut groups: Vec<(MixtureSpec, Vec<(String, WorldConfig)>)> = Vec::new();
    let on_real = |label: &str| vec![(label.to_string(), real_world.clone())];
    match cfg.protocol {
        Protocol::MixTable => {
            let data = Datasets::standard(cfg)?;
            let real = data.real.as_ref().expect("real data");
            let prior = if cfg.n_prior_demos > 0 {
                Some(Arc::new(build_prior(&cfg.worlds_prior, cfg.n_prior_demos, cfg.data_seed)?))
            } else {
                None
            };
            groups.push((real_only(real), on_real("real")));
            groups.push((cotrain(real, data.dc.as_ref(), cfg.alpha), on_real("real+dc")));
            if let Some(p) = &prior {
                groups.push((cotrain(real, Some(p), cfg.alpha), on_real("real+prior")));
                let sims = data.dc.iter().chain(Some(p)).cloned().collect();
                groups.push((cotrain_many(real, sims, cfg.alpha), on_real("real+dc+prior")));
            }
        }
        Protocol::RatioSweep => {
            let data = Datasets::standard(cfg)?;
            let real = data.real.as_ref().expect("real data");
            for &a in &cfg.alpha_grid {
                groups.push((cotrain(real, data.dc.as_ref(), a), on_real(&fmt_alpha(a))));
            }
        }
        Protocol::RealScaling => {
            let max = *cfg.real_count_grid.iter().max().expect("nonempty grid");
            let all_real = Arc::new(build_real(real_world, max, cfg.data_seed)?);
            let dc = (cfg.n_dc_demos > 0)
                .then(|| build_dc(&cfg.world_dc, cfg.n_dc_sources, cfg.n_dc_demos, cfg.data_seed, 0))
                .transpose()?
                .map(Arc::new);
            for &n in &cfg.real_count_grid {
                let real = truncate(&all_real, n);
                groups.push((real_only(&real), on_real(&format!("real-only/n={n}"))));
                groups.push((cotrain(&real, dc.as_ref(), cfg.alpha), on_real(&format!("cotrain/n={n}"))));
            }
        }
        Protocol::SimQuantity => {
            let max = *cfg.sim_count_grid.iter().max().expect("nonempty grid");
            let real = Arc::new(build_real(real_world, cfg.n_real_demos, cfg.data_seed)?);
            let all_dc = Arc::new(build_dc(&cfg.world_dc, cfg.n_dc_sources, max, cfg.data_seed, 0)?);
            groups.push((real_only(&real), on_real("real-only")));
            for &n in &cfg.sim_count_grid {
                let dc = (n > 0).then(|| truncate(&all_dc, n));
                groups.push((cotrain(&real, dc.as_ref(), cfg.alpha), on_real(&format!("sim={n}"))));
            }
        }
        Protocol::CameraAblation => {
            let real = Arc::new(build_real(real_world, cfg.n_real_demos, cfg.data_seed)?);
            // Both arms share generation seeds, so they see the same scenes
            // and actions and differ only in rendering.
            let arm = |offset: Pose2| -> Result<Arc<Dataset>, ExperimentError> {
                let mut w = cfg.world_dc.clone();
                w.gap.camera_offset = offset;
                Ok(Arc::new(build_dc(&w, cfg.n_dc_sources, cfg.n_dc_demos, cfg.data_seed, 0)?))
            };
            let aligned = arm(Pose2::identity())?;
            let misaligned = arm(cfg.misaligned_camera_offset)?;
            groups.push((real_only(&real), on_real("real-only")));
            groups.push((cotrain(&real, Some(&misaligned), cfg.alpha), on_real("misaligned")));
            groups.push((cotrain(&real, Some(&aligned), cfg.alpha), on_real("aligned")));
        }
        Protocol::UnseenPositions => {
            let mut border = real_world.clone();
            border.init_band = Some(cfg.border_band);
            let mut center = real_world.clone();
            center.init_band = None;
            center.gap.init_region_override = Some(real_world.effective_init_region().inner(cfg.border_band));
            let real = Arc::new(build_real(&border, cfg.n_real_demos, cfg.data_seed)?);
            let mut dc_world = cfg.world_dc.clone();
            dc_world.init_band = None;
            let dc = Arc::new(build_dc(&dc_world, cfg.n_dc_sources, cfg.n_dc_demos, cfg.data_seed, 0)?);
            let evals = |who: &str| {
                vec![
                    (format!("{who}@center"), center.clone()),
                    (format!("{who}@border"), border.clone()),
                ]
            };
            groups.push((real_only(&real), evals("real-only")));
            groups.push((cotrain(&real, Some(&dc), cfg.alpha), evals("cotrain")));
        }
        Protocol::UnseenObjects => {
            let real = Arc::new(build_real(real_world, cfg.n_real_demos, cfg.data_seed)?);
            let mut dc_world = cfg.world_dc.clone();
            dc_world.object_set.extend(cfg.held_out_objects.iter().cloned());
            let dc = Arc::new(build_dc(&dc_world, cfg.n_dc_sources, cfg.n_dc_demos, cfg.data_seed, 0)?);
            let mut unseen = real_world.clone();
            unseen.object_set = cfg.held_out_objects.clone();
            let evals = |who: &str| {
                vec![
                    (format!("{who}@unseen"), unseen.clone()),
                    (format!("{who}@seen"), real_world.clone()),
                ]
            };
            groups.push((real_only(&real), evals("real-only")));
            groups.push((cotrain(&real, Some(&dc), cfg.alpha), evals("cotrain")));
        }
    }
    let mut cells = Vec::with_capacity(groups.len() * cfg.seeds.len());
    for (spec, evals) in groups {
        for &seed in &cfg.seeds {
            cells.push(Cell {
                seed,
                spec: spec.clone(),
                evals: evals.clone(),
            });
        }
    }
    Ok(cells)
}

/// Scene seed shared by every condition evaluated under `seed`.
pub(crate) fn eval_seed(seed: u64) -> u64 {
    derive_seed(seed, "eval-scenes", 0)
}

/// Trains one cell and scores each checkpoint in each evaluation world; the
/// reported score is the best checkpoint's.
pub fn run_cell(
    cell: &Cell,
    protocol: Protocol,
    train_cfg: &TrainConfig,
    eval_episodes: usize,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let start = Instant::now();
    let cfg = TrainConfig {
        seed: cell.seed,
        ..train_cfg.clone()
    };
    let outcome = match train(&cell.spec, &cfg) {
        Ok(o) => o,
        Err(PolicyError::Diverged { .. }) => {
            let secs = start.elapsed().as_secs_f64();
            return Ok(cell
                .evals
                .iter()
                .map(|(label, _)| ResultRow::diverged(protocol, label, cell.seed, secs))
                .collect());
        }
        Err(e) => return Err(e.into()),
    };
    let mut rows = Vec::with_capacity(cell.evals.len());
    for (label, world) in &cell.evals {
        let mut scores = Vec::with_capacity(outcome.checkpoints.len());
        for c in &outcome.checkpoints {
            scores.push(evaluate(&c.params, world, eval_episodes, eval_seed(cell.seed))?.mean);
        }
        let best = (0..scores.len())
            .fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        rows.push(ResultRow {
            protocol,
            condition: label.clone(),
            seed: cell.seed,
            score: scores[best],
            checkpoint_used: Some(outcome.checkpoints[best].step),
            checkpoint_scores: scores,
            diverged: false,
            wallclock_s: 0.0,
        });
    }
    let secs = start.elapsed().as_secs_f64();
    for r in &mut rows {
        r.wallclock_s = secs;
    }
    Ok(rows)
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs cells in parallel (capped by `COTRAIN_THREADS`) and merges rows by
/// condition, in planning order, then seed.
pub fn run_cells(
    cells: &[Cell],
    protocol: Protocol,
    train_cfg: &TrainConfig,
    eval_episodes: usize,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let per_cell: Vec<Vec<ResultRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(c, protocol, train_cfg, eval_episodes))
            .collect::<Result<_, _>>()
    })?;
    let mut order: Vec<String> = Vec::new();
    for c in cells {
        for (label, _) in &c.evals {
            if !order.contains(label) {
                order.push(label.clone());
            }
        }
    }
    let mut rows: Vec<ResultRow> = per_cell.into_iter().flatten().collect();
    rows.sort_by_key(|r| (order.iter().position(|l| *l == r.condition), r.seed));
    Ok(rows)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    let cells = plan_cells(cfg)?;
    run_cells(&cells, cfg.protocol, &cfg.train, cfg.eval_episodes)
}
