//! Episodes and experiments.
//!
//! An episode reconstructs one scene from a random first view followed by
//! `max_views - 1` policy selections, evaluating IoU and PSNR after every
//! acquisition. An experiment sweeps scenes × policies × inits.
//!
//! Seeds are split from `master_seed` so no stream depends on another:
//!
//! - scene: `derive(master, scene_index)`, prior noise `derive_label(scene, "prior")`
//! - init: `derive(derive_label(scene, "init"), init_index)`; the first view is
//!   `random_next(&[], delta, R, init)` and is shared by every policy
//! - policy step: `derive(derive_label(init, policy_label), step)`
//! - evaluation cameras: `derive(eval.eval_seed, scene_index)`
//!
//! Adding a policy or raising `n_inits` therefore leaves existing rows untouched.

mod config;
mod report;
mod scenes;

pub use config::{ExperimentConfig, UncertaintyConfig, UncertaintyOverrides};
pub use report::{
    read_records, read_records_file, summarize, write_csv, write_csv_file, EpisodeRecord, SummaryRow,
    RECORDS_HEADER, SUMMARY_HEADER,
};
pub use scenes::{GeneratorSpec, SceneSource};

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{build_scene, OccupancyField};
use crate::geometry::Vec3;
use crate::metrics::{EvalConfig, GroundTruthCache};
use crate::policies::{random_next, Policy, PolicyConfig, SelectionContext, SelectionTrace};
use crate::render::{Camera, Intrinsics};
use crate::seed::{derive, derive_label};
use crate::surrogate::{make_prior, PriorField, PriorSpec, SurrogateConfig, SurrogateReconstructor};
use crate::uncertainty::{view_uncertainty, UncertaintyParams, ViewSampling};

pub const CANDIDATES_HEADER: &str = "scene_id,policy,init_seed,step,candidate,x,y,z,u,u_sil,u_depth,fallback,selected";
pub const GRADIENT_HEADER: &str = "scene_id,policy,init_seed,step,iter,x,y,z,u,j";

pub fn scene_seed(master_seed: u64, scene_index: usize) -> u64 {
    derive(master_seed, scene_index as u64)
}

pub fn init_seed(scene_seed: u64, init_index: usize) -> u64 {
    derive(derive_label(scene_seed, "init"), init_index as u64)
}

pub fn step_seed(init_seed: u64, policy_label: &str, step: usize) -> u64 {
    derive(derive_label(init_seed, policy_label), step as u64)
}

/// Everything about a scene that episodes share: ground truth, the baked
/// prior and the evaluation renders.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub id: String,
    pub index: usize,
    pub seed: u64,
    pub gt: Arc<dyn OccupancyField>,
    pub prior: PriorField,
    pub cache: GroundTruthCache,
}

impl PreparedScene {
    pub fn new(
        id: String,
        index: usize,
        seed: u64,
        gt: Arc<dyn OccupancyField>,
        prior: &PriorSpec,
        surrogate: &SurrogateConfig,
        eval: &EvalConfig,
    ) -> Result<Self> {
        let mut p = make_prior(gt.clone(), prior, derive_label(seed, "prior"))?;
        if let Some(res) = surrogate.prior_bake_res {
            p = p.baked(res)?;
        }
        let eval = EvalConfig {
            eval_seed: derive(eval.eval_seed, index as u64),
            ..*eval
        };
        let cache = GroundTruthCache::new(gt.as_ref(), &eval)?;
        Ok(Self {
            id,
            index,
            seed,
            gt,
            prior: p,
            cache,
        })
    }

    pub fn load(config: &ExperimentConfig, index: usize) -> Result<Self> {
        let spec = config.scenes.load(index)?;
        let gt: Arc<dyn OccupancyField> = Arc::new(build_scene(&spec)?);
        Self::new(
            config.scenes.scene_id(index),
            index,
            scene_seed(config.master_seed, index),
            gt,
            &config.prior,
            &config.surrogate,
            &config.eval,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTraceRow {
    pub scene_id: String,
    pub policy: String,
    pub init_seed: u64,
    pub step: usize,
    pub candidate: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub u_sil: f64,
    pub u_depth: f64,
    pub fallback: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientTraceRow {
    pub scene_id: String,
    pub policy: String,
    pub init_seed: u64,
    pub step: usize,
    pub iter: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeOutput {
    pub records: Vec<EpisodeRecord>,
    pub candidates: Vec<CandidateTraceRow>,
    pub gradient: Vec<GradientTraceRow>,
}

/// Settings shared by every episode of an experiment.
#[derive(Debug, Clone)]
pub struct EpisodeSettings {
    pub params: UncertaintyParams,
    pub surrogate: SurrogateConfig,
    pub max_views: usize,
    pub timing: bool,
    pub trace: bool,
}

impl EpisodeSettings {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            params: config.uncertainty.resolve()?,
            surrogate: config.surrogate,
            max_views: config.max_views,
            timing: config.timing,
            trace: config.trace,
        })
    }
}

struct Episode<'a> {
    scene: &'a PreparedScene,
    policy: Policy,
    settings: &'a EpisodeSettings,
    init_seed: u64,
    recon: SurrogateReconstructor,
    history: Vec<Vec3>,
    out: EpisodeOutput,
}

impl Episode<'_> {
    fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fov_deg: self.settings.surrogate.fov_deg,
            ..Intrinsics::default()
        }
    }

    fn label(&self) -> String {
        self.policy.config().label().to_owned()
    }

    /// Chooses the view for `step` and its uncertainty under the current prediction.
    fn choose(&mut self, step: usize) -> Result<(Vec3, f64)> {
        let radius = self.settings.surrogate.camera_radius;
        let intrinsics = self.intrinsics();
        if step == 1 {
            let params = self.settings.params.at_selection(0)?;
            let position = random_next(&[], self.policy.config().delta, radius, self.init_seed).position;
            let cam = Camera::look_at_origin(position, intrinsics)?;
            let pred = self.recon.predicted_field();
            let seed = derive_label(self.init_seed, "u");
            let u = view_uncertainty(&pred, &cam, &params, &ViewSampling::default(), seed)?.value;
            return Ok((position, u));
        }
        let params = self.settings.params.at_selection(step - 2)?;
        let seed = step_seed(self.init_seed, self.policy.config().label(), step);
        let pred = self.recon.predicted_field();
        let ctx = SelectionContext {
            field: &pred,
            history: &self.history,
            params: &params,
            radius,
            intrinsics,
        };
        let sel = self.policy.select(&ctx, seed)?;
        let u = match sel.uncertainty {
            Some(u) => u,
            None => {
                let cam = Camera::look_at_origin(sel.position, intrinsics)?;
                let sampling = self.policy.config().sampling;
                view_uncertainty(&pred, &cam, &params, &sampling, derive_label(seed, "u"))?.value
            }
        };
        if self.settings.trace {
            let (scene_id, policy, init_seed) = (self.scene.id.clone(), self.label(), self.init_seed);
            match &sel.trace {
                SelectionTrace::None => {}
                SelectionTrace::Candidates(cands) => {
                    for (i, c) in cands.iter().enumerate() {
                        self.out.candidates.push(CandidateTraceRow {
                            scene_id: scene_id.clone(),
                            policy: policy.clone(),
                            init_seed,
                            step,
                            candidate: i,
                            x: c.position.x,
                            y: c.position.y,
                            z: c.position.z,
                            u: c.uncertainty.value,
                            u_sil: c.uncertainty.mean_u_sil,
                            u_depth: c.uncertainty.mean_u_depth,
                            fallback: c.fallback,
                            selected: c.position == sel.position,
                        });
                    }
                }
                SelectionTrace::Gradient(t) => {
                    for s in &t.steps {
                        self.out.gradient.push(GradientTraceRow {
                            scene_id: scene_id.clone(),
                            policy: policy.clone(),
                            init_seed,
                            step,
                            iter: s.iter,
                            x: s.theta.x,
                            y: s.theta.y,
                            z: s.theta.z,
                            u: s.u,
                            j: s.j,
                        });
                    }
                }
            }
        }
        Ok((sel.position, u))
    }

    fn step(&mut self, step: usize) -> Result<EpisodeRecord> {
        let start = Instant::now();
        let (position, u) = self.choose(step)?;
        let cam = Camera::look_at_origin(position, self.intrinsics())?;
        self.recon.acquire_view(&cam)?;
        self.history.push(position);
        let report = self.scene.cache.evaluate(&self.recon.predicted_field())?;
        Ok(EpisodeRecord {
            scene_id: self.scene.id.clone(),
            policy: self.label(),
            init_seed: self.init_seed,
            step,
            iou: Some(report.iou),
            psnr_mean: Some(report.psnr_mean),
            u_selected: Some(u),
            cam_x: Some(position.x),
            cam_y: Some(position.y),
            cam_z: Some(position.z),
            wall_ms: if self.settings.timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
            error: String::new(),
        })
    }
}

/// Runs one episode. A failing step ends the episode; it and every later
/// step are recorded as error rows.
pub fn run_episode(
    scene: &PreparedScene,
    policy: &PolicyConfig,
    settings: &EpisodeSettings,
    init_index: usize,
) -> EpisodeOutput {
    let init = init_seed(scene.seed, init_index);
    let label = policy.label().to_owned();
    let fail_from = |out: &mut EpisodeOutput, from: usize, e: &Error| {
        for step in from..=settings.max_views {
            out.records
                .push(EpisodeRecord::failed(&scene.id, &label, init, step, &e.to_string()));
        }
    };
    let setup = Policy::new(policy.clone()).and_then(|p| {
        let recon = SurrogateReconstructor::with_prior(scene.gt.clone(), scene.prior.clone(), settings.surrogate)?;
        Ok((p, recon))
    });
    let (policy, recon) = match setup {
        Ok(v) => v,
        Err(e) => {
            let mut out = EpisodeOutput::default();
            fail_from(&mut out, 1, &e);
            return out;
        }
    };
    let mut ep = Episode {
        scene,
        policy,
        settings,
        init_seed: init,
        recon,
        history: Vec::new(),
        out: EpisodeOutput::default(),
    };
    for step in 1..=settings.max_views {
        match ep.step(step) {
            Ok(r) => ep.out.records.push(r),
            Err(e) => {
                fail_from(&mut ep.out, step, &e);
                break;
            }
        }
    }
    ep.out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<EpisodeRecord>,
    pub summary: Vec<SummaryRow>,
    pub candidates: Vec<CandidateTraceRow>,
    pub gradient: Vec<GradientTraceRow>,
}

impl ExperimentOutput {
    /// Writes `records.csv`, `summary.csv` and, if any were collected, the
    /// trace files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv_file(&self.records, RECORDS_HEADER, &dir.join("records.csv"))?;
        write_csv_file(&self.summary, SUMMARY_HEADER, &dir.join("summary.csv"))?;
        if !self.candidates.is_empty() {
            write_csv_file(&self.candidates, CANDIDATES_HEADER, &dir.join("candidates.csv"))?;
        }
        if !self.gradient.is_empty() {
            write_csv_file(&self.gradient, GRADIENT_HEADER, &dir.join("gradient.csv"))?;
        }
        Ok(())
    }
}

/// Worker count from `NBV_THREADS`; `None` means the rayon default.
pub fn thread_count_from_env() -> Result<Option<usize>> {
    match std::env::var("NBV_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("NBV_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Runs the sweep on a pool sized by `NBV_THREADS`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with_threads(config, thread_count_from_env()?)
}

pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| sweep(config))
}

fn sweep(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let settings = EpisodeSettings::from_config(config)?;
    let scenes: Vec<std::result::Result<PreparedScene, String>> = (0..config.scenes.len())
        .into_par_iter()
        .map(|i| PreparedScene::load(config, i).map_err(|e| e.to_string()))
        .collect();

    let units: Vec<(usize, usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..config.policies.len()).flat_map(move |p| (0..config.n_inits).map(move |i| (s, p, i))))
        .collect();
    let outputs: Vec<EpisodeOutput> = units
        .par_iter()
        .map(|&(s, p, i)| {
            let policy = &config.policies[p];
            match &scenes[s] {
                Ok(scene) => run_episode(scene, policy, &settings, i),
                Err(e) => {
                    let init = init_seed(scene_seed(config.master_seed, s), i);
                    let id = config.scenes.scene_id(s);
                    EpisodeOutput {
                        records: (1..=config.max_views)
                            .map(|step| EpisodeRecord::failed(&id, policy.label(), init, step, e))
                            .collect(),
                        ..EpisodeOutput::default()
                    }
                }
            }
        })
        .collect();

    let mut out = ExperimentOutput::default();
    for o in outputs {
        out.records.extend(o.records);
        out.candidates.extend(o.candidates);
        out.gradient.extend(o.gradient);
    }
    out.summary = summarize(&out.records);
    Ok(out)
}
