//! The exploration loop: pick a goal view, plan or jump towards it,
//! observe, train the coarse model, decide whether to stop; then refine
//! the fine model on everything observed and evaluate.

use std::io::Write;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{extract_model_points, geometry_metrics, psnr, ssim, EvalReport};
use crate::grid::{EntropyVolume, VoxelGrid};
use crate::mapping::{CoarseTrainer, FineTrainer, ImageDatabase, TelemetryRow, TrainConfig};
use crate::model::{CoarseModel, FineConfig, FineModel};
use crate::planner::{viewpoint_entropy_value, AgentState, FrustumSpec, PlanWeights, Planner, PlannerConfig, SafeZone};
use crate::render::{render_image, Camera, Image, Intrinsics, RayRenderer, RenderSettings};
use crate::simulator::{legal_moves, AnalyticScene, BakedScene, MotionMode, ViewSpace};
use crate::{Rgb, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopCriteria {
    /// Mean absolute per-voxel change of the entropy volume over one epoch.
    pub entropy_change_threshold: f64,
    /// Best candidate entropy divided by the number of frustum points.
    pub info_gain_threshold: f64,
    pub max_views: usize,
    /// Hard cap on coarse training iterations.
    pub max_coarse_iterations: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            entropy_change_threshold: 5e-5,
            info_gain_threshold: 5e-5,
            max_views: 10,
            max_coarse_iterations: 5000,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_change_threshold > 0.0 && self.info_gain_threshold > 0.0) {
            return Err(Error::Config("stop thresholds must be positive".into()));
        }
        if self.max_views == 0 || self.max_coarse_iterations == 0 {
            return Err(Error::Config("view and iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EntropyConverged,
    InfoGainExhausted,
    ViewBudget,
    IterationBudget,
}

/// Decide whether exploration is over. `best_gain` is the per-point gain
/// of the best feasible candidate, or `None` when no candidate was scored.
/// Both thresholds are strict.
pub fn check_stop(
    previous: &EntropyVolume,
    current: &EntropyVolume,
    best_gain: Option<f64>,
    views: usize,
    coarse_iterations: usize,
    criteria: &StopCriteria,
) -> Result<Option<StopReason>> {
    let change = current.mean_abs_change(previous)?;
    Ok(if change < criteria.entropy_change_threshold {
        Some(StopReason::EntropyConverged)
    } else if best_gain.is_some_and(|g| g < criteria.info_gain_threshold) {
        Some(StopReason::InfoGainExhausted)
    } else if views >= criteria.max_views {
        Some(StopReason::ViewBudget)
    } else if coarse_iterations >= criteria.max_coarse_iterations {
        Some(StopReason::IterationBudget)
    } else {
        None
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NbvPolicy {
    /// Lowest collision-minus-entropy score.
    #[default]
    Entropy,
    Random,
    /// Furthest view sampling.
    Fvs,
}

/// Scores of a candidate set under the goal criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalScores {
    pub index: usize,
    pub scores: Vec<f64>,
    /// Summed termination entropy seen from each candidate.
    pub gains: Vec<f64>,
}

/// The candidate minimizing `collision * exp(sigma(position)) - info_gain *
/// entropy(view)`; the first one wins ties.
pub fn global_policy(
    model: &CoarseModel,
    candidates: &[AgentState],
    weights: &PlanWeights,
    frustum: &FrustumSpec,
) -> Result<GoalScores> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let gains = candidates
        .iter()
        .map(|c| viewpoint_entropy_value(&model.entropy, c, frustum))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = candidates
        .iter()
        .zip(&gains)
        .map(|(c, g)| weights.collision * model.sigma(&c.position()).exp() - weights.info_gain * g)
        .collect();
    Ok(GoalScores {
        index: argmin(&scores),
        scores,
        gains,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// The candidate whose nearest visited camera center is furthest away;
/// the first one wins ties. With nothing visited every candidate ties.
pub fn fvs_select(visited: &[AgentState], candidates: &[AgentState]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let visited: Vec<Vec3> = visited.iter().map(|s| s.position()).collect();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let p = c.position();
        let d = visited
            .iter()
            .map(|v| (v - p).norm())
            .fold(f64::INFINITY, f64::min);
        if d > best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrustumConfig {
    pub pixel_stride: usize,
    pub near: f64,
    pub far: f64,
    /// Depth spacing in coarse voxels.
    pub step_voxels: f64,
}

impl Default for FrustumConfig {
    fn default() -> Self {
        Self {
            pixel_stride: 10,
            near: 0.5,
            far: 8.0,
            step_voxels: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub test_views: usize,
    /// Seed of the held-out views and reference points; shared by all runs
    /// so that policies are scored on the same views.
    pub seed: u64,
    pub threshold: f64,
    pub points: usize,
    /// Termination probability (over one coarse voxel diagonal) that
    /// counts as surface.
    pub iso: f64,
    /// Lattice refinement before iso-crossings are collected.
    pub refine: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            test_views: 8,
            seed: 1_000_003,
            threshold: 0.01,
            points: 10_000,
            iso: 0.5,
            refine: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActiveConfig {
    pub policy: NbvPolicy,
    pub mode: MotionMode,
    /// Defaults to a hemisphere of radii [3, 4] around the scene center.
    pub view_space: Option<ViewSpace>,
    /// Goal candidates per step (continuous) or fixed viewpoints (discrete).
    pub candidates: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub fov_deg: f64,
    pub background: Rgb,
    pub coarse_resolution: usize,
    pub shift_b: f64,
    /// Oracle lattice refinement relative to the coarse grid.
    pub oracle_factor: usize,
    pub coarse_train: TrainConfig,
    pub epoch_iterations: usize,
    pub fine: FineConfig,
    pub fine_train: TrainConfig,
    pub fine_iterations: usize,
    pub fine_resample_every: usize,
    pub fine_pool_size: usize,
    pub planner: PlannerConfig,
    pub frustum: FrustumConfig,
    pub stop: StopCriteria,
    pub eval: EvalConfig,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            policy: NbvPolicy::Entropy,
            mode: MotionMode::DiscreteLocal,
            view_space: None,
            candidates: 40,
            image_width: 100,
            image_height: 100,
            fov_deg: 40.0,
            background: Rgb::repeat(1.0),
            coarse_resolution: 64,
            shift_b: -4.0,
            oracle_factor: 4,
            coarse_train: TrainConfig::default(),
            epoch_iterations: 50,
            fine: FineConfig::default(),
            fine_train: TrainConfig {
                batch_size: 4096,
                ..TrainConfig::default()
            },
            fine_iterations: 1000,
            fine_resample_every: 100,
            fine_pool_size: 65_536,
            planner: PlannerConfig::default(),
            frustum: FrustumConfig::default(),
            stop: StopCriteria::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ActiveConfig {
    /// Reduced profile for single-core machines: a run takes about half a
    /// minute instead of many. The accuracy threshold scales with the
    /// coarser voxels.
    pub fn compact() -> Self {
        let d = Self::default();
        Self {
            image_width: 48,
            image_height: 48,
            coarse_resolution: 32,
            coarse_train: TrainConfig {
                batch_size: 2048,
                ..d.coarse_train
            },
            fine: FineConfig {
                resolution: 48,
                ..d.fine
            },
            fine_train: TrainConfig {
                batch_size: 1024,
                ..d.fine_train
            },
            fine_iterations: 100,
            fine_pool_size: 16_384,
            eval: EvalConfig {
                points: 3000,
                threshold: 0.03,
                test_views: 4,
                ..d.eval
            },
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.mode == MotionMode::Continuous && self.policy != NbvPolicy::Entropy {
            return bad("random and furthest-view policies need a discrete motion mode");
        }
        if self.image_width < 16 || self.image_height < 16 {
            return bad("images must be at least 16x16");
        }
        if self.candidates == 0 || self.epoch_iterations == 0 {
            return bad("candidate count and epoch length must be positive");
        }
        if self.coarse_resolution < 2 || self.fine.resolution < 2 || self.oracle_factor == 0 {
            return bad("grid resolutions must be at least 2 nodes per axis");
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("field of view must lie in (0, 180) degrees");
        }
        if self.coarse_train.batch_size == 0 || self.fine_train.batch_size == 0 || self.fine_pool_size == 0 {
            return bad("batch and pool sizes must be positive");
        }
        if let Some(v) = &self.view_space {
            v.validate()?;
        }
        self.stop.validate()
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.image_width, self.image_height, self.fov_deg.to_radians())
    }

    pub fn view_space_for(&self, scene: &AnalyticScene) -> ViewSpace {
        self.view_space
            .unwrap_or_else(|| ViewSpace::hemisphere(scene.center(), 3.0, 4.0))
    }
}

/// What happened in one pass of the exploration loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub views: usize,
    /// Candidate (continuous) or viewpoint (discrete) index chosen as goal.
    pub goal: Option<usize>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub mean_loss: f64,
    pub final_loss: f64,
    pub coarse_iterations: usize,
    pub entropy_change: f64,
    pub best_gain_per_point: Option<f64>,
    pub synchronized_fraction: f64,
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub coarse: CoarseModel,
    pub fine: FineModel,
    /// Every state an observation was taken from, in order.
    pub visited: Vec<AgentState>,
    /// Planned waypoints of each continuous move.
    pub trajectories: Vec<Vec<AgentState>>,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub telemetry: Vec<TelemetryRow>,
    pub coarse_report: EvalReport,
    pub report: EvalReport,
    pub test_views: Vec<TestView>,
    pub model_points: Vec<Vec3>,
    pub reference_points: Vec<Vec3>,
}

#[derive(Clone, Debug)]
pub struct TestView {
    pub state: AgentState,
    pub camera: Camera,
    pub truth: Image,
    pub rendered: Image,
}

/// The exploration loop as an explicit state machine, so callers can
/// inspect or seed the model between steps.
pub struct ActiveRun<'a> {
    pub config: ActiveConfig,
    scene: &'a AnalyticScene,
    oracle: BakedScene,
    view_space: ViewSpace,
    intrinsics: Intrinsics,
    model: CoarseModel,
    trainer: CoarseTrainer,
    db: ImageDatabase,
    planner: Planner,
    /// Fixed viewpoints in discrete modes, otherwise resampled goal candidates.
    viewpoints: Vec<AgentState>,
    visited_flags: Vec<bool>,
    visited: Vec<AgentState>,
    trajectories: Vec<Vec<AgentState>>,
    epochs: Vec<EpochRecord>,
    stop: Option<StopReason>,
    seed: u64,
    policy_rng: ChaCha8Rng,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

impl<'a> ActiveRun<'a> {
    /// Bake the oracle, pick the start state and take the first observation.
    pub fn new(scene: &'a AnalyticScene, config: ActiveConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let view_space = config.view_space_for(scene);
        view_space.validate()?;
        let bounds = scene.grid_bounds(config.coarse_resolution)?;
        let model = CoarseModel::new(bounds, config.shift_b);
        let oracle = scene.bake(config.coarse_resolution, config.oracle_factor)?;
        let intrinsics = config.intrinsics();
        let frustum = FrustumSpec {
            intrinsics,
            pixel_stride: config.frustum.pixel_stride,
            near: config.frustum.near,
            far: config.frustum.far,
            step: config.frustum.step_voxels * bounds.min_voxel_size(),
        };
        let planner = Planner {
            config: config.planner,
            zone: SafeZone::default(),
            frustum,
            control_bounds: Some(view_space.control_bounds()),
        };
        let trainer = CoarseTrainer::new(&model, config.coarse_train, config.background, derive_seed(seed, 1));
        let viewpoints = view_space.sample_viewpoints(config.candidates, derive_seed(seed, 2));
        let start = viewpoints[0];
        let mut run = Self {
            config,
            scene,
            oracle,
            view_space,
            intrinsics,
            model,
            trainer,
            db: ImageDatabase::new(),
            planner,
            visited_flags: vec![false; viewpoints.len()],
            viewpoints,
            visited: Vec::new(),
            trajectories: Vec::new(),
            epochs: Vec::new(),
            stop: None,
            seed,
            policy_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 3)),
        };
        if config.mode.is_discrete() {
            run.visited_flags[0] = true;
        }
        run.observe(start)?;
        Ok(run)
    }

    pub fn model(&self) -> &CoarseModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut CoarseModel {
        &mut self.model
    }

    pub fn database(&self) -> &ImageDatabase {
        &self.db
    }

    pub fn visited(&self) -> &[AgentState] {
        &self.visited
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn current(&self) -> AgentState {
        *self.visited.last().expect("the first observation is taken on construction")
    }

    fn observe(&mut self, state: AgentState) -> Result<()> {
        let camera = state.camera(self.intrinsics);
        let image = self.oracle.oracle_render(&camera, self.config.background);
        self.db.insert(camera, image)?;
        self.visited.push(state);
        Ok(())
    }

    /// Choose a goal and move. Returns the goal index and the best
    /// per-point gain among the feasible goals.
    fn act(&mut self) -> Result<(usize, f64)> {
        let current = self.current();
        let candidates: Vec<usize> = if self.config.mode.is_discrete() {
            legal_moves(self.config.mode, &current, &self.viewpoints, &self.visited_flags)?
        } else {
            let fresh = self.view_space.sample_goal_candidates(
                self.config.candidates,
                derive_seed(self.seed, 100 + self.epochs.len() as u64),
            );
            self.viewpoints = fresh;
            (0..self.viewpoints.len()).collect()
        };
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let states: Vec<AgentState> = candidates.iter().map(|i| self.viewpoints[*i]).collect();
        let scored = global_policy(&self.model, &states, &self.planner.config.weights, &self.planner.frustum)?;
        let per_point = self.planner.frustum.num_points() as f64;
        let best_gain = scored.gains.iter().copied().fold(0.0, f64::max) / per_point;
        let pick = match self.config.policy {
            NbvPolicy::Entropy => scored.index,
            NbvPolicy::Random => self.policy_rng.random_range(0..states.len()),
            NbvPolicy::Fvs => fvs_select(&self.visited, &states)?,
        };
        let goal = candidates[pick];
        let next = if self.config.mode.is_discrete() {
            self.visited_flags[goal] = true;
            self.viewpoints[goal]
        } else {
            let (traj, history) = self.planner.optimize(&self.model, current, states[pick], None)?;
            if let (Some(first), Some(last)) = (history.first(), history.last()) {
                debug!("plan objective {:.4} -> {:.4}", first.total, last.total);
            }
            let next = self.planner.select_next_state(&traj, &current)?;
            self.trajectories.push(traj.waypoints());
            next
        };
        self.observe(next)?;
        Ok((goal, best_gain))
    }

    /// One pass of the loop: act (while the view budget allows), train one
    /// epoch, check the stop criteria.
    pub fn step(&mut self) -> Result<Option<StopReason>> {
        if let Some(r) = self.stop {
            return Ok(Some(r));
        }
        let (goal, best_gain) = if self.db.len() < self.config.stop.max_views {
            let (g, b) = self.act()?;
            (Some(g), Some(b))
        } else {
            (None, None)
        };
        let before = self.model.entropy.clone();
        let losses = self
            .trainer
            .run_epoch(&mut self.model, &self.db, self.config.epoch_iterations)?;
        let change = self.model.entropy.mean_abs_change(&before)?;
        let stop = check_stop(
            &before,
            &self.model.entropy,
            best_gain,
            self.db.len(),
            self.trainer.iteration,
            &self.config.stop,
        )?;
        let p = self.current().position();
        let record = EpochRecord {
            epoch: self.epochs.len(),
            views: self.db.len(),
            goal,
            x: p.x,
            y: p.y,
            z: p.z,
            mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            final_loss: *losses.last().unwrap_or(&f64::NAN),
            coarse_iterations: self.trainer.iteration,
            entropy_change: change,
            best_gain_per_point: best_gain,
            synchronized_fraction: self.model.entropy.synchronized_fraction(),
        };
        info!(
            "epoch {} views {} loss {:.5} entropy change {:.2e} gain {:?}",
            record.epoch, record.views, record.final_loss, change, best_gain
        );
        self.epochs.push(record);
        self.stop = stop;
        Ok(stop)
    }

    /// Step until a stop criterion fires.
    pub fn explore(&mut self) -> Result<StopReason> {
        loop {
            if let Some(r) = self.step()? {
                info!("exploration stopped: {r:?}");
                return Ok(r);
            }
        }
    }

    /// Fine stage and evaluation. Explores first if that has not finished.
    pub fn finish(mut self) -> Result<RunOutput> {
        let stop_reason = match self.stop {
            Some(r) => r,
            None => self.explore()?,
        };
        let cfg = self.config;
        let mut fine = FineModel::from_coarse(&self.model, cfg.fine)?;
        let mut trainer = FineTrainer::new(
            &fine,
            cfg.fine_train,
            cfg.background,
            cfg.fine_resample_every,
            cfg.fine_pool_size,
            derive_seed(self.seed, 4),
        );
        trainer.run(&mut fine, &self.db, cfg.fine_iterations)?;
        info!("fine stage done after {} iterations", trainer.iteration);

        let eval = Evaluator::new(self.scene, &self.oracle, &cfg, self.model.delta_ref())?;
        let coarse_settings = cfg.coarse_train.render_settings(self.model.bounds().min_voxel_size(), cfg.background);
        let (coarse_report, _, _) = eval.evaluate(&self.model, &coarse_settings, &self.model.density, self.model.shift_b)?;
        let fine_settings = cfg.fine_train.render_settings(fine.bounds().min_voxel_size(), cfg.background);
        let (report, test_views, model_points) = eval.evaluate(&fine, &fine_settings, &fine.density, fine.shift_b)?;
        info!("final psnr {:.2} ssim {:.3} f1 {:.3}", report.psnr, report.ssim, report.f1);

        let mut telemetry = self.trainer.telemetry;
        telemetry.extend(trainer.telemetry);
        Ok(RunOutput {
            coarse: self.model,
            fine,
            visited: self.visited,
            trajectories: self.trajectories,
            epochs: self.epochs,
            stop_reason,
            telemetry,
            coarse_report,
            report,
            test_views,
            model_points,
            reference_points: eval.reference,
        })
    }
}

/// Held-out views and reference surface points for one scene.
struct Evaluator {
    states: Vec<AgentState>,
    cameras: Vec<Camera>,
    truth: Vec<Image>,
    reference: Vec<Vec3>,
    delta_ref: f64,
    config: EvalConfig,
}

impl Evaluator {
    fn new(scene: &AnalyticScene, oracle: &BakedScene, cfg: &ActiveConfig, delta_ref: f64) -> Result<Self> {
        let space = cfg.view_space_for(scene);
        let intrinsics = cfg.intrinsics();
        let states = space.sample_viewpoints(cfg.eval.test_views, cfg.eval.seed);
        let cameras: Vec<Camera> = states.iter().map(|s| s.camera(intrinsics)).collect();
        let truth = cameras
            .iter()
            .map(|c| oracle.oracle_render(c, cfg.background))
            .collect();
        let reference = scene.surface_points(cfg.eval.points, delta_ref, cfg.eval.seed)?;
        Ok(Self {
            states,
            cameras,
            truth,
            reference,
            delta_ref,
            config: cfg.eval,
        })
    }

    fn evaluate<R: RayRenderer>(
        &self,
        model: &R,
        settings: &RenderSettings,
        density: &VoxelGrid,
        shift_b: f64,
    ) -> Result<(EvalReport, Vec<TestView>, Vec<Vec3>)> {
        let mut views = Vec::with_capacity(self.cameras.len());
        let (mut p, mut s) = (0.0, 0.0);
        for ((state, camera), truth) in self.states.iter().zip(&self.cameras).zip(&self.truth) {
            let rendered = render_image(model, camera, settings);
            p += psnr(&rendered, truth)?;
            s += ssim(&rendered, truth)?;
            views.push(TestView {
                state: *state,
                camera: camera.clone(),
                truth: truth.clone(),
                rendered,
            });
        }
        let n = self.cameras.len().max(1) as f64;
        let c = &self.config;
        let points = match extract_model_points(density, shift_b, self.delta_ref, c.iso, c.refine, c.points, c.seed) {
            Ok(points) => points,
            Err(Error::NoSurface) => Vec::new(),
            Err(e) => return Err(e),
        };
        let geometry = if points.is_empty() {
            None
        } else {
            Some(geometry_metrics(&points, &self.reference, c.threshold)?)
        };
        let report = EvalReport {
            psnr: p / n,
            ssim: s / n,
            accuracy: geometry.map_or(0.0, |g| g.accuracy),
            completeness: geometry.map_or(0.0, |g| g.completeness),
            f1: geometry.map_or(0.0, |g| g.f1),
            chamfer: geometry.map_or(f64::INFINITY, |g| g.chamfer),
        };
        Ok((report, views, points))
    }
}

/// Explore, refine and evaluate in one call.
pub fn run_active_reconstruction(scene: &AnalyticScene, config: ActiveConfig, seed: u64) -> Result<RunOutput> {
    ActiveRun::new(scene, config, seed)?.finish()
}

pub fn write_epochs_csv<W: Write>(epochs: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}
