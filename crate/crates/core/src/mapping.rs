//! Online mapping: the growing image database, materialized ray pools and
//! the coarse and fine training loops.

use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdamState, CoarseModel, FineGrads, FineModel};
use crate::parallel::{chunk_ranges, GradBuffer, REDUCTION_CHUNKS};
use crate::render::{generate_rays, Camera, Image, LossNorm, Ray, RenderSettings};
use crate::Rgb;

/// Append-only list of posed observations.
#[derive(Clone, Debug, Default)]
pub struct ImageDatabase {
    entries: Vec<(Camera, Image)>,
}

impl ImageDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, camera: Camera, image: Image) -> Result<usize> {
        let k = &camera.intrinsics;
        if image.width != k.width || image.height != k.height {
            return Err(Error::ImageDimensions {
                expected_w: k.width,
                expected_h: k.height,
                actual_w: image.width,
                actual_h: image.height,
            });
        }
        if let Some((c0, _)) = self.entries.first() {
            let k0 = &c0.intrinsics;
            if k0.width != k.width || k0.height != k.height {
                return Err(Error::ImageDimensions {
                    expected_w: k0.width,
                    expected_h: k0.height,
                    actual_w: k.width,
                    actual_h: k.height,
                });
            }
        }
        self.entries.push((camera, image));
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Camera, Image)] {
        &self.entries
    }

    pub fn total_pixels(&self) -> usize {
        self.entries.iter().map(|(c, _)| c.intrinsics.num_pixels()).sum()
    }

    /// Ray with target for the `n`-th pixel counted across all images.
    fn pixel_ray(&self, mut n: usize) -> Ray {
        for (cam, img) in &self.entries {
            let count = cam.intrinsics.num_pixels();
            if n < count {
                let (u, v) = (n % img.width, n / img.width);
                let mut ray = cam.ray(u, v);
                ray.target = Some(img.get(u, v));
                return ray;
            }
            n -= count;
        }
        unreachable!("pixel index beyond database")
    }
}

/// Rays with targets materialized from the database, tagged with the
/// database size they were built from.
#[derive(Clone, Debug, Default)]
pub struct RayPool {
    pub rays: Vec<Ray>,
    pub db_size: usize,
}

impl RayPool {
    /// Every pixel of every image.
    pub fn all_pixels(db: &ImageDatabase) -> Result<Self> {
        let mut rays = Vec::with_capacity(db.total_pixels());
        for (cam, img) in db.entries() {
            let k = cam.intrinsics;
            let pixels: Vec<(usize, usize)> =
                (0..k.height).flat_map(|v| (0..k.width).map(move |u| (u, v))).collect();
            rays.extend(generate_rays(cam, &pixels, Some(img))?);
        }
        Ok(Self {
            rays,
            db_size: db.len(),
        })
    }

    /// `size` pixels drawn uniformly without replacement from the whole
    /// database, or every pixel when the database holds fewer.
    pub fn subsample<R: Rng>(db: &ImageDatabase, size: usize, rng: &mut R) -> Result<Self> {
        let total = db.total_pixels();
        if size == 0 || size >= total {
            return Self::all_pixels(db);
        }
        let mut picks = sample_indices(rng, total, size).into_vec();
        picks.sort_unstable();
        Ok(Self {
            rays: picks.into_iter().map(|n| db.pixel_ray(n)).collect(),
            db_size: db.len(),
        })
    }

    pub fn is_stale(&self, db: &ImageDatabase) -> bool {
        self.db_size != db.len()
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Batch indices: without replacement when the pool is large enough,
    /// with replacement otherwise.
    pub fn draw_batch<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.rays.is_empty() {
            return Err(Error::EmptyPool);
        }
        if batch <= self.rays.len() {
            Ok(sample_indices(rng, self.rays.len(), batch).into_vec())
        } else {
            Ok((0..batch).map(|_| rng.random_range(0..self.rays.len())).collect())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate of the color network (fine stage only).
    pub mlp_lr: f64,
    pub loss: LossNorm,
    /// Sample spacing along rays, in voxels of the trained grid.
    pub step_voxels: f64,
    /// Transmittance below which ray marching stops.
    pub cutoff: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8192,
            lr: 0.1,
            mlp_lr: 1e-3,
            loss: LossNorm::Squared,
            step_voxels: 0.5,
            cutoff: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn render_settings(&self, voxel: f64, background: Rgb) -> RenderSettings {
        RenderSettings {
            cutoff: self.cutoff,
            ..RenderSettings::new(self.step_voxels * voxel, background)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelemetryRow {
    pub stage: &'static str,
    pub iteration: usize,
    pub db_size: usize,
    pub loss: f64,
    pub synchronized_voxel_fraction: f64,
    pub wall_ms: f64,
}

pub fn write_telemetry<W: Write>(rows: &[TelemetryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Coarse-stage optimizer state: Adam moments, the current ray pool and
/// per-chunk gradient scratch.
pub struct CoarseTrainer {
    pub config: TrainConfig,
    pub settings: RenderSettings,
    pub iteration: usize,
    pub telemetry: Vec<TelemetryRow>,
    adam_density: AdamState,
    adam_color: AdamState,
    pool: RayPool,
    rng: ChaCha8Rng,
    chunks: Vec<(GradBuffer, GradBuffer)>,
    total: (GradBuffer, GradBuffer),
    started: Instant,
}

impl CoarseTrainer {
    pub fn new(model: &CoarseModel, config: TrainConfig, background: Rgb, seed: u64) -> Self {
        let n = model.density.num_voxels();
        let fresh = || (GradBuffer::new(n, 1), GradBuffer::new(n, 3));
        Self {
            config,
            settings: config.render_settings(model.bounds().min_voxel_size(), background),
            iteration: 0,
            telemetry: Vec::new(),
            adam_density: AdamState::new(n, config.lr),
            adam_color: AdamState::new(3 * n, config.lr),
            pool: RayPool::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            chunks: (0..REDUCTION_CHUNKS).map(|_| fresh()).collect(),
            total: fresh(),
            started: Instant::now(),
        }
    }

    pub fn pool(&self) -> &RayPool {
        &self.pool
    }

    /// Rebuild the pool if the database grew since it was built.
    pub fn refresh_pool(&mut self, db: &ImageDatabase) -> Result<()> {
        if self.pool.is_stale(db) {
            self.pool = RayPool::all_pixels(db)?;
        }
        Ok(())
    }

    /// One forward/backward/update pass over a random batch. Voxels whose
    /// density received a nonzero gradient are synchronized into the
    /// entropy volume afterwards.
    pub fn step(&mut self, model: &mut CoarseModel, db: &ImageDatabase) -> Result<f64> {
        self.refresh_pool(db)?;
        let batch = self.pool.draw_batch(self.config.batch_size, &mut self.rng)?;
        let scale = 1.0 / batch.len() as f64;
        let ranges = chunk_ranges(batch.len(), REDUCTION_CHUNKS);
        let (m, pool, settings, norm) = (&*model, &self.pool, &self.settings, self.config.loss);
        let partial: Vec<f64> = self
            .chunks
            .par_iter_mut()
            .zip(ranges)
            .map(|((gd, gc), range)| {
                let mut loss = 0.0;
                for &i in &batch[range] {
                    loss += m.accumulate_ray_grad(&pool.rays[i], settings, norm, scale, gd, gc).1;
                }
                loss
            })
            .collect();
        let loss = partial.iter().sum::<f64>() * scale;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "coarse",
                iteration: self.iteration,
            });
        }
        let (td, tc) = &mut self.total;
        for (gd, gc) in &mut self.chunks {
            gd.drain_into(td);
            gc.drain_into(tc);
        }
        self.adam_density.step(&mut model.density.values, &td.values)?;
        self.adam_color.step(&mut model.color.values, &tc.values)?;
        let updated = td.nonzero_voxels();
        let delta_ref = model.delta_ref();
        model.entropy.sync(&model.density, updated, model.shift_b, delta_ref);
        td.clear();
        tc.clear();
        self.iteration += 1;
        self.telemetry.push(TelemetryRow {
            stage: "coarse",
            iteration: self.iteration,
            db_size: db.len(),
            loss,
            synchronized_voxel_fraction: model.entropy.synchronized_fraction(),
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(loss)
    }

    /// `iterations` consecutive steps; returns their losses.
    pub fn run_epoch(
        &mut self,
        model: &mut CoarseModel,
        db: &ImageDatabase,
        iterations: usize,
    ) -> Result<Vec<f64>> {
        (0..iterations).map(|_| self.step(model, db)).collect()
    }
}

/// Fine-stage optimizer. The ray pool is redrawn every `resample_every`
/// iterations.
pub struct FineTrainer {
    pub config: TrainConfig,
    pub settings: RenderSettings,
    pub resample_every: usize,
    pub pool_size: usize,
    pub iteration: usize,
    pub telemetry: Vec<TelemetryRow>,
    adam_density: AdamState,
    adam_feature: AdamState,
    adam_mlp: AdamState,
    pool: RayPool,
    rng: ChaCha8Rng,
    chunks: Vec<FineGrads>,
    total: FineGrads,
    started: Instant,
}

impl FineTrainer {
    pub fn new(
        model: &FineModel,
        config: TrainConfig,
        background: Rgb,
        resample_every: usize,
        pool_size: usize,
        seed: u64,
    ) -> Self {
        Self {
            config,
            settings: config.render_settings(model.bounds().min_voxel_size(), background),
            resample_every: resample_every.max(1),
            pool_size,
            iteration: 0,
            telemetry: Vec::new(),
            adam_density: AdamState::new(model.density.values.len(), config.lr),
            adam_feature: AdamState::new(model.feature.values.len(), config.lr),
            adam_mlp: AdamState::new(model.mlp.num_params(), config.mlp_lr),
            pool: RayPool::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            chunks: (0..REDUCTION_CHUNKS).map(|_| FineGrads::new(model)).collect(),
            total: FineGrads::new(model),
            started: Instant::now(),
        }
    }

    pub fn step(&mut self, model: &mut FineModel, db: &ImageDatabase) -> Result<f64> {
        if self.iteration % self.resample_every == 0 || self.pool.is_stale(db) {
            self.pool = RayPool::subsample(db, self.pool_size, &mut self.rng)?;
        }
        let batch = self.pool.draw_batch(self.config.batch_size, &mut self.rng)?;
        let scale = 1.0 / batch.len() as f64;
        let ranges = chunk_ranges(batch.len(), REDUCTION_CHUNKS);
        let (m, pool, settings, norm) = (&*model, &self.pool, &self.settings, self.config.loss);
        let partial: Vec<f64> = self
            .chunks
            .par_iter_mut()
            .zip(ranges)
            .map(|(g, range)| {
                let mut loss = 0.0;
                for &i in &batch[range] {
                    loss += m.accumulate_ray_grad(&pool.rays[i], settings, norm, scale, g).1;
                }
                loss
            })
            .collect();
        let loss = partial.iter().sum::<f64>() * scale;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "fine",
                iteration: self.iteration,
            });
        }
        for g in &mut self.chunks {
            g.drain_into(&mut self.total);
        }
        self.adam_density.step(&mut model.density.values, &self.total.density.values)?;
        self.adam_feature.step(&mut model.feature.values, &self.total.feature.values)?;
        self.adam_mlp.step(model.mlp.params_mut(), &self.total.mlp)?;
        self.total.clear();
        self.iteration += 1;
        self.telemetry.push(TelemetryRow {
            stage: "fine",
            iteration: self.iteration,
            db_size: db.len(),
            loss,
            synchronized_voxel_fraction: f64::NAN,
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(loss)
    }

    pub fn run(&mut self, model: &mut FineModel, db: &ImageDatabase, iterations: usize) -> Result<Vec<f64>> {
        (0..iterations).map(|_| self.step(model, db)).collect()
    }
}
