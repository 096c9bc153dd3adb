use serde::{Deserialize, Serialize};

use super::coarse::CoarseModel;
use super::mlp::{encoding_dim, positional_encoding, MlpCache, MlpConfig, ShallowMlp};
use crate::error::Result;
use crate::grid::{alpha_from_density, density_activation, sigmoid, GridBounds, Stencil, VoxelGrid};
use crate::parallel::GradBuffer;
use crate::render::{composite, composite_backward, LossNorm, Ray, RayRenderer, RenderSettings, RenderedRay};
use crate::{Rgb, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineConfig {
    /// Lattice nodes per axis of the density and feature grids.
    pub resolution: usize,
    pub feature_channels: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub position_octaves: usize,
    pub direction_octaves: usize,
    pub mlp_seed: u64,
    /// Samples whose compositing weight falls below this skip the color
    /// network; their color is treated as black.
    pub color_skip_weight: f64,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            resolution: 160,
            feature_channels: 12,
            hidden_width: 64,
            hidden_layers: 2,
            position_octaves: 5,
            direction_octaves: 4,
            mlp_seed: 0,
            color_skip_weight: 1e-4,
        }
    }
}

impl FineConfig {
    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.feature_channels
                + encoding_dim(self.position_octaves)
                + encoding_dim(self.direction_octaves),
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            output_dim: 3,
        }
    }
}

/// High-resolution density grid plus a feature grid decoded to
/// view-dependent color by a small MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct FineModel {
    pub density: VoxelGrid,
    pub feature: VoxelGrid,
    pub mlp: ShallowMlp,
    pub shift_b: f64,
    pub config: FineConfig,
}

/// Gradient accumulators for one worker.
#[derive(Clone, Debug)]
pub struct FineGrads {
    pub density: GradBuffer,
    pub feature: GradBuffer,
    pub mlp: Vec<f64>,
}

impl FineGrads {
    pub fn new(model: &FineModel) -> Self {
        Self {
            density: GradBuffer::new(model.density.num_voxels(), 1),
            feature: GradBuffer::new(model.feature.num_voxels(), model.feature.channels),
            mlp: vec![0.0; model.mlp.num_params()],
        }
    }

    pub fn drain_into(&mut self, total: &mut FineGrads) {
        self.density.drain_into(&mut total.density);
        self.feature.drain_into(&mut total.feature);
        for (t, g) in total.mlp.iter_mut().zip(self.mlp.iter_mut()) {
            *t += *g;
            *g = 0.0;
        }
    }

    pub fn clear(&mut self) {
        self.density.clear();
        self.feature.clear();
        self.mlp.iter_mut().for_each(|g| *g = 0.0);
    }
}

struct Sample {
    stencil: Option<Stencil>,
    sigma: f64,
    delta: f64,
    cache: Option<MlpCache>,
}

impl FineModel {
    /// Upsample the coarse raw density, zero the features, seed the MLP.
    pub fn from_coarse(coarse: &CoarseModel, config: FineConfig) -> Result<Self> {
        let n = config.resolution;
        let density = coarse.density.resample([n, n, n])?;
        let feature = VoxelGrid::zeros(density.bounds, config.feature_channels);
        Ok(Self {
            density,
            feature,
            mlp: ShallowMlp::new(config.mlp_config(), config.mlp_seed),
            shift_b: coarse.shift_b,
            config,
        })
    }

    pub fn bounds(&self) -> &GridBounds {
        &self.density.bounds
    }

    pub fn sigma(&self, x: &Vec3) -> f64 {
        density_activation(self.density.query_scalar(x), self.shift_b)
    }

    /// Network input for a point and a unit view direction.
    pub fn encode(&self, x: &Vec3, d: &Vec3, stencil: Option<&Stencil>) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.mlp.config.input_dim);
        input.resize(self.feature.channels, 0.0);
        if let Some(st) = stencil {
            self.feature.gather(st, &mut input);
        }
        let b = self.bounds();
        let xn: [f64; 3] = std::array::from_fn(|a| 2.0 * (x[a] - b.min[a]) / (b.max[a] - b.min[a]) - 1.0);
        positional_encoding(&xn, self.config.position_octaves, &mut input);
        positional_encoding(&[d[0], d[1], d[2]], self.config.direction_octaves, &mut input);
        input
    }

    pub fn query(&self, x: &Vec3, d: &Vec3) -> (f64, Rgb) {
        let st = self.bounds().stencil(x);
        let input = self.encode(x, d, st.as_ref());
        let out = self.mlp.forward(&input).expect("encoder matches network width").output;
        (self.sigma(x), Rgb::new(out[0], out[1], out[2]))
    }

    fn trace(&self, ray: &Ray, settings: &RenderSettings) -> Option<(Vec<Sample>, Vec<Rgb>)> {
        let samples = settings.samples_in(self.bounds(), ray)?;
        let mut out = Vec::with_capacity(samples.len());
        let mut colors = Vec::with_capacity(samples.len());
        let mut transmittance = 1.0;
        for (t, delta) in samples.depths.iter().zip(&samples.deltas) {
            let x = ray.at(*t);
            let stencil = self.bounds().stencil(&x);
            let raw = stencil.as_ref().map_or(0.0, |st| self.density.gather_scalar(st));
            let sigma = density_activation(raw, self.shift_b);
            let weight = transmittance * alpha_from_density(sigma, *delta);
            let cache = if weight >= self.config.color_skip_weight {
                let input = self.encode(&x, &ray.direction, stencil.as_ref());
                Some(self.mlp.forward(&input).expect("encoder matches network width"))
            } else {
                None
            };
            colors.push(cache.as_ref().map_or(Rgb::zeros(), |c| Rgb::new(c.output[0], c.output[1], c.output[2])));
            out.push(Sample {
                stencil,
                sigma,
                delta: *delta,
                cache,
            });
            transmittance *= (-sigma * delta).exp();
            if transmittance < settings.cutoff {
                break;
            }
        }
        Some((out, colors))
    }

    pub fn render_ray(&self, ray: &Ray, settings: &RenderSettings) -> Option<RenderedRay> {
        let (samples, colors) = self.trace(ray, settings)?;
        let sigmas: Vec<f64> = samples.iter().map(|s| s.sigma).collect();
        let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
        Some(composite(&sigmas, &colors, &deltas, &settings.background))
    }

    /// Fine-model counterpart of [`CoarseModel::accumulate_ray_grad`].
    pub fn accumulate_ray_grad(
        &self,
        ray: &Ray,
        settings: &RenderSettings,
        norm: LossNorm,
        scale: f64,
        grads: &mut FineGrads,
    ) -> (Rgb, f64) {
        let target = ray.target.unwrap_or(settings.background);
        let Some((samples, colors)) = self.trace(ray, settings) else {
            let residual = settings.background - target;
            return (settings.background, norm.value(&residual));
        };
        let sigmas: Vec<f64> = samples.iter().map(|s| s.sigma).collect();
        let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
        let fwd = composite(&sigmas, &colors, &deltas, &settings.background);
        let residual = fwd.rgb - target;
        let upstream = norm.grad(&residual) * scale;
        let g = composite_backward(&fwd, &colors, &deltas, &settings.background, &upstream);
        let f = self.feature.channels;
        for (i, s) in samples.iter().enumerate() {
            let Some(st) = &s.stencil else { continue };
            let z = self.density.gather_scalar(st) + self.shift_b;
            grads.density.scatter_scalar(st, g.sigma[i] * sigmoid(z));
            if let Some(cache) = &s.cache {
                let up = [g.color[i][0], g.color[i][1], g.color[i][2]];
                let d_input = self
                    .mlp
                    .backward(cache, &up, &mut grads.mlp)
                    .expect("cache from the current parameters");
                grads.feature.scatter(st, &d_input[..f]);
            }
        }
        (fwd.rgb, norm.value(&residual))
    }
}

impl RayRenderer for FineModel {
    fn render_color(&self, ray: &Ray, settings: &RenderSettings) -> Rgb {
        self.render_ray(ray, settings)
            .map(|r| r.rgb)
            .unwrap_or(settings.background)
    }
}
