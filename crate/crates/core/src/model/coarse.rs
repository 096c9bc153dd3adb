use crate::grid::{density_activation, sigmoid, EntropyVolume, GridBounds, Stencil, VoxelGrid};
use crate::parallel::GradBuffer;
use crate::render::{composite, composite_backward, LossNorm, Ray, RayRenderer, RenderSettings, RenderedRay};
use crate::{Rgb, Vec3};

/// Explicit low-resolution field: raw density and pre-logistic color grids
/// plus the entropy volume used for planning.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseModel {
    pub density: VoxelGrid,
    pub color: VoxelGrid,
    pub entropy: EntropyVolume,
    pub shift_b: f64,
}

/// Per-sample quantities kept from the forward pass of one ray.
#[derive(Default)]
struct Trace {
    stencils: Vec<Option<Stencil>>,
    sigmas: Vec<f64>,
    colors: Vec<Rgb>,
    deltas: Vec<f64>,
}

impl CoarseModel {
    /// Zero raw density and zero raw color everywhere, entropy at 0.5.
    pub fn new(bounds: GridBounds, shift_b: f64) -> Self {
        Self {
            density: VoxelGrid::zeros(bounds, 1),
            color: VoxelGrid::zeros(bounds, 3),
            entropy: EntropyVolume::new(bounds),
            shift_b,
        }
    }

    pub fn bounds(&self) -> &GridBounds {
        &self.density.bounds
    }

    /// Segment length used to turn voxel densities into entropy alphas.
    pub fn delta_ref(&self) -> f64 {
        self.bounds().voxel_diagonal()
    }

    pub fn sigma(&self, x: &Vec3) -> f64 {
        density_activation(self.density.query_scalar(x), self.shift_b)
    }

    pub fn query(&self, x: &Vec3) -> (f64, Rgb) {
        let mut raw = [0.0; 3];
        self.color.query_into(x, &mut raw);
        (self.sigma(x), Rgb::new(sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2])))
    }

    /// Density and its spatial gradient. Outside the box the gradient is zero.
    pub fn sigma_with_grad(&self, x: &Vec3) -> (f64, Vec3) {
        match self.bounds().stencil(x) {
            Some(st) => {
                let raw = self.density.gather_scalar(&st);
                let z = raw + self.shift_b;
                let d_raw = self.density.position_grad(&st, &[1.0]);
                (density_activation(raw, self.shift_b), d_raw * sigmoid(z))
            }
            None => (density_activation(0.0, self.shift_b), Vec3::zeros()),
        }
    }

    fn trace(&self, ray: &Ray, settings: &RenderSettings) -> Option<Trace> {
        let samples = settings.samples_in(self.bounds(), ray)?;
        let mut tr = Trace::default();
        let mut transmittance = 1.0;
        for (t, delta) in samples.depths.iter().zip(&samples.deltas) {
            let x = ray.at(*t);
            let st = self.bounds().stencil(&x);
            let (raw_s, raw_c) = match &st {
                Some(st) => {
                    let mut c = [0.0; 3];
                    self.color.gather(st, &mut c);
                    (self.density.gather_scalar(st), c)
                }
                None => (0.0, [0.0; 3]),
            };
            let sigma = density_activation(raw_s, self.shift_b);
            tr.stencils.push(st);
            tr.sigmas.push(sigma);
            tr.colors.push(Rgb::new(sigmoid(raw_c[0]), sigmoid(raw_c[1]), sigmoid(raw_c[2])));
            tr.deltas.push(*delta);
            transmittance *= (-sigma * delta).exp();
            if transmittance < settings.cutoff {
                break;
            }
        }
        Some(tr)
    }

    pub fn render_ray(&self, ray: &Ray, settings: &RenderSettings) -> Option<RenderedRay> {
        let tr = self.trace(ray, settings)?;
        Some(composite(&tr.sigmas, &tr.colors, &tr.deltas, &settings.background))
    }

    /// Render `ray`, evaluate its loss against the ray's target and scatter
    /// `scale * d loss / d raw values` into the gradient buffers. Returns the
    /// rendered color and the unscaled loss.
    pub fn accumulate_ray_grad(
        &self,
        ray: &Ray,
        settings: &RenderSettings,
        norm: LossNorm,
        scale: f64,
        density_grad: &mut GradBuffer,
        color_grad: &mut GradBuffer,
    ) -> (Rgb, f64) {
        let target = ray.target.unwrap_or(settings.background);
        let Some(tr) = self.trace(ray, settings) else {
            let residual = settings.background - target;
            return (settings.background, norm.value(&residual));
        };
        let fwd = composite(&tr.sigmas, &tr.colors, &tr.deltas, &settings.background);
        let residual = fwd.rgb - target;
        let upstream = norm.grad(&residual) * scale;
        let g = composite_backward(&fwd, &tr.colors, &tr.deltas, &settings.background, &upstream);
        for i in 0..tr.sigmas.len() {
            let Some(st) = &tr.stencils[i] else { continue };
            let z = self.density.gather_scalar(st) + self.shift_b;
            let d_raw = g.sigma[i] * sigmoid(z);
            density_grad.scatter_scalar(st, d_raw);
            let c = &tr.colors[i];
            let dc = [
                g.color[i][0] * c[0] * (1.0 - c[0]),
                g.color[i][1] * c[1] * (1.0 - c[1]),
                g.color[i][2] * c[2] * (1.0 - c[2]),
            ];
            color_grad.scatter(st, &dc);
        }
        (fwd.rgb, norm.value(&residual))
    }
}

impl RayRenderer for CoarseModel {
    fn render_color(&self, ray: &Ray, settings: &RenderSettings) -> Rgb {
        self.render_ray(ray, settings)
            .map(|r| r.rgb)
            .unwrap_or(settings.background)
    }
}
