//! Pinhole cameras, ray sampling and differentiable volume rendering.
//!
//! Compositing follows the usual quadrature: each sample gets
//! `alpha_i = 1 - exp(-sigma_i * delta_i)`, the transmittance before it is
//! `T_i = prod_{j<i} (1 - alpha_j)` (so `T_1 = 1`), and the pixel is
//! `sum_i T_i alpha_i c_i` plus the leftover transmittance times the
//! background color.

use std::path::Path;

use nalgebra::Rotation3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{alpha_from_density, GridBounds};
use crate::{Rgb, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center, horizontal
    /// field of view `fov_x` in radians.
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Self {
        Self {
            focal: 0.5 * width as f64 / (0.5 * fov_x).tan(),
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Camera with a camera-to-world rotation. The camera looks down its local
/// `-z` axis with `+x` right and `+y` up; pixel rows grow downward.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub rotation: Rotation3<f64>,
    pub center: Vec3,
    pub intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(rotation: Rotation3<f64>, center: Vec3, intrinsics: Intrinsics) -> Self {
        Self {
            rotation,
            center,
            intrinsics,
        }
    }

    /// Camera at `eye` looking at `target`, with `up` defining the roll.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, intrinsics: Intrinsics) -> Self {
        Self::new(look_at_rotation(&eye, &target, &up), eye, intrinsics)
    }

    /// Unnormalized camera-frame direction through the center of pixel `(u, v)`.
    pub fn pixel_direction_camera(&self, u: usize, v: usize) -> Vec3 {
        let k = &self.intrinsics;
        Vec3::new(
            (u as f64 + 0.5 - k.cx) / k.focal,
            -(v as f64 + 0.5 - k.cy) / k.focal,
            -1.0,
        )
    }

    pub fn pixel_direction(&self, u: usize, v: usize) -> Vec3 {
        (self.rotation * self.pixel_direction_camera(u, v)).normalize()
    }

    pub fn ray(&self, u: usize, v: usize) -> Ray {
        Ray {
            origin: self.center,
            direction: self.pixel_direction(u, v),
            target: None,
        }
    }

    /// Viewing direction (camera `-z` in world coordinates).
    pub fn forward(&self) -> Vec3 {
        self.rotation * Vec3::new(0.0, 0.0, -1.0)
    }
}

/// Camera-to-world rotation whose `-z` axis points from `eye` to `target`.
/// Falls back to the y axis as "up" when the view is parallel to `up`.
pub fn look_at_rotation(eye: &Vec3, target: &Vec3, up: &Vec3) -> Rotation3<f64> {
    let (right, true_up, forward) = look_at_frame(eye, target, up);
    let m = nalgebra::Matrix3::from_columns(&[right, true_up, -forward]);
    Rotation3::from_matrix_unchecked(m)
}

/// Orthonormal `(right, up, forward)` frame of a look-at camera.
pub fn look_at_frame(eye: &Vec3, target: &Vec3, up: &Vec3) -> (Vec3, Vec3, Vec3) {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(up);
    if right.norm() < 1e-9 {
        right = forward.cross(&Vec3::y());
    }
    let right = right.normalize();
    let true_up = right.cross(&forward);
    (right, true_up, forward)
}

/// A row-major RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> Rgb {
        self.pixels[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, c: Rgb) {
        self.pixels[v * self.width + u] = c;
    }

    /// 8-bit RGB: each channel is clamped to `[0, 1]`, scaled by 255 and
    /// rounded. No gamma is applied.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in 0..3 {
                out.push((p[c].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::ShapeMismatch {
                expected: width * height * 3,
                actual: bytes.len(),
            });
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| Rgb::new(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0)
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut enc = png::Encoder::new(
            std::io::BufWriter::new(file),
            self.width as u32,
            self.height as u32,
        );
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&self.to_rgb8())
            .map_err(|e| Error::Png(e.to_string()))?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let decoder = png::Decoder::new(std::io::BufReader::new(file));
        let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Png(format!(
                "expected 8-bit RGB, found {:?} {:?}",
                info.color_type, info.bit_depth
            )));
        }
        Self::from_rgb8(
            info.width as usize,
            info.height as usize,
            &buf[..info.buffer_size()],
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub target: Option<Rgb>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Rays through the centers of the given `(u, v)` pixels. When `observed`
/// is supplied its pixel colors become the ray targets.
pub fn generate_rays(
    camera: &Camera,
    pixels: &[(usize, usize)],
    observed: Option<&Image>,
) -> Result<Vec<Ray>> {
    let k = &camera.intrinsics;
    if let Some(img) = observed {
        if img.width != k.width || img.height != k.height {
            return Err(Error::ImageDimensions {
                expected_w: k.width,
                expected_h: k.height,
                actual_w: img.width,
                actual_h: img.height,
            });
        }
    }
    pixels
        .iter()
        .map(|&(u, v)| {
            if u >= k.width || v >= k.height {
                return Err(Error::PixelOutOfRange {
                    u,
                    v,
                    width: k.width,
                    height: k.height,
                });
            }
            let mut ray = camera.ray(u, v);
            ray.target = observed.map(|img| img.get(u, v));
            Ok(ray)
        })
        .collect()
}

/// Sample depths along a ray with the segment lengths between them.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn points<'a>(&'a self, ray: &'a Ray) -> impl Iterator<Item = Vec3> + 'a {
        self.depths.iter().map(move |t| ray.at(*t))
    }
}

/// Depths `near, near + step, ...` below `far`. With `jitter` each depth is
/// drawn uniformly inside its own `step`-wide stratum instead. The last
/// delta runs to `far`.
pub fn sample_along_ray<R: Rng + ?Sized>(
    near: f64,
    far: f64,
    step: f64,
    jitter: Option<&mut R>,
) -> Result<RaySamples> {
    if !(near >= 0.0 && near < far) || !(step > 0.0) {
        return Err(Error::InvalidInterval { near, far });
    }
    let count = (((far - near) / step).ceil() as usize).max(1);
    let mut depths: Vec<f64> = (0..count).map(|k| near + k as f64 * step).collect();
    if let Some(rng) = jitter {
        for d in depths.iter_mut() {
            let hi = (*d + step).min(far);
            *d += rng.random::<f64>() * (hi - *d);
        }
    }
    let deltas = depths_to_deltas(&depths, far);
    Ok(RaySamples { depths, deltas })
}

pub fn depths_to_deltas(depths: &[f64], far: f64) -> Vec<f64> {
    let mut deltas: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(last) = depths.last() {
        deltas.push(far - last);
    }
    deltas
}

/// Forward compositing result for one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedRay {
    pub rgb: Rgb,
    /// `T_i * alpha_i` per sample.
    pub weights: Vec<f64>,
    /// `T_i` per sample (`T_1 = 1`).
    pub transmittances: Vec<f64>,
    /// Transmittance left after the last sample; composited onto the background.
    pub residual: f64,
}

/// Composite per-sample densities and colors along a ray.
pub fn composite(sigmas: &[f64], colors: &[Rgb], deltas: &[f64], background: &Rgb) -> RenderedRay {
    debug_assert!(sigmas.len() == colors.len() && sigmas.len() == deltas.len());
    let k = sigmas.len();
    let mut weights = Vec::with_capacity(k);
    let mut transmittances = Vec::with_capacity(k);
    let mut t = 1.0;
    let mut rgb = Rgb::zeros();
    for i in 0..k {
        let a = alpha_from_density(sigmas[i], deltas[i]);
        let w = t * a;
        transmittances.push(t);
        weights.push(w);
        rgb += colors[i] * w;
        t *= 1.0 - a;
    }
    rgb += background * t;
    RenderedRay {
        rgb,
        weights,
        transmittances,
        residual: t,
    }
}

/// Gradients of `upstream · rgb` with respect to every sample's density
/// and color.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeGrad {
    pub sigma: Vec<f64>,
    pub color: Vec<Rgb>,
}

/// Reverse pass of [`composite`].
///
/// With `S_i = sum_{j>i} w_j c_j + T_{K+1} bg`, the density derivative is
/// `delta_i (T_{i+1} c_i - S_i)`, which avoids dividing by `1 - alpha_i`.
pub fn composite_backward(
    forward: &RenderedRay,
    colors: &[Rgb],
    deltas: &[f64],
    background: &Rgb,
    upstream: &Rgb,
) -> CompositeGrad {
    let k = colors.len();
    let mut sigma = vec![0.0; k];
    let mut color = vec![Rgb::zeros(); k];
    let mut suffix = upstream.dot(background) * forward.residual;
    for i in (0..k).rev() {
        let t_next = if i + 1 < k {
            forward.transmittances[i + 1]
        } else {
            forward.residual
        };
        let gc = upstream.dot(&colors[i]);
        sigma[i] = deltas[i] * (t_next * gc - suffix);
        color[i] = upstream * forward.weights[i];
        suffix += forward.weights[i] * gc;
    }
    CompositeGrad { sigma, color }
}

/// Render one ray through arbitrary density and color fields.
pub fn render_ray(
    ray: &Ray,
    samples: &RaySamples,
    density_fn: impl Fn(&Vec3) -> f64,
    color_fn: impl Fn(&Vec3) -> Rgb,
    background: &Rgb,
) -> RenderedRay {
    let (sigmas, colors) = evaluate_fields(ray, samples, density_fn, color_fn);
    composite(&sigmas, &colors, &samples.deltas, background)
}

/// Gradient of `upstream · render_ray(...)` with respect to each sample's
/// density and color.
pub fn render_ray_backward(
    ray: &Ray,
    samples: &RaySamples,
    density_fn: impl Fn(&Vec3) -> f64,
    color_fn: impl Fn(&Vec3) -> Rgb,
    background: &Rgb,
    upstream: &Rgb,
) -> CompositeGrad {
    let (sigmas, colors) = evaluate_fields(ray, samples, density_fn, color_fn);
    let fwd = composite(&sigmas, &colors, &samples.deltas, background);
    composite_backward(&fwd, &colors, &samples.deltas, background, upstream)
}

fn evaluate_fields(
    ray: &Ray,
    samples: &RaySamples,
    density_fn: impl Fn(&Vec3) -> f64,
    color_fn: impl Fn(&Vec3) -> Rgb,
) -> (Vec<f64>, Vec<Rgb>) {
    samples
        .points(ray)
        .map(|p| (density_fn(&p), color_fn(&p)))
        .unzip()
}

/// Shared sampling parameters for rendering a field inside its bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    /// Distance between samples along a ray.
    pub step: f64,
    /// Minimum depth; samples start at the later of this and the box entry.
    pub near: f64,
    pub background: Rgb,
    /// Ray marching stops once transmittance drops below this. Zero keeps
    /// every sample, which the gradient checks rely on.
    pub cutoff: f64,
}

impl RenderSettings {
    pub fn new(step: f64, background: Rgb) -> Self {
        Self {
            step,
            near: 0.0,
            background,
            cutoff: 0.0,
        }
    }

    /// Equidistant samples over the part of `ray` inside `bounds`, or
    /// `None` if the ray misses the box.
    pub fn samples_in(&self, bounds: &GridBounds, ray: &Ray) -> Option<RaySamples> {
        let (t0, t1) = bounds.ray_intersection(&ray.origin, &ray.direction)?;
        let near = t0.max(self.near);
        if near >= t1 {
            return None;
        }
        sample_along_ray::<rand_chacha::ChaCha8Rng>(near, t1, self.step, None).ok()
    }
}

/// Anything that can turn a ray into a color.
pub trait RayRenderer: Sync {
    fn render_color(&self, ray: &Ray, settings: &RenderSettings) -> Rgb;
}

/// Render every pixel of `camera`. Pixels are independent, so the result
/// does not depend on the thread count.
pub fn render_image<R: RayRenderer + ?Sized>(
    renderer: &R,
    camera: &Camera,
    settings: &RenderSettings,
) -> Image {
    use rayon::prelude::*;
    let k = camera.intrinsics;
    let pixels: Vec<Rgb> = (0..k.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..k.width).map(move |u| renderer.render_color(&camera.ray(u, v), settings))
        })
        .collect();
    Image {
        width: k.width,
        height: k.height,
        pixels,
    }
}

/// How a color residual is turned into a per-ray loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossNorm {
    /// Squared Euclidean norm (mean squared error per ray).
    #[default]
    Squared,
    /// Plain Euclidean norm.
    Euclidean,
}

impl LossNorm {
    pub fn value(self, residual: &Rgb) -> f64 {
        match self {
            LossNorm::Squared => residual.norm_squared(),
            LossNorm::Euclidean => residual.norm(),
        }
    }

    /// Derivative of [`LossNorm::value`] with respect to the rendered color,
    /// where `residual = rendered - target`.
    pub fn grad(self, residual: &Rgb) -> Rgb {
        match self {
            LossNorm::Squared => residual * 2.0,
            LossNorm::Euclidean => {
                let n = residual.norm();
                if n > 0.0 {
                    residual / n
                } else {
                    Rgb::zeros()
                }
            }
        }
    }
}

/// Mean per-ray photometric loss over a batch.
pub fn photometric_loss(rays: &[Ray], rendered: &[Rgb], norm: LossNorm) -> Result<f64> {
    if rays.len() != rendered.len() {
        return Err(Error::ShapeMismatch {
            expected: rays.len(),
            actual: rendered.len(),
        });
    }
    if rays.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (ray, c)) in rays.iter().zip(rendered).enumerate() {
        let target = ray.target.ok_or(Error::MissingTarget(i))?;
        total += norm.value(&(c - target));
    }
    Ok(total / rays.len() as f64)
}
