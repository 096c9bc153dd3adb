//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use activermap_core::grid::VoxelGrid;
use activermap_core::render::Ray;
use activermap_core::{CoarseModel, GridBounds, Rgb, Vec3};
use rand::Rng;

/// Trilinear interpolation written out corner by corner from node
/// positions. Zero outside the box; points a hair outside a face (ray
/// entry points) are snapped onto it.
pub fn trilinear(grid: &VoxelGrid, x: &Vec3, channel: usize) -> f64 {
    let b = &grid.bounds;
    let h = b.voxel_size();
    let slack = 1e-9 * h.min();
    if (0..3).any(|a| x[a] < b.min[a] - slack || x[a] > b.max[a] + slack) {
        return 0.0;
    }
    let x = &Vec3::from_fn(|a, _| x[a].clamp(b.min[a], b.max[a]));
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let s = (x[a] - b.min[a]) / h[a];
        let i = (s.floor() as usize).min(b.resolution[a] - 2);
        base[a] = i;
        frac[a] = s - i as f64;
    }
    let mut total = 0.0;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let w: f64 = (0..3)
            .map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] })
            .product();
        let idx = b.linear_index(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
        total += w * grid.values[idx * grid.channels + channel];
    }
    total
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Coarse model on `[-1, 1]^3` with uniformly random raw values.
pub fn random_coarse<R: Rng>(rng: &mut R, nodes: usize, density: (f64, f64)) -> CoarseModel {
    let b = GridBounds::cube(Vec3::repeat(-1.0), Vec3::repeat(1.0), nodes).unwrap();
    let mut m = CoarseModel::new(b, -4.0);
    for v in &mut m.density.values {
        *v = rng.random_range(density.0..density.1);
    }
    for v in &mut m.color.values {
        *v = rng.random_range(-2.0..2.0);
    }
    m
}

/// Rays starting outside `bounds` and aimed at a random interior point.
pub fn random_rays<R: Rng>(rng: &mut R, bounds: &GridBounds, count: usize) -> Vec<Ray> {
    let c = bounds.center();
    let extent = (bounds.max - bounds.min).norm();
    (0..count)
        .map(|_| {
            let dir = loop {
                let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                if v.norm() > 0.1 && v.norm() <= 1.0 {
                    break v.normalize();
                }
            };
            let origin = c + dir * extent;
            let aim = Vec3::from_fn(|a, _| rng.random_range(bounds.min[a] * 0.8..bounds.max[a] * 0.8));
            Ray {
                origin,
                direction: (aim - origin).normalize(),
                target: Some(Rgb::from_fn(|_, _| rng.random())),
            }
        })
        .collect()
}

/// Central difference of `f` at `x` along one coordinate.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Nearest-neighbor distances by exhaustive search.
pub fn brute_nearest(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    from.iter()
        .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .collect()
}
