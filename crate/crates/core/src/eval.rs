//! Image metrics (PSNR, SSIM) and point-cloud geometry metrics.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{alpha_from_density, density_activation, VoxelGrid};
use crate::render::Image;
use crate::Vec3;

pub const PSNR_CAP: f64 = 99.0;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ImageDimensions {
            expected_w: a.width,
            expected_h: a.height,
            actual_w: b.width,
            actual_h: b.height,
        });
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let total: f64 = a.pixels.iter().zip(&b.pixels).map(|(p, q)| (p - q).norm_squared()).sum();
    Ok(total / (3 * a.pixels.len()) as f64)
}

/// Peak signal-to-noise ratio for unit dynamic range, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean structural similarity over all fully contained 11x11 Gaussian
/// windows, averaged over the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: a.width,
            height: a.height,
            window: SSIM_WINDOW,
        });
    }
    let g = gaussian_window();
    let (w, h) = (a.width, a.height);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = a.pixels.iter().map(|p| p[c]).collect();
        let y: Vec<f64> = b.pixels.iter().map(|p| p[c]).collect();
        let per_row: Vec<f64> = (0..oh)
            .into_par_iter()
            .map(|v0| {
                let mut row = 0.0;
                for u0 in 0..ow {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for (j, gj) in g.iter().enumerate() {
                        let base = (v0 + j) * w + u0;
                        for (i, gi) in g.iter().enumerate() {
                            let wgt = gi * gj;
                            let (p, q) = (x[base + i], y[base + i]);
                            mx += wgt * p;
                            my += wgt * q;
                            sxx += wgt * p * p;
                            syy += wgt * q * q;
                            sxy += wgt * p * q;
                        }
                    }
                    let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                    row += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                }
                row
            })
            .collect();
        total += per_row.iter().sum::<f64>() / (ow * oh) as f64;
    }
    Ok(total / 3.0)
}

/// Points where the termination probability over `delta_ref` crosses
/// `iso` along the edges of the density lattice refined `refine` times,
/// subsampled to exactly `count` (with repeats if there are fewer).
pub fn extract_model_points(
    density: &VoxelGrid,
    shift_b: f64,
    delta_ref: f64,
    iso: f64,
    refine: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec3>> {
    let alpha_of = |raw: f64| alpha_from_density(density_activation(raw, shift_b), delta_ref);
    if !density.values.iter().any(|r| alpha_of(*r) >= iso) {
        return Err(Error::NoSurface);
    }
    let fine = if refine > 1 {
        let r = density.bounds.resolution.map(|n| (n - 1) * refine + 1);
        density.resample(r)?
    } else {
        density.clone()
    };
    let b = fine.bounds;
    let alpha: Vec<f64> = fine.values.iter().map(|r| alpha_of(*r)).collect();
    let [nx, ny, nz] = b.resolution;
    let mut crossings = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = b.linear_index(i, j, k);
                let pa = b.node_position([i, j, k]);
                let next = [
                    (i + 1 < nx).then(|| [i + 1, j, k]),
                    (j + 1 < ny).then(|| [i, j + 1, k]),
                    (k + 1 < nz).then(|| [i, j, k + 1]),
                ];
                for n in next.into_iter().flatten() {
                    let bi = b.linear_index(n[0], n[1], n[2]);
                    let (fa, fb) = (alpha[a] - iso, alpha[bi] - iso);
                    if (fa < 0.0) != (fb < 0.0) {
                        let t = fa / (fa - fb);
                        crossings.push(pa + (b.node_position(n) - pa) * t);
                    }
                }
            }
        }
    }
    if crossings.is_empty() {
        return Err(Error::NoSurface);
    }
    Ok(subsample(&crossings, count, seed))
}

/// Exactly `count` points: a uniform subset, or uniform draws with
/// replacement when there are too few.
pub fn subsample(points: &[Vec3], count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if points.len() >= count {
        let mut idx = sample_indices(&mut rng, points.len(), count).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| points[i]).collect()
    } else {
        (0..count).map(|_| points[rng.random_range(0..points.len())]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub accuracy: f64,
    pub completeness: f64,
    pub f1: f64,
    pub chamfer: f64,
    pub threshold: f64,
}

/// Uniform hash grid for exact nearest-neighbour queries.
pub struct SpatialHash<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    max_ring: i64,
}

impl<'a> SpatialHash<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max();
        let cell = if extent > 1e-9 {
            extent / (points.len() as f64).cbrt()
        } else {
            1.0
        };
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key_of(p, cell)).or_default().push(i);
        }
        let max_ring = 4;
        Self {
            points,
            cell,
            cells,
            max_ring,
        }
    }

    fn key_of(p: &Vec3, cell: f64) -> [i64; 3] {
        [0, 1, 2].map(|a| (p[a] / cell).floor() as i64)
    }

    /// Distance to the closest stored point.
    pub fn nearest_distance(&self, q: &Vec3) -> f64 {
        let c = Self::key_of(q, self.cell);
        let mut best = f64::INFINITY;
        let mut r = 0i64;
        loop {
            // Visit the cells on the Chebyshev shell of radius r.
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in ids {
                                best = best.min((self.points[i] - q).norm());
                            }
                        }
                    }
                }
            }
            // Points in shells beyond r are at least r cells away.
            if best <= r as f64 * self.cell {
                return best;
            }
            r += 1;
            if r > self.max_ring {
                // Far from the cloud: scanning shells would cost more than
                // checking every point.
                return self.points.iter().map(|p| (p - q).norm()).fold(best, f64::min);
            }
        }
    }
}

fn nn_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let hash = SpatialHash::new(to);
    from.par_iter().map(|p| hash.nearest_distance(p)).collect()
}

/// Accuracy, completeness, F1 at distance `threshold` and the Chamfer
/// distance (mean of the two directed mean nearest-neighbour distances).
pub fn geometry_metrics(pred: &[Vec3], reference: &[Vec3], threshold: f64) -> Result<GeometryReport> {
    if pred.is_empty() || reference.is_empty() {
        return Err(Error::EmptyPointCloud);
    }
    Ok(report_from_distances(
        &nn_distances(pred, reference),
        &nn_distances(reference, pred),
        threshold,
    ))
}

/// Metrics from precomputed directed nearest-neighbour distances.
pub fn report_from_distances(pred_to_ref: &[f64], ref_to_pred: &[f64], threshold: f64) -> GeometryReport {
    let frac = |d: &[f64]| d.iter().filter(|x| **x < threshold).count() as f64 / d.len() as f64;
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let accuracy = frac(pred_to_ref);
    let completeness = frac(ref_to_pred);
    let f1 = if accuracy + completeness > 0.0 {
        2.0 * accuracy * completeness / (accuracy + completeness)
    } else {
        0.0
    };
    GeometryReport {
        accuracy,
        completeness,
        f1,
        chamfer: 0.5 * (mean(pred_to_ref) + mean(ref_to_pred)),
        threshold,
    }
}

pub fn write_ply<W: Write>(points: &[Vec3], mut out: W) -> Result<()> {
    writeln!(out, "ply\nformat ascii 1.0\nelement vertex {}", points.len())?;
    writeln!(out, "property float x\nproperty float y\nproperty float z\nend_header")?;
    for p in points {
        writeln!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
    }
    Ok(())
}

/// Rendering and geometry quality of one reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub psnr: f64,
    pub ssim: f64,
    pub accuracy: f64,
    pub completeness: f64,
    pub f1: f64,
    pub chamfer: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBounds;
    use crate::Rgb;

    fn noise_image(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image {
            width: w,
            height: h,
            pixels: (0..w * h).map(|_| Rgb::from_fn(|_, _| rng.random())).collect(),
        }
    }

    #[test]
    fn psnr_values() {
        let a = noise_image(0, 16, 16);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Image::filled(4, 4, Rgb::repeat(0.5));
        let c = Image::filled(4, 4, Rgb::repeat(0.6));
        assert!((psnr(&b, &c).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&b, &a).is_err());
    }

    #[test]
    fn ssim_identity_negative_and_constants() {
        let a = noise_image(1, 24, 20);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg = Image {
            pixels: a.pixels.iter().map(|p| Rgb::repeat(1.0) - p).collect(),
            ..a.clone()
        };
        assert!(ssim(&a, &neg).unwrap() < 0.2);
        // Constant images: only the luminance term differs from one.
        let (x, y) = (0.3, 0.7);
        let expect = (2.0 * x * y + SSIM_C1) / (x * x + y * y + SSIM_C1);
        let s = ssim(&Image::filled(12, 12, Rgb::repeat(x)), &Image::filled(12, 12, Rgb::repeat(y))).unwrap();
        assert!((s - expect).abs() < 1e-12);
        assert!(matches!(
            ssim(&Image::filled(10, 12, Rgb::zeros()), &Image::filled(10, 12, Rgb::zeros())),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn singleton_clouds() {
        let a = [Vec3::zeros()];
        let b = [Vec3::new(0.0, 0.003, 0.004)];
        let r = geometry_metrics(&a, &b, 0.01).unwrap();
        assert!((r.chamfer - 0.005).abs() < 1e-15);
        assert_eq!((r.accuracy, r.completeness, r.f1), (1.0, 1.0, 1.0));
        let r = geometry_metrics(&a, &b, 0.005).unwrap();
        assert_eq!((r.accuracy, r.completeness, r.f1), (0.0, 0.0, 0.0));
        assert!(geometry_metrics(&a, &[], 0.01).is_err());
    }

    #[test]
    fn sphere_grid_points_lie_on_the_sphere() {
        let b = GridBounds::cube(Vec3::repeat(-1.0), Vec3::repeat(1.0), 21).unwrap();
        // Raw density whose alpha crosses one half exactly on the sphere r = 0.6.
        let delta = b.voxel_diagonal();
        let sigma_iso = std::f64::consts::LN_2 / delta;
        let raw_iso = (sigma_iso.exp_m1()).ln() + 4.0;
        let g = VoxelGrid::from_fn(b, 1, |p, out| out[0] = raw_iso + 20.0 * (0.6 - p.norm()));
        let pts = extract_model_points(&g, -4.0, delta, 0.5, 2, 500, 0).unwrap();
        assert_eq!(pts.len(), 500);
        let h = b.voxel_size().x;
        assert!(pts.iter().all(|p| (p.norm() - 0.6).abs() < h));
        let empty = VoxelGrid::filled(b, 1, -10.0);
        assert!(matches!(
            extract_model_points(&empty, -4.0, delta, 0.5, 2, 10, 0),
            Err(Error::NoSurface)
        ));
    }

    #[test]
    fn ply_header() {
        let mut buf = Vec::new();
        write_ply(&[Vec3::new(1.0, 2.0, 3.0)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("element vertex 1\n"));
        assert!(s.ends_with("end_header\n1 2 3\n"));
    }
}
