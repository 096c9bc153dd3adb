//! Dense voxel lattices with trilinear queries and their gradients.
//!
//! Values live on lattice nodes: node `i` along an axis sits at
//! `min + i * (max - min) / (resolution - 1)`, so the bounding box corners
//! are themselves nodes. Storage is one flat array, channel-interleaved and
//! ordered `(z, y, x)` with `x` fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

/// Tolerance, in voxels, for points on the faces of a grid box.
pub const FACE_SLACK: f64 = 1e-9;

/// Spatial extent and node count of a lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridBounds {
    pub min: Vec3,
    pub max: Vec3,
    pub resolution: [usize; 3],
}

/// The eight corner indices and weights of one trilinear lookup.
///
/// Corner `k` uses bit 0 for the x offset, bit 1 for y and bit 2 for z.
/// `weight_grads[k]` holds the derivative of `weights[k]` with respect to
/// the world-space query point.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub voxels: [usize; 8],
    pub weights: [f64; 8],
    pub weight_grads: [[f64; 3]; 8],
}

impl GridBounds {
    pub fn new(min: Vec3, max: Vec3, resolution: [usize; 3]) -> Result<Self> {
        for axis in 0..3 {
            if !(min[axis] < max[axis]) {
                return Err(Error::InvalidBounds(format!(
                    "min {:?} is not below max {:?} on axis {axis}",
                    min.as_slice(),
                    max.as_slice()
                )));
            }
            if resolution[axis] < 2 {
                return Err(Error::InvalidBounds(format!(
                    "resolution {:?} needs at least 2 nodes per axis",
                    resolution
                )));
            }
        }
        Ok(Self {
            min,
            max,
            resolution,
        })
    }

    /// Cube bounds with the same node count on every axis.
    pub fn cube(min: Vec3, max: Vec3, nodes: usize) -> Result<Self> {
        Self::new(min, max, [nodes; 3])
    }

    /// Same extent, different node count.
    pub fn with_resolution(&self, resolution: [usize; 3]) -> Result<Self> {
        Self::new(self.min, self.max, resolution)
    }

    pub fn num_voxels(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Node spacing per axis.
    pub fn voxel_size(&self) -> Vec3 {
        let extent = self.max - self.min;
        Vec3::new(
            extent.x / (self.resolution[0] - 1) as f64,
            extent.y / (self.resolution[1] - 1) as f64,
            extent.z / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn voxel_diagonal(&self) -> f64 {
        self.voxel_size().norm()
    }

    /// Smallest node spacing over the three axes.
    pub fn min_voxel_size(&self) -> f64 {
        self.voxel_size().min()
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution[1] + j) * self.resolution[0] + i
    }

    /// Inverse of [`GridBounds::linear_index`].
    pub fn node_coords(&self, index: usize) -> [usize; 3] {
        let nx = self.resolution[0];
        let ny = self.resolution[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn node_position(&self, node: [usize; 3]) -> Vec3 {
        let h = self.voxel_size();
        Vec3::new(
            self.min.x + node[0] as f64 * h.x,
            self.min.y + node[1] as f64 * h.y,
            self.min.z + node[2] as f64 * h.z,
        )
    }

    /// Entry and exit ray depths through the box (slab test), clamped to
    /// `t >= 0`. `None` if the ray misses.
    pub fn ray_intersection(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let mut ta = (self.min[a] - origin[a]) * inv;
            let mut tb = (self.max[a] - origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    /// Trilinear stencil for `x`, or `None` outside the box. Points within
    /// `FACE_SLACK` voxels of a face count as on it.
    #[inline]
    pub fn stencil(&self, x: &Vec3) -> Option<Stencil> {
        let h = self.voxel_size();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = (x[a] - self.min[a]) / h[a];
            let last = (self.resolution[a] - 1) as f64;
            if !(u >= -FACE_SLACK && u <= last + FACE_SLACK) {
                return None;
            }
            // Ray entry points can land a few ulps outside a face.
            let u = u.clamp(0.0, last);
            let b = (u.floor() as usize).min(self.resolution[a] - 2);
            base[a] = b;
            frac[a] = u - b as f64;
        }
        let mut voxels = [0usize; 8];
        let mut weights = [0.0; 8];
        let mut weight_grads = [[0.0; 3]; 8];
        for k in 0..8 {
            let off = [k & 1, (k >> 1) & 1, (k >> 2) & 1];
            voxels[k] = self.linear_index(base[0] + off[0], base[1] + off[1], base[2] + off[2]);
            let f: [f64; 3] =
                std::array::from_fn(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] });
            let df: [f64; 3] =
                std::array::from_fn(|a| if off[a] == 1 { 1.0 / h[a] } else { -1.0 / h[a] });
            weights[k] = f[0] * f[1] * f[2];
            weight_grads[k] = [df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]];
        }
        Some(Stencil {
            voxels,
            weights,
            weight_grads,
        })
    }
}

/// A dense multi-channel lattice. Points outside the bounds read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub bounds: GridBounds,
    pub channels: usize,
    pub values: Vec<f64>,
}

/// Gradient of one trilinear lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct TrilinearGrad {
    /// Linear voxel index of each corner, in stencil order.
    pub voxels: [usize; 8],
    /// `channels` partial derivatives per corner, corner-major.
    pub value_grads: Vec<f64>,
    /// Derivative with respect to the query position.
    pub position_grad: Vec3,
}

impl VoxelGrid {
    pub fn filled(bounds: GridBounds, channels: usize, value: f64) -> Self {
        assert!(channels > 0, "a grid needs at least one channel");
        Self {
            bounds,
            channels,
            values: vec![value; bounds.num_voxels() * channels],
        }
    }

    pub fn zeros(bounds: GridBounds, channels: usize) -> Self {
        Self::filled(bounds, channels, 0.0)
    }

    /// Fill every node from a function of its world position.
    pub fn from_fn(
        bounds: GridBounds,
        channels: usize,
        mut f: impl FnMut(&Vec3, &mut [f64]),
    ) -> Self {
        let mut grid = Self::zeros(bounds, channels);
        for idx in 0..bounds.num_voxels() {
            let p = bounds.node_position(bounds.node_coords(idx));
            f(&p, &mut grid.values[idx * channels..(idx + 1) * channels]);
        }
        grid
    }

    pub fn from_values(bounds: GridBounds, channels: usize, values: Vec<f64>) -> Result<Self> {
        let expected = bounds.num_voxels() * channels;
        if values.len() != expected || channels == 0 {
            return Err(Error::ShapeMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            bounds,
            channels,
            values,
        })
    }

    pub fn num_voxels(&self) -> usize {
        self.bounds.num_voxels()
    }

    pub fn voxel(&self, index: usize) -> &[f64] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn voxel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.values[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn gather(&self, stencil: &Stencil, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..8 {
            let w = stencil.weights[k];
            let base = stencil.voxels[k] * self.channels;
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.values[base + c];
            }
        }
    }

    #[inline]
    pub fn gather_scalar(&self, stencil: &Stencil) -> f64 {
        debug_assert_eq!(self.channels, 1);
        (0..8)
            .map(|k| stencil.weights[k] * self.values[stencil.voxels[k]])
            .sum()
    }

    /// Interpolated value at `x`; zero in every channel outside the bounds.
    pub fn query_into(&self, x: &Vec3, out: &mut [f64]) {
        match self.bounds.stencil(x) {
            Some(st) => self.gather(&st, out),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    pub fn query(&self, x: &Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.query_into(x, &mut out);
        out
    }

    pub fn query_scalar(&self, x: &Vec3) -> f64 {
        self.bounds
            .stencil(x)
            .map_or(0.0, |st| self.gather_scalar(&st))
    }

    /// Accumulate `upstream · ∂value/∂voxels` into a dense gradient buffer
    /// laid out like `values`.
    #[inline]
    pub fn scatter(&self, stencil: &Stencil, upstream: &[f64], grad: &mut [f64]) {
        for k in 0..8 {
            let w = stencil.weights[k];
            let base = stencil.voxels[k] * self.channels;
            for (c, u) in upstream.iter().enumerate() {
                grad[base + c] += w * u;
            }
        }
    }

    /// `upstream · ∂value/∂x` for a stencil.
    #[inline]
    pub fn position_grad(&self, stencil: &Stencil, upstream: &[f64]) -> Vec3 {
        let mut g = Vec3::zeros();
        for k in 0..8 {
            let base = stencil.voxels[k] * self.channels;
            let s: f64 = upstream
                .iter()
                .enumerate()
                .map(|(c, u)| u * self.values[base + c])
                .sum();
            let dw = stencil.weight_grads[k];
            g += Vec3::new(dw[0], dw[1], dw[2]) * s;
        }
        g
    }

    /// Sparse gradient of `upstream · query(x)` with respect to the eight
    /// corner voxels and to `x`. Zero (and corners all 0) outside the box.
    pub fn query_backward(&self, x: &Vec3, upstream: &[f64]) -> TrilinearGrad {
        assert_eq!(upstream.len(), self.channels);
        match self.bounds.stencil(x) {
            None => TrilinearGrad {
                voxels: [0; 8],
                value_grads: vec![0.0; 8 * self.channels],
                position_grad: Vec3::zeros(),
            },
            Some(st) => {
                let mut value_grads = Vec::with_capacity(8 * self.channels);
                for k in 0..8 {
                    value_grads.extend(upstream.iter().map(|u| u * st.weights[k]));
                }
                TrilinearGrad {
                    voxels: st.voxels,
                    value_grads,
                    position_grad: self.position_grad(&st, upstream),
                }
            }
        }
    }

    /// Resample onto another lattice over the same extent. Target node `i`
    /// maps to the fractional source index `i * (n_src - 1) / (n_dst - 1)`,
    /// so equal resolutions copy exactly.
    pub fn resample(&self, resolution: [usize; 3]) -> Result<Self> {
        let dst_bounds = self.bounds.with_resolution(resolution)?;
        let ch = self.channels;
        let mut out = Self::zeros(dst_bounds, ch);
        let src = self.bounds.resolution;
        let map_axis = |i: usize, a: usize| -> (usize, f64) {
            let u = (i * (src[a] - 1)) as f64 / (resolution[a] - 1) as f64;
            let b = (u.floor() as usize).min(src[a] - 2);
            (b, u - b as f64)
        };
        for k in 0..resolution[2] {
            let (bz, fz) = map_axis(k, 2);
            for j in 0..resolution[1] {
                let (by, fy) = map_axis(j, 1);
                for i in 0..resolution[0] {
                    let (bx, fx) = map_axis(i, 0);
                    let dst = dst_bounds.linear_index(i, j, k) * ch;
                    for corner in 0..8 {
                        let (ox, oy, oz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                        let w = (if ox == 1 { fx } else { 1.0 - fx })
                            * (if oy == 1 { fy } else { 1.0 - fy })
                            * (if oz == 1 { fz } else { 1.0 - fz });
                        if w == 0.0 {
                            continue;
                        }
                        let s = self.bounds.linear_index(bx + ox, by + oy, bz + oz) * ch;
                        for c in 0..ch {
                            out.values[dst + c] += w * self.values[s + c];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Binary snapshot: 6 f64 bounds, 3 u32 resolution, 1 u32 channel
    /// count, then the values as f32, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.values.len() * 4);
        for v in self.bounds.min.iter().chain(self.bounds.max.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in self.bounds.resolution {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 6 * 8 + 3 * 4 + 4;
        if bytes.len() < HEADER {
            return Err(Error::MalformedBlob(format!(
                "{} bytes is shorter than the {HEADER}-byte header",
                bytes.len()
            )));
        }
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let min = Vec3::new(f64_at(0), f64_at(8), f64_at(16));
        let max = Vec3::new(f64_at(24), f64_at(32), f64_at(40));
        let resolution = [u32_at(48), u32_at(52), u32_at(56)];
        let channels = u32_at(60);
        let bounds = GridBounds::new(min, max, resolution)
            .map_err(|e| Error::MalformedBlob(e.to_string()))?;
        if channels == 0 {
            return Err(Error::MalformedBlob("zero channels".into()));
        }
        let count = bounds
            .num_voxels()
            .checked_mul(channels)
            .ok_or_else(|| Error::MalformedBlob("size overflow".into()))?;
        let body = &bytes[HEADER..];
        if body.len() != count * 4 {
            return Err(Error::MalformedBlob(format!(
                "body holds {} bytes, header implies {}",
                body.len(),
                count * 4
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            bounds,
            channels,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// `softplus(raw + shift)`, stable for large magnitudes.
#[inline]
pub fn density_activation(raw: f64, shift_b: f64) -> f64 {
    softplus(raw + shift_b)
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Termination probability of a segment of length `delta` at density `sigma`.
#[inline]
pub fn alpha_from_density(sigma: f64, delta: f64) -> f64 {
    -(-sigma * delta).exp_m1()
}

/// Per-voxel termination probabilities used to score information gain.
///
/// Every voxel starts at 0.5 (maximal entropy) and unsynchronized. Once a
/// voxel's density is trained it is synchronized and from then on mirrors
/// the density grid's alpha.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyVolume {
    pub alpha: VoxelGrid,
    pub synchronized: Vec<bool>,
}

impl EntropyVolume {
    pub fn new(bounds: GridBounds) -> Self {
        Self {
            alpha: VoxelGrid::filled(bounds, 1, 0.5),
            synchronized: vec![false; bounds.num_voxels()],
        }
    }

    /// A fully synchronized volume with the given per-voxel alphas.
    pub fn synchronized_from(alpha: VoxelGrid) -> Result<Self> {
        if alpha.channels != 1 {
            return Err(Error::ShapeMismatch {
                expected: 1,
                actual: alpha.channels,
            });
        }
        if alpha.values.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("entropy alphas must lie in [0, 1]".into()));
        }
        let n = alpha.num_voxels();
        Ok(Self {
            alpha,
            synchronized: vec![true; n],
        })
    }

    pub fn bounds(&self) -> &GridBounds {
        &self.alpha.bounds
    }

    /// Copy the density grid's alpha into every voxel in `updated`.
    pub fn sync(
        &mut self,
        density: &VoxelGrid,
        updated: impl IntoIterator<Item = usize>,
        shift_b: f64,
        delta_ref: f64,
    ) {
        debug_assert_eq!(density.bounds, self.alpha.bounds);
        for v in updated {
            let sigma = density_activation(density.values[v], shift_b);
            self.alpha.values[v] = alpha_from_density(sigma, delta_ref);
            self.synchronized[v] = true;
        }
    }

    pub fn synchronized_count(&self) -> usize {
        self.synchronized.iter().filter(|s| **s).count()
    }

    pub fn synchronized_fraction(&self) -> f64 {
        self.synchronized_count() as f64 / self.synchronized.len() as f64
    }

    /// Interpolated alpha at `x`; zero (certainly empty) outside the box.
    pub fn alpha_at(&self, x: &Vec3) -> f64 {
        self.alpha.query_scalar(x)
    }

    /// Mean absolute per-voxel alpha difference.
    pub fn mean_abs_change(&self, other: &EntropyVolume) -> Result<f64> {
        if self.alpha.values.len() != other.alpha.values.len() {
            return Err(Error::ShapeMismatch {
                expected: self.alpha.values.len(),
                actual: other.alpha.values.len(),
            });
        }
        let total: f64 = self
            .alpha
            .values
            .iter()
            .zip(&other.alpha.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(total / self.alpha.values.len() as f64)
    }
}
