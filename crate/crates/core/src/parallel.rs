//! Deterministic parallel reduction helpers.
//!
//! Work is cut into a fixed number of contiguous chunks regardless of how
//! many threads run them, and partial results are merged in chunk order.
//! Floating-point sums therefore come out bit-identical for any worker count.

use std::ops::Range;

use crate::grid::Stencil;

/// Number of chunks a batch is split into.
pub const REDUCTION_CHUNKS: usize = 8;

/// Split `0..n` into at most `chunks` contiguous, nearly equal ranges.
pub fn chunk_ranges(n: usize, chunks: usize) -> Vec<Range<usize>> {
    let chunks = chunks.max(1);
    let base = n / chunks;
    let extra = n % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Dense gradient storage that remembers which voxels were written, so
/// clearing and merging cost only the touched entries.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    pub channels: usize,
    pub values: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl GradBuffer {
    pub fn new(num_voxels: usize, channels: usize) -> Self {
        Self {
            channels,
            values: vec![0.0; num_voxels * channels],
            touched: Vec::new(),
            marked: vec![false; num_voxels],
        }
    }

    #[inline]
    fn mark(&mut self, voxel: usize) {
        if !self.marked[voxel] {
            self.marked[voxel] = true;
            self.touched.push(voxel);
        }
    }

    #[inline]
    pub fn scatter(&mut self, stencil: &Stencil, upstream: &[f64]) {
        let ch = self.channels;
        for k in 0..8 {
            let v = stencil.voxels[k];
            self.mark(v);
            let w = stencil.weights[k];
            for (c, u) in upstream.iter().enumerate() {
                self.values[v * ch + c] += w * u;
            }
        }
    }

    #[inline]
    pub fn scatter_scalar(&mut self, stencil: &Stencil, upstream: f64) {
        for k in 0..8 {
            let v = stencil.voxels[k];
            self.mark(v);
            self.values[v] += stencil.weights[k] * upstream;
        }
    }

    /// Voxels written since the last clear, in first-touch order.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    /// Voxels whose accumulated gradient is nonzero in some channel.
    pub fn nonzero_voxels(&self) -> Vec<usize> {
        let ch = self.channels;
        let mut out: Vec<usize> = self
            .touched
            .iter()
            .copied()
            .filter(|v| self.values[v * ch..(v + 1) * ch].iter().any(|g| *g != 0.0))
            .collect();
        out.sort_unstable();
        out
    }

    /// Add this buffer into `total` and reset it.
    pub fn drain_into(&mut self, total: &mut GradBuffer) {
        let ch = self.channels;
        let touched = std::mem::take(&mut self.touched);
        for &v in &touched {
            total.mark(v);
            for c in 0..ch {
                total.values[v * ch + c] += self.values[v * ch + c];
                self.values[v * ch + c] = 0.0;
            }
            self.marked[v] = false;
        }
        self.touched = touched;
        self.touched.clear();
    }

    pub fn clear(&mut self) {
        let ch = self.channels;
        for &v in &self.touched {
            self.values[v * ch..(v + 1) * ch].iter_mut().for_each(|g| *g = 0.0);
            self.marked[v] = false;
        }
        self.touched.clear();
    }

    pub fn scale(&mut self, factor: f64) {
        let ch = self.channels;
        for &v in &self.touched {
            self.values[v * ch..(v + 1) * ch].iter_mut().for_each(|g| *g *= factor);
        }
    }
}
