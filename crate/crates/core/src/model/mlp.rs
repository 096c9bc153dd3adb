//! A small fully connected color decoder with hand-written backprop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub output_dim: usize,
}

/// Placement of one dense layer inside the flat parameter vector. Weights
/// are row-major `out x in`, followed by `out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

/// ReLU hidden layers, logistic output.
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowMlp {
    pub config: MlpConfig,
    pub layout: Vec<LayerLayout>,
    params: Vec<f64>,
    version: u64,
}

/// Activations saved by [`ShallowMlp::forward`] for the reverse pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    version: u64,
    /// Input to each layer (post-activation of the previous one).
    layer_inputs: Vec<Vec<f64>>,
    /// Logistic outputs.
    pub output: Vec<f64>,
}

fn layout_for(config: &MlpConfig) -> (Vec<LayerLayout>, usize) {
    let mut dims = vec![config.input_dim];
    dims.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
    dims.push(config.output_dim);
    let mut offset = 0;
    let layout = dims
        .windows(2)
        .map(|w| {
            let l = LayerLayout {
                inputs: w[0],
                outputs: w[1],
                weight_offset: offset,
                bias_offset: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            l
        })
        .collect();
    (layout, offset)
}

impl ShallowMlp {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(config: MlpConfig, seed: u64) -> Self {
        let (layout, count) = layout_for(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; count];
        for l in &layout {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            for p in &mut params[l.weight_offset..l.bias_offset + l.outputs] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Self {
            config,
            layout,
            params,
            version: 0,
        }
    }

    pub fn zeros(config: MlpConfig) -> Self {
        let (layout, count) = layout_for(&config);
        Self {
            config,
            layout,
            params: vec![0.0; count],
            version: 0,
        }
    }

    pub fn from_params(config: MlpConfig, params: Vec<f64>) -> Result<Self> {
        let (layout, count) = layout_for(&config);
        if params.len() != count {
            return Err(Error::ShapeMismatch {
                expected: count,
                actual: params.len(),
            });
        }
        Ok(Self {
            config,
            layout,
            params,
            version: 0,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<MlpCache> {
        if input.len() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.config.input_dim,
                actual: input.len(),
            });
        }
        let mut layer_inputs = Vec::with_capacity(self.layout.len());
        let mut x = input.to_vec();
        let last = self.layout.len() - 1;
        for (li, l) in self.layout.iter().enumerate() {
            let w = &self.params[l.weight_offset..l.bias_offset];
            let b = &self.params[l.bias_offset..l.bias_offset + l.outputs];
            let mut y: Vec<f64> = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * l.inputs..(o + 1) * l.inputs];
                *yo += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            if li == last {
                y.iter_mut().for_each(|v| *v = crate::grid::sigmoid(*v));
            } else {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            layer_inputs.push(std::mem::replace(&mut x, y));
        }
        Ok(MlpCache {
            version: self.version,
            layer_inputs,
            output: x,
        })
    }

    /// Accumulate `upstream · ∂output/∂params` into `param_grads` and
    /// return `upstream · ∂output/∂input`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: &[f64],
        param_grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        if upstream.len() != self.config.output_dim {
            return Err(Error::ShapeMismatch {
                expected: self.config.output_dim,
                actual: upstream.len(),
            });
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                actual: param_grads.len(),
            });
        }
        let last = self.layout.len() - 1;
        // Gradient with respect to the pre-activation of the current layer.
        let mut delta: Vec<f64> = cache
            .output
            .iter()
            .zip(upstream)
            .map(|(s, u)| u * s * (1.0 - s))
            .collect();
        for li in (0..=last).rev() {
            let l = &self.layout[li];
            let x = &cache.layer_inputs[li];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut param_grads
                    [l.weight_offset + o * l.inputs..l.weight_offset + (o + 1) * l.inputs];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                param_grads[l.bias_offset + o] += d;
            }
            let w = &self.params[l.weight_offset..l.bias_offset];
            let mut dx = vec![0.0; l.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * l.inputs..(o + 1) * l.inputs];
                for (g, wi) in dx.iter_mut().zip(row) {
                    *g += d * wi;
                }
            }
            if li > 0 {
                // `x` is a ReLU output: the mask is x > 0.
                for (g, xi) in dx.iter_mut().zip(x) {
                    if *xi <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

/// `[p, sin(2^k p), cos(2^k p) for k < octaves]`, `3 + 6 * octaves` values.
pub fn positional_encoding(p: &[f64; 3], octaves: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(p);
    let mut freq = 1.0;
    for _ in 0..octaves {
        for v in p {
            out.push((freq * v).sin());
        }
        for v in p {
            out.push((freq * v).cos());
        }
        freq *= 2.0;
    }
}

pub fn encoding_dim(octaves: usize) -> usize {
    3 + 6 * octaves
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn cfg(input: usize) -> MlpConfig {
        MlpConfig {
            input_dim: input,
            hidden_width: 16,
            hidden_layers: 2,
            output_dim: 3,
        }
    }

    fn random_input(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_output_bias_sigmoid() {
        let mut mlp = ShallowMlp::zeros(cfg(5));
        let out_bias = mlp.layout[2].bias_offset;
        mlp.params_mut()[out_bias] = 1.5;
        for s in 0..3 {
            let o = mlp.forward(&random_input(s, 5)).unwrap().output;
            assert!((o[0] - crate::grid::sigmoid(1.5)).abs() < 1e-15);
            assert!((o[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_matrix_oracle() {
        let mlp = ShallowMlp::new(cfg(7), 3);
        let x = random_input(4, 7);
        let mut h = DVector::from_vec(x.clone());
        for (li, l) in mlp.layout.iter().enumerate() {
            let w = DMatrix::from_row_slice(
                l.outputs,
                l.inputs,
                &mlp.params()[l.weight_offset..l.bias_offset],
            );
            let b = DVector::from_column_slice(
                &mlp.params()[l.bias_offset..l.bias_offset + l.outputs],
            );
            h = w * h + b;
            if li + 1 < mlp.layout.len() {
                h = h.map(|v| v.max(0.0));
            } else {
                h = h.map(|v| 1.0 / (1.0 + (-v).exp()));
            }
        }
        let out = mlp.forward(&x).unwrap().output;
        for k in 0..3 {
            assert!((out[k] - h[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mlp = ShallowMlp::new(cfg(4), 1);
        let cache = mlp.forward(&random_input(2, 4)).unwrap();
        let mut g = vec![0.0; mlp.num_params()];
        let dx = mlp.backward(&cache, &[0.0; 3], &mut g).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_regime_input_grad_is_weight_product() {
        // Nonnegative weights and inputs keep every ReLU active, so the
        // input gradient is W1^T W2^T W3^T (s(1-s) * upstream).
        let c = MlpConfig {
            input_dim: 3,
            hidden_width: 4,
            hidden_layers: 2,
            output_dim: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params: Vec<f64> = (0..layout_for(&c).1).map(|_| rng.random_range(0.0..0.5)).collect();
        let mlp = ShallowMlp::from_params(c, params).unwrap();
        let x = vec![0.3, 0.1, 0.7];
        let cache = mlp.forward(&x).unwrap();
        let up = [1.0, -0.5, 0.25];
        let mut g = vec![0.0; mlp.num_params()];
        let dx = mlp.backward(&cache, &up, &mut g).unwrap();
        let mat = |l: &LayerLayout| {
            DMatrix::from_row_slice(l.outputs, l.inputs, &mlp.params()[l.weight_offset..l.bias_offset])
        };
        let s = &cache.output;
        let d = DVector::from_fn(3, |i, _| up[i] * s[i] * (1.0 - s[i]));
        let expect = mat(&mlp.layout[0]).transpose()
            * mat(&mlp.layout[1]).transpose()
            * mat(&mlp.layout[2]).transpose()
            * d;
        for k in 0..3 {
            assert!((dx[k] - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..20 {
            let mut mlp = ShallowMlp::new(cfg(6), seed);
            let x = random_input(100 + seed, 6);
            let up = random_input(200 + seed, 3);
            let objective = |m: &ShallowMlp, inp: &[f64]| -> f64 {
                let o = m.forward(inp).unwrap().output;
                o.iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let cache = mlp.forward(&x).unwrap();
            let mut g = vec![0.0; mlp.num_params()];
            let dx = mlp.backward(&cache, &up, &mut g).unwrap();
            let h = 1e-6;
            for i in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (objective(&mlp, &xp) - objective(&mlp, &xm)) / (2.0 * h);
                assert!((fd - dx[i]).abs() <= 1e-4 * dx[i].abs().max(1e-3), "input {i}: {fd} vs {}", dx[i]);
            }
            for p in (0..mlp.num_params()).step_by(7) {
                let orig = mlp.params()[p];
                mlp.params_mut()[p] = orig + h;
                let fp = objective(&mlp, &x);
                mlp.params_mut()[p] = orig - h;
                let fm = objective(&mlp, &x);
                mlp.params_mut()[p] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - g[p]).abs() <= 1e-4 * g[p].abs().max(1e-3), "param {p}: {fd} vs {}", g[p]);
            }
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut mlp = ShallowMlp::new(cfg(3), 0);
        let cache = mlp.forward(&[0.1, 0.2, 0.3]).unwrap();
        mlp.params_mut()[0] += 1.0;
        let mut g = vec![0.0; mlp.num_params()];
        assert!(matches!(mlp.backward(&cache, &[1.0; 3], &mut g), Err(Error::StaleCache)));
    }

    #[test]
    fn encoding_layout() {
        let mut out = Vec::new();
        positional_encoding(&[0.5, -1.0, 2.0], 2, &mut out);
        assert_eq!(out.len(), encoding_dim(2));
        assert_eq!(&out[..3], &[0.5, -1.0, 2.0]);
        assert_eq!(out[3], 0.5f64.sin());
        assert_eq!(out[6], 0.5f64.cos());
        assert_eq!(out[9], 1.0f64.sin());
    }
}
