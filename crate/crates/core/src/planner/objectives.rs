use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bezier::BezierTrajectory;
use super::state::AgentState;
use crate::error::{Error, Result};
use crate::grid::EntropyVolume;
use crate::model::CoarseModel;
use crate::render::Intrinsics;
use crate::{Mat3, Vec3};

/// Binary entropy (natural log) of a termination probability, with
/// `0 log 0 = 0`.
pub fn termination_entropy(alpha: f64) -> f64 {
    if alpha <= 0.0 || alpha >= 1.0 {
        return 0.0;
    }
    -alpha * alpha.ln() - (1.0 - alpha) * (1.0 - alpha).ln()
}

/// `d/d alpha` of [`termination_entropy`]; zero at the endpoints.
pub fn termination_entropy_grad(alpha: f64) -> f64 {
    if alpha <= 0.0 || alpha >= 1.0 {
        return 0.0;
    }
    ((1.0 - alpha) / alpha).ln()
}

/// Points sampled uniformly in a box around each waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct SafeZone {
    pub half_extent: Vec3,
    pub offsets: Vec<Vec3>,
}

impl SafeZone {
    pub fn new(half_extent: Vec3, n_points: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets = (0..n_points.max(1))
            .map(|_| Vec3::from_fn(|a, _| rng.random_range(-half_extent[a]..=half_extent[a])))
            .collect();
        Self {
            half_extent,
            offsets,
        }
    }
}

impl Default for SafeZone {
    fn default() -> Self {
        Self::new(Vec3::repeat(0.5), 100, 0)
    }
}

/// `sum_i sum_b exp(sigma(p_i + o_b))` and its gradient for each position.
pub fn collision_penalty(model: &CoarseModel, positions: &[Vec3], zone: &SafeZone) -> (f64, Vec<Vec3>) {
    let mut total = 0.0;
    let grads = positions
        .iter()
        .map(|p| {
            let mut g = Vec3::zeros();
            for o in &zone.offsets {
                let (sigma, ds) = model.sigma_with_grad(&(p + o));
                let e = sigma.exp();
                total += e;
                g += ds * e;
            }
            g
        })
        .collect();
    (total, grads)
}

/// Which points of a candidate view are scored for information gain: a
/// strided pixel subset, each sampled at fixed depths from the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrustumSpec {
    pub intrinsics: Intrinsics,
    /// Every `pixel_stride`-th pixel along rows and columns.
    pub pixel_stride: usize,
    pub near: f64,
    pub far: f64,
    pub step: f64,
}

impl FrustumSpec {
    /// Unit camera-frame directions of the scored pixels.
    pub fn directions(&self) -> Vec<Vec3> {
        let k = &self.intrinsics;
        let s = self.pixel_stride.max(1);
        let off = s / 2;
        let mut out = Vec::new();
        for v in (off..k.height).step_by(s) {
            for u in (off..k.width).step_by(s) {
                out.push(
                    Vec3::new(
                        (u as f64 + 0.5 - k.cx) / k.focal,
                        -(v as f64 + 0.5 - k.cy) / k.focal,
                        -1.0,
                    )
                    .normalize(),
                );
            }
        }
        out
    }

    pub fn depths(&self) -> Vec<f64> {
        let n = (((self.far - self.near) / self.step).ceil() as usize).max(1);
        (0..n).map(|i| self.near + i as f64 * self.step).collect()
    }

    pub fn num_points(&self) -> usize {
        self.directions().len() * self.depths().len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.near >= 0.0 && self.near < self.far && self.step > 0.0) {
            return Err(Error::DegenerateFrustum(format!(
                "depth range [{}, {}) with step {}",
                self.near, self.far, self.step
            )));
        }
        if self.directions().is_empty() {
            return Err(Error::DegenerateFrustum("no pixels selected".into()));
        }
        Ok(())
    }
}

/// Summed termination entropy over the frustum points of `state`, and its
/// gradient with respect to the state coordinates.
pub fn viewpoint_entropy(
    entropy: &EntropyVolume,
    state: &AgentState,
    spec: &FrustumSpec,
) -> Result<(f64, DVector<f64>)> {
    spec.validate()?;
    let frame = state.frame();
    let depths = spec.depths();
    let bounds = entropy.bounds();
    let mut value = 0.0;
    // Sum of point gradients, and sum of depth * gradient * direction^T.
    let mut g0 = Vec3::zeros();
    let mut m = Mat3::zeros();
    for d in spec.directions() {
        let dir = frame.rotation * d;
        let mut g1 = Vec3::zeros();
        for &t in &depths {
            let x = frame.eye + dir * t;
            let Some(st) = bounds.stencil(&x) else { continue };
            let alpha = entropy.alpha.gather_scalar(&st);
            value += termination_entropy(alpha);
            let de = termination_entropy_grad(alpha);
            if de != 0.0 {
                let g = entropy.alpha.position_grad(&st, &[de]);
                g0 += g;
                g1 += g * t;
            }
        }
        m += g1 * d.transpose();
    }
    let mut grad = frame.d_eye.transpose() * g0;
    for k in 0..3 {
        grad += frame.d_rotation[k].transpose() * m.column(k);
    }
    Ok((value, grad))
}

/// Value-only version of [`viewpoint_entropy`].
pub fn viewpoint_entropy_value(entropy: &EntropyVolume, state: &AgentState, spec: &FrustumSpec) -> Result<f64> {
    spec.validate()?;
    let cam = state.camera(spec.intrinsics);
    let depths = spec.depths();
    let mut value = 0.0;
    for d in spec.directions() {
        let dir = cam.rotation * d;
        for &t in &depths {
            value += termination_entropy(entropy.alpha_at(&(cam.center + dir * t)));
        }
    }
    Ok(value)
}

/// Mean coordinate distance between the waypoints and the straight-line
/// reference states at the same curve parameters, with its gradient with
/// respect to the control point.
///
/// Waypoint `i` differs from its reference by exactly
/// `2 r (1 - r) (control - midpoint)`, which is evaluated in that form so
/// a midpoint control gives an exact zero.
pub fn path_efficiency(traj: &BezierTrajectory) -> (f64, DVector<f64>) {
    let offset = &traj.control - traj.midpoint();
    let norm = offset.norm();
    let n = traj.n_waypoints.max(1);
    let mean_w: f64 = (1..=traj.n_waypoints)
        .map(|i| BezierTrajectory::control_weight(traj.ratio(i)))
        .sum::<f64>()
        / n as f64;
    let grad = if norm > 0.0 {
        offset * (mean_w / norm)
    } else {
        DVector::zeros(traj.control.len())
    };
    (mean_w * norm, grad)
}
