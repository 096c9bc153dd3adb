//! Trajectory planning between views: agent states, Bézier curves and the
//! weighted collision / information-gain / path-length objective.

mod bezier;
mod objectives;
mod state;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use bezier::BezierTrajectory;
pub use objectives::{
    collision_penalty, path_efficiency, termination_entropy, termination_entropy_grad, viewpoint_entropy,
    viewpoint_entropy_value, FrustumSpec, SafeZone,
};
pub use state::{so3_left_jacobian, spherical_unit, AgentState, StateFrame};

use crate::error::{Error, Result};
use crate::model::{AdamState, CoarseModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanWeights {
    pub collision: f64,
    pub info_gain: f64,
    pub path_efficiency: f64,
}

impl Default for PlanWeights {
    fn default() -> Self {
        Self {
            collision: 10.0,
            info_gain: 1.0,
            path_efficiency: 0.1,
        }
    }
}

impl PlanWeights {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            collision: self.collision * k,
            info_gain: self.info_gain * k,
            path_efficiency: self.path_efficiency * k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub weights: PlanWeights,
    pub iterations: usize,
    pub lr: f64,
    pub n_waypoints: usize,
    /// Number of evenly spaced waypoints scored for information gain.
    pub info_views: usize,
    pub max_translation: f64,
    pub max_rotation_deg: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            weights: PlanWeights::default(),
            iterations: 100,
            lr: 0.1,
            n_waypoints: 100,
            info_views: 10,
            max_translation: 0.5,
            max_rotation_deg: 10.0,
        }
    }
}

/// Objective terms of one trajectory, unweighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PlanTerms {
    pub collision: f64,
    pub info_gain: f64,
    pub path_efficiency: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct Planner {
    pub config: PlannerConfig,
    pub zone: SafeZone,
    pub frustum: FrustumSpec,
    /// Per-coordinate box the control point is clamped to after each step.
    /// With a convex box holding both endpoints the whole curve stays inside.
    pub control_bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl Planner {
    /// Waypoint indices (0-based) scored for information gain.
    fn info_indices(&self, n: usize) -> Vec<usize> {
        let k = self.config.info_views.min(n);
        if k == 0 {
            return Vec::new();
        }
        let step = n / k;
        (1..=k).map(|j| j * step - 1).collect()
    }

    /// Weighted objective and its gradient with respect to the control point.
    pub fn objective(&self, model: &CoarseModel, traj: &BezierTrajectory) -> Result<(PlanTerms, DVector<f64>)> {
        let w = self.config.weights;
        let waypoints = traj.waypoints();
        let mut grad = DVector::zeros(traj.control.len());
        let mut terms = PlanTerms::default();
        if w.collision != 0.0 {
            let positions: Vec<_> = waypoints.iter().map(|s| s.position()).collect();
            let (value, g) = collision_penalty(model, &positions, &self.zone);
            terms.collision = value;
            for (i, (s, gp)) in waypoints.iter().zip(&g).enumerate() {
                let cw = BezierTrajectory::control_weight(traj.ratio(i + 1));
                grad += s.frame().d_eye.transpose() * gp * (w.collision * cw);
            }
        }
        if w.info_gain != 0.0 {
            for i in self.info_indices(waypoints.len()) {
                let (e, g) = viewpoint_entropy(&model.entropy, &waypoints[i], &self.frustum)?;
                terms.info_gain -= e;
                let cw = BezierTrajectory::control_weight(traj.ratio(i + 1));
                grad -= g * (w.info_gain * cw);
            }
        }
        let (pe, g) = path_efficiency(traj);
        terms.path_efficiency = pe;
        grad += g * w.path_efficiency;
        terms.total = w.collision * terms.collision + w.info_gain * terms.info_gain + w.path_efficiency * pe;
        Ok((terms, grad))
    }

    /// Adam over the control point starting from `init` (the midpoint when
    /// `None`). Returns the trajectory and the objective at every iteration.
    pub fn optimize(
        &self,
        model: &CoarseModel,
        start: AgentState,
        goal: AgentState,
        init: Option<DVector<f64>>,
    ) -> Result<(BezierTrajectory, Vec<PlanTerms>)> {
        let mut traj = BezierTrajectory::new(start, goal, self.config.n_waypoints);
        if let Some(c) = init {
            traj.control = c;
        }
        let mut adam = AdamState::new(traj.control.len(), self.config.lr);
        let mut history = Vec::with_capacity(self.config.iterations);
        for it in 0..self.config.iterations {
            let (terms, grad) = self.objective(model, &traj)?;
            if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteObjective(it));
            }
            history.push(terms);
            adam.step(traj.control.as_mut_slice(), grad.as_slice())?;
            if let Some((lo, hi)) = &self.control_bounds {
                for k in 0..traj.control.len() {
                    traj.control[k] = traj.control[k].clamp(lo[k], hi[k]);
                }
            }
        }
        Ok((traj, history))
    }

    /// The furthest waypoint reachable from `current` within the motion
    /// limits, or the first waypoint when none is.
    pub fn select_next_state(&self, traj: &BezierTrajectory, current: &AgentState) -> Result<AgentState> {
        select_next_state(
            &traj.waypoints(),
            current,
            self.config.max_translation,
            self.config.max_rotation_deg.to_radians(),
        )
    }
}

pub fn select_next_state(
    waypoints: &[AgentState],
    current: &AgentState,
    max_translation: f64,
    max_rotation: f64,
) -> Result<AgentState> {
    let first = *waypoints.first().ok_or(Error::EmptyTrajectory)?;
    Ok(waypoints
        .iter()
        .rev()
        .find(|w| {
            let (t, r) = current.motion_to(w);
            t <= max_translation && r <= max_rotation
        })
        .copied()
        .unwrap_or(first))
}

/// Write waypoints as CSV. Spherical states get `radius, azimuth,
/// elevation` columns, free states a position and a unit quaternion.
pub fn write_trajectory_csv<W: Write>(states: &[AgentState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let spherical = matches!(states.first(), Some(AgentState::Spherical { .. }));
    if spherical {
        w.write_record(["waypoint_index", "radius", "azimuth", "elevation"])?;
    } else {
        w.write_record(["waypoint_index", "x", "y", "z", "qw", "qx", "qy", "qz"])?;
    }
    for (i, s) in states.iter().enumerate() {
        let mut row = vec![i.to_string()];
        match s {
            AgentState::Spherical {
                radius,
                azimuth,
                elevation,
                ..
            } if spherical => {
                row.extend([radius, azimuth, elevation].map(|v| v.to_string()));
            }
            _ => {
                let p = s.position();
                let q = nalgebra::UnitQuaternion::from_rotation_matrix(&s.rotation());
                row.extend([p.x, p.y, p.z, q.w, q.i, q.j, q.k].map(|v| v.to_string()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
