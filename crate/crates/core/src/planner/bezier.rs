use std::f64::consts::PI;

use nalgebra::DVector;

use super::state::AgentState;

/// Quadratic Bézier curve in state coordinates between fixed endpoints,
/// shaped by a single control point.
#[derive(Clone, Debug, PartialEq)]
pub struct BezierTrajectory {
    pub start: AgentState,
    pub goal: AgentState,
    pub control: DVector<f64>,
    pub n_waypoints: usize,
}

impl BezierTrajectory {
    /// Straight trajectory (control at the coordinate midpoint). For
    /// spherical states the goal azimuth is unwrapped to within `pi` of the
    /// start so the curve takes the short way around.
    pub fn new(start: AgentState, goal: AgentState, n_waypoints: usize) -> Self {
        let goal = match (start, goal) {
            (
                AgentState::Spherical { azimuth: a0, .. },
                AgentState::Spherical {
                    radius,
                    azimuth,
                    elevation,
                    center,
                },
            ) => {
                let mut az = azimuth;
                while az - a0 > PI {
                    az -= 2.0 * PI;
                }
                while az - a0 < -PI {
                    az += 2.0 * PI;
                }
                AgentState::Spherical {
                    radius,
                    azimuth: az,
                    elevation,
                    center,
                }
            }
            _ => goal,
        };
        let control = (start.coords() + goal.coords()) * 0.5;
        Self {
            start,
            goal,
            control,
            n_waypoints,
        }
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (self.start.coords() + self.goal.coords()) * 0.5
    }

    /// Curve parameter of waypoint `i` (1-based; endpoints excluded).
    pub fn ratio(&self, i: usize) -> f64 {
        i as f64 / (self.n_waypoints + 1) as f64
    }

    /// Derivative of the curve at `r` with respect to each control coordinate.
    pub fn control_weight(r: f64) -> f64 {
        2.0 * r * (1.0 - r)
    }

    pub fn point(&self, r: f64) -> DVector<f64> {
        let s = self.start.coords();
        let g = self.goal.coords();
        let a = 1.0 - r;
        (&s * a + &self.control * r) * a + (&self.control * a + g * r) * r
    }

    pub fn state_at(&self, r: f64) -> AgentState {
        self.start.with_coords(&self.point(r))
    }

    /// The `n_waypoints` interior states, in order.
    pub fn waypoints(&self) -> Vec<AgentState> {
        (1..=self.n_waypoints)
            .map(|i| self.state_at(self.ratio(i)))
            .collect()
    }
}
