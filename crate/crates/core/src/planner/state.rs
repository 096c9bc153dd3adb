use nalgebra::{DMatrix, DVector, Rotation3};
use serde::{Deserialize, Serialize};

use crate::render::{look_at_frame, look_at_rotation, Camera, Intrinsics};
use crate::{Mat3, Vec3};

/// Camera pose in planning coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentState {
    /// On a sphere around `center`, always looking at it. Coordinates are
    /// `(radius, azimuth, elevation)`; world up is `+z`.
    Spherical {
        radius: f64,
        azimuth: f64,
        elevation: f64,
        center: Vec3,
    },
    /// Free rigid pose: camera-to-world rotation as a rotation vector and
    /// the camera center. Coordinates are `(rotation, translation)`.
    Free { rotation: Vec3, translation: Vec3 },
}

/// Pose of a state and its derivatives with respect to the coordinates.
///
/// For a camera-frame direction `d`, the world direction is `R d` and
/// `d(R d)/dq = sum_k d[k] * d_rotation[k]`.
#[derive(Clone, Debug)]
pub struct StateFrame {
    pub eye: Vec3,
    pub rotation: Mat3,
    /// `3 x dim` derivative of the camera center.
    pub d_eye: DMatrix<f64>,
    /// Derivative of each rotation column, `3 x dim` each.
    pub d_rotation: [DMatrix<f64>; 3],
}

fn skew(v: &Vec3) -> Mat3 {
    v.cross_matrix()
}

/// Left Jacobian of the rotation exponential.
pub fn so3_left_jacobian(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let k = skew(w);
    let (a, b) = if theta < 1e-6 {
        (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Mat3::identity() + k * a + k * k * b
}

fn to_dmatrix(m: &Mat3, dim: usize, offset: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3, dim);
    out.view_mut((0, offset), (3, 3)).copy_from(m);
    out
}

impl AgentState {
    /// Spherical state for a world-space eye position looking at `center`.
    pub fn spherical_from_position(eye: &Vec3, center: Vec3) -> Self {
        let v = eye - center;
        let radius = v.norm();
        AgentState::Spherical {
            radius,
            azimuth: v.y.atan2(v.x),
            elevation: (v.z / radius).clamp(-1.0, 1.0).asin(),
            center,
        }
    }

    /// Free state at `eye` looking at `target` with `+z` up.
    pub fn free_looking_at(eye: Vec3, target: &Vec3) -> Self {
        let r = look_at_rotation(&eye, target, &Vec3::z());
        AgentState::Free {
            rotation: r.scaled_axis(),
            translation: eye,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AgentState::Spherical { .. } => 3,
            AgentState::Free { .. } => 6,
        }
    }

    pub fn coords(&self) -> DVector<f64> {
        match self {
            AgentState::Spherical {
                radius,
                azimuth,
                elevation,
                ..
            } => DVector::from_column_slice(&[*radius, *azimuth, *elevation]),
            AgentState::Free {
                rotation,
                translation,
            } => DVector::from_iterator(6, rotation.iter().chain(translation.iter()).copied()),
        }
    }

    /// Same kind (and look-at center) with new coordinates.
    pub fn with_coords(&self, q: &DVector<f64>) -> Self {
        match self {
            AgentState::Spherical { center, .. } => AgentState::Spherical {
                radius: q[0],
                azimuth: q[1],
                elevation: q[2],
                center: *center,
            },
            AgentState::Free { .. } => AgentState::Free {
                rotation: Vec3::new(q[0], q[1], q[2]),
                translation: Vec3::new(q[3], q[4], q[5]),
            },
        }
    }

    pub fn position(&self) -> Vec3 {
        match self {
            AgentState::Spherical {
                radius,
                azimuth,
                elevation,
                center,
            } => center + spherical_unit(*azimuth, *elevation) * *radius,
            AgentState::Free { translation, .. } => *translation,
        }
    }

    /// Camera-to-world rotation.
    pub fn rotation(&self) -> Rotation3<f64> {
        match self {
            AgentState::Spherical { center, .. } => {
                look_at_rotation(&self.position(), center, &Vec3::z())
            }
            AgentState::Free { rotation, .. } => Rotation3::new(*rotation),
        }
    }

    pub fn camera(&self, intrinsics: Intrinsics) -> Camera {
        Camera::new(self.rotation(), self.position(), intrinsics)
    }

    /// Translation distance and rotation angle (radians) to `other`.
    pub fn motion_to(&self, other: &AgentState) -> (f64, f64) {
        let t = (self.position() - other.position()).norm();
        let r = self.rotation().rotation_to(&other.rotation()).angle();
        (t, r)
    }

    pub fn frame(&self) -> StateFrame {
        match self {
            AgentState::Spherical {
                radius,
                azimuth,
                elevation,
                center,
            } => {
                let (sa, ca) = azimuth.sin_cos();
                let (se, ce) = elevation.sin_cos();
                let eye = self.position();
                let d_eye = Mat3::from_columns(&[
                    Vec3::new(ce * ca, ce * sa, se),
                    Vec3::new(-ce * sa, ce * ca, 0.0) * *radius,
                    Vec3::new(-se * ca, -se * sa, ce) * *radius,
                ]);
                let (right, up, forward) = look_at_frame(&eye, center, &Vec3::z());
                let g = center - eye;
                let i3 = Mat3::identity();
                // Derivatives of the look-at axes with respect to the eye.
                let jf = -(i3 - forward * forward.transpose()) / g.norm();
                let h = forward.cross(&Vec3::z());
                let jr = (i3 - right * right.transpose()) / h.norm() * -skew(&Vec3::z()) * jf;
                let ju = -skew(&forward) * jr + skew(&right) * jf;
                let rotation = Mat3::from_columns(&[right, up, -forward]);
                StateFrame {
                    eye,
                    rotation,
                    d_eye: to_dmatrix(&d_eye, 3, 0),
                    d_rotation: [
                        to_dmatrix(&(jr * d_eye), 3, 0),
                        to_dmatrix(&(ju * d_eye), 3, 0),
                        to_dmatrix(&(-jf * d_eye), 3, 0),
                    ],
                }
            }
            AgentState::Free {
                rotation,
                translation,
            } => {
                let r = Rotation3::new(*rotation).into_inner();
                let jl = so3_left_jacobian(rotation);
                let col = |k: usize| to_dmatrix(&(-skew(&r.column(k).into_owned()) * jl), 6, 0);
                StateFrame {
                    eye: *translation,
                    rotation: r,
                    d_eye: to_dmatrix(&Mat3::identity(), 6, 3),
                    d_rotation: [col(0), col(1), col(2)],
                }
            }
        }
    }
}

pub fn spherical_unit(azimuth: f64, elevation: f64) -> Vec3 {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    Vec3::new(ce * ca, ce * sa, se)
}
