//! Rigid transforms between the car frame and LiDAR frames, plus the
//! point-vs-cone and point-vs-pyramid side tests.
//!
//! A LiDAR with beam angle `theta` sweeps the cone `z = tan(theta) * sqrt(x^2 + y^2)`
//! in its own frame, `theta` measured from the horizontal plane. Points with a
//! positive margin lie on the upward side.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Margins below this magnitude count as "on the surface" and are resolved to
/// the downward side.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Mount pose of one LiDAR in the car frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Pitch about the car y axis, radians.
    pub pitch: f64,
    /// Roll about the car x axis, radians.
    pub roll: f64,
}

impl LidarPose {
    pub fn new(x: f64, y: f64, z: f64, pitch: f64, roll: f64) -> Self {
        Self { x, y, z, pitch, roll }
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, 0.0, 0.0)
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("x", self.x), ("y", self.y), ("z", self.z), ("pitch", self.pitch), ("roll", self.roll)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("pose.{name}"), "must be finite"));
            }
        }
        for (name, v) in [("pitch", self.pitch), ("roll", self.roll)] {
            if v.abs() > FRAC_PI_2 {
                return Err(Error::invalid(format!("pose.{name}"), format!("{v} rad is outside [-pi/2, pi/2]")));
            }
        }
        Ok(())
    }

    /// Reflection across the car x-z plane (y -> -y, roll -> -roll).
    pub fn mirrored_y(&self) -> Self {
        Self { y: -self.y, roll: -self.roll, ..*self }
    }
}

/// Rigid transform `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Homogeneous 4x4 form `[R T; 0 1]`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }

    /// Largest entry of `|R^T R - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

pub fn rotation_y(beta: f64) -> Matrix3<f64> {
    let (s, c) = beta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rotation_x(gamma: f64) -> Matrix3<f64> {
    let (s, c) = gamma.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// The mount transform `[R_y(pitch) R_x(roll) | position]`.
///
/// This maps LiDAR-frame coordinates into the car frame; use
/// [`invert_transform`] (or [`to_lidar_frame`]) for the other direction.
pub fn build_pose_transform(pose: &LidarPose) -> Transform {
    Transform { rotation: rotation_y(pose.pitch) * rotation_x(pose.roll), translation: pose.position() }
}

/// Alias of [`build_pose_transform`] that names the direction.
pub fn lidar_to_car(pose: &LidarPose) -> Transform {
    build_pose_transform(pose)
}

pub fn invert_transform(t: &Transform) -> Transform {
    let rt = t.rotation.transpose();
    Transform { rotation: rt, translation: -(rt * t.translation) }
}

pub fn car_to_lidar(pose: &LidarPose) -> Transform {
    invert_transform(&build_pose_transform(pose))
}

/// Coordinates of a car-frame point in the apex-centred frame of `pose`.
pub fn to_lidar_frame(p_car: &Point3, pose: &LidarPose) -> Point3 {
    let rot = rotation_y(pose.pitch) * rotation_x(pose.roll);
    rot.transpose() * (p_car - pose.position())
}

pub fn to_car_frame(p_local: &Point3, pose: &LidarPose) -> Point3 {
    build_pose_transform(pose).apply(p_local)
}

/// Homogeneous-matrix route for the same map as [`to_lidar_frame`].
pub fn to_lidar_frame_homogeneous(p_car: &Point3, pose: &LidarPose) -> Point3 {
    let h = car_to_lidar(pose).to_homogeneous();
    let q = h * Vector4::new(p_car.x, p_car.y, p_car.z, 1.0);
    Point3::new(q.x, q.y, q.z)
}

/// One laser's cone in the car frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserCone {
    pub beam_angle: f64,
    pub apex: Point3,
    pub orientation: Transform,
}

impl LaserCone {
    pub fn new(beam_angle: f64, pose: &LidarPose) -> Result<Self> {
        if beam_angle.is_nan() || beam_angle.abs() >= FRAC_PI_2 {
            return Err(Error::invalid("beam angle", format!("|{beam_angle}| must be < pi/2")));
        }
        Ok(Self { beam_angle, apex: pose.position(), orientation: build_pose_transform(pose) })
    }

    /// Signed margin of a car-frame point.
    pub fn margin(&self, p_car: &Point3) -> f64 {
        let local = self.orientation.rotation.transpose() * (p_car - self.apex);
        cone_side_test(&local, self.beam_angle)
    }
}

/// `z - tan(theta) * sqrt(x^2 + y^2)`; positive above the cone.
pub fn cone_side_test(p_local: &Point3, theta: f64) -> f64 {
    p_local.z - theta.tan() * p_local.x.hypot(p_local.y)
}

/// A plane through the local origin; `normal · p > offset` is its upward side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl FacePlane {
    pub fn margin(&self, p_local: &Point3) -> f64 {
        self.normal.dot(p_local) - self.offset
    }
}

/// Face planes of the polygonal pyramid standing in for a cone.
///
/// Face `i` points along azimuth `2*pi*i/n` (so for `n = 4` the faces follow
/// the ±x/±y directions and the edges sit at 45°, 135°, ...). The pyramid is
/// sized so its upward region lies inside the cone's upward region:
///
/// - `theta >= 0`: edges on the cone. Upward region = above **all** faces.
/// - `theta < 0`: faces tangent to the cone. Upward region = above **any** face.
///
/// Normals are unit length, so margins are in meters.
pub fn pyramid_planes(theta: f64, n_faces: usize) -> Result<Vec<FacePlane>> {
    if n_faces < 3 {
        return Err(Error::invalid("n_faces", format!("{n_faces} < 3")));
    }
    let slope = pyramid_slope(theta, n_faces);
    Ok((0..n_faces)
        .map(|i| {
            let az = 2.0 * PI * i as f64 / n_faces as f64;
            let (s, c) = az.sin_cos();
            // Drop trig noise so axis-aligned faces get exact zeros.
            let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
            let (s, c) = (snap(s), snap(c));
            let normal = Vector3::new(-slope * c, -slope * s, 1.0).normalize();
            FacePlane { normal, offset: 0.0 }
        })
        .collect())
}

/// Rise per unit of face-normal horizontal distance. Monotone increasing in `theta`.
pub fn pyramid_slope(theta: f64, n_faces: usize) -> f64 {
    let t = theta.tan();
    if t > 0.0 {
        t / (PI / n_faces as f64).cos()
    } else {
        t
    }
}

/// Whether the pyramid's upward region is the intersection (true) or the union
/// (false) of the faces' upward half-spaces.
pub fn pyramid_uses_all_faces(theta: f64) -> bool {
    theta >= 0.0
}

/// Upward-side test against the pyramid, with the boundary resolved downward.
pub fn pyramid_above(p_local: &Point3, theta: f64, planes: &[FacePlane]) -> bool {
    let mut faces = planes.iter().map(|f| f.margin(p_local) >= BOUNDARY_TOLERANCE);
    if pyramid_uses_all_faces(theta) {
        faces.all(|b| b)
    } else {
        faces.any(|b| b)
    }
}

/// Upward-side test against the exact cone, with the boundary resolved downward.
pub fn cone_above(p_local: &Point3, theta: f64) -> bool {
    cone_side_test(p_local, theta) >= BOUNDARY_TOLERANCE
}
