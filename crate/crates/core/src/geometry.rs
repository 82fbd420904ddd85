//! Planar rigid-pose algebra: translation in 3D, rotation restricted to yaw
//! about the vertical (y) axis.
//!
//! Frame convention, declared once and used everywhere: in the agent frame
//! +z points forward, +x is the lateral axis on the agent's left and +y is
//! up. Positive yaw therefore turns the agent left. A pose maps coordinates
//! in its own frame to the parent frame via the homogeneous matrix
//!
//! ```text
//! [  cos(yaw)  0  sin(yaw)  x ]
//! [  0         1  0         y ]
//! [ -sin(yaw)  0  cos(yaw)  z ]
//! [  0         0  0         1 ]
//! ```
//!
//! All operations below are closed-form equivalents of products of these
//! matrices; yaw is re-normalized to (-pi, pi] at every operation boundary.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Normalize an angle to the half-open interval (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Rotate the planar vector (x, z) by `yaw` about the vertical axis.
#[inline]
pub(crate) fn rotate_xz(yaw: f64, x: f64, z: f64) -> (f64, f64) {
    let (s, c) = yaw.sin_cos();
    (c * x + s * z, -s * x + c * z)
}

/// Agent state: position in meters and heading in radians.
///
/// `y` is carried for schema compatibility with full 6-DoF poses but is
/// always 0 for poses produced by this simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose { x, y, z, yaw: normalize_angle(yaw) }
    }

    /// Pose on the ground plane (y = 0).
    pub fn planar(x: f64, z: f64, yaw: f64) -> Self {
        Pose::new(x, 0.0, z, yaw)
    }

    pub fn identity() -> Self {
        Pose { x: 0.0, y: 0.0, z: 0.0, yaw: 0.0 }
    }

    /// World pose of a child frame given its pose expressed in this frame.
    /// Equivalent to the product of the two homogeneous matrices.
    pub fn compose(&self, child: &Pose) -> Pose {
        let (rx, rz) = rotate_xz(self.yaw, child.x, child.z);
        Pose {
            x: self.x + rx,
            y: self.y + child.y,
            z: self.z + rz,
            yaw: normalize_angle(self.yaw + child.yaw),
        }
    }

    /// Apply a per-action egomotion delta expressed in this pose's frame.
    pub fn apply(&self, delta: &MotionDelta) -> Pose {
        self.compose(&delta.as_pose())
    }

    /// Matrix inverse: `p.compose(&p.inverse())` is the identity.
    pub fn inverse(&self) -> Pose {
        let (rx, rz) = rotate_xz(-self.yaw, self.x, self.z);
        Pose { x: -rx, y: -self.y, z: -rz, yaw: normalize_angle(-self.yaw) }
    }

    /// Map a point given in this pose's frame into the parent frame.
    pub fn transform_point(&self, point: (f64, f64)) -> (f64, f64) {
        let (rx, rz) = rotate_xz(self.yaw, point.0, point.1);
        (self.x + rx, self.z + rz)
    }

    /// Planar position (x, z).
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.z)
    }
}

/// Per-action egomotion expressed in the source frame: the pose of the
/// target state relative to the source state. This is both the regression
/// target for odometers and the increment for pose integration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionDelta {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dyaw: f64,
}

impl MotionDelta {
    pub fn new(dx: f64, dy: f64, dz: f64, dyaw: f64) -> Self {
        MotionDelta { dx, dy, dz, dyaw: normalize_angle(dyaw) }
    }

    pub fn zero() -> Self {
        MotionDelta::default()
    }

    pub fn as_pose(&self) -> Pose {
        Pose { x: self.dx, y: self.dy, z: self.dz, yaw: self.dyaw }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.dx, self.dy, self.dz, self.dyaw]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        MotionDelta { dx: a[0], dy: a[1], dz: a[2], dyaw: a[3] }
    }

    /// Planar translation magnitude.
    pub fn translation_norm(&self) -> f64 {
        (self.dx * self.dx + self.dz * self.dz).sqrt()
    }
}

// Deltas travel as flat [dx, dy, dz, dyaw] arrays in every file format.
impl Serialize for MotionDelta {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MotionDelta {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let a = <[f64; 4]>::deserialize(deserializer)?;
        Ok(MotionDelta::from_array(a))
    }
}

/// Egomotion of `tgt` relative to `src` (both in world coordinates):
/// the closed form of `T_src^-1 * T_tgt`.
pub fn relative_pose(src: &Pose, tgt: &Pose) -> MotionDelta {
    let (dx, dz) = rotate_xz(-src.yaw, tgt.x - src.x, tgt.z - src.z);
    MotionDelta { dx, dy: tgt.y - src.y, dz, dyaw: normalize_angle(tgt.yaw - src.yaw) }
}
