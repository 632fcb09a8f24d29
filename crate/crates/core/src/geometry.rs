//! Planar kinematics: poses, angle wrapping, rigid-frame transforms and
//! targeting-sector containment.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps a finite angle into `(-PI, PI]`.
///
/// Angles already inside the interval are returned bit-for-bit, which makes
/// the function idempotent.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite {
            what: "angle",
            value: theta,
        });
    }
    Ok(wrap_angle(theta))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Position (meters) and heading (radians) of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    /// Builds a pose, wrapping the heading into `(-PI, PI]`.
    pub fn new(x: f64, y: f64, heading: f64) -> Result<Self> {
        for (what, value) in [("x", x), ("y", y), ("heading", heading)] {
            if !value.is_finite() {
                return Err(Error::NonFinite { what, value });
            }
        }
        Ok(Self {
            x,
            y,
            heading: wrap_angle(heading),
        })
    }

    /// The canonical frame: origin, facing +x.
    pub const fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, point: (f64, f64)) -> f64 {
        (point.0 - self.x).hypot(point.1 - self.y)
    }

    /// Absolute bearing from this pose's position to `point`; `None` if they coincide.
    pub fn bearing_to(&self, point: (f64, f64)) -> Option<f64> {
        let dx = point.0 - self.x;
        let dy = point.1 - self.y;
        if dx == 0.0 && dy == 0.0 {
            None
        } else {
            Some(dy.atan2(dx))
        }
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading.is_finite()
            && self.heading > -PI
            && self.heading <= PI
    }
}

/// Pose of one agent expressed in the frame of another: the reference sits
/// at the origin facing +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Observation {
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.heading]
    }
}

/// Expresses `target` in the frame where `reference` is at the origin with heading 0.
pub fn to_relative_frame(reference: &Pose, target: &Pose) -> Observation {
    let dx = target.x - reference.x;
    let dy = target.y - reference.y;
    let (s, c) = reference.heading.sin_cos();
    Observation {
        x: c * dx + s * dy,
        y: -s * dx + c * dy,
        heading: wrap_angle(target.heading - reference.heading),
    }
}

/// Inverse of [`to_relative_frame`]: places a relative observation back in
/// world coordinates given the reference pose.
pub fn from_relative_frame(reference: &Pose, relative: &Observation) -> Pose {
    let (s, c) = reference.heading.sin_cos();
    Pose {
        x: reference.x + c * relative.x - s * relative.y,
        y: reference.y + s * relative.x + c * relative.y,
        heading: wrap_angle(reference.heading + relative.heading),
    }
}

/// A rigid motion of the plane: rotate about the origin, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
}

impl RigidTransform {
    pub fn apply(&self, pose: &Pose) -> Pose {
        let (s, c) = self.rotation.sin_cos();
        Pose {
            x: c * pose.x - s * pose.y + self.dx,
            y: s * pose.x + c * pose.y + self.dy,
            heading: wrap_angle(pose.heading + self.rotation),
        }
    }
}

/// Circular sector centered on an agent's heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    range: f64,
    angle: f64,
}

impl SectorSpec {
    /// `angle` is the full central angle; the sector spans `angle / 2` on each side.
    pub fn new(range: f64, angle: f64) -> Result<Self> {
        let ok =
            range.is_finite() && range > 0.0 && angle.is_finite() && angle > 0.0 && angle < TAU;
        if !ok {
            return Err(Error::InvalidSector { range, angle });
        }
        Ok(Self { range, angle })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn half_angle(&self) -> f64 {
        self.angle / 2.0
    }
}

/// Whether `point` lies in the closed sector attached to `owner`.
///
/// Both the range and the angular bound are inclusive. A point on top of the
/// owner counts as inside.
pub fn in_sector(owner: &Pose, point: (f64, f64), spec: &SectorSpec) -> bool {
    if owner.distance_to(point) > spec.range {
        return false;
    }
    match owner.bearing_to(point) {
        None => true,
        Some(bearing) => wrap_angle(bearing - owner.heading).abs() <= spec.half_angle(),
    }
}
