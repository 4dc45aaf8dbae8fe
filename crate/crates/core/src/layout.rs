//! Vehicle frame, fruit-planted area and arm placement.
//!
//! Vehicle frame: `y` runs along the row in the travel direction, `x` is
//! lateral with the right row at positive `x`, `z` is height above the
//! platform. A stop position shifts the vehicle along `y` only.
//!
//! Fruit yaw is side-relative: zero means approaching straight along the
//! outward row normal, positive leans toward +y on both sides. The left arm
//! is the mirror image of the right one across the `x = 0` plane, so a left
//! target `(x, y, z, ψ)` is handled as the right-side target `(-x, y, z, ψ)`.

use serde::{Deserialize, Serialize};

use crate::kinematics::TargetPose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn mirror_sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Base placement of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMount {
    pub side: Side,
    /// Lateral distance of the base from the vehicle centerline (meters).
    pub lateral: f64,
    /// Base position along the row relative to the stop reference (meters).
    pub along: f64,
    /// Base height above the platform (meters).
    pub height: f64,
    /// Base heading rotation away from the row normal toward -y (radians).
    pub theta: f64,
}

impl ArmMount {
    /// Expresses a vehicle-frame target in the arm-base frame.
    pub fn to_arm_frame(&self, pose: &TargetPose) -> TargetPose {
        let dx = self.side.mirror_sign() * pose.x - self.lateral;
        let dy = pose.y - self.along;
        let (s, c) = self.theta.sin_cos();
        TargetPose {
            x: c * dx - s * dy,
            y: s * dx + c * dy,
            z: pose.z - self.height,
            psi: crate::kinematics::normalize_angle(pose.psi + self.theta),
        }
    }

    /// Inverse of [`ArmMount::to_arm_frame`].
    pub fn to_vehicle_frame(&self, pose: &TargetPose) -> TargetPose {
        let (s, c) = self.theta.sin_cos();
        let dx = c * pose.x + s * pose.y;
        let dy = -s * pose.x + c * pose.y;
        TargetPose {
            x: self.side.mirror_sign() * (dx + self.lateral),
            y: dy + self.along,
            z: pose.z + self.height,
            psi: crate::kinematics::normalize_angle(pose.psi - self.theta),
        }
    }

    /// Mount with the base `offset` meters in from a fruit-planted area whose
    /// near face lies `face` meters from the centerline.
    pub fn facing(side: Side, face: f64, offset: f64, along: f64, height: f64, theta: f64) -> Self {
        Self {
            side,
            lateral: face - offset,
            along,
            height,
            theta,
        }
    }

    pub fn mirrored(&self) -> Self {
        Self {
            side: match self.side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            },
            ..*self
        }
    }
}

/// Box occupied by one row's canopy, mirrored onto both sides of the aisle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpaBox {
    /// Lateral distance of the canopy's near face from the centerline.
    pub face: f64,
    /// Canopy depth away from the aisle.
    pub depth: f64,
    /// Height of the canopy bottom above the platform.
    pub z_min: f64,
    pub height: f64,
    pub row_length: f64,
}

impl Default for FpaBox {
    /// 0.7 m aisle, 0.15 m deep and 0.4 m tall canopy on a 2 m row.
    fn default() -> Self {
        Self {
            face: 0.35,
            depth: 0.15,
            z_min: 0.40,
            height: 0.40,
            row_length: 2.0,
        }
    }
}

impl FpaBox {
    /// Lateral extent `(min, max)` of the canopy on `side`.
    pub fn lateral_range(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Right => (self.face, self.face + self.depth),
            Side::Left => (-self.face - self.depth, -self.face),
        }
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z_min, self.z_min + self.height)
    }
}

/// Both arm placements, as chosen by the installation search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleLayout {
    pub fpa: FpaBox,
    /// Lateral distance from each arm base to its canopy face.
    pub offset: f64,
    pub theta_left: f64,
    pub theta_right: f64,
    /// Arm bases sit this far ahead of the stop reference point.
    pub along: f64,
    pub base_height: f64,
}

impl Default for VehicleLayout {
    fn default() -> Self {
        Self {
            fpa: FpaBox::default(),
            offset: DEFAULT_OFFSET,
            theta_left: DEFAULT_THETA_DEG.to_radians(),
            theta_right: DEFAULT_THETA_DEG.to_radians(),
            along: DEFAULT_ALONG,
            base_height: 0.37,
        }
    }
}

/// Installation optimum for the default arm and canopy (see `installation`).
pub const DEFAULT_OFFSET: f64 = 0.27;
pub const DEFAULT_THETA_DEG: f64 = 35.0;
/// Puts the along-row band that the arm reaches for every canopy depth,
/// height and yaw in ±45° at roughly `[-0.01, 0.11]` from the stop reference.
pub const DEFAULT_ALONG: f64 = 0.095;

impl VehicleLayout {
    pub fn mount(&self, side: Side) -> ArmMount {
        let theta = match side {
            Side::Left => self.theta_left,
            Side::Right => self.theta_right,
        };
        ArmMount::facing(side, self.fpa.face, self.offset, self.along, self.base_height, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_inverse() {
        for side in [Side::Left, Side::Right] {
            let m = ArmMount { side, lateral: 0.09, along: 0.12, height: 0.37, theta: 0.7 };
            let p = TargetPose::new(side.mirror_sign() * 0.42, 0.31, 0.55, -0.4);
            let q = m.to_vehicle_frame(&m.to_arm_frame(&p));
            assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12);
            assert!((p.z - q.z).abs() < 1e-12 && (p.psi - q.psi).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_targets_coincide_in_arm_frame() {
        let r = ArmMount { side: Side::Right, lateral: 0.1, along: 0.0, height: 0.37, theta: 0.5 };
        let l = r.mirrored();
        let a = r.to_arm_frame(&TargetPose::new(0.4, 0.2, 0.6, 0.3));
        let b = l.to_arm_frame(&TargetPose::new(-0.4, 0.2, 0.6, 0.3));
        assert_eq!(a, b);
    }

    #[test]
    fn heading_rotates_toward_rear() {
        // a point straight behind-and-out at 45° lies on the arm x-axis for θ = 45°
        let m = ArmMount { side: Side::Right, lateral: 0.0, along: 0.0, height: 0.0, theta: std::f64::consts::FRAC_PI_4 };
        let a = m.to_arm_frame(&TargetPose::new(0.3, -0.3, 0.0, 0.0));
        assert!(a.y.abs() < 1e-12 && a.x > 0.0);
    }
}
