//! SCARA kinematics and the joint motion-time model.
//!
//! The arm is a vertical lift (prismatic joint) carrying three revolute
//! joints about parallel vertical axes: shoulder, elbow and wrist. Poses are
//! expressed in the arm-base frame; yaw is measured counterclockwise about
//! +z and is zero along +x, which is also the direction the whole chain
//! points at zero configuration.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when comparing joint values against their limits, so that
/// configurations sitting exactly on a bound survive a FK/IK round trip.
pub const LIMIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid joint limits: {0}")]
    Limits(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scara config: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Linear,
    Rotation,
}

/// Range and motion limits of one joint. Units are meters for linear joints
/// and radians for rotational ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub kind: JointKind,
    pub range_lo: f64,
    pub range_hi: f64,
    pub max_speed: f64,
    pub max_accel: f64,
}

impl JointSpec {
    pub fn new(kind: JointKind, range: (f64, f64), max_speed: f64, max_accel: f64) -> Self {
        Self {
            kind,
            range_lo: range.0,
            range_hi: range.1,
            max_speed,
            max_accel,
        }
    }

    fn validate(&self, name: &str) -> Result<(), KinematicsError> {
        if !(self.range_lo < self.range_hi) {
            return Err(KinematicsError::Limits(format!(
                "{name}: range_lo must be below range_hi"
            )));
        }
        if !(self.max_speed > 0.0 && self.max_accel > 0.0) {
            return Err(KinematicsError::Limits(format!(
                "{name}: speed and acceleration limits must be positive"
            )));
        }
        Ok(())
    }

    /// Whether `value` lies in the joint range (with [`LIMIT_TOLERANCE`]).
    pub fn contains(&self, value: f64) -> bool {
        value >= self.range_lo - LIMIT_TOLERANCE && value <= self.range_hi + LIMIT_TOLERANCE
    }

    /// Maps a revolute angle onto the representative (modulo 2π) that lies
    /// inside the range, preferring the one closest to zero.
    fn fit_angle(&self, angle: f64) -> Option<f64> {
        [angle, angle - 2.0 * PI, angle + 2.0 * PI]
            .into_iter()
            .filter(|a| self.contains(*a))
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .map(|a| a.clamp(self.range_lo, self.range_hi))
    }
}

/// Limits of the four joints in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lift: JointSpec,
    pub shoulder: JointSpec,
    pub elbow: JointSpec,
    pub wrist: JointSpec,
}

impl JointLimits {
    /// Joint table of the dual-arm harvester.
    #[allow(clippy::approx_constant)]
    pub fn harvester() -> Self {
        Self {
            lift: JointSpec::new(JointKind::Linear, (0.0, 0.5), 0.1, 0.1),
            shoulder: JointSpec::new(JointKind::Rotation, (-1.57, 1.57), 0.2, 0.2),
            elbow: JointSpec::new(JointKind::Rotation, (0.0, 2.8), 0.2, 0.2),
            wrist: JointSpec::new(JointKind::Rotation, (-3.14, 3.14), 0.2, 0.2),
        }
    }

    pub fn joints(&self) -> [&JointSpec; 4] {
        [&self.lift, &self.shoulder, &self.elbow, &self.wrist]
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        self.lift.validate("lift")?;
        self.shoulder.validate("shoulder")?;
        self.elbow.validate("elbow")?;
        self.wrist.validate("wrist")?;
        if self.lift.kind != JointKind::Linear {
            return Err(KinematicsError::Limits("lift joint must be linear".into()));
        }
        for (name, j) in [
            ("shoulder", &self.shoulder),
            ("elbow", &self.elbow),
            ("wrist", &self.wrist),
        ] {
            if j.kind != JointKind::Rotation {
                return Err(KinematicsError::Limits(format!("{name} joint must rotate")));
            }
        }
        Ok(())
    }

    /// Whether every joint of `q` is within its range.
    pub fn admits(&self, q: &JointConfig) -> bool {
        self.joints()
            .iter()
            .zip(q.as_array())
            .all(|(spec, v)| spec.contains(v))
    }
}

/// Link geometry. `link_origins` are the zero-configuration frame origins of
/// link1..link4 and the end-effector, relative to the arm base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaraGeometry {
    pub base_height: f64,
    pub link_origins: [[f64; 3]; 5],
    pub arm_base_separation: f64,
}

impl ScaraGeometry {
    pub fn harvester() -> Self {
        Self {
            base_height: 0.37,
            link_origins: [
                [0.02, 0.0, 0.07],
                [0.08, 0.0, 0.10],
                [0.23, 0.0, 0.10],
                [0.38, 0.0, 0.10],
                [0.53, 0.0, -0.03],
            ],
            arm_base_separation: 0.47,
        }
    }

    fn planar_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn upper_arm_len(&self) -> f64 {
        Self::planar_distance(self.link_origins[1], self.link_origins[2])
    }

    pub fn forearm_len(&self) -> f64 {
        Self::planar_distance(self.link_origins[2], self.link_origins[3])
    }

    pub fn wrist_len(&self) -> f64 {
        Self::planar_distance(self.link_origins[3], self.link_origins[4])
    }

    /// Planar position of the shoulder axis in the arm-base frame.
    pub fn shoulder(&self) -> (f64, f64) {
        (self.link_origins[1][0], self.link_origins[1][1])
    }

    /// End-effector height above the base when the lift is at zero.
    pub fn ee_z_offset(&self) -> f64 {
        self.link_origins[4][2]
    }

    /// Largest planar distance from the shoulder axis the end-effector can reach.
    pub fn max_reach(&self) -> f64 {
        self.upper_arm_len() + self.forearm_len() + self.wrist_len()
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        for len in [self.upper_arm_len(), self.forearm_len(), self.wrist_len()] {
            if !(len > 0.0) {
                return Err(KinematicsError::Geometry(
                    "link lengths must be strictly positive".into(),
                ));
            }
        }
        // the chain must be straight along +x at zero configuration
        for o in &self.link_origins[1..] {
            if o[1].abs() > 1e-12 {
                return Err(KinematicsError::Geometry(
                    "links must lie on the arm x-axis at zero configuration".into(),
                ));
            }
        }
        for w in self.link_origins[1..].windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(KinematicsError::Geometry(
                    "link origins must advance along +x".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointConfig {
    /// Lift travel, meters.
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl JointConfig {
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self { q1, q2, q3, q4 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.q1, self.q2, self.q3, self.q4]
    }

    /// Pose the arm returns to after each pick: half lift, elbow folded,
    /// wrist straight.
    pub fn collection_pose() -> Self {
        Self::new(0.25, 0.0, 1.5, 0.0)
    }
}

/// End-effector target: position plus approach yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
}

impl TargetPose {
    pub fn new(x: f64, y: f64, z: f64, psi: f64) -> Self {
        Self { x, y, z, psi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
pub enum Unreachable {
    #[error("target outside the reachable annulus")]
    OutOfAnnulus,
    #[error("no solution within joint limits")]
    JointLimit,
    #[error("target height outside lift range")]
    ZRange,
}

/// Wraps an angle to [-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid maps π to -π; keep π itself
    if r == -PI && a > 0.0 {
        PI
    } else {
        r
    }
}

pub fn forward_kinematics(geom: &ScaraGeometry, q: &JointConfig) -> TargetPose {
    let (sx, sy) = geom.shoulder();
    let a1 = q.q2;
    let a2 = a1 + q.q3;
    let a3 = a2 + q.q4;
    let (l1, l2, l3) = (geom.upper_arm_len(), geom.forearm_len(), geom.wrist_len());
    TargetPose {
        x: sx + l1 * a1.cos() + l2 * a2.cos() + l3 * a3.cos(),
        y: sy + l1 * a1.sin() + l2 * a2.sin() + l3 * a3.sin(),
        z: geom.ee_z_offset() + q.q1,
        psi: normalize_angle(a3),
    }
}

/// Closed-form IK. Among admissible elbow branches the one with the smaller
/// `|q3|` wins, then the non-negative one.
pub fn inverse_kinematics(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    target: &TargetPose,
) -> Result<JointConfig, Unreachable> {
    let q1 = target.z - geom.ee_z_offset();
    if !limits.lift.contains(q1) {
        return Err(Unreachable::ZRange);
    }
    let q1 = q1.clamp(limits.lift.range_lo, limits.lift.range_hi);

    let (sx, sy) = geom.shoulder();
    let (l1, l2, l3) = (geom.upper_arm_len(), geom.forearm_len(), geom.wrist_len());
    let wx = target.x - l3 * target.psi.cos() - sx;
    let wy = target.y - l3 * target.psi.sin() - sy;
    let r2 = wx * wx + wy * wy;
    let c = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&c) {
        return Err(Unreachable::OutOfAnnulus);
    }
    let c = c.clamp(-1.0, 1.0);
    let s = (1.0 - c * c).sqrt();
    let elbow = s.atan2(c);

    let mut best: Option<JointConfig> = None;
    let branches: &[f64] = if elbow == 0.0 { &[0.0] } else { &[elbow, -elbow] };
    for &q3_raw in branches {
        let q2_raw = wy.atan2(wx) - (l2 * q3_raw.sin()).atan2(l1 + l2 * q3_raw.cos());
        let Some(q2) = limits.shoulder.fit_angle(normalize_angle(q2_raw)) else {
            continue;
        };
        let Some(q3) = limits.elbow.fit_angle(q3_raw) else {
            continue;
        };
        let Some(q4) = limits.wrist.fit_angle(normalize_angle(target.psi - q2 - q3)) else {
            continue;
        };
        let cand = JointConfig { q1, q2, q3, q4 };
        best = match best {
            None => Some(cand),
            Some(b) if cand.q3.abs() < b.q3.abs() => Some(cand),
            Some(b) if cand.q3.abs() == b.q3.abs() && cand.q3 >= 0.0 && b.q3 < 0.0 => Some(cand),
            keep => keep,
        };
    }
    best.ok_or(Unreachable::JointLimit)
}

/// Rest-to-rest travel time over `displacement` (non-negative) under a
/// symmetric accelerate/cruise/decelerate profile. Short moves never reach
/// cruise speed and follow the triangular branch.
pub fn joint_motion_time(joint: &JointSpec, displacement: f64) -> f64 {
    let d = displacement.abs();
    let v = joint.max_speed;
    let a = joint.max_accel;
    if d >= v * v / a {
        d / v + v / a
    } else {
        2.0 * (d / a).sqrt()
    }
}

/// Time for the slowest joint to complete the move; joints run concurrently.
pub fn config_move_time(limits: &JointLimits, from: &JointConfig, to: &JointConfig) -> f64 {
    limits
        .joints()
        .iter()
        .zip(from.as_array().iter().zip(to.as_array()))
        .map(|(spec, (a, b))| joint_motion_time(spec, (b - a).abs()))
        .fold(0.0, f64::max)
}

/// One joint entry of `scara.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub name: String,
    pub kind: JointKind,
    pub range: [f64; 2],
    pub max_speed: f64,
    pub max_accel: f64,
}

/// On-disk arm description (`scara.json`).
///
/// Joints are listed in any order; the single `linear` joint is taken as the
/// vertical lift and the `rotation` joints are taken, in listed order, as
/// shoulder, elbow and wrist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaraConfig {
    pub geometry: ScaraGeometry,
    pub joints: Vec<JointEntry>,
}

impl ScaraConfig {
    pub fn harvester() -> Self {
        let limits = JointLimits::harvester();
        let joints = limits
            .joints()
            .iter()
            .enumerate()
            .map(|(i, j)| JointEntry {
                name: format!("joint{}", i + 1),
                kind: j.kind,
                range: [j.range_lo, j.range_hi],
                max_speed: j.max_speed,
                max_accel: j.max_accel,
            })
            .collect();
        Self {
            geometry: ScaraGeometry::harvester(),
            joints,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KinematicsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Validates the description and maps the joints onto the lift and the
    /// three revolute axes.
    pub fn resolve(&self) -> Result<(ScaraGeometry, JointLimits), KinematicsError> {
        self.geometry.validate()?;
        let spec = |e: &JointEntry| JointSpec::new(e.kind, (e.range[0], e.range[1]), e.max_speed, e.max_accel);
        let linear: Vec<_> = self.joints.iter().filter(|j| j.kind == JointKind::Linear).collect();
        let rotary: Vec<_> = self.joints.iter().filter(|j| j.kind == JointKind::Rotation).collect();
        if linear.len() != 1 || rotary.len() != 3 {
            return Err(KinematicsError::Limits(
                "expected exactly one linear and three rotation joints".into(),
            ));
        }
        let limits = JointLimits {
            lift: spec(linear[0]),
            shoulder: spec(rotary[0]),
            elbow: spec(rotary[1]),
            wrist: spec(rotary[2]),
        };
        limits.validate()?;
        Ok((self.geometry, limits))
    }
}
