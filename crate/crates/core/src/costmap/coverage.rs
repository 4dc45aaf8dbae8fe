use serde::{Deserialize, Serialize};

use super::{yaw_samples_deg, AxisRange};
use crate::kinematics::{inverse_kinematics, JointLimits, ScaraGeometry, TargetPose};

/// Reachability category of a cross-section cell, weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoverageClass {
    Unreachable,
    /// Reachable with some yaw, none of them in the picking range.
    PositionOnly,
    /// Some yaw in the picking range works.
    SomeYawInRange,
    /// Zero yaw works.
    ZeroYaw,
    /// Every sampled yaw in the picking range works.
    AllYawInRange,
}

impl CoverageClass {
    pub const ALL: [CoverageClass; 5] = [
        CoverageClass::Unreachable,
        CoverageClass::PositionOnly,
        CoverageClass::SomeYawInRange,
        CoverageClass::ZeroYaw,
        CoverageClass::AllYawInRange,
    ];
}

/// Horizontal slice through the arm workspace, in the arm-base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub x: AxisRange,
    pub y: AxisRange,
    pub resolution: f64,
    pub z: f64,
    /// Picking yaw range samples; must include 0.
    pub in_range_yaws: Vec<f64>,
    /// Samples used to decide plain position reachability.
    pub position_yaws: Vec<f64>,
}

impl Default for CrossSection {
    fn default() -> Self {
        Self {
            x: AxisRange::new(-0.40, 0.55),
            y: AxisRange::new(-0.55, 0.55),
            resolution: 0.01,
            z: 0.2,
            in_range_yaws: yaw_samples_deg(-45.0, 45.0, 5.0),
            position_yaws: yaw_samples_deg(-180.0, 175.0, 5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub unreachable: usize,
    pub position_only: usize,
    pub some_yaw_in_range: usize,
    pub zero_yaw: usize,
    pub all_yaw_in_range: usize,
}

impl CoverageCounts {
    fn bump(&mut self, c: CoverageClass) {
        match c {
            CoverageClass::Unreachable => self.unreachable += 1,
            CoverageClass::PositionOnly => self.position_only += 1,
            CoverageClass::SomeYawInRange => self.some_yaw_in_range += 1,
            CoverageClass::ZeroYaw => self.zero_yaw += 1,
            CoverageClass::AllYawInRange => self.all_yaw_in_range += 1,
        }
    }

    /// Number of cells whose class is `c` or stronger.
    pub fn at_least(&self, c: CoverageClass) -> usize {
        let ordered = [
            self.unreachable,
            self.position_only,
            self.some_yaw_in_range,
            self.zero_yaw,
            self.all_yaw_in_range,
        ];
        ordered[c as usize..].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMap {
    pub nx: usize,
    pub ny: usize,
    /// Row-major, y fastest.
    pub classes: Vec<CoverageClass>,
    pub counts: CoverageCounts,
}

impl CoverageMap {
    pub fn class_at(&self, ix: usize, iy: usize) -> CoverageClass {
        self.classes[ix * self.ny + iy]
    }
}

pub fn classify_coverage(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    section: &CrossSection,
) -> CoverageMap {
    let r = section.resolution;
    let nx = ((section.x.max - section.x.min) / r + 1e-6).floor() as usize + 1;
    let ny = ((section.y.max - section.y.min) / r + 1e-6).floor() as usize + 1;

    let mut classes = Vec::with_capacity(nx * ny);
    let mut counts = CoverageCounts::default();
    for ix in 0..nx {
        for iy in 0..ny {
            let x = section.x.min + ix as f64 * r;
            let y = section.y.min + iy as f64 * r;
            let ok = |psi: f64| {
                inverse_kinematics(geom, limits, &TargetPose { x, y, z: section.z, psi }).is_ok()
            };
            let in_range: Vec<bool> = section.in_range_yaws.iter().map(|&p| ok(p)).collect();
            let class = if !in_range.is_empty() && in_range.iter().all(|b| *b) && ok(0.0) {
                CoverageClass::AllYawInRange
            } else if ok(0.0) {
                CoverageClass::ZeroYaw
            } else if in_range.iter().any(|b| *b) {
                CoverageClass::SomeYawInRange
            } else if section.position_yaws.iter().any(|&p| ok(p)) {
                CoverageClass::PositionOnly
            } else {
                CoverageClass::Unreachable
            };
            counts.bump(class);
            classes.push(class);
        }
    }
    CoverageMap {
        nx,
        ny,
        classes,
        counts,
    }
}
