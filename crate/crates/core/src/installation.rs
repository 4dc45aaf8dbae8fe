//! Arm base placement search.
//!
//! A candidate placement is a lateral offset `D` between the arm base and the
//! near face of its canopy plus a heading rotation `θ`. Each candidate is
//! scored by how many points of a regular canopy grid the arm can reach.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::yaw_samples_deg;
use crate::kinematics::{inverse_kinematics, JointConfig, JointLimits, ScaraGeometry, TargetPose};
use crate::layout::{ArmMount, FpaBox, Side};
use crate::par::{map_indexed, Parallelism};

#[derive(Debug, Error)]
pub enum InstallError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("collection pose violates the joint limits")]
    StartOutOfLimits,
    #[error("no candidate placement reaches any canopy point")]
    NoReach,
}

/// Inclusive sample range `min, min + step, ..., <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl StepRange {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn single(value: f64) -> Self {
        Self { min: value, max: value, step: 1.0 }
    }

    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-6).floor() as usize + 1
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count()).map(|i| self.value(i)).collect()
    }

    fn validate(&self, name: &str) -> Result<(), InstallError> {
        let finite = self.min.is_finite() && self.max.is_finite() && self.step.is_finite();
        if !finite || self.step <= 0.0 || self.max < self.min {
            return Err(InstallError::InvalidSpace(format!("{name} range {self:?}")));
        }
        Ok(())
    }
}

/// How the yaw samples of a canopy point combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YawRule {
    /// Reachable with at least one sampled yaw.
    Any,
    /// Reachable with every sampled yaw.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawCriterion {
    pub yaws: Vec<f64>,
    pub rule: YawRule,
}

impl YawCriterion {
    pub fn zero() -> Self {
        Self { yaws: vec![0.0], rule: YawRule::Any }
    }

    /// Some yaw within ±45°.
    pub fn some_in_range() -> Self {
        Self { yaws: yaw_samples_deg(-45.0, 45.0, 5.0), rule: YawRule::Any }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstallSearchSpace {
    /// Base-to-canopy lateral offset `D` (meters).
    pub offset: StepRange,
    /// Heading rotation (radians); positive turns the arm toward -y.
    pub theta: StepRange,
    pub fpa: FpaBox,
    pub resolution: f64,
    /// Canopy points are sampled over `[-along_half, along_half]` around the
    /// base; wide enough to contain the whole reach.
    pub along_half: f64,
    pub base_height: f64,
    pub yaw: YawCriterion,
}

impl Default for InstallSearchSpace {
    fn default() -> Self {
        let deg = 1f64.to_radians();
        Self {
            offset: StepRange::new(0.0, 0.5, 0.01),
            theta: StepRange::new(-90.0 * deg, 90.0 * deg, 5.0 * deg),
            fpa: FpaBox::default(),
            resolution: 0.01,
            along_half: 0.5,
            base_height: 0.37,
            yaw: YawCriterion::zero(),
        }
    }
}

impl InstallSearchSpace {
    pub fn validate(&self) -> Result<(), InstallError> {
        self.offset.validate("offset")?;
        self.theta.validate("theta")?;
        let positive = [self.resolution, self.fpa.depth, self.fpa.height, self.along_half];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(InstallError::InvalidSpace(
                "resolution and canopy extents must be positive".into(),
            ));
        }
        if self.yaw.yaws.is_empty() {
            return Err(InstallError::InvalidSpace("no yaw samples".into()));
        }
        Ok(())
    }

    pub fn grid(&self, side: Side) -> FpaGrid {
        let r = self.resolution;
        let steps = |span: f64| (span / r + 1e-6).floor() as usize + 1;
        let (z0, _) = self.fpa.z_range();
        FpaGrid {
            side,
            face: self.fpa.face,
            base_height: self.base_height,
            depth: (0..steps(self.fpa.depth)).map(|i| i as f64 * r).collect(),
            along: (0..steps(2.0 * self.along_half))
                .map(|i| -self.along_half + i as f64 * r)
                .collect(),
            z: (0..steps(self.fpa.height)).map(|i| z0 + i as f64 * r).collect(),
            yaw: self.yaw.clone(),
        }
    }
}

/// Regular canopy grid on one side: the product of depth (from the canopy
/// face), along-row (relative to the arm base) and height samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpaGrid {
    pub side: Side,
    pub face: f64,
    pub base_height: f64,
    pub depth: Vec<f64>,
    pub along: Vec<f64>,
    pub z: Vec<f64>,
    pub yaw: YawCriterion,
}

impl FpaGrid {
    pub fn len(&self) -> usize {
        self.depth.len() * self.along.len() * self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mount(&self, offset: f64, theta: f64) -> ArmMount {
        ArmMount::facing(self.side, self.face, offset, 0.0, self.base_height, theta)
    }

    /// Vehicle-frame position of grid point `(i, j, k)`.
    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let sign = self.side.mirror_sign();
        [sign * (self.face + self.depth[i]), self.along[j], self.z[k]]
    }

    fn reachable(&self, geom: &ScaraGeometry, limits: &JointLimits, mount: &ArmMount, p: [f64; 3]) -> bool {
        let ok = |psi: f64| {
            let local = mount.to_arm_frame(&TargetPose::new(p[0], p[1], p[2], psi));
            inverse_kinematics(geom, limits, &local).is_ok()
        };
        match self.yaw.rule {
            YawRule::Any => self.yaw.yaws.iter().any(|&y| ok(y)),
            YawRule::All => self.yaw.yaws.iter().all(|&y| ok(y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstallResult {
    pub offset: f64,
    pub theta_left: f64,
    pub theta_right: f64,
    pub reachable_left: usize,
    pub reachable_right: usize,
    pub reachable_count: usize,
    pub total_count: usize,
}

/// Number of grid points with a valid IK solution for the arm placed at
/// `offset`, `theta`.
///
/// Height enters the IK only through the lift joint, so the count factors
/// into (heights within lift range) x (planar points reachable).
pub fn reachability_count(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    offset: f64,
    theta: f64,
    grid: &FpaGrid,
) -> usize {
    if grid.is_empty() {
        return 0;
    }
    let mount = grid.mount(offset, theta);
    let z_ok = grid
        .z
        .iter()
        .filter(|&&z| limits.lift.contains(z - mount.height - geom.ee_z_offset()))
        .count();
    if z_ok == 0 {
        return 0;
    }
    // any admissible height works for the planar test
    let z_ref = grid
        .z
        .iter()
        .copied()
        .find(|&z| limits.lift.contains(z - mount.height - geom.ee_z_offset()))
        .expect("z_ok > 0");
    let mut planar = 0;
    for i in 0..grid.depth.len() {
        for j in 0..grid.along.len() {
            let [x, y, _] = grid.point(i, j, 0);
            if grid.reachable(geom, limits, &mount, [x, y, z_ref]) {
                planar += 1;
            }
        }
    }
    planar * z_ok
}

/// Exhaustive scan over every `(D, θ)` candidate. Both arms share `D`; their
/// headings are chosen independently. Ties go to the smaller `D`, then the
/// smaller `θ`.
pub fn optimize_installation(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    start: &JointConfig,
    space: &InstallSearchSpace,
    mode: Parallelism,
) -> Result<InstallResult, InstallError> {
    space.validate()?;
    if !limits.admits(start) {
        return Err(InstallError::StartOutOfLimits);
    }
    let grids = [space.grid(Side::Left), space.grid(Side::Right)];
    let (nd, nt) = (space.offset.count(), space.theta.count());

    // counts[(d * nt + t) * 2 + side]
    let counts = map_indexed(mode, nd * nt * 2, |k| {
        let (dt, s) = (k / 2, k % 2);
        let (d, t) = (dt / nt, dt % nt);
        reachability_count(geom, limits, space.offset.value(d), space.theta.value(t), &grids[s])
    });

    let best_theta = |d: usize, s: usize| {
        let at = |t: usize| counts[(d * nt + t) * 2 + s];
        let mut best = (0, at(0));
        for t in 1..nt {
            if at(t) > best.1 {
                best = (t, at(t));
            }
        }
        best
    };

    let mut best: Option<(usize, (usize, usize), (usize, usize))> = None;
    for d in 0..nd {
        let l = best_theta(d, 0);
        let r = best_theta(d, 1);
        let better = match best {
            None => true,
            Some((_, bl, br)) => l.1 + r.1 > bl.1 + br.1,
        };
        if better {
            best = Some((d, l, r));
        }
    }
    let (d, l, r) = best.expect("at least one candidate");
    if l.1 + r.1 == 0 {
        return Err(InstallError::NoReach);
    }
    Ok(InstallResult {
        offset: space.offset.value(d),
        theta_left: space.theta.value(l.0),
        theta_right: space.theta.value(r.0),
        reachable_left: l.1,
        reachable_right: r.1,
        reachable_count: l.1 + r.1,
        total_count: grids[0].len() + grids[1].len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm() -> (ScaraGeometry, JointLimits, JointConfig) {
        (
            ScaraGeometry::harvester(),
            JointLimits::harvester(),
            JointConfig::collection_pose(),
        )
    }

    fn coarse() -> InstallSearchSpace {
        InstallSearchSpace {
            offset: StepRange::new(0.1, 0.4, 0.05),
            theta: StepRange::new(0.0, 90f64.to_radians(), 15f64.to_radians()),
            resolution: 0.03,
            ..InstallSearchSpace::default()
        }
    }

    fn pointwise(g: &ScaraGeometry, l: &JointLimits, d: f64, th: f64, grid: &FpaGrid) -> usize {
        let m = grid.mount(d, th);
        let mut n = 0;
        for i in 0..grid.depth.len() {
            for j in 0..grid.along.len() {
                for k in 0..grid.z.len() {
                    n += grid.reachable(g, l, &m, grid.point(i, j, k)) as usize;
                }
            }
        }
        n
    }

    #[test]
    fn factored_count_matches_pointwise() {
        let (g, l, _) = arm();
        let mut space = coarse();
        space.fpa.z_min = 0.2; // some heights below the lift range
        for side in [Side::Left, Side::Right] {
            let grid = space.grid(side);
            for (d, th) in [(0.1, 0.0), (0.26, 0.7), (0.35, -0.3)] {
                assert_eq!(reachability_count(&g, &l, d, th, &grid), pointwise(&g, &l, d, th, &grid));
            }
        }
    }

    #[test]
    fn empty_grid_counts_zero() {
        let (g, l, _) = arm();
        let mut grid = coarse().grid(Side::Right);
        grid.along.clear();
        assert_eq!(reachability_count(&g, &l, 0.2, 0.0, &grid), 0);
    }

    #[test]
    fn canopy_beyond_reach_is_error() {
        let (g, l, s) = arm();
        let space = InstallSearchSpace {
            offset: StepRange::new(0.6, 0.8, 0.1),
            ..coarse()
        };
        let err = optimize_installation(&g, &l, &s, &space, Parallelism::Sequential).unwrap_err();
        assert!(matches!(err, InstallError::NoReach));
    }

    #[test]
    fn single_candidate_returned() {
        let (g, l, s) = arm();
        let space = InstallSearchSpace {
            offset: StepRange::single(0.2),
            theta: StepRange::single(0.3),
            ..coarse()
        };
        let r = optimize_installation(&g, &l, &s, &space, Parallelism::Sequential).unwrap();
        assert_eq!((r.offset, r.theta_left, r.theta_right), (0.2, 0.3, 0.3));
        let c = reachability_count(&g, &l, 0.2, 0.3, &space.grid(Side::Right));
        assert_eq!(r.reachable_right, c);
        assert_eq!(r.reachable_count, 2 * c);
    }

    #[test]
    fn mirrored_sides_pick_same_heading() {
        let (g, l, s) = arm();
        let r = optimize_installation(&g, &l, &s, &coarse(), Parallelism::Sequential).unwrap();
        assert_eq!(r.theta_left, r.theta_right);
        assert_eq!(r.reachable_left, r.reachable_right);
        assert!(r.reachable_count <= r.total_count);
    }

    #[test]
    fn bad_space_rejected() {
        let (g, l, s) = arm();
        let mut space = coarse();
        space.offset.step = 0.0;
        assert!(optimize_installation(&g, &l, &s, &space, Parallelism::Sequential).is_err());
    }
}
