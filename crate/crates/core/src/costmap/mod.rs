//! Precomputed harvest-motion cost table `G(x, y, z, ψ)`.
//!
//! Each cell holds the time the arm needs to move from its collection pose to
//! the cell pose, or [`UNREACHABLE`] when the pose has no admissible IK
//! solution. Cells are addressed in the vehicle frame (see [`crate::layout`]),
//! so a table belongs to one arm mount.

mod coverage;
mod io;

pub use coverage::{classify_coverage, CoverageClass, CoverageCounts, CoverageMap, CrossSection};
pub use io::{read_table, write_table, CmapHeader, CMAP_MAGIC};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    config_move_time, inverse_kinematics, JointConfig, JointLimits, ScaraGeometry, TargetPose,
};
use crate::layout::{ArmMount, FpaBox, Side, VehicleLayout};
use crate::par::{fill_indexed, Parallelism};

/// Storage marker for cells the arm cannot reach.
pub const UNREACHABLE: f64 = f64::INFINITY;

#[derive(Debug, Error)]
pub enum CostmapError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("collection pose violates the joint limits")]
    StartOutOfLimits,
    #[error("{axis} = {value} lies outside the table bounds")]
    OutOfBounds { axis: &'static str, value: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table file: {0}")]
    Format(String),
    #[error("payload checksum mismatch")]
    Checksum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
}

impl AxisRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: AxisRange,
    pub y: AxisRange,
    pub z: AxisRange,
    pub resolution: f64,
    /// Sorted yaw samples (radians).
    pub psi_values: Vec<f64>,
}

/// Yaw samples every `step_deg` over `[lo_deg, hi_deg]`, in radians.
pub fn yaw_samples_deg(lo_deg: f64, hi_deg: f64, step_deg: f64) -> Vec<f64> {
    let n = ((hi_deg - lo_deg) / step_deg + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| (lo_deg + k as f64 * step_deg).to_radians())
        .collect()
}

impl GridSpec {
    /// Table covering one side's canopy box, `along_half` meters either way
    /// along the row, at 1 cm and every 5° of yaw in [-45°, 45°].
    pub fn for_fpa(fpa: &FpaBox, side: Side, along_half: f64) -> Self {
        let (x0, x1) = fpa.lateral_range(side);
        let (z0, z1) = fpa.z_range();
        Self {
            x: AxisRange::new(x0, x1),
            y: AxisRange::new(-along_half, along_half),
            z: AxisRange::new(z0, z1),
            resolution: 0.01,
            psi_values: yaw_samples_deg(-45.0, 45.0, 5.0),
        }
    }

    pub fn validate(&self) -> Result<(), CostmapError> {
        if !(self.resolution > 0.0) {
            return Err(CostmapError::InvalidSpec("resolution must be positive".into()));
        }
        for (name, a) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if !(a.max >= a.min) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(CostmapError::InvalidSpec(format!("{name} range is degenerate")));
            }
        }
        if self.psi_values.is_empty() {
            return Err(CostmapError::InvalidSpec("psi list is empty".into()));
        }
        if self.psi_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CostmapError::InvalidSpec("psi list must be strictly increasing".into()));
        }
        Ok(())
    }

    fn axis_len(&self, a: AxisRange) -> usize {
        ((a.max - a.min) / self.resolution + 1e-6).floor() as usize + 1
    }

    /// `[nx, ny, nz, npsi]`.
    pub fn shape(&self) -> [usize; 4] {
        [
            self.axis_len(self.x),
            self.axis_len(self.y),
            self.axis_len(self.z),
            self.psi_values.len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index; yaw varies fastest, then z, then y, then x.
    pub fn flat_index(&self, ix: usize, iy: usize, iz: usize, ipsi: usize) -> usize {
        let [_, ny, nz, np] = self.shape();
        ((ix * ny + iy) * nz + iz) * np + ipsi
    }

    pub fn unflatten(&self, idx: usize) -> [usize; 4] {
        let [_, ny, nz, np] = self.shape();
        let ipsi = idx % np;
        let rest = idx / np;
        let iz = rest % nz;
        let rest = rest / nz;
        [rest / ny, rest % ny, iz, ipsi]
    }

    pub fn cell_pose(&self, ix: usize, iy: usize, iz: usize, ipsi: usize) -> TargetPose {
        let r = self.resolution;
        TargetPose {
            x: self.x.min + ix as f64 * r,
            y: self.y.min + iy as f64 * r,
            z: self.z.min + iz as f64 * r,
            psi: self.psi_values[ipsi],
        }
    }

    fn snap_axis(&self, a: AxisRange, n: usize, v: f64, axis: &'static str) -> Result<usize, CostmapError> {
        let k = ((v - a.min) / self.resolution).round();
        if !(k >= 0.0 && k <= (n - 1) as f64) {
            return Err(CostmapError::OutOfBounds { axis, value: v });
        }
        Ok(k as usize)
    }

    /// Nearest sampled yaw; ties go to the lower sample.
    pub fn snap_psi(&self, psi: f64) -> usize {
        let mut best = 0;
        for (k, p) in self.psi_values.iter().enumerate() {
            if (p - psi).abs() < (self.psi_values[best] - psi).abs() {
                best = k;
            }
        }
        best
    }

    /// Nearest cell for a vehicle-frame pose. Yaw always snaps to the closest
    /// sample; positions outside the box are an error.
    pub fn snap(&self, pose: &TargetPose) -> Result<[usize; 4], CostmapError> {
        let [nx, ny, nz, _] = self.shape();
        Ok([
            self.snap_axis(self.x, nx, pose.x, "x")?,
            self.snap_axis(self.y, ny, pose.y, "y")?,
            self.snap_axis(self.z, nz, pose.z, "z")?,
            self.snap_psi(pose.psi),
        ])
    }

    /// Whether `y` snaps inside the along-row extent.
    pub fn covers_y(&self, y: f64) -> bool {
        let n = self.axis_len(self.y);
        self.snap_axis(self.y, n, y, "y").is_ok()
    }
}

/// Dense cost table for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub spec: GridSpec,
    pub mount: ArmMount,
    pub start_config: JointConfig,
    pub(crate) values: Vec<f64>,
}

/// Cost of one vehicle-frame pose for a mounted arm, computed directly.
pub fn direct_cost(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    mount: &ArmMount,
    start: &JointConfig,
    pose: &TargetPose,
) -> Option<f64> {
    let target = mount.to_arm_frame(pose);
    inverse_kinematics(geom, limits, &target)
        .ok()
        .map(|q| config_move_time(limits, start, &q))
}

pub fn build_cost_table(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    mount: &ArmMount,
    start: &JointConfig,
    spec: GridSpec,
    mode: Parallelism,
) -> Result<CostTable, CostmapError> {
    spec.validate()?;
    if !limits.admits(start) {
        return Err(CostmapError::StartOutOfLimits);
    }
    let mut values = vec![UNREACHABLE; spec.len()];
    fill_indexed(mode, &mut values, |idx| {
        let [ix, iy, iz, ip] = spec.unflatten(idx);
        direct_cost(geom, limits, mount, start, &spec.cell_pose(ix, iy, iz, ip)).unwrap_or(UNREACHABLE)
    });
    Ok(CostTable {
        spec,
        mount: *mount,
        start_config: *start,
        values,
    })
}

/// Along-row half width of the tables built by [`build_layout_tables`].
pub const DEFAULT_ALONG_HALF: f64 = 0.5;

/// Left and right tables for a layout, each over its side of the canopy box.
pub fn build_layout_tables(
    geom: &ScaraGeometry,
    limits: &JointLimits,
    layout: &VehicleLayout,
    start: &JointConfig,
    mode: Parallelism,
) -> Result<(CostTable, CostTable), CostmapError> {
    let table = |side| {
        let spec = GridSpec::for_fpa(&layout.fpa, side, DEFAULT_ALONG_HALF);
        build_cost_table(geom, limits, &layout.mount(side), start, spec, mode)
    };
    Ok((table(Side::Left)?, table(Side::Right)?))
}

impl CostTable {
    pub fn from_parts(
        spec: GridSpec,
        mount: ArmMount,
        start_config: JointConfig,
        values: Vec<f64>,
    ) -> Result<Self, CostmapError> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(CostmapError::Format(format!(
                "expected {} values, found {}",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(CostmapError::Format("negative or NaN cost".into()));
        }
        Ok(Self {
            spec,
            mount,
            start_config,
            values,
        })
    }

    /// Raw storage, [`UNREACHABLE`] included.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize, ipsi: usize) -> Option<f64> {
        let v = self.values[self.spec.flat_index(ix, iy, iz, ipsi)];
        v.is_finite().then_some(v)
    }

    pub fn reachable_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

/// Cost at the grid cell nearest to `pose`; `Ok(None)` when unreachable.
pub fn query_cost(table: &CostTable, pose: &TargetPose) -> Result<Option<f64>, CostmapError> {
    let [ix, iy, iz, ip] = table.spec.snap(pose)?;
    Ok(table.get(ix, iy, iz, ip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;

    fn identity_mount() -> ArmMount {
        ArmMount {
            side: Side::Right,
            lateral: 0.0,
            along: 0.0,
            height: 0.0,
            theta: 0.0,
        }
    }

    fn small_spec() -> GridSpec {
        GridSpec {
            x: AxisRange::new(0.1, 0.3),
            y: AxisRange::new(-0.1, 0.1),
            z: AxisRange::new(0.1, 0.12),
            resolution: 0.02,
            psi_values: yaw_samples_deg(-20.0, 20.0, 10.0),
        }
    }

    #[test]
    fn shape_and_index_round_trip() {
        let s = small_spec();
        assert_eq!(s.shape(), [11, 11, 2, 5]);
        for idx in [0, 1, 17, 300, s.len() - 1] {
            let [a, b, c, d] = s.unflatten(idx);
            assert_eq!(s.flat_index(a, b, c, d), idx);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small_spec();
        s.resolution = 0.0;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.psi_values.clear();
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.psi_values = vec![0.2, 0.1];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.x = AxisRange::new(0.3, 0.1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn start_must_respect_limits() {
        let g = ScaraGeometry::harvester();
        let l = JointLimits::harvester();
        let bad = JointConfig::new(0.7, 0.0, 0.0, 0.0);
        let r = build_cost_table(&g, &l, &identity_mount(), &bad, small_spec(), Parallelism::Sequential);
        assert!(matches!(r, Err(CostmapError::StartOutOfLimits)));
    }

    #[test]
    fn collection_pose_costs_nothing() {
        let g = ScaraGeometry::harvester();
        let l = JointLimits::harvester();
        let start = JointConfig::new(0.2, 0.3, 1.2, -0.5);
        let p = forward_kinematics(&g, &start);
        let spec = GridSpec {
            x: AxisRange::new(p.x, p.x + 0.05),
            y: AxisRange::new(p.y - 0.05, p.y + 0.05),
            z: AxisRange::new(p.z, p.z + 0.02),
            resolution: 0.01,
            psi_values: vec![p.psi - 0.1, p.psi, p.psi + 0.1],
        };
        let t = build_cost_table(&g, &l, &identity_mount(), &start, spec, Parallelism::Sequential).unwrap();
        let c = t.get(0, 5, 0, 1).unwrap();
        assert!(c < 1e-6, "cost at collection pose {c}");
        assert_eq!(query_cost(&t, &p).unwrap(), Some(c));
    }

    #[test]
    fn query_snaps_and_bounds() {
        let g = ScaraGeometry::harvester();
        let l = JointLimits::harvester();
        let start = JointConfig::new(0.2, 0.0, 1.0, 0.0);
        let t = build_cost_table(&g, &l, &identity_mount(), &start, small_spec(), Parallelism::Sequential).unwrap();
        let exact = t.spec.cell_pose(3, 4, 1, 2);
        let at = query_cost(&t, &exact).unwrap();
        assert_eq!(at, t.get(3, 4, 1, 2));
        let nudged = TargetPose { x: exact.x + 0.0099, y: exact.y - 0.0099, ..exact };
        assert_eq!(query_cost(&t, &nudged).unwrap(), at);
        let outside = TargetPose { x: 0.5, ..exact };
        assert!(matches!(
            query_cost(&t, &outside),
            Err(CostmapError::OutOfBounds { axis: "x", .. })
        ));
        // yaw outside the samples snaps instead of failing
        let wide = TargetPose { psi: 1.2, ..exact };
        assert_eq!(query_cost(&t, &wide).unwrap(), t.get(3, 4, 1, 4));
    }

    #[test]
    fn beyond_reach_is_unreachable() {
        let g = ScaraGeometry::harvester();
        let l = JointLimits::harvester();
        let spec = GridSpec {
            x: AxisRange::new(0.50, 0.60),
            y: AxisRange::new(-0.3, 0.3),
            z: AxisRange::new(0.1, 0.1),
            resolution: 0.01,
            psi_values: vec![0.0],
        };
        let t = build_cost_table(&g, &l, &identity_mount(), &JointConfig::default(), spec, Parallelism::Sequential)
            .unwrap();
        let (sx, sy) = g.shoulder();
        let [nx, ny, _, _] = t.spec.shape();
        for ix in 0..nx {
            for iy in 0..ny {
                let p = t.spec.cell_pose(ix, iy, 0, 0);
                if (p.x - sx).hypot(p.y - sy) > g.max_reach() + 1e-12 {
                    assert_eq!(t.get(ix, iy, 0, 0), None);
                }
            }
        }
    }
}
