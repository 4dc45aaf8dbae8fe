//! Comparison strategies.
//!
//! *FOV*: the vehicle advances one camera window at a time and both arms
//! pick everything in the current window. *Serial*: one side of the row is
//! harvested completely, with optimal stops, before the other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::Side;
use crate::model::{FruitMap, HarvestPlan, ModelError, SchedulingInstance};
use crate::solver::{solve, SolveError, SolveReport, SolverConfig};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("fruits not reachable from their window stop: {0:?}")]
    UnreachableAtWindow(Vec<u32>),
    #[error("invalid window width {0}")]
    Width(f64),
    #[error("fruit map does not match the instance")]
    Mismatch,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovParams {
    /// Along-row extent covered per stop (m).
    pub fov_width: f64,
    /// Also stop (and pay the restart time) in windows without fruit.
    pub stop_empty: bool,
}

/// Widest window the default arm layout covers from the window's start for
/// every canopy pose with yaw in ±45°.
pub const DEFAULT_FOV_WIDTH: f64 = 0.1;

impl Default for FovParams {
    fn default() -> Self {
        Self {
            fov_width: DEFAULT_FOV_WIDTH,
            stop_empty: false,
        }
    }
}

fn nearest_stop(stops: &[f64], s: f64) -> usize {
    let mut best = 0;
    for (p, &v) in stops.iter().enumerate() {
        if (v - s).abs() < (stops[best] - s).abs() {
            best = p;
        }
    }
    best
}

/// Stops at `k·w` for windows `[k·w, (k+1)·w)` covering the row, each fruit
/// picked from its own window's stop.
pub fn fov_plan(
    fruits: &FruitMap,
    inst: &SchedulingInstance,
    params: &FovParams,
) -> Result<HarvestPlan, BaselineError> {
    let w = params.fov_width;
    if !(w.is_finite() && w > 0.0) {
        return Err(BaselineError::Width(w));
    }
    let all: Vec<_> = fruits.left.iter().chain(&fruits.right).collect();
    if all.len() != inst.n_fruits() || all.iter().enumerate().any(|(f, x)| x.id != inst.fruit_id(f)) {
        return Err(BaselineError::Mismatch);
    }
    let windows = ((fruits.row_length / w) - 1e-9).ceil().max(1.0) as usize;
    let window_stop: Vec<usize> = (0..windows)
        .map(|k| nearest_stop(inst.stops(), k as f64 * w))
        .collect();

    let mut assignment = Vec::with_capacity(all.len());
    let mut unreachable = Vec::new();
    for (f, fruit) in all.iter().enumerate() {
        let k = ((fruit.y / w).floor() as usize).min(windows - 1);
        let p = window_stop[k];
        if inst.cost(f, p).is_none() {
            unreachable.push(fruit.id);
        }
        assignment.push(p);
    }
    if !unreachable.is_empty() {
        return Err(BaselineError::UnreachableAtWindow(unreachable));
    }
    let mut selected = if params.stop_empty {
        window_stop
    } else {
        assignment.clone()
    };
    selected.sort_unstable();
    selected.dedup();
    Ok(HarvestPlan::new(inst, selected, assignment)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialOutcome {
    /// Left side alone, solved on the left-only instance.
    pub left: SolveReport,
    pub right: SolveReport,
    /// Both passes, each with its own traversal.
    pub total_time: f64,
}

impl SerialOutcome {
    pub fn num_stops(&self) -> usize {
        self.left.plan.num_stops() + self.right.plan.num_stops()
    }

    pub fn solver_time(&self) -> f64 {
        self.left.wall_time + self.right.wall_time
    }

    /// The two passes merged into one dual-arm plan over `inst`: same stops
    /// and assignments, one traversal.
    pub fn union_plan(&self, inst: &SchedulingInstance) -> Result<HarvestPlan, ModelError> {
        let assignment = self
            .left
            .plan
            .assignment
            .iter()
            .chain(&self.right.plan.assignment)
            .copied()
            .collect();
        HarvestPlan::from_assignment(inst, assignment)
    }
}

/// Harvests the left side, then the right, each pass solved exactly on its
/// own single-side instance.
pub fn serial_plan(inst: &SchedulingInstance, config: &SolverConfig) -> Result<SerialOutcome, BaselineError> {
    let left = solve(&inst.side_only(Side::Left), config)?;
    let right = solve(&inst.side_only(Side::Right), config)?;
    let total_time = left.plan.objective + right.plan.objective;
    Ok(SerialOutcome {
        left,
        right,
        total_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fruit;

    fn row(ys: &[f64], side: Side, first_id: u32) -> Vec<Fruit> {
        ys.iter()
            .enumerate()
            .map(|(k, &y)| Fruit {
                id: first_id + k as u32,
                side,
                x: side.mirror_sign() * 0.4,
                y,
                z: 0.5,
                psi: 0.0,
            })
            .collect()
    }

    /// Every fruit reachable from every stop at cost 1.
    fn flat(map: &FruitMap) -> SchedulingInstance {
        let stops: Vec<f64> = (0..=200).map(|p| p as f64 * 0.01).collect();
        let l: Vec<Vec<f64>> = map.left.iter().map(|_| vec![1.0; stops.len()]).collect();
        let r: Vec<Vec<f64>> = map.right.iter().map(|_| vec![1.0; stops.len()]).collect();
        SchedulingInstance::from_matrices(stops, &l, &r, 5.0, 20.0).unwrap()
    }

    #[test]
    fn seven_windows_of_thirty_cm() {
        let ys: Vec<f64> = (0..7).map(|k| 0.3 * k as f64 + 0.1).collect();
        let map = FruitMap { row_length: 2.0, left: row(&ys, Side::Left, 0), right: vec![] };
        let plan = fov_plan(&map, &flat(&map), &FovParams { fov_width: 0.3, stop_empty: false }).unwrap();
        assert_eq!(plan.selected_stops, vec![0, 30, 60, 90, 120, 150, 180]);
    }

    #[test]
    fn empty_windows_skipped_unless_asked() {
        let map = FruitMap { row_length: 2.0, left: row(&[0.05, 1.95], Side::Left, 0), right: vec![] };
        let inst = flat(&map);
        let skip = fov_plan(&map, &inst, &FovParams { fov_width: 0.3, stop_empty: false }).unwrap();
        assert_eq!(skip.num_stops(), 2);
        let all = fov_plan(&map, &inst, &FovParams { fov_width: 0.3, stop_empty: true }).unwrap();
        assert_eq!(all.num_stops(), 7);
        assert_eq!(all.objective, skip.objective + 5.0 * 5.0);
    }

    #[test]
    fn no_fruits_only_travel() {
        let map = FruitMap { row_length: 2.0, left: vec![], right: vec![] };
        let plan = fov_plan(&map, &flat(&map), &FovParams::default()).unwrap();
        assert_eq!((plan.num_stops(), plan.objective), (0, 20.0));
    }

    #[test]
    fn unreachable_window_reported() {
        let map = FruitMap { row_length: 2.0, left: row(&[0.5], Side::Left, 4), right: vec![] };
        let stops: Vec<f64> = (0..=200).map(|p| p as f64 * 0.01).collect();
        let mut costs = vec![f64::INFINITY; 201];
        costs[10] = 1.0;
        let inst = SchedulingInstance::from_matrices(stops, &[costs], &[], 5.0, 20.0).unwrap();
        let mut map = map;
        map.left[0].id = 0;
        match fov_plan(&map, &inst, &FovParams::default()) {
            Err(BaselineError::UnreachableAtWindow(ids)) => assert_eq!(ids, vec![0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serial_one_sided_row() {
        let map = FruitMap { row_length: 2.0, left: row(&[0.2, 1.2], Side::Left, 0), right: vec![] };
        let inst = flat(&map);
        let s = serial_plan(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(s.right.plan.objective, 20.0);
        assert_eq!(s.total_time, s.left.plan.objective + 20.0);
        let u = s.union_plan(&inst).unwrap();
        assert_eq!(u.objective, s.left.plan.objective);
    }
}
