//! Scheduling instances and harvest plans.
//!
//! A [`SchedulingInstance`] holds the candidate stops and, for every fruit,
//! its pick cost from every stop (`f64::INFINITY` where the arm cannot reach
//! it). A [`HarvestPlan`] picks stops, sends each fruit to one of them, and
//! costs out as
//!
//! ```text
//! T = Σ_p max(C^L_p, C^R_p) + τ · #stops + T_travel
//! ```
//!
//! where `C^L_p`, `C^R_p` are the summed pick costs of the left and right arm
//! at stop `p`.

mod mps;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::{CostTable, CostmapError};
use crate::kinematics::TargetPose;
use crate::layout::Side;
use crate::par::{map_indexed, Parallelism};

pub use mps::{export_mps, plan_from_columns, MpsNames};

/// Objectives closer than this are treated as equal when ranking plans.
pub const OBJECTIVE_TIE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid fruit map: {0}")]
    InvalidFruits(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("fruits unreachable from every stop: {0:?}")]
    InfeasibleFruit(Vec<u32>),
    #[error("{kind:?} violated by {ids:?}")]
    ConstraintViolation { kind: ViolationKind, ids: Vec<u32> },
    #[error("cost table query failed for fruit {id}: {source}")]
    Table { id: u32, source: CostmapError },
    #[error("instance too large for fixed MPS names: {0}")]
    MpsTooLarge(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// What a rejected plan got wrong. Ids are fruit ids, except for
/// `StopIndex` and `DuplicateStop` where they are stop indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Fewer or more assignment entries than fruits.
    AssignmentLength,
    StopIndex,
    DuplicateStop,
    UnselectedStop,
    UnreachableAssignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fruit {
    pub id: u32,
    pub side: Side,
    /// Lateral position in the vehicle frame; left fruits have `x < 0`.
    pub x: f64,
    /// Distance along the row from its start.
    pub y: f64,
    pub z: f64,
    /// Side-relative yaw.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FruitFile {
    row_length: f64,
    fruits: Vec<Fruit>,
}

/// Pre-mapped fruits of one row segment, split by side. Stored on disk as
/// `{"row_length": L, "fruits": [{id, side, x, y, z, psi}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FruitFile", into = "FruitFile")]
pub struct FruitMap {
    pub row_length: f64,
    pub left: Vec<Fruit>,
    pub right: Vec<Fruit>,
}

impl TryFrom<FruitFile> for FruitMap {
    type Error = ModelError;

    fn try_from(f: FruitFile) -> Result<Self, ModelError> {
        let (left, right) = f.fruits.into_iter().partition(|x| x.side == Side::Left);
        let map = FruitMap {
            row_length: f.row_length,
            left,
            right,
        };
        map.validate()?;
        Ok(map)
    }
}

impl From<FruitMap> for FruitFile {
    fn from(m: FruitMap) -> Self {
        FruitFile {
            row_length: m.row_length,
            fruits: m.left.into_iter().chain(m.right).collect(),
        }
    }
}

impl FruitMap {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidFruits(msg));
        if !(self.row_length.is_finite() && self.row_length > 0.0) {
            return bad(format!("row length {}", self.row_length));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (side, list) in [(Side::Left, &self.left), (Side::Right, &self.right)] {
            for f in list {
                if f.side != side {
                    return bad(format!("fruit {} listed on the wrong side", f.id));
                }
                if !ids.insert(f.id) {
                    return bad(format!("duplicate id {}", f.id));
                }
                if ![f.x, f.y, f.z, f.psi].iter().all(|v| v.is_finite()) {
                    return bad(format!("fruit {} has a non-finite coordinate", f.id));
                }
                if !(0.0..=self.row_length).contains(&f.y) {
                    return bad(format!("fruit {} lies outside the row (y = {})", f.id, f.y));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self, side: Side) -> &[Fruit] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    /// Restart time charged per stop (s).
    pub tau: f64,
    /// Vehicle speed along the row (m/s).
    pub speed: f64,
    /// Spacing of candidate stops (m).
    pub stop_resolution: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            tau: 5.0,
            speed: 0.1,
            stop_resolution: 0.01,
        }
    }
}

impl InstanceParams {
    pub fn stop_positions(&self, row_length: f64) -> Vec<f64> {
        let n = (row_length / self.stop_resolution + 1e-9).floor() as usize + 1;
        (0..n).map(|p| p as f64 * self.stop_resolution).collect()
    }

    pub fn travel_time(&self, row_length: f64) -> f64 {
        row_length / self.speed
    }
}

/// Cost matrices of one row. Fruits are indexed left first, then right,
/// each side in fruit-map order.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingInstance {
    stops: Vec<f64>,
    ids: Vec<u32>,
    n_left: usize,
    /// Row-major `[fruit][stop]`, infinite where unreachable.
    costs: Vec<f64>,
    tau: f64,
    travel_time: f64,
}

impl SchedulingInstance {
    /// Builds an instance from per-side matrices (`f64::INFINITY` marks an
    /// unreachable pair). Fruit ids are assigned `0..` in index order.
    pub fn from_matrices(
        stops: Vec<f64>,
        left: &[Vec<f64>],
        right: &[Vec<f64>],
        tau: f64,
        travel_time: f64,
    ) -> Result<Self, ModelError> {
        let inst = Self::from_matrices_allow_infeasible(stops, left, right, tau, travel_time)?;
        inst.check_feasible()?;
        Ok(inst)
    }

    /// As [`from_matrices`](Self::from_matrices) but keeps fruits that no stop
    /// reaches. Such an instance has no feasible plan; solvers and the MPS
    /// writer reject it.
    pub fn from_matrices_allow_infeasible(
        stops: Vec<f64>,
        left: &[Vec<f64>],
        right: &[Vec<f64>],
        tau: f64,
        travel_time: f64,
    ) -> Result<Self, ModelError> {
        let n = stops.len();
        let rows = left.iter().chain(right);
        let mut costs = Vec::with_capacity((left.len() + right.len()) * n);
        for row in rows {
            if row.len() != n {
                return Err(ModelError::InvalidInstance(format!(
                    "cost row has {} entries for {n} stops",
                    row.len()
                )));
            }
            costs.extend_from_slice(row);
        }
        let ids = (0..(left.len() + right.len()) as u32).collect();
        Self::assemble(stops, ids, left.len(), costs, tau, travel_time)
    }

    fn assemble(
        stops: Vec<f64>,
        ids: Vec<u32>,
        n_left: usize,
        costs: Vec<f64>,
        tau: f64,
        travel_time: f64,
    ) -> Result<Self, ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidInstance(m.into()));
        if stops.iter().any(|s| !s.is_finite()) || stops.windows(2).any(|w| w[0] >= w[1]) {
            return bad("stops must be finite and strictly increasing");
        }
        if costs.iter().any(|c| c.is_nan() || *c < 0.0 || *c == f64::NEG_INFINITY) {
            return bad("costs must be non-negative");
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return bad("tau must be non-negative");
        }
        if !(travel_time.is_finite() && travel_time >= 0.0) {
            return bad("travel time must be non-negative");
        }
        Ok(Self {
            stops,
            ids,
            n_left,
            costs,
            tau,
            travel_time,
        })
    }

    fn check_feasible(&self) -> Result<(), ModelError> {
        let bad = self.infeasible_fruits();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InfeasibleFruit(bad))
        }
    }

    /// Ids of fruits with no reachable stop.
    pub fn infeasible_fruits(&self) -> Vec<u32> {
        (0..self.n_fruits())
            .filter(|&f| self.row(f).iter().all(|c| c.is_infinite()))
            .map(|f| self.ids[f])
            .collect()
    }

    pub fn stops(&self) -> &[f64] {
        &self.stops
    }

    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }

    pub fn n_fruits(&self) -> usize {
        self.ids.len()
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.ids.len() - self.n_left
    }

    pub fn fruit_id(&self, f: usize) -> u32 {
        self.ids[f]
    }

    pub fn side(&self, f: usize) -> Side {
        if f < self.n_left {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Costs of fruit `f` at every stop.
    pub fn row(&self, f: usize) -> &[f64] {
        let n = self.stops.len();
        &self.costs[f * n..(f + 1) * n]
    }

    pub fn cost(&self, f: usize, p: usize) -> Option<f64> {
        let c = self.costs[f * self.stops.len() + p];
        c.is_finite().then_some(c)
    }

    /// `(stop, cost)` for every stop that reaches fruit `f`.
    pub fn reachable(&self, f: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(f)
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_finite())
            .map(|(p, c)| (p, *c))
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn travel_time(&self) -> f64 {
        self.travel_time
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self { tau, ..self.clone() }
    }

    /// The same row with only one side's fruits.
    pub fn side_only(&self, side: Side) -> Self {
        let n = self.stops.len();
        let range = match side {
            Side::Left => 0..self.n_left,
            Side::Right => self.n_left..self.n_fruits(),
        };
        Self {
            stops: self.stops.clone(),
            ids: self.ids[range.clone()].to_vec(),
            n_left: if side == Side::Left { self.n_left } else { 0 },
            costs: self.costs[range.start * n..range.end * n].to_vec(),
            tau: self.tau,
            travel_time: self.travel_time,
        }
    }
}

/// Queries both arm tables at every (fruit, stop) pair. A fruit whose
/// along-row offset from a stop falls outside its table is unreachable from
/// that stop; lateral, height or yaw outside the table is an error.
pub fn build_instance(
    fruits: &FruitMap,
    table_left: &CostTable,
    table_right: &CostTable,
    params: &InstanceParams,
    mode: Parallelism,
) -> Result<SchedulingInstance, ModelError> {
    fruits.validate()?;
    if !(params.stop_resolution > 0.0 && params.speed > 0.0) {
        return Err(ModelError::InvalidInstance(
            "stop resolution and speed must be positive".into(),
        ));
    }
    let stops = params.stop_positions(fruits.row_length);
    let all: Vec<&Fruit> = fruits.left.iter().chain(&fruits.right).collect();
    let rows = map_indexed(mode, all.len(), |k| {
        let f = all[k];
        let table = match f.side {
            Side::Left => table_left,
            Side::Right => table_right,
        };
        fruit_costs(f, table, &stops)
    });
    let mut costs = Vec::with_capacity(all.len() * stops.len());
    for row in rows {
        costs.extend(row?);
    }
    let ids = all.iter().map(|f| f.id).collect();
    let travel = params.travel_time(fruits.row_length);
    let inst = SchedulingInstance::assemble(stops, ids, fruits.left.len(), costs, params.tau, travel)?;
    inst.check_feasible()?;
    Ok(inst)
}

fn fruit_costs(f: &Fruit, table: &CostTable, stops: &[f64]) -> Result<Vec<f64>, ModelError> {
    let err = |source| ModelError::Table { id: f.id, source };
    // lateral and height bounds do not depend on the stop
    let probe = TargetPose::new(f.x, table.spec.y.min, f.z, f.psi);
    table.spec.snap(&probe).map_err(err)?;
    stops
        .iter()
        .map(|s| {
            let pose = TargetPose::new(f.x, f.y - s, f.z, f.psi);
            if !table.spec.covers_y(pose.y) {
                return Ok(f64::INFINITY);
            }
            let [ix, iy, iz, ip] = table.spec.snap(&pose).map_err(err)?;
            Ok(table.get(ix, iy, iz, ip).unwrap_or(f64::INFINITY))
        })
        .collect()
}

/// Durations at one selected stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopLoad {
    pub stop: usize,
    pub left: f64,
    pub right: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestPlan {
    /// Selected stop indices, ascending.
    pub selected_stops: Vec<usize>,
    /// Stop index per fruit, in instance order.
    pub assignment: Vec<usize>,
    /// One entry per selected stop.
    pub loads: Vec<StopLoad>,
    pub objective: f64,
}

impl HarvestPlan {
    /// Validates and costs out a plan.
    pub fn new(
        inst: &SchedulingInstance,
        selected_stops: Vec<usize>,
        assignment: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let (loads, objective) = cost_out(inst, &selected_stops, &assignment)?;
        Ok(Self {
            selected_stops,
            assignment,
            loads,
            objective,
        })
    }

    /// Plan whose selected stops are exactly the stops in use.
    pub fn from_assignment(inst: &SchedulingInstance, assignment: Vec<usize>) -> Result<Self, ModelError> {
        let mut used = assignment.clone();
        used.sort_unstable();
        used.dedup();
        Self::new(inst, used, assignment)
    }

    pub fn num_stops(&self) -> usize {
        self.selected_stops.len()
    }

    /// Ranking used everywhere plans are compared: lower objective first,
    /// objectives within [`OBJECTIVE_TIE`] fall back to the lexicographically
    /// smaller stop set, then the smaller assignment.
    pub fn precedes(&self, other: &HarvestPlan) -> bool {
        precedes(
            self.objective,
            &self.selected_stops,
            &self.assignment,
            other.objective,
            &other.selected_stops,
            &other.assignment,
        )
    }
}

pub(crate) fn precedes(a_obj: f64, a_stops: &[usize], a_asg: &[usize], b_obj: f64, b_stops: &[usize], b_asg: &[usize]) -> bool {
    if a_obj < b_obj - OBJECTIVE_TIE {
        return true;
    }
    if a_obj > b_obj + OBJECTIVE_TIE {
        return false;
    }
    (a_stops, a_asg) < (b_stops, b_asg)
}

fn violation(kind: ViolationKind, ids: Vec<u32>) -> ModelError {
    ModelError::ConstraintViolation { kind, ids }
}

fn cost_out(
    inst: &SchedulingInstance,
    selected: &[usize],
    assignment: &[usize],
) -> Result<(Vec<StopLoad>, f64), ModelError> {
    let n = inst.n_fruits();
    if assignment.len() != n {
        let ids = if assignment.len() < n {
            (assignment.len()..n).map(|f| inst.fruit_id(f)).collect()
        } else {
            Vec::new()
        };
        return Err(violation(ViolationKind::AssignmentLength, ids));
    }
    let bad_stops: Vec<u32> = selected
        .iter()
        .filter(|&&p| p >= inst.n_stops())
        .map(|&p| p as u32)
        .collect();
    if !bad_stops.is_empty() {
        return Err(violation(ViolationKind::StopIndex, bad_stops));
    }
    let dup: Vec<u32> = selected
        .windows(2)
        .filter(|w| w[0] >= w[1])
        .map(|w| w[1] as u32)
        .collect();
    if !dup.is_empty() {
        return Err(violation(ViolationKind::DuplicateStop, dup));
    }

    let mut slot = vec![usize::MAX; inst.n_stops()];
    for (k, &p) in selected.iter().enumerate() {
        slot[p] = k;
    }
    let mut unselected = Vec::new();
    let mut unreachable = Vec::new();
    for (f, &p) in assignment.iter().enumerate() {
        if p >= inst.n_stops() || slot[p] == usize::MAX {
            unselected.push(inst.fruit_id(f));
        } else if inst.cost(f, p).is_none() {
            unreachable.push(inst.fruit_id(f));
        }
    }
    if !unselected.is_empty() {
        return Err(violation(ViolationKind::UnselectedStop, unselected));
    }
    if !unreachable.is_empty() {
        return Err(violation(ViolationKind::UnreachableAssignment, unreachable));
    }

    let mut loads: Vec<StopLoad> = selected
        .iter()
        .map(|&stop| StopLoad {
            stop,
            left: 0.0,
            right: 0.0,
            duration: 0.0,
        })
        .collect();
    for (f, &p) in assignment.iter().enumerate() {
        let c = inst.row(f)[p];
        let l = &mut loads[slot[p]];
        match inst.side(f) {
            Side::Left => l.left += c,
            Side::Right => l.right += c,
        }
    }
    let mut total = 0.0;
    for l in &mut loads {
        l.duration = l.left.max(l.right);
        total += l.duration;
    }
    let objective = total + inst.tau() * selected.len() as f64 + inst.travel_time();
    Ok((loads, objective))
}

/// Recomputes the plan's objective from scratch, rejecting any plan that
/// breaks an assignment, stop-selection or reachability constraint.
pub fn evaluate_plan(inst: &SchedulingInstance, plan: &HarvestPlan) -> Result<f64, ModelError> {
    cost_out(inst, &plan.selected_stops, &plan.assignment).map(|(_, t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: f64 = f64::INFINITY;

    fn two_by_two() -> SchedulingInstance {
        SchedulingInstance::from_matrices(vec![0.0, 0.5], &[vec![3.0, 4.0]], &[vec![X, 2.0]], 5.0, 20.0).unwrap()
    }

    #[test]
    fn empty_instance_costs_travel_only() {
        let inst = SchedulingInstance::from_matrices(vec![0.0, 1.0], &[], &[], 5.0, 20.0).unwrap();
        let plan = HarvestPlan::new(&inst, vec![], vec![]).unwrap();
        assert_eq!(evaluate_plan(&inst, &plan).unwrap(), 20.0);
    }

    #[test]
    fn single_fruit_single_stop() {
        let inst = SchedulingInstance::from_matrices(vec![0.0], &[vec![4.0]], &[], 5.0, 20.0).unwrap();
        let plan = HarvestPlan::from_assignment(&inst, vec![0]).unwrap();
        assert_eq!(plan.objective, 29.0);
    }

    #[test]
    fn stop_duration_is_slower_arm() {
        let inst = two_by_two();
        let plan = HarvestPlan::from_assignment(&inst, vec![1, 1]).unwrap();
        assert_eq!(plan.loads[0].duration, 4.0);
        assert_eq!(plan.objective, 4.0 + 5.0 + 20.0);
        let split = HarvestPlan::from_assignment(&inst, vec![0, 1]).unwrap();
        assert_eq!(split.objective, 3.0 + 2.0 + 10.0 + 20.0);
    }

    #[test]
    fn violations_reported() {
        let inst = two_by_two();
        let err = |sel: Vec<usize>, asg: Vec<usize>| match HarvestPlan::new(&inst, sel, asg) {
            Err(ModelError::ConstraintViolation { kind, ids }) => (kind, ids),
            other => panic!("{other:?}"),
        };
        assert_eq!(err(vec![0], vec![0, 1]), (ViolationKind::UnselectedStop, vec![1]));
        assert_eq!(err(vec![0, 1], vec![0, 0]), (ViolationKind::UnreachableAssignment, vec![1]));
        assert_eq!(err(vec![0, 1], vec![0]), (ViolationKind::AssignmentLength, vec![1]));
        assert_eq!(err(vec![1, 1], vec![1, 1]), (ViolationKind::DuplicateStop, vec![1]));
        assert_eq!(err(vec![0, 7], vec![0, 1]), (ViolationKind::StopIndex, vec![7]));
    }

    #[test]
    fn infeasible_fruit_flagged() {
        match SchedulingInstance::from_matrices(vec![0.0, 1.0], &[vec![X, X]], &[vec![1.0, X]], 5.0, 20.0) {
            Err(ModelError::InfeasibleFruit(ids)) => assert_eq!(ids, vec![0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn side_only_keeps_ids() {
        let inst = two_by_two();
        let r = inst.side_only(Side::Right);
        assert_eq!((r.n_left(), r.n_right()), (0, 1));
        assert_eq!(r.fruit_id(0), 1);
        assert_eq!(r.cost(0, 1), Some(2.0));
        let l = inst.side_only(Side::Left);
        assert_eq!((l.n_left(), l.n_right()), (1, 0));
    }

    #[test]
    fn stop_grid_size() {
        let p = InstanceParams::default();
        assert_eq!(p.stop_positions(2.0).len(), 201);
        assert_eq!(p.travel_time(2.0), 20.0);
    }

    #[test]
    fn fruit_map_json_round_trip() {
        let map = FruitMap {
            row_length: 2.0,
            left: vec![Fruit { id: 3, side: Side::Left, x: -0.4, y: 1.0, z: 0.5, psi: 0.1 }],
            right: vec![Fruit { id: 7, side: Side::Right, x: 0.4, y: 0.2, z: 0.6, psi: -0.2 }],
        };
        let text = serde_json::to_string(&map).unwrap();
        assert!(text.contains("\"fruits\""));
        let back: FruitMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, map);
        let dup = text.replace("\"id\":7", "\"id\":3");
        assert!(serde_json::from_str::<FruitMap>(&dup).is_err());
    }
}
