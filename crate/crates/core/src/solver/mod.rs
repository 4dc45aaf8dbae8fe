//! Exact stop selection and assignment.
//!
//! Best-first branch and bound. A node fixes some stops open or closed and
//! restricts every fruit to an interval of stop indices. Nodes are bounded
//! with the Lagrangian relaxation in [`bound`]. A stop the relaxation keeps
//! opening and closing is branched on first; otherwise one fruit's interval
//! is split, so a node where every fruit has a single allowed stop is a
//! complete plan. Picks that provably cannot improve on the incumbent are
//! banned after the root.
//!
//! Incumbents come from the greedy sweep, caller-supplied plans, the block
//! program in [`blocks`] and local search, seeded from relaxed solutions.

mod blocks;
mod bound;
mod search;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{precedes, HarvestPlan, ModelError, SchedulingInstance, OBJECTIVE_TIE};

pub use bound::restricted_lower_bound;

const ROOT_ITERATIONS: usize = 2500;
const NODE_ITERATIONS: usize = 40;
/// Local search runs on the relaxed solution every this many nodes.
const HEURISTIC_EVERY: u64 = 50;
/// Initial step scale; nodes start from their parent's multipliers.
const ROOT_STEP_SCALE: f64 = 2.0;
const NODE_STEP_SCALE: f64 = 0.25;
/// Root iterations between sampled relaxed solutions.
const ROOT_SAMPLE_EVERY: usize = 20;
/// Latest samples rounded into plans.
const ROOT_SAMPLES: usize = 16;
const STOP_SHARE: f64 = 0.1;
/// Assignment enumerations allowed in [`brute_force`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("fruits unreachable from every stop: {0:?}")]
    Infeasible(Vec<u32>),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("search space of {0:.3e} assignments exceeds the brute-force limit")]
    TooLarge(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Relative gap `(objective - bound) / objective` at which to stop.
    pub gap_tolerance: f64,
    pub node_limit: Option<u64>,
    /// Seeds the move order of the local search.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit: 60.0,
            gap_tolerance: 0.0,
            node_limit: None,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.time_limit > 0.0) {
            return Err(SolveError::Config("time limit must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gap_tolerance) {
            return Err(SolveError::Config("gap tolerance must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    GapReached,
    TimeLimit,
    NodeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapReached => "gap_reached",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub plan: HarvestPlan,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes_explored: u64,
    pub wall_time: f64,
    pub status: SolveStatus,
}

fn relative_gap(objective: f64, bound: f64) -> f64 {
    if objective > 0.0 {
        ((objective - bound) / objective).max(0.0)
    } else {
        0.0
    }
}

/// Left-to-right sweep: a stop opens when some fruit not yet covered by an
/// open stop has it as its last reachable stop. Each fruit then goes to its
/// cheapest open stop (lowest index on ties); stops left unused are dropped.
pub fn greedy_warm_start(inst: &SchedulingInstance) -> Result<HarvestPlan, SolveError> {
    check_feasible(inst)?;
    let n = inst.n_fruits();
    let last: Vec<usize> = (0..n)
        .map(|f| inst.reachable(f).map(|(p, _)| p).last().expect("feasible"))
        .collect();
    let mut covered = vec![false; n];
    let mut open = vec![false; inst.n_stops()];
    for p in 0..inst.n_stops() {
        if (0..n).any(|f| !covered[f] && last[f] == p) {
            open[p] = true;
            for f in 0..n {
                covered[f] |= inst.cost(f, p).is_some();
            }
        }
    }
    let assignment = (0..n)
        .map(|f| {
            inst.reachable(f)
                .filter(|(p, _)| open[*p])
                .fold((usize::MAX, f64::INFINITY), |b, (p, c)| if c < b.1 { (p, c) } else { b })
                .0
        })
        .collect();
    Ok(HarvestPlan::from_assignment(inst, assignment)?)
}

fn check_feasible(inst: &SchedulingInstance) -> Result<(), SolveError> {
    let bad = inst.infeasible_fruits();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(SolveError::Infeasible(bad))
    }
}

pub fn solve(inst: &SchedulingInstance, config: &SolverConfig) -> Result<SolveReport, SolveError> {
    solve_with_warm_starts(inst, config, &[])
}

struct Node {
    bound: f64,
    id: u64,
    lo: Vec<u32>,
    hi: Vec<u32>,
    fixed: Vec<bound::StopFix>,
    lambda: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    /// Max-heap order: lowest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    inst: &'a SchedulingInstance,
    config: &'a SolverConfig,
    incumbent: HarvestPlan,
    /// Smallest bound among nodes dropped only because of the gap tolerance.
    gap_floor: f64,
    /// Fruit × stop picks excluded by reduced-cost fixing at the root.
    banned: Vec<bool>,
    /// Root bounds on forcing single picks, for refixing as the incumbent
    /// improves.
    forced: Vec<(u32, usize, f64)>,
}

impl Search<'_> {
    fn offer(&mut self, assignment: Vec<usize>) {
        if let Ok(plan) = HarvestPlan::from_assignment(self.inst, assignment) {
            if plan.precedes(&self.incumbent) {
                self.incumbent = plan;
            }
        }
    }

    fn improve_and_offer(&mut self, assignment: Vec<usize>) {
        let seed = self.config.seed;
        let better = search::improve(self.inst, assignment.clone(), seed);
        let better = blocks::descend_all(self.inst, better, |a| search::improve(self.inst, a, seed));
        self.offer(assignment);
        self.offer(better);
    }

    /// Bound above which a node holds nothing worth finding.
    fn cutoff(&self) -> f64 {
        let inc = self.incumbent.objective;
        if self.config.gap_tolerance > 0.0 {
            inc * (1.0 - self.config.gap_tolerance)
        } else {
            inc + OBJECTIVE_TIE
        }
    }

    /// Whether a node with `bound` can be dropped; records gap-only drops.
    fn prune(&mut self, bound: f64) -> bool {
        if bound > self.incumbent.objective + OBJECTIVE_TIE {
            return true;
        }
        if self.config.gap_tolerance > 0.0 && bound >= self.cutoff() {
            self.gap_floor = self.gap_floor.min(bound);
            return true;
        }
        false
    }

    /// Bans every pick whose forced bound says it cannot help.
    fn fix_picks(&mut self) {
        let n = self.inst.n_stops();
        let forced = std::mem::take(&mut self.forced);
        for &(f, p, b) in &forced {
            let k = f as usize * n + p;
            if !self.banned[k] && self.prune(b) {
                self.banned[k] = true;
            }
        }
        self.forced = forced;
    }

    fn allowed(&self, node: &Node, f: usize) -> Vec<usize> {
        let n = self.inst.n_stops();
        self.inst
            .reachable(f)
            .map(|(p, _)| p)
            .filter(|&p| {
                p >= node.lo[f] as usize
                    && p <= node.hi[f] as usize
                    && !self.banned[f * n + p]
                    && node.fixed[p] != bound::StopFix::Closed
            })
            .collect()
    }

    /// Heuristic plan from a relaxed solution: open its stops, send every
    /// fruit to the cheapest open stop, opening the fruit's cheapest stop if
    /// none reaches it.
    fn round(&self, sol: &bound::RelaxedSolution) -> Vec<usize> {
        let inst = self.inst;
        let mut open = sol.open.clone();
        (0..inst.n_fruits())
            .map(|f| {
                let pick = |only_open: bool, open: &[bool]| {
                    inst.reachable(f)
                        .filter(|(p, _)| !only_open || open[*p])
                        .fold((usize::MAX, f64::INFINITY), |b, (p, c)| if c < b.1 { (p, c) } else { b })
                        .0
                };
                let mut p = pick(true, &open);
                if p == usize::MAX {
                    p = pick(false, &open);
                    open[p] = true;
                }
                p
            })
            .collect()
    }
}

/// Undecided stop the relaxation opens most ambiguously, if any is open
/// in between `STOP_SHARE` and `1 - STOP_SHARE` of the late iterations.
fn stop_branch(node: &Node, open_share: &[f64]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (p, &share) in open_share.iter().enumerate() {
        let w = share.min(1.0 - share);
        if node.fixed[p] == bound::StopFix::Free && w >= STOP_SHARE && best.is_none_or(|(bw, _)| w > bw) {
            best = Some((w, p));
        }
    }
    best.map(|(_, p)| p)
}

/// Picks the fruit to split and the split point: the new children allow
/// `lo..=mid` and `mid+1..=hi`.
fn branch_choice(s: &Search, node: &Node, sol: &bound::RelaxedSolution, lambda: &[f64]) -> Option<(usize, u32)> {
    let inst = s.inst;
    let allowed = |f: usize| s.allowed(node, f);
    // most expensive fruit the relaxation picks zero or several times
    let mut best: Option<(f64, usize)> = None;
    for f in 0..inst.n_fruits() {
        if sol.count[f] != 1 && node.lo[f] != node.hi[f] && allowed(f).len() > 1 {
            let w = lambda[f];
            if best.is_none_or(|(bw, _)| w > bw) {
                best = Some((w, f));
            }
        }
    }
    let f = match best {
        Some((_, f)) => f,
        None => {
            // relaxation picks everything once; split the widest choice
            let mut widest: Option<(usize, usize)> = None;
            for f in 0..inst.n_fruits() {
                let k = allowed(f).len();
                if k > 1 && widest.is_none_or(|(bk, _)| k > bk) {
                    widest = Some((k, f));
                }
            }
            widest?.1
        }
    };
    let stops = allowed(f);
    if stops.len() < 2 {
        return None;
    }
    let mid = if sol.count[f] >= 2 {
        let (a, b) = (sol.first[f].min(sol.second[f]), sol.first[f].max(sol.second[f]));
        (a + b) / 2
    } else if sol.count[f] == 1 {
        let p = sol.first[f];
        if p == *stops.last().expect("nonempty") {
            stops[stops.len() - 2]
        } else {
            p
        }
    } else {
        stops[(stops.len() - 1) / 2]
    };
    Some((f, mid as u32))
}

/// [`solve`] with extra starting plans; the result is never worse than the
/// best of them.
pub fn solve_with_warm_starts(
    inst: &SchedulingInstance,
    config: &SolverConfig,
    warm_starts: &[HarvestPlan],
) -> Result<SolveReport, SolveError> {
    config.validate()?;
    check_feasible(inst)?;
    let started = Instant::now();
    let deadline = started + Duration::from_secs_f64(config.time_limit.min(1e9));
    let n = inst.n_fruits();

    let greedy = greedy_warm_start(inst)?;
    let mut s = Search {
        inst,
        config,
        incumbent: greedy.clone(),
        gap_floor: f64::INFINITY,
        banned: vec![false; n * inst.n_stops()],
        forced: Vec::new(),
    };
    for w in warm_starts {
        s.offer(w.assignment.clone());
    }
    s.improve_and_offer(greedy.assignment);
    for key in blocks::keys(inst) {
        if let Some(a) = blocks::block_plan(inst, &key) {
            s.improve_and_offer(a);
        }
    }
    let best_start = s.incumbent.assignment.clone();
    s.improve_and_offer(best_start);

    if n == 0 {
        return Ok(SolveReport {
            best_bound: s.incumbent.objective,
            plan: s.incumbent,
            gap: 0.0,
            nodes_explored: 0,
            wall_time: started.elapsed().as_secs_f64(),
            status: SolveStatus::Optimal,
        });
    }

    let last = (inst.n_stops() - 1) as u32;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        lo: vec![0; n],
        hi: vec![last; n],
        fixed: vec![bound::StopFix::Free; inst.n_stops()],
        lambda: bound::initial_lambda(inst),
    });
    let mut next_id = 1u64;
    let mut nodes = 0u64;
    let mut status = None;
    let mut root_done = false;
    let mut fixed_at = f64::INFINITY;

    while let Some(node) = heap.pop() {
        if s.prune(node.bound) {
            continue;
        }
        if started.elapsed().as_secs_f64() >= config.time_limit {
            status = Some(SolveStatus::TimeLimit);
            heap.push(node);
            break;
        }
        if config.node_limit.is_some_and(|l| nodes >= l) {
            status = Some(SolveStatus::NodeLimit);
            heap.push(node);
            break;
        }
        nodes += 1;

        let Some(relax) = bound::Relaxation::new(inst, &node.lo, &node.hi, &s.banned, &node.fixed) else {
            continue;
        };
        let iterations = if root_done { NODE_ITERATIONS } else { ROOT_ITERATIONS };
        let ascent = bound::ascend(
            &relax,
            node.lambda.clone(),
            s.incumbent.objective,
            s.cutoff(),
            iterations,
            (!root_done).then_some(ROOT_SAMPLE_EVERY),
            if root_done { NODE_STEP_SCALE } else { ROOT_STEP_SCALE },
            deadline,
        );
        root_done = true;
        let bound = ascent.bound.max(node.bound);

        if !ascent.solution.count.contains(&0)
            && ascent.solution.count.iter().all(|&k| k == 1)
        {
            let assignment: Vec<usize> = ascent.solution.first.clone();
            s.offer(assignment);
        }
        if nodes == 1 || nodes % HEURISTIC_EVERY == 0 {
            let rounded = s.round(&ascent.solution);
            s.improve_and_offer(rounded);
        }
        if nodes == 1 {
            let skip = ascent.samples.len().saturating_sub(ROOT_SAMPLES);
            for sample in &ascent.samples[skip..] {
                let rounded = s.round(sample);
                s.improve_and_offer(rounded);
            }
            let kicked = search::close_kicks(inst, s.incumbent.assignment.clone(), config.seed, deadline);
            s.offer(kicked);
            s.forced = relax.forced_bounds(&ascent.lambda, ascent.bound);
        }
        if s.incumbent.objective < fixed_at {
            fixed_at = s.incumbent.objective;
            s.fix_picks();
        }
        if s.prune(bound) {
            continue;
        }

        if let Some(p) = stop_branch(&node, &ascent.open_share) {
            for (k, fix) in [bound::StopFix::Closed, bound::StopFix::Open].into_iter().enumerate() {
                let mut fixed = node.fixed.clone();
                fixed[p] = fix;
                heap.push(Node {
                    bound,
                    id: next_id + k as u64,
                    lo: node.lo.clone(),
                    hi: node.hi.clone(),
                    fixed,
                    lambda: ascent.lambda.clone(),
                });
            }
            next_id += 2;
            continue;
        }
        let Some((f, mid)) = branch_choice(&s, &node, &ascent.solution, &ascent.lambda) else {
            // every fruit has at most one allowed stop: a complete plan, or
            // nothing if picks banned since the relaxation was built emptied one
            let assignment: Option<Vec<usize>> = (0..n).map(|g| s.allowed(&node, g).first().copied()).collect();
            if let Some(a) = assignment {
                s.offer(a);
            }
            continue;
        };
        let mut left = Node {
            bound,
            id: next_id,
            lo: node.lo.clone(),
            hi: node.hi.clone(),
            fixed: node.fixed.clone(),
            lambda: ascent.lambda.clone(),
        };
        left.hi[f] = mid;
        let mut right = Node {
            bound,
            id: next_id + 1,
            lo: node.lo,
            hi: node.hi,
            fixed: node.fixed,
            lambda: ascent.lambda,
        };
        right.lo[f] = mid + 1;
        next_id += 2;
        heap.push(left);
        heap.push(right);
    }

    let objective = s.incumbent.objective;
    let open_floor = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let best_bound = objective.min(s.gap_floor).min(open_floor);
    let gap = relative_gap(objective, best_bound);
    let status = status.unwrap_or(if s.gap_floor.is_finite() && gap > 0.0 {
        SolveStatus::GapReached
    } else {
        SolveStatus::Optimal
    });
    Ok(SolveReport {
        plan: s.incumbent,
        best_bound,
        gap,
        nodes_explored: nodes,
        wall_time: started.elapsed().as_secs_f64(),
        status,
    })
}

/// Exhaustive search over every assignment of fruits to reachable stops; the
/// selected stops are the stops in use. Ties resolve as in [`solve`].
pub fn brute_force(inst: &SchedulingInstance) -> Result<SolveReport, SolveError> {
    check_feasible(inst)?;
    let started = Instant::now();
    let choices: Vec<Vec<usize>> = (0..inst.n_fruits())
        .map(|f| inst.reachable(f).map(|(p, _)| p).collect())
        .collect();
    let size: f64 = choices.iter().map(|c| c.len() as f64).product();
    if size > BRUTE_FORCE_LIMIT {
        return Err(SolveError::TooLarge(size));
    }
    let n = choices.len();
    let mut digits = vec![0usize; n];
    let mut best: Option<HarvestPlan> = None;
    let mut count = 0u64;
    loop {
        let assignment: Vec<usize> = (0..n).map(|f| choices[f][digits[f]]).collect();
        let plan = HarvestPlan::from_assignment(inst, assignment)?;
        count += 1;
        if best.as_ref().is_none_or(|b| {
            precedes(plan.objective, &plan.selected_stops, &plan.assignment, b.objective, &b.selected_stops, &b.assignment)
        }) {
            best = Some(plan);
        }
        // odometer, last fruit fastest
        let mut k = n;
        loop {
            if k == 0 {
                let plan = best.expect("at least one assignment");
                return Ok(SolveReport {
                    best_bound: plan.objective,
                    plan,
                    gap: 0.0,
                    nodes_explored: count,
                    wall_time: started.elapsed().as_secs_f64(),
                    status: SolveStatus::Optimal,
                });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < choices[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
}
