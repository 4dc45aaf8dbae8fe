//! Lagrangian lower bound.
//!
//! Dualizing `Σ_p a_fp ≥ 1` with multipliers `λ_f ≥ 0` splits the model by
//! stop:
//!
//! ```text
//! V_p(λ) = min over S_L, S_R of max(Σ_{S_L} c_fp, Σ_{S_R} c_fp) - Σ_{S_L ∪ S_R} λ_f
//! L(λ)   = T_travel + Σ_f λ_f + Σ_p φ_p
//! φ_p    = τ + V_p           stop forced open
//!          min(0, τ + V_p)   otherwise
//! ```
//!
//! `V_p` is computed exactly from the two sides' Pareto frontiers of (load,
//! multiplier sum). The cheaper relaxation `max(C^L, C^R) ≥ μ C^L + (1 - μ)
//! C^R` gives `H_p = max_μ H_p(μ) ≤ V_p`, maximized by a breakpoint sweep;
//! it screens out stops that stay closed and stands in for `V_p` when a
//! stop has too many candidates to enumerate.
//!
//! The multipliers follow a deflected subgradient ascent with Polyak steps.

use std::time::{Duration, Instant};

use crate::model::SchedulingInstance;

fn far_future() -> Instant {
    Instant::now() + Duration::from_secs(1 << 32)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    fruit: u32,
    cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StopFix {
    Free,
    Open,
    Closed,
}

/// Stop-wise view of one search node.
pub(crate) struct Relaxation {
    left: Vec<Vec<Entry>>,
    right: Vec<Vec<Entry>>,
    forced: Vec<bool>,
    active: Vec<usize>,
    /// Multiplier above which a fruit is picked at every allowed stop; the
    /// bound cannot rise past it.
    cap: Vec<f64>,
    tau: f64,
    travel: f64,
    n_fruits: usize,
}

/// Subproblem solution at the last evaluated multipliers.
#[derive(Debug, Clone, Default)]
pub(crate) struct RelaxedSolution {
    /// Times each fruit is picked.
    pub count: Vec<u32>,
    /// Some stop picking each fruit (valid when `count > 0`).
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub open: Vec<bool>,
}

impl Relaxation {
    /// `None` when some fruit has no allowed stop. `banned` is empty or a
    /// row-major fruit × stop mask of excluded picks; `fixed` is empty or
    /// one entry per stop.
    pub fn new(inst: &SchedulingInstance, lo: &[u32], hi: &[u32], banned: &[bool], fixed: &[StopFix]) -> Option<Self> {
        let fix = |p: usize| fixed.get(p).copied().unwrap_or(StopFix::Free);
        let n = inst.n_stops();
        let mut left = vec![Vec::new(); n];
        let mut right = vec![Vec::new(); n];
        let mut forced = vec![false; n];
        let mut cap = vec![0.0; inst.n_fruits()];
        for f in 0..inst.n_fruits() {
            let row = inst.row(f);
            let (a, b) = (lo[f] as usize, hi[f] as usize);
            let mut k = 0;
            let mut only = 0;
            for (p, &c) in row.iter().enumerate().take(b + 1).skip(a) {
                if c.is_finite() && !banned.get(f * n + p).copied().unwrap_or(false) && fix(p) != StopFix::Closed {
                    k += 1;
                    only = p;
                    cap[f] = f64::max(cap[f], inst.tau() + c);
                    let e = Entry { fruit: f as u32, cost: c };
                    match inst.side(f) {
                        crate::layout::Side::Left => left[p].push(e),
                        crate::layout::Side::Right => right[p].push(e),
                    }
                }
            }
            match k {
                0 => return None,
                1 => forced[only] = true,
                _ => {}
            }
        }
        for (p, is_forced) in forced.iter_mut().enumerate() {
            *is_forced |= fix(p) == StopFix::Open;
        }
        // a stop forced open with nothing allowed still costs its restart
        let active = (0..n)
            .filter(|&p| !left[p].is_empty() || !right[p].is_empty() || forced[p])
            .collect();
        Some(Self {
            left,
            right,
            forced,
            active,
            cap,
            tau: inst.tau(),
            travel: inst.travel_time(),
            n_fruits: inst.n_fruits(),
        })
    }

    /// `max_μ H_p(μ)` and its maximizer.
    fn stop_value(&self, p: usize, lambda: &[f64], events: &mut Vec<(f64, f64)>) -> (f64, f64) {
        let (left, right) = (&self.left[p], &self.right[p]);
        events.clear();
        // slope of H_p just right of μ = 0
        let mut slope = 0.0;
        for e in left {
            let l = lambda[e.fruit as usize];
            if e.cost > 0.0 && l > 0.0 {
                slope += e.cost;
                let b = l / e.cost;
                if b < 1.0 {
                    events.push((b, e.cost));
                }
            }
        }
        for e in right {
            let l = lambda[e.fruit as usize];
            if e.cost > 0.0 {
                let b = 1.0 - l / e.cost;
                if b <= 0.0 {
                    slope -= e.cost;
                } else if b < 1.0 {
                    events.push((b, e.cost));
                }
            }
        }
        let mut mu = 0.0;
        if slope > 0.0 {
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            mu = 1.0;
            for &(b, c) in events.iter() {
                slope -= c;
                if slope <= 0.0 {
                    mu = b;
                    break;
                }
            }
        }
        (self.h_at(p, lambda, mu), mu)
    }

    fn h_at(&self, p: usize, lambda: &[f64], mu: f64) -> f64 {
        let mut h = 0.0;
        for e in &self.left[p] {
            h += (mu * e.cost - lambda[e.fruit as usize]).min(0.0);
        }
        for e in &self.right[p] {
            h += ((1.0 - mu) * e.cost - lambda[e.fruit as usize]).min(0.0);
        }
        h
    }

    /// Exact `min over subsets S_L, S_R of max(A, B) - λ(S)` at stop `p`,
    /// with the chosen subsets as candidate bitmasks. `None` when the
    /// candidate lists are too long to enumerate.
    fn exact_value(&self, p: usize, lambda: &[f64], work: &mut Workspace) -> Option<f64> {
        let Workspace { cand_l, cand_r, front_l, front_r, tmp, pick, .. } = work;
        collect(&self.left[p], lambda, cand_l);
        collect(&self.right[p], lambda, cand_r);
        if cand_l.len() > MAX_CANDIDATES || cand_r.len() > MAX_CANDIDATES {
            return None;
        }
        pareto(cand_l, front_l, tmp)?;
        pareto(cand_r, front_r, tmp)?;
        let best = sweep(front_l, front_r).expect("frontiers hold the empty set");
        *pick = (front_l[best.1].mask, front_r[best.2].mask);
        Some(best.0)
    }

    /// For every fruit allowed at `p`: the stop's open value when that fruit
    /// must be picked there. `None` when the lists are too long.
    fn forced_values(&self, p: usize, lambda: &[f64], work: &mut Workspace, out: &mut Vec<(u32, f64)>) -> Option<()> {
        out.clear();
        let Workspace { cand_l, cand_r, front_l, front_r, tmp, .. } = work;
        for (own, other) in [(&self.left[p], &self.right[p]), (&self.right[p], &self.left[p])] {
            collect(other, lambda, cand_r);
            if cand_r.len() > MAX_CANDIDATES {
                return None;
            }
            pareto(cand_r, front_r, tmp)?;
            for e in own {
                collect(own, lambda, cand_l);
                cand_l.retain(|it| it.fruit != e.fruit);
                if cand_l.len() > MAX_CANDIDATES {
                    return None;
                }
                pareto(cand_l, front_l, tmp)?;
                let l = lambda[e.fruit as usize];
                for pt in front_l.iter_mut() {
                    pt.w += e.cost;
                    pt.v += l;
                }
                let (v, _, _) = sweep(front_l, front_r).expect("both frontiers nonempty");
                out.push((e.fruit, self.tau + v));
            }
        }
        Some(())
    }

    /// Open value of stop `p` as it enters the bound.
    fn stop_term(&self, p: usize, lambda: &[f64], work: &mut Workspace) -> f64 {
        let h = match self.exact_value(p, lambda, work) {
            Some(v) => v,
            None => self.stop_value(p, lambda, &mut work.events).0,
        };
        let open_value = self.tau + h;
        if self.forced[p] {
            open_value
        } else {
            open_value.min(0.0)
        }
    }

    /// Lower bounds on every restriction that forces one fruit onto one
    /// stop, as `(fruit, stop, bound)`, given the bound `total` at `lambda`.
    /// Forcing only raises the other stops' terms, which are kept as is.
    pub fn forced_bounds(&self, lambda: &[f64], total: f64) -> Vec<(u32, usize, f64)> {
        let mut work = Workspace::default();
        let mut vals = Vec::new();
        let mut out = Vec::new();
        for &p in &self.active {
            let term = self.stop_term(p, lambda, &mut work);
            if self.forced_values(p, lambda, &mut work, &mut vals).is_none() {
                continue;
            }
            for &(f, v) in &vals {
                out.push((f, p, total - term + v));
            }
        }
        out
    }

    /// Bound at `lambda`; fills `sol` with the subproblem minimizer.
    pub fn evaluate(&self, lambda: &[f64], sol: &mut RelaxedSolution, work: &mut Workspace) -> f64 {
        let n_stops = self.left.len();
        sol.count.clear();
        sol.count.resize(self.n_fruits, 0);
        sol.first.resize(self.n_fruits, 0);
        sol.second.resize(self.n_fruits, 0);
        sol.open.clear();
        sol.open.resize(n_stops, false);

        let mut total = self.travel + lambda.iter().sum::<f64>();
        for &p in &self.active {
            if !self.forced[p] && self.tau + self.stop_value(p, lambda, &mut work.events).0 >= 0.0 {
                // the exact value is no lower, so the stop stays closed
                continue;
            }
            let exact = self.exact_value(p, lambda, work);
            let (h, mu) = match exact {
                Some(v) => (v, f64::NAN),
                None => self.stop_value(p, lambda, &mut work.events),
            };
            let open_value = self.tau + h;
            let open = self.forced[p] || open_value < 0.0;
            if !open {
                continue;
            }
            total += open_value;
            sol.open[p] = true;
            let mut mark = |f: usize| {
                match sol.count[f] {
                    0 => sol.first[f] = p,
                    1 => sol.second[f] = p,
                    _ => {}
                }
                sol.count[f] += 1;
            };
            if exact.is_some() {
                let (ml, mr) = work.pick;
                for (k, e) in work.cand_l.iter().enumerate() {
                    if ml >> k & 1 == 1 {
                        mark(e.fruit as usize);
                    }
                }
                for (k, e) in work.cand_r.iter().enumerate() {
                    if mr >> k & 1 == 1 {
                        mark(e.fruit as usize);
                    }
                }
                continue;
            }
            for e in &self.left[p] {
                if mu * e.cost < lambda[e.fruit as usize] {
                    mark(e.fruit as usize);
                }
            }
            for e in &self.right[p] {
                if (1.0 - mu) * e.cost < lambda[e.fruit as usize] {
                    mark(e.fruit as usize);
                }
            }
        }
        total
    }
}

const MAX_CANDIDATES: usize = 40;
const MAX_FRONTIER: usize = 1 << 12;

/// `min over T of T - best_l(T) - best_r(T)`, where `best(T)` is the
/// largest multiplier sum on a frontier with load at most `T`. Returns the
/// value and the chosen point on each side.
fn sweep(front_l: &[Point], front_r: &[Point]) -> Option<(f64, usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let (mut have_l, mut have_r) = (false, false);
    let mut best: Option<(f64, usize, usize)> = None;
    while i < front_l.len() || j < front_r.len() {
        let take_l = j >= front_r.len() || (i < front_l.len() && front_l[i].w <= front_r[j].w);
        let t = if take_l {
            have_l = true;
            i += 1;
            front_l[i - 1].w
        } else {
            have_r = true;
            j += 1;
            front_r[j - 1].w
        };
        if have_l && have_r {
            let v = t - front_l[i - 1].v - front_r[j - 1].v;
            if best.is_none_or(|b| v < b.0) {
                best = Some((v, i - 1, j - 1));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Item {
    fruit: u32,
    w: f64,
    v: f64,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    w: f64,
    v: f64,
    mask: u64,
}

/// Scratch buffers for [`Relaxation::evaluate`].
#[derive(Default)]
pub(crate) struct Workspace {
    events: Vec<(f64, f64)>,
    cand_l: Vec<Item>,
    cand_r: Vec<Item>,
    front_l: Vec<Point>,
    front_r: Vec<Point>,
    tmp: Vec<Point>,
    pick: (u64, u64),
}

/// Fruits with a positive multiplier; the others never lower the value.
fn collect(entries: &[Entry], lambda: &[f64], out: &mut Vec<Item>) {
    out.clear();
    out.extend(entries.iter().filter_map(|e| {
        let l = lambda[e.fruit as usize];
        (l > 0.0).then_some(Item { fruit: e.fruit, w: e.cost, v: l })
    }));
}

/// Pareto frontier of (load, multiplier sum) over subsets of `items`,
/// sorted by load with strictly increasing multiplier sum.
fn pareto(items: &[Item], front: &mut Vec<Point>, tmp: &mut Vec<Point>) -> Option<()> {
    front.clear();
    front.push(Point { w: 0.0, v: 0.0, mask: 0 });
    for (k, it) in items.iter().enumerate() {
        tmp.clear();
        let n = front.len();
        let (mut i, mut j) = (0, 0);
        let mut top = f64::NEG_INFINITY;
        while i < n || j < n {
            let pt = if j >= n || (i < n && front[i].w <= front[j].w + it.w) {
                i += 1;
                front[i - 1]
            } else {
                j += 1;
                let q = front[j - 1];
                Point { w: q.w + it.w, v: q.v + it.v, mask: q.mask | 1 << k }
            };
            if pt.v > top {
                if tmp.last().is_some_and(|q| q.w == pt.w) {
                    tmp.pop();
                }
                tmp.push(pt);
                top = pt.v;
            }
        }
        std::mem::swap(front, tmp);
        if front.len() > MAX_FRONTIER {
            return None;
        }
    }
    Some(())
}

/// Result of multiplier ascent at one node.
pub(crate) struct Ascent {
    pub bound: f64,
    pub lambda: Vec<f64>,
    pub solution: RelaxedSolution,
    /// Distinct relaxed solutions seen every `sample_every` iterations.
    pub samples: Vec<RelaxedSolution>,
    /// Share of the second half of the iterations in which each stop was
    /// open.
    pub open_share: Vec<f64>,
}

/// Non-improving iterations before the step scale is halved.
const STALL_LIMIT: usize = 60;
const MIN_STEP_SCALE: f64 = 1e-4;

/// Polyak-step subgradient ascent from `lambda`. Stops early once the bound
/// reaches `stop_at`.
pub(crate) fn ascend(
    relax: &Relaxation,
    mut lambda: Vec<f64>,
    target: f64,
    stop_at: f64,
    iterations: usize,
    sample_every: Option<usize>,
    step_scale: f64,
    deadline: Instant,
) -> Ascent {
    // past the cap only rounding moves the bound, and huge multipliers
    // cancel catastrophically in the sum
    for (l, &c) in lambda.iter_mut().zip(&relax.cap) {
        *l = l.clamp(0.0, c);
    }
    let mut samples: Vec<RelaxedSolution> = Vec::new();
    let mut sol = RelaxedSolution::default();
    let mut work = Workspace::default();
    let mut best = f64::NEG_INFINITY;
    let mut best_lambda = lambda.clone();
    let mut beta = step_scale;
    let mut stall = 0;
    let mut dir = vec![0.0; lambda.len()];
    let mut open_count = vec![0u32; relax.left.len()];
    let mut counted = 0u32;
    for it in 0..iterations {
        let lb = relax.evaluate(&lambda, &mut sol, &mut work);
        if 2 * it >= iterations {
            counted += 1;
            for (k, &o) in open_count.iter_mut().zip(&sol.open) {
                *k += o as u32;
            }
        }
        if sample_every.is_some_and(|k| it % k == k - 1) && !samples.iter().any(|x| x.open == sol.open) {
            samples.push(sol.clone());
        }
        if lb > best + 1e-12 {
            best = lb;
            best_lambda.copy_from_slice(&lambda);
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                beta *= 0.5;
                stall = 0;

            }
        }
        if best >= stop_at || beta < MIN_STEP_SCALE || (it % 16 == 15 && Instant::now() >= deadline) {
            break;
        }
        // deflected direction: keep part of the previous one when the new
        // subgradient points back against it
        let mut dot = 0.0;
        let mut prev2 = 0.0;
        for (d, &k) in dir.iter().zip(&sol.count) {
            dot += d * (1.0 - k as f64);
            prev2 += d * d;
        }
        let gamma = if prev2 > 0.0 && dot < 0.0 { -dot / prev2 } else { 0.0 };
        for (d, &k) in dir.iter_mut().zip(&sol.count) {
            *d = (1.0 - k as f64) + gamma * *d;
        }
        let norm2: f64 = dir.iter().map(|d| d * d).sum();
        if norm2 == 0.0 {
            break;
        }
        // aim a little above the bound when there is no incumbent
        let goal = if target.is_finite() { target } else { lb.abs() * 1.1 + 1.0 };
        let step = beta * (goal - lb).max(1e-6 * goal.abs().max(1.0)) / norm2;
        for ((l, d), &c) in lambda.iter_mut().zip(&dir).zip(&relax.cap) {
            *l = (*l + step * d).clamp(0.0, c);
        }
    }
    let bound = relax.evaluate(&best_lambda, &mut sol, &mut work);
    let open_share = if counted == 0 {
        sol.open.iter().map(|&o| o as u32 as f64).collect()
    } else {
        open_count.iter().map(|&k| k as f64 / counted as f64).collect()
    };
    Ascent {
        open_share,
        bound,
        lambda: best_lambda,
        solution: sol,
        samples,
    }
}

/// Starting multipliers: each fruit's cheapest pick cost.
pub(crate) fn initial_lambda(inst: &SchedulingInstance) -> Vec<f64> {
    (0..inst.n_fruits())
        .map(|f| {
            let c = inst.reachable(f).map(|(_, c)| c).fold(f64::INFINITY, f64::min);
            if c.is_finite() {
                c
            } else {
                0.0
            }
        })
        .collect()
}

/// Best bound found for the restriction where fruit `f` may only use stops
/// `lo[f]..=hi[f]`; `None` if the restriction leaves some fruit without a
/// reachable stop.
pub fn restricted_lower_bound(inst: &SchedulingInstance, lo: &[u32], hi: &[u32], iterations: usize) -> Option<f64> {
    let relax = Relaxation::new(inst, lo, hi, &[], &[])?;
    Some(ascend(&relax, initial_lambda(inst), f64::INFINITY, f64::INFINITY, iterations, None, 2.0, far_future()).bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: f64 = f64::INFINITY;

    #[test]
    fn sweep_matches_dense_scan() {
        let inst = SchedulingInstance::from_matrices(
            vec![0.0],
            &[vec![3.0], vec![1.0], vec![0.0]],
            &[vec![2.0], vec![4.5]],
            1.0,
            0.0,
        )
        .unwrap();
        let relax = Relaxation::new(&inst, &[0; 5], &[0; 5], &[], &[]).unwrap();
        let mut events = Vec::new();
        for lambda in [[2.0, 0.5, 1.0, 1.5, 3.0], [0.0; 5], [9.0; 5], [0.1, 3.0, 0.0, 0.0, 4.4]] {
            let (h, _) = relax.stop_value(0, &lambda, &mut events);
            let dense = (0..=10000)
                .map(|k| relax.h_at(0, &lambda, k as f64 / 10000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(h >= dense - 1e-12, "{h} < {dense}");
        }
    }

    /// Brute force over subset pairs at stop 0.
    fn subset_min(relax: &Relaxation, lambda: &[f64]) -> f64 {
        let (l, r) = (&relax.left[0], &relax.right[0]);
        let mut best = 0.0f64;
        for ml in 0..1u32 << l.len() {
            for mr in 0..1u32 << r.len() {
                let pick = |es: &[Entry], m: u32| -> (f64, f64) {
                    es.iter()
                        .enumerate()
                        .filter(|(k, _)| m >> k & 1 == 1)
                        .fold((0.0, 0.0), |(a, g), (_, e)| (a + e.cost, g + lambda[e.fruit as usize]))
                };
                let ((a, ga), (b, gb)) = (pick(l, ml), pick(r, mr));
                best = best.min(a.max(b) - ga - gb);
            }
        }
        best
    }

    #[test]
    fn exact_stop_value_matches_enumeration() {
        let inst = SchedulingInstance::from_matrices(
            vec![0.0],
            &[vec![3.0], vec![1.0], vec![0.0], vec![2.5]],
            &[vec![2.0], vec![4.5], vec![1.5]],
            1.0,
            0.0,
        )
        .unwrap();
        let relax = Relaxation::new(&inst, &[0; 7], &[0; 7], &[], &[]).unwrap();
        let mut work = Workspace::default();
        for lambda in [
            [2.0, 0.5, 1.0, 1.5, 3.0, 9.0, 1.6],
            [0.0; 7],
            [9.0; 7],
            [3.5, 3.0, 0.0, 2.6, 4.4, 4.6, 0.2],
        ] {
            let exact = relax.exact_value(0, &lambda, &mut work).unwrap();
            let brute = subset_min(&relax, &lambda);
            assert!((exact - brute).abs() < 1e-12, "{exact} vs {brute}");
            let (mu_value, _) = relax.stop_value(0, &lambda, &mut work.events);
            assert!(exact >= mu_value - 1e-12);
        }
    }

    #[test]
    fn bound_below_simple_optimum() {
        // optimum: both fruits at stop 1, T = 4 + 5 + 20
        let inst = SchedulingInstance::from_matrices(vec![0.0, 0.5], &[vec![3.0, 4.0]], &[vec![X, 3.5]], 5.0, 20.0)
            .unwrap();
        let b = restricted_lower_bound(&inst, &[0, 0], &[1, 1], 200).unwrap();
        assert!(b <= 29.0 + 1e-9, "{b}");
        assert!(b > 20.0);
    }

    #[test]
    fn empty_restriction_is_none() {
        let inst = SchedulingInstance::from_matrices(vec![0.0, 0.5], &[vec![3.0, X]], &[], 5.0, 20.0).unwrap();
        assert!(restricted_lower_bound(&inst, &[1], &[1], 10).is_none());
    }
}
