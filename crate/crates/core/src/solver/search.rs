//! Local improvement of complete plans.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layout::Side;
use crate::model::SchedulingInstance;

const EPS: f64 = 1e-9;
const MAX_PASSES: usize = 60;
/// How far (in stops) a selected stop may be shifted in one move.
const SHIFT_RADIUS: usize = 40;

struct State<'a> {
    inst: &'a SchedulingInstance,
    assign: Vec<usize>,
    left: Vec<f64>,
    right: Vec<f64>,
    count: Vec<u32>,
    /// Fruits currently at each stop.
    members: Vec<Vec<usize>>,
}

impl<'a> State<'a> {
    fn new(inst: &'a SchedulingInstance, assign: Vec<usize>) -> Self {
        let n = inst.n_stops();
        let mut s = Self {
            inst,
            assign: vec![usize::MAX; assign.len()],
            left: vec![0.0; n],
            right: vec![0.0; n],
            count: vec![0; n],
            members: vec![Vec::new(); n],
        };
        for (f, p) in assign.into_iter().enumerate() {
            s.put(f, p);
        }
        s
    }

    fn cost(&self, f: usize, p: usize) -> f64 {
        self.inst.row(f)[p]
    }

    fn contrib(&self, p: usize, dl: f64, dr: f64, dc: i64) -> f64 {
        let c = self.count[p] as i64 + dc;
        if c <= 0 {
            0.0
        } else {
            (self.left[p] + dl).max(self.right[p] + dr) + self.inst.tau()
        }
    }

    fn put(&mut self, f: usize, p: usize) {
        let c = self.cost(f, p);
        match self.inst.side(f) {
            Side::Left => self.left[p] += c,
            Side::Right => self.right[p] += c,
        }
        self.count[p] += 1;
        self.members[p].push(f);
        self.assign[f] = p;
    }

    fn take(&mut self, f: usize) {
        let p = self.assign[f];
        let c = self.cost(f, p);
        match self.inst.side(f) {
            Side::Left => self.left[p] -= c,
            Side::Right => self.right[p] -= c,
        }
        self.count[p] -= 1;
        if self.count[p] == 0 {
            // keep sums exact for empty stops
            self.left[p] = 0.0;
            self.right[p] = 0.0;
        }
        let m = &mut self.members[p];
        let k = m.iter().position(|&g| g == f).expect("member");
        m.swap_remove(k);
        self.assign[f] = usize::MAX;
    }

    fn side_delta(&self, f: usize, c: f64) -> (f64, f64) {
        match self.inst.side(f) {
            Side::Left => (c, 0.0),
            Side::Right => (0.0, c),
        }
    }

    /// Objective change of moving `f` from its stop to `q`.
    fn move_delta(&self, f: usize, q: usize) -> f64 {
        let p = self.assign[f];
        let (ol, or) = self.side_delta(f, -self.cost(f, p));
        let (nl, nr) = self.side_delta(f, self.cost(f, q));
        let before = self.contrib(p, 0.0, 0.0, 0) + self.contrib(q, 0.0, 0.0, 0);
        let after = self.contrib(p, ol, or, -1) + self.contrib(q, nl, nr, 1);
        after - before
    }

    fn objective(&self) -> f64 {
        (0..self.inst.n_stops()).map(|p| self.contrib(p, 0.0, 0.0, 0)).sum()
    }

    fn relocate_pass(&mut self, order: &[usize]) -> bool {
        let mut improved = false;
        for &f in order {
            let p = self.assign[f];
            let mut best = (-EPS, usize::MAX);
            for (q, _) in self.inst.reachable(f) {
                if q != p && self.count[q] > 0 {
                    let d = self.move_delta(f, q);
                    if d < best.0 {
                        best = (d, q);
                    }
                }
            }
            if best.1 != usize::MAX {
                self.take(f);
                self.put(f, best.1);
                improved = true;
            }
        }
        improved
    }

    fn swap_pass(&mut self) -> bool {
        let n = self.inst.n_fruits();
        let mut improved = false;
        for f in 0..n {
            for g in f + 1..n {
                if self.inst.side(f) != self.inst.side(g) {
                    continue;
                }
                let (p, q) = (self.assign[f], self.assign[g]);
                if p == q {
                    continue;
                }
                let (cfq, cgp) = (self.cost(f, q), self.cost(g, p));
                if !cfq.is_finite() || !cgp.is_finite() {
                    continue;
                }
                let dp = cgp - self.cost(f, p);
                let dq = cfq - self.cost(g, q);
                let (pl, pr) = self.side_delta(f, dp);
                let (ql, qr) = self.side_delta(f, dq);
                let before = self.contrib(p, 0.0, 0.0, 0) + self.contrib(q, 0.0, 0.0, 0);
                let after = self.contrib(p, pl, pr, 0) + self.contrib(q, ql, qr, 0);
                if after - before < -EPS {
                    self.take(f);
                    self.take(g);
                    self.put(f, q);
                    self.put(g, p);
                    improved = true;
                }
            }
        }
        improved
    }

    /// Moves every fruit of `from` to its best other selected stop (or to
    /// `extra` if given). Returns the objective change, or `None` (state
    /// unchanged) when some fruit has nowhere to go.
    fn evacuate(&mut self, from: usize, extra: Option<usize>) -> Option<f64> {
        let before = self.objective();
        let fruits = self.members[from].clone();
        let mut moved = Vec::with_capacity(fruits.len());
        for &f in &fruits {
            let mut best = (f64::INFINITY, usize::MAX);
            for (q, _) in self.inst.reachable(f) {
                if q != from && (self.count[q] > 0 || Some(q) == extra) {
                    let d = self.move_delta(f, q);
                    if d < best.0 {
                        best = (d, q);
                    }
                }
            }
            if best.1 == usize::MAX {
                for &(g, _) in moved.iter().rev() {
                    self.take(g);
                    self.put(g, from);
                }
                return None;
            }
            self.take(f);
            self.put(f, best.1);
            moved.push((f, best.1));
        }
        Some(self.objective() - before)
    }

    fn undo(&mut self, moves: &[(usize, usize)]) {
        for &(f, p) in moves.iter().rev() {
            self.take(f);
            self.put(f, p);
        }
    }

    fn close_pass(&mut self) -> bool {
        let mut improved = false;
        for p in 0..self.inst.n_stops() {
            if self.count[p] == 0 {
                continue;
            }
            let snapshot: Vec<(usize, usize)> = self.members[p].iter().map(|&f| (f, p)).collect();
            match self.evacuate(p, None) {
                Some(d) if d < -EPS => improved = true,
                Some(_) => self.undo(&snapshot),
                None => {}
            }
        }
        improved
    }

    fn shift_pass(&mut self) -> bool {
        let n = self.inst.n_stops();
        let mut improved = false;
        for p in 0..n {
            if self.count[p] == 0 {
                continue;
            }
            let lo = p.saturating_sub(SHIFT_RADIUS);
            let hi = (p + SHIFT_RADIUS).min(n - 1);
            for q in lo..=hi {
                if self.count[q] > 0 || self.count[p] == 0 {
                    continue;
                }
                let snapshot: Vec<(usize, usize)> = self.members[p].iter().map(|&f| (f, p)).collect();
                // pull over what moves cheaply, push the rest elsewhere
                match self.evacuate(p, Some(q)) {
                    Some(d) if d < -EPS => {
                        improved = true;
                        break;
                    }
                    Some(_) => self.undo(&snapshot),
                    None => {}
                }
            }
        }
        improved
    }

    fn open_pass(&mut self) -> bool {
        let mut improved = false;
        for q in 0..self.inst.n_stops() {
            if self.count[q] > 0 {
                continue;
            }
            let mut cands: Vec<(f64, usize)> = (0..self.inst.n_fruits())
                .filter(|&f| self.cost(f, q).is_finite())
                .map(|f| (self.cost(f, q) - self.cost(f, self.assign[f]), f))
                .collect();
            if cands.is_empty() {
                continue;
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let before = self.objective();
            let mut moves = Vec::new();
            let mut best = (0.0, 0usize);
            for &(_, f) in &cands {
                moves.push((f, self.assign[f]));
                self.take(f);
                self.put(f, q);
                let d = self.objective() - before;
                if d < best.0 - EPS {
                    best = (d, moves.len());
                }
            }
            self.undo(&moves[best.1..]);
            if best.1 > 0 {
                improved = true;
            }
        }
        improved
    }
}

/// Improves `assign` in place with relocate, swap, close, shift and open
/// moves until none helps. Fruit order in the relocate pass is shuffled
/// from `seed`.
pub(crate) fn improve(inst: &SchedulingInstance, assign: Vec<usize>, seed: u64) -> Vec<usize> {
    if inst.n_fruits() == 0 {
        return assign;
    }
    let mut s = State::new(inst, assign);
    let mut order: Vec<usize> = (0..inst.n_fruits()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_PASSES {
        order.shuffle(&mut rng);
        let mut any = s.relocate_pass(&order);
        any |= s.swap_pass();
        any |= s.close_pass();
        any |= s.shift_pass();
        any |= s.open_pass();
        if !any {
            break;
        }
    }
    s.assign
}

/// Perturbation around [`improve`]: closes one selected stop, repairs, and
/// keeps the result if it beats the current plan. Rounds continue until no
/// stop yields a gain or `deadline` passes.
pub(crate) fn close_kicks(
    inst: &SchedulingInstance,
    assign: Vec<usize>,
    seed: u64,
    deadline: Instant,
) -> Vec<usize> {
    let mut best_obj = State::new(inst, assign.clone()).objective();
    let mut best = assign;
    'round: loop {
        let mut stops = best.clone();
        stops.sort_unstable();
        stops.dedup();
        for p in stops {
            if Instant::now() >= deadline {
                break 'round;
            }
            let mut s = State::new(inst, best.clone());
            if s.evacuate(p, None).is_none() {
                continue;
            }
            let cand = improve(inst, s.assign, seed);
            let obj = State::new(inst, cand.clone()).objective();
            if obj < best_obj - EPS {
                best = cand;
                best_obj = obj;
                continue 'round;
            }
        }
        break;
    }
    best
}
