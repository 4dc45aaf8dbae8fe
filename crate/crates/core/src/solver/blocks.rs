//! Block heuristic. Each side's fruits are put in a fixed order along the
//! row and every stop takes a contiguous block from each side. The best
//! plan of that shape follows from a dynamic program over the pair of
//! prefix lengths already served.

use crate::layout::Side;
use crate::model::SchedulingInstance;

struct SideData {
    /// Fruit indices in block order.
    order: Vec<usize>,
    /// `sum[q][i]`: cost of the first `i` fruits at stop `q`.
    sum: Vec<Vec<f64>>,
    /// `miss[q][i]`: how many of the first `i` fruits stop `q` cannot reach.
    miss: Vec<Vec<u32>>,
    /// Reachable stop range per position in `order`.
    range: Vec<(usize, usize)>,
}

impl SideData {
    fn new(inst: &SchedulingInstance, mut order: Vec<usize>, key: &[f64]) -> Self {
        order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
        let n = inst.n_stops();
        let mut sum = vec![vec![0.0; order.len() + 1]; n];
        let mut miss = vec![vec![0; order.len() + 1]; n];
        for q in 0..n {
            for (i, &f) in order.iter().enumerate() {
                let c = inst.row(f)[q];
                let (s, m) = if c.is_finite() { (c, 0) } else { (0.0, 1) };
                sum[q][i + 1] = sum[q][i] + s;
                miss[q][i + 1] = miss[q][i] + m;
            }
        }
        let range = order
            .iter()
            .map(|&f| {
                let mut r = inst.reachable(f).map(|(p, _)| p);
                let first = r.next().expect("feasible instance");
                (first, r.last().unwrap_or(first))
            })
            .collect();
        Self { order, sum, miss, range }
    }

    /// Cost of fruits `i..j` at `q`, if `q` reaches all of them.
    fn block(&self, q: usize, i: usize, j: usize) -> Option<f64> {
        (self.miss[q][j] == self.miss[q][i]).then(|| self.sum[q][j] - self.sum[q][i])
    }
}

/// Best block-shaped assignment for the given fruit ordering key, or `None`
/// if the instance has fruits no stop reaches.
pub(super) fn block_plan(inst: &SchedulingInstance, key: &[f64]) -> Option<Vec<usize>> {
    if !inst.infeasible_fruits().is_empty() {
        return None;
    }
    let (left, right): (Vec<usize>, Vec<usize>) = (0..inst.n_fruits()).partition(|&f| inst.side(f) == Side::Left);
    let l = SideData::new(inst, left, key);
    let r = SideData::new(inst, right, key);
    let (nl, nr) = (l.order.len(), r.order.len());
    let idx = |i: usize, j: usize| i * (nr + 1) + j;
    let mut best = vec![f64::INFINITY; (nl + 1) * (nr + 1)];
    // predecessor state and stop
    let mut from = vec![(usize::MAX, usize::MAX, usize::MAX); best.len()];
    best[0] = 0.0;
    let tau = inst.tau();
    for i0 in 0..=nl {
        for j0 in 0..=nr {
            let base = best[idx(i0, j0)];
            if !base.is_finite() {
                continue;
            }
            // common stop range of the left block so far
            let (mut llo, mut lhi) = (0, inst.n_stops() - 1);
            for i1 in i0..=nl {
                if i1 > i0 {
                    let (a, b) = l.range[i1 - 1];
                    llo = llo.max(a);
                    lhi = lhi.min(b);
                    if llo > lhi {
                        break;
                    }
                }
                let (mut lo, mut hi) = (llo, lhi);
                for j1 in j0..=nr {
                    if j1 > j0 {
                        let (a, b) = r.range[j1 - 1];
                        lo = lo.max(a);
                        hi = hi.min(b);
                        if lo > hi {
                            break;
                        }
                    }
                    if i1 == i0 && j1 == j0 {
                        continue;
                    }
                    let mut seg = (f64::INFINITY, usize::MAX);
                    for q in lo..=hi {
                        if let (Some(a), Some(b)) = (l.block(q, i0, i1), r.block(q, j0, j1)) {
                            let c = tau + a.max(b);
                            if c < seg.0 {
                                seg = (c, q);
                            }
                        }
                    }
                    let k = idx(i1, j1);
                    if base + seg.0 < best[k] {
                        best[k] = base + seg.0;
                        from[k] = (i0, j0, seg.1);
                    }
                }
            }
        }
    }
    if !best[idx(nl, nr)].is_finite() {
        return None;
    }
    let mut assignment = vec![usize::MAX; inst.n_fruits()];
    let (mut i, mut j) = (nl, nr);
    while (i, j) != (0, 0) {
        let (i0, j0, q) = from[idx(i, j)];
        for &f in &l.order[i0..i] {
            assignment[f] = q;
        }
        for &f in &r.order[j0..j] {
            assignment[f] = q;
        }
        (i, j) = (i0, j0);
    }
    Some(assignment)
}

/// Ordering keys tried by the solver: middle and cheapest reachable stop.
pub(super) fn keys(inst: &SchedulingInstance) -> Vec<Vec<f64>> {
    let mut mid = Vec::with_capacity(inst.n_fruits());
    let mut cheapest = Vec::with_capacity(inst.n_fruits());
    for f in 0..inst.n_fruits() {
        let (mut lo, mut hi) = (usize::MAX, 0);
        let mut best = (f64::INFINITY, 0);
        for (p, c) in inst.reachable(f) {
            lo = lo.min(p);
            hi = hi.max(p);
            if c < best.0 {
                best = (c, p);
            }
        }
        mid.push((lo + hi) as f64 / 2.0);
        cheapest.push(best.1 as f64);
    }
    vec![mid, cheapest]
}

/// Alternates the block program, keyed by the current stops, with
/// `polish` until neither improves the plan. The current plan is always
/// block-shaped under that key, so the program never returns worse.
pub(super) fn descend(
    inst: &SchedulingInstance,
    mut assignment: Vec<usize>,
    secondary: &[f64],
    mut polish: impl FnMut(Vec<usize>) -> Vec<usize>,
) -> Vec<usize> {
    let objective = |a: &[usize]| crate::model::HarvestPlan::from_assignment(inst, a.to_vec()).map(|p| p.objective);
    let Ok(mut value) = objective(&assignment) else {
        return assignment;
    };
    let span = inst.n_stops() as f64 + 1.0;
    loop {
        let key: Vec<f64> = assignment.iter().zip(secondary).map(|(&p, &s)| p as f64 * span + s).collect();
        let Some(next) = block_plan(inst, &key) else {
            return assignment;
        };
        let next = polish(next);
        match objective(&next) {
            Ok(v) if v < value - 1e-9 => {
                value = v;
                assignment = next;
            }
            _ => return assignment,
        }
    }
}

/// [`descend`] under each secondary key in turn until a full round brings
/// no gain.
pub(super) fn descend_all(
    inst: &SchedulingInstance,
    mut assignment: Vec<usize>,
    mut polish: impl FnMut(Vec<usize>) -> Vec<usize>,
) -> Vec<usize> {
    let objective = |a: &[usize]| {
        crate::model::HarvestPlan::from_assignment(inst, a.to_vec()).map_or(f64::INFINITY, |p| p.objective)
    };
    let keys = keys(inst);
    let mut value = objective(&assignment);
    loop {
        let before = value;
        for key in &keys {
            assignment = descend(inst, assignment, key, &mut polish);
            value = objective(&assignment);
        }
        if value >= before - 1e-9 {
            return assignment;
        }
    }
}
