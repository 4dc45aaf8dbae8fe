use harvestplan::model::{evaluate_plan, HarvestPlan, SchedulingInstance};
use harvestplan::simbench::tiny_instance;
use harvestplan::solver::*;
use proptest::prelude::*;

const X: f64 = f64::INFINITY;

/// Rows for `n` fruits over `stops` stops; `None` cells are unreachable.
fn matrix(n: usize, stops: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(prop::option::weighted(0.7, 1u32..=40), stops),
        n,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let mut r: Vec<f64> = r.into_iter().map(|c| c.map_or(X, |c| c as f64 * 0.25)).collect();
                if r.iter().all(|c| c.is_infinite()) {
                    r[0] = 1.0;
                }
                r
            })
            .collect()
    })
}

fn instance(max_fruits: usize, max_stops: usize) -> impl Strategy<Value = SchedulingInstance> {
    (1..=max_stops, 0..=max_fruits, 0..=max_fruits, prop::sample::select(vec![0.0, 1.0, 2.5, 5.0]))
        .prop_flat_map(|(s, nl, nr, tau)| (Just(s), matrix(nl, s), matrix(nr, s), Just(tau)))
        .prop_map(|(s, l, r, tau)| {
            let stops = (0..s).map(|p| p as f64 * 0.01).collect();
            SchedulingInstance::from_matrices(stops, &l, &r, tau, 20.0).unwrap()
        })
}

/// Objective recomputed from the definition: travel plus, per used stop,
/// restart time and the slower arm's summed picks.
fn objective_by_hand(inst: &SchedulingInstance, assign: &[usize]) -> f64 {
    let mut loads = vec![(0.0, 0.0, false); inst.n_stops()];
    for (f, &p) in assign.iter().enumerate() {
        let c = inst.row(f)[p];
        match inst.side(f) {
            harvestplan::layout::Side::Left => loads[p].0 += c,
            harvestplan::layout::Side::Right => loads[p].1 += c,
        }
        loads[p].2 = true;
    }
    inst.travel_time()
        + loads
            .iter()
            .filter(|l| l.2)
            .map(|&(a, b, _)| inst.tau() + f64::max(a, b))
            .sum::<f64>()
}

/// Best objective over assignments with fruit `f` inside `[lo[f], hi[f]]`.
fn enumerate_min(inst: &SchedulingInstance, lo: &[u32], hi: &[u32]) -> Option<f64> {
    fn rec(inst: &SchedulingInstance, lo: &[u32], hi: &[u32], assign: &mut Vec<usize>, best: &mut Option<f64>) {
        let f = assign.len();
        if f == inst.n_fruits() {
            let v = objective_by_hand(inst, assign);
            if best.is_none_or(|b| v < b) {
                *best = Some(v);
            }
            return;
        }
        for p in lo[f] as usize..=hi[f] as usize {
            if inst.row(f)[p].is_finite() {
                assign.push(p);
                rec(inst, lo, hi, assign, best);
                assign.pop();
            }
        }
    }
    let mut best = None;
    rec(inst, lo, hi, &mut Vec::new(), &mut best);
    best
}

fn check_plan(inst: &SchedulingInstance, plan: &HarvestPlan) -> Result<(), TestCaseError> {
    prop_assert_eq!(plan.assignment.len(), inst.n_fruits());
    for (f, &p) in plan.assignment.iter().enumerate() {
        prop_assert!(inst.row(f)[p].is_finite());
        prop_assert!(plan.selected_stops.binary_search(&p).is_ok());
    }
    prop_assert!(plan.selected_stops.windows(2).all(|w| w[0] < w[1]));
    prop_assert_eq!(plan.loads.len(), plan.selected_stops.len());
    for l in &plan.loads {
        prop_assert_eq!(l.duration, l.left.max(l.right));
    }
    let by_hand = objective_by_hand(inst, &plan.assignment);
    let unused = plan.selected_stops.len() - {
        let mut u = plan.assignment.clone();
        u.sort_unstable();
        u.dedup();
        u.len()
    };
    prop_assert!((plan.objective - by_hand - unused as f64 * inst.tau()).abs() < 1e-9);
    prop_assert!((evaluate_plan(inst, plan).unwrap() - plan.objective).abs() < 1e-9);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solve_matches_enumeration(inst in instance(3, 6)) {
        let r = solve(&inst, &SolverConfig::default()).unwrap();
        check_plan(&inst, &r.plan)?;
        let lo = vec![0; inst.n_fruits()];
        let hi = vec![(inst.n_stops() - 1) as u32; inst.n_fruits()];
        let best = enumerate_min(&inst, &lo, &hi).unwrap_or(inst.travel_time());
        prop_assert!((r.plan.objective - best).abs() < 1e-9);
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!(r.best_bound <= r.plan.objective + 1e-9);
    }

    #[test]
    fn greedy_is_feasible(inst in instance(8, 12)) {
        let g = greedy_warm_start(&inst).unwrap();
        check_plan(&inst, &g)?;
        let r = solve(&inst, &SolverConfig { gap_tolerance: 0.05, ..SolverConfig::default() }).unwrap();
        prop_assert!(r.plan.objective <= g.objective + 1e-9);
    }

    #[test]
    fn restricted_bound_is_valid(inst in instance(3, 6), cut in prop::collection::vec((0u32..6, 0u32..6), 6)) {
        let n = inst.n_fruits();
        let last = (inst.n_stops() - 1) as u32;
        let lo: Vec<u32> = (0..n).map(|f| cut[f].0.min(cut[f].1).min(last)).collect();
        let hi: Vec<u32> = (0..n).map(|f| cut[f].0.max(cut[f].1).min(last)).collect();
        let exact = enumerate_min(&inst, &lo, &hi);
        match restricted_lower_bound(&inst, &lo, &hi, 300) {
            Some(b) => {
                let e = exact.unwrap_or(f64::INFINITY);
                prop_assert!(b <= e + 1e-7, "bound {} above optimum {}", b, e);
            }
            None => prop_assert!(exact.is_none()),
        }
    }

    #[test]
    fn objective_nondecreasing_in_tau(inst in instance(3, 5), extra in 0.0f64..5.0) {
        let a = solve(&inst, &SolverConfig::default()).unwrap();
        let b = solve(&inst.with_tau(inst.tau() + extra), &SolverConfig::default()).unwrap();
        prop_assert!(b.plan.objective >= a.plan.objective - 1e-9);
        if extra > 1e-6 {
            prop_assert!(b.plan.num_stops() <= a.plan.num_stops());
        }
    }

    #[test]
    fn solve_is_deterministic(inst in instance(4, 8)) {
        let a = solve(&inst, &SolverConfig::default()).unwrap();
        let b = solve(&inst, &SolverConfig::default()).unwrap();
        prop_assert_eq!(a.plan, b.plan);
    }
}

#[test]
fn greedy_feasible_on_generated_instances() {
    for seed in 0..1000 {
        let inst = tiny_instance(seed);
        let g = greedy_warm_start(&inst).unwrap();
        assert!((evaluate_plan(&inst, &g).unwrap() - g.objective).abs() < 1e-9);
        assert!((objective_by_hand(&inst, &g.assignment) - g.objective).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn warm_start_never_worsened() {
    let inst = tiny_instance(7);
    let best = brute_force(&inst).unwrap();
    let r = solve_with_warm_starts(
        &inst,
        &SolverConfig { gap_tolerance: 0.5, ..SolverConfig::default() },
        std::slice::from_ref(&best.plan),
    )
    .unwrap();
    assert!(r.plan.objective <= best.plan.objective + 1e-9);
}
