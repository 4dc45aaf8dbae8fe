use harvestplan::simbench::*;
use proptest::prelude::{any, prop, proptest, prop_assert, prop_assert_eq};

/// Type-7 quantile by the textbook formula `x[j] + g·(x[j+1] - x[j])` with
/// `j = floor((n-1)p)` counted from one.
fn type7(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let h = (n - 1.0) * p + 1.0;
    let j = h.floor();
    let g = h - j;
    let at = |k: f64| v[(k as usize).clamp(1, v.len()) - 1];
    at(j) + g * (at(j + 1.0) - at(j))
}

fn record(strategy: Strategy, alpha: f64, replicate: usize, throughput: f64) -> BenchRecord {
    BenchRecord {
        strategy,
        alpha,
        replicate,
        seed: cell_seed(0, replicate),
        m_left: 50,
        m_right: 50,
        num_stops: replicate + 1,
        throughput,
        total_time: 100.0 / throughput,
        solver_runtime: 0.0,
        status: "optimal".into(),
        gap: 0.0,
        fov_width: 0.1,
        fov_stop_empty: false,
        tau: 5.0,
        speed: 0.1,
        gap_tolerance: 0.0,
        error: String::new(),
    }
}

proptest! {
    #[test]
    fn box_stats_match_independent_quantiles(values in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let b = BoxStats::from_values(&values).unwrap();
        prop_assert_eq!(b.n, values.len());
        for (got, p) in [(b.min, 0.0), (b.q1, 0.25), (b.median, 0.5), (b.q3, 0.75), (b.max, 1.0)] {
            prop_assert!((got - type7(&values, p)).abs() <= 1e-9 * (1.0 + got.abs()));
        }
        prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
    }

    #[test]
    fn box_stats_order_invariant(values in prop::collection::vec(0.01f64..1.0, 1..30), cut in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let recs: Vec<BenchRecord> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| record(if k % 2 == 0 { Strategy::Milp } else { Strategy::Fov }, 1.0, k, v))
            .collect();
        let k = cut.index(recs.len());
        let mut merged: Vec<BenchRecord> = recs[k..].iter().chain(&recs[..k]).cloned().collect();
        let mut rng = seed;
        for i in (1..merged.len()).rev() {
            rng = splitmix64(rng);
            merged.swap(i, (rng % (i as u64 + 1)) as usize);
        }
        for m in Metric::ALL {
            prop_assert_eq!(box_stats(&recs, m), box_stats(&merged, m));
        }
    }

    #[test]
    fn generator_deterministic(alpha in 0.0f64..4.0, seed in any::<u64>()) {
        let spec = GenSpec { alpha, seed, m_left: 12, ..GenSpec::default() };
        let a = generate_fruits(&spec).unwrap();
        prop_assert_eq!(&a, &generate_fruits(&spec).unwrap());
        prop_assert_eq!(a.right.len(), spec.m_right());
        let fpa = spec.fpa();
        for f in a.left.iter().chain(&a.right) {
            let (x0, x1) = fpa.lateral_range(f.side);
            prop_assert!(x0 <= f.x && f.x <= x1);
            prop_assert!((0.0..=spec.row_length).contains(&f.y));
            prop_assert!((spec.yaw_min..=spec.yaw_max).contains(&f.psi));
        }
    }
}

#[test]
fn single_record_gives_degenerate_box() {
    let b = BoxStats::from_values(&[0.3]).unwrap();
    assert_eq!([b.min, b.q1, b.median, b.q3], [b.max; 4]);
}

#[test]
fn failed_cells_skipped() {
    let mut bad = record(Strategy::Serial, 1.0, 0, 0.5);
    bad.error = "boom".into();
    let good = record(Strategy::Serial, 1.0, 1, 0.2);
    let stats = box_stats(&[bad, good], Metric::Throughput);
    assert_eq!(stats[&(Strategy::Serial, 1f64.to_bits())].n, 1);
}

#[test]
fn outputs_written() {
    let recs: Vec<BenchRecord> = (0..4)
        .flat_map(|k| [record(Strategy::Fov, 0.5, k, 0.1 + k as f64 * 0.01), record(Strategy::Milp, 0.5, k, 0.2)])
        .collect();
    let dir = tempfile::tempdir().unwrap();
    write_records(&recs, dir.path()).unwrap();
    emit_plots(&recs, dir.path()).unwrap();
    for m in Metric::ALL {
        let text = std::fs::read_to_string(dir.path().join(format!("boxstats_{}.csv", m.name()))).unwrap();
        assert_eq!(text.lines().count(), 3);
    }
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), recs.len() + 1);
    let json: Vec<BenchRecord> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("records.json")).unwrap()).unwrap();
    assert_eq!(json, recs);
    assert!(std::fs::read_to_string(dir.path().join("plots.gp")).unwrap().contains("candlesticks"));
}
