//! Synthetic rows and the strategy comparison harness.
//!
//! Random streams come from ChaCha8 (`rand_chacha`), seeded through
//! `SeedableRng::seed_from_u64`. A benchmark cell's seed is
//! `splitmix64((alpha_index << 32) | replicate)`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{fov_plan, serial_plan, FovParams};
use crate::costmap::CostTable;
use crate::layout::{FpaBox, Side};
use crate::model::{build_instance, FruitMap, Fruit, InstanceParams, SchedulingInstance};
use crate::par::{map_indexed, Parallelism};
use crate::solver::{solve_with_warm_starts, SolveStatus, SolverConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("no records")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub m_left: usize,
    /// Right-to-left fruit ratio.
    pub alpha: f64,
    pub row_length: f64,
    /// Aisle width between the two canopies.
    pub row_width: f64,
    pub canopy_depth: f64,
    pub canopy_height: f64,
    /// Canopy bottom above the vehicle platform.
    pub canopy_base: f64,
    pub yaw_min: f64,
    pub yaw_max: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        let fpa = FpaBox::default();
        Self {
            m_left: 50,
            alpha: 1.0,
            row_length: fpa.row_length,
            row_width: 2.0 * fpa.face,
            canopy_depth: fpa.depth,
            canopy_height: fpa.height,
            canopy_base: fpa.z_min,
            yaw_min: (-45f64).to_radians(),
            yaw_max: 45f64.to_radians(),
            seed: 0,
        }
    }
}

impl GenSpec {
    /// Right fruit count, `α·m_left` rounded half up.
    pub fn m_right(&self) -> usize {
        (self.alpha * self.m_left as f64 + 0.5).floor() as usize
    }

    pub fn fpa(&self) -> FpaBox {
        FpaBox {
            face: self.row_width / 2.0,
            depth: self.canopy_depth,
            z_min: self.canopy_base,
            height: self.canopy_height,
            row_length: self.row_length,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let pos = [self.row_length, self.row_width, self.canopy_depth, self.canopy_height];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(BenchError::Spec("extents must be positive".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(BenchError::Spec("alpha must be non-negative".into()));
        }
        if !(self.yaw_min <= self.yaw_max) {
            return Err(BenchError::Spec("yaw bounds reversed".into()));
        }
        Ok(())
    }
}

/// Fruits uniform over each side's canopy box, left side drawn first. Ids
/// run `0..m_left` on the left and continue on the right.
pub fn generate_fruits(spec: &GenSpec) -> Result<FruitMap, BenchError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fpa = spec.fpa();
    let (z0, z1) = fpa.z_range();
    let mut draw = |side: Side, count: usize, first: u32| -> Vec<Fruit> {
        let (x0, x1) = fpa.lateral_range(side);
        (0..count)
            .map(|k| Fruit {
                id: first + k as u32,
                side,
                x: rng.random_range(x0..=x1),
                y: rng.random_range(0.0..=spec.row_length),
                z: rng.random_range(z0..=z1),
                psi: rng.random_range(spec.yaw_min..=spec.yaw_max),
            })
            .collect()
    };
    let left = draw(Side::Left, spec.m_left, 0);
    let right = draw(Side::Right, spec.m_right(), spec.m_left as u32);
    Ok(FruitMap {
        row_length: spec.row_length,
        left,
        right,
    })
}

/// Small random instance for oracle checks: 1 to 6 fruits, 1 to 8 stops,
/// costs in quarter seconds up to 6 s, about a quarter of pairs unreachable.
pub fn tiny_instance(seed: u64) -> SchedulingInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_fruits = rng.random_range(1..=6);
    let n_left = rng.random_range(0..=n_fruits);
    let n_stops = rng.random_range(1..=8);
    let tau = [0.0, 0.5, 1.0, 2.5, 5.0][rng.random_range(0..5)];
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut r: Vec<f64> = (0..n_stops)
            .map(|_| {
                if rng.random_bool(0.25) {
                    f64::INFINITY
                } else {
                    rng.random_range(1..=24) as f64 * 0.25
                }
            })
            .collect();
        if r.iter().all(|c| c.is_infinite()) {
            let p = rng.random_range(0..n_stops);
            r[p] = rng.random_range(1..=24) as f64 * 0.25;
        }
        r
    };
    let left: Vec<Vec<f64>> = (0..n_left).map(|_| row(&mut rng)).collect();
    let right: Vec<Vec<f64>> = (n_left..n_fruits).map(|_| row(&mut rng)).collect();
    let stops = (0..n_stops).map(|p| p as f64 * 0.01).collect();
    SchedulingInstance::from_matrices(stops, &left, &right, tau, 20.0).expect("every row has a finite entry")
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn cell_seed(alpha_index: usize, replicate: usize) -> u64 {
    splitmix64(((alpha_index as u64) << 32) | replicate as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Fov,
    Serial,
    Milp,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Fov => "fov",
            Strategy::Serial => "serial",
            Strategy::Milp => "milp",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fov" => Ok(Strategy::Fov),
            "serial" => Ok(Strategy::Serial),
            "milp" => Ok(Strategy::Milp),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub gen: GenSpec,
    pub instance: InstanceParams,
    pub fov: FovParams,
    pub solver: SolverConfig,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            gen: GenSpec::default(),
            instance: InstanceParams::default(),
            fov: FovParams::default(),
            solver: SolverConfig {
                time_limit: 60.0,
                gap_tolerance: 0.01,
                node_limit: Some(2000),
                seed: 0,
            },
        }
    }
}

/// One strategy on one generated row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub strategy: Strategy,
    pub alpha: f64,
    pub replicate: usize,
    pub seed: u64,
    pub m_left: usize,
    pub m_right: usize,
    pub num_stops: usize,
    /// Fruits per second of total time.
    pub throughput: f64,
    pub total_time: f64,
    pub solver_runtime: f64,
    /// Solver status, `error` if the cell failed.
    pub status: String,
    pub gap: f64,
    pub fov_width: f64,
    pub fov_stop_empty: bool,
    pub tau: f64,
    pub speed: f64,
    pub gap_tolerance: f64,
    pub error: String,
}

fn worse(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    let rank = |s| match s {
        SolveStatus::Optimal => 0,
        SolveStatus::GapReached => 1,
        SolveStatus::NodeLimit => 2,
        SolveStatus::TimeLimit => 3,
        SolveStatus::Infeasible => 4,
    };
    if rank(a) >= rank(b) {
        a
    } else {
        b
    }
}

struct Outcome {
    num_stops: usize,
    total_time: f64,
    runtime: f64,
    status: String,
    gap: f64,
}

/// Runs the requested strategies on one row. The exact solver always gets
/// the FOV and Serial plans as starting points when they exist.
fn run_cell(
    fruits: &FruitMap,
    inst: &SchedulingInstance,
    strategies: &[Strategy],
    params: &BenchParams,
) -> BTreeMap<Strategy, Result<Outcome, String>> {
    let fov = fov_plan(fruits, inst, &params.fov).map_err(|e| e.to_string());
    let serial = serial_plan(inst, &params.solver).map_err(|e| e.to_string());
    let mut out = BTreeMap::new();
    for &s in strategies {
        let r = match s {
            Strategy::Fov => fov.as_ref().map(|p| Outcome {
                num_stops: p.num_stops(),
                total_time: p.objective,
                runtime: 0.0,
                status: "heuristic".into(),
                gap: 0.0,
            })
            .map_err(Clone::clone),
            Strategy::Serial => serial.as_ref().map(|o| Outcome {
                num_stops: o.num_stops(),
                total_time: o.total_time,
                runtime: o.solver_time(),
                status: worse(o.left.status, o.right.status).name().into(),
                gap: o.left.gap.max(o.right.gap),
            })
            .map_err(Clone::clone),
            Strategy::Milp => {
                let mut warm = Vec::new();
                if let Ok(p) = &fov {
                    warm.push(p.clone());
                }
                if let Ok(o) = &serial {
                    if let Ok(p) = o.union_plan(inst) {
                        warm.push(p);
                    }
                }
                let t = Instant::now();
                let r = solve_with_warm_starts(inst, &params.solver, &warm);
                let runtime = t.elapsed().as_secs_f64();
                r.map(|rep| Outcome {
                    num_stops: rep.plan.num_stops(),
                    total_time: rep.plan.objective,
                    runtime,
                    status: rep.status.name().into(),
                    gap: rep.gap,
                })
                .map_err(|e| e.to_string())
            }
        };
        out.insert(s, r);
    }
    out
}

/// Full factorial over `alphas × replicates × strategies`. Failed cells are
/// kept with status `error`. Records come back sorted by (strategy, α
/// index, replicate).
pub fn run_benchmark(
    alphas: &[f64],
    replicates: usize,
    strategies: &[Strategy],
    params: &BenchParams,
    table_left: &CostTable,
    table_right: &CostTable,
    mode: Parallelism,
) -> Vec<BenchRecord> {
    let cells: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|a| (0..replicates).map(move |r| (a, r)))
        .collect();
    let per_cell = map_indexed(mode, cells.len(), |k| {
        let (ai, rep) = cells[k];
        let gen = GenSpec {
            alpha: alphas[ai],
            seed: cell_seed(ai, rep),
            ..params.gen
        };
        let fruits = generate_fruits(&gen);
        let base = |s: Strategy| BenchRecord {
            strategy: s,
            alpha: alphas[ai],
            replicate: rep,
            seed: gen.seed,
            m_left: gen.m_left,
            m_right: gen.m_right(),
            num_stops: 0,
            throughput: 0.0,
            total_time: 0.0,
            solver_runtime: 0.0,
            status: "error".into(),
            gap: 0.0,
            fov_width: params.fov.fov_width,
            fov_stop_empty: params.fov.stop_empty,
            tau: params.instance.tau,
            speed: params.instance.speed,
            gap_tolerance: params.solver.gap_tolerance,
            error: String::new(),
        };
        let built = fruits.map_err(|e| e.to_string()).and_then(|f| {
            build_instance(&f, table_left, table_right, &params.instance, Parallelism::Sequential)
                .map(|i| (f, i))
                .map_err(|e| e.to_string())
        });
        let (fruits, inst) = match built {
            Ok(x) => x,
            Err(e) => {
                return strategies
                    .iter()
                    .map(|&s| BenchRecord { error: e.clone(), ..base(s) })
                    .collect::<Vec<_>>()
            }
        };
        let n = fruits.len() as f64;
        run_cell(&fruits, &inst, strategies, params)
            .into_iter()
            .map(|(s, r)| match r {
                Ok(o) => BenchRecord {
                    num_stops: o.num_stops,
                    throughput: n / o.total_time,
                    total_time: o.total_time,
                    solver_runtime: o.runtime,
                    status: o.status,
                    gap: o.gap,
                    ..base(s)
                },
                Err(e) => BenchRecord { error: e, ..base(s) },
            })
            .collect()
    });
    let mut records: Vec<(usize, BenchRecord)> = per_cell
        .into_iter()
        .zip(&cells)
        .flat_map(|(recs, &(ai, _))| recs.into_iter().map(move |r| (ai, r)))
        .collect();
    records.sort_by(|a, b| (a.1.strategy, a.0, a.1.replicate).cmp(&(b.1.strategy, b.0, b.1.replicate)));
    records.into_iter().map(|(_, r)| r).collect()
}

pub fn write_records(records: &[BenchRecord], dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(dir))?;
    let path = dir.join("records.json");
    fs::write(&path, serde_json::to_string_pretty(records)?).map_err(io_err(&path))
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Throughput,
    NumStops,
    TotalTime,
    SolverRuntime,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Throughput, Metric::NumStops, Metric::TotalTime, Metric::SolverRuntime];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Throughput => "throughput",
            Metric::NumStops => "num_stops",
            Metric::TotalTime => "total_time",
            Metric::SolverRuntime => "solver_runtime",
        }
    }

    pub fn of(self, r: &BenchRecord) -> f64 {
        match self {
            Metric::Throughput => r.throughput,
            Metric::NumStops => r.num_stops as f64,
            Metric::TotalTime => r.total_time,
            Metric::SolverRuntime => r.solver_runtime,
        }
    }
}

/// Box statistics of `metric` per (strategy, α), skipping failed cells.
/// α values are keyed by their bit pattern to keep them exact.
pub fn box_stats(records: &[BenchRecord], metric: Metric) -> BTreeMap<(Strategy, u64), BoxStats> {
    let mut groups: BTreeMap<(Strategy, u64), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_empty()) {
        groups
            .entry((r.strategy, r.alpha.to_bits()))
            .or_default()
            .push(metric.of(r));
    }
    groups
        .into_iter()
        .filter_map(|(k, v)| BoxStats::from_values(&v).map(|b| (k, b)))
        .collect()
}

/// Writes `boxstats_{metric}.csv` for every metric and a gnuplot script
/// `plots.gp` drawing one box chart per metric.
pub fn emit_plots(records: &[BenchRecord], dir: &Path) -> Result<(), BenchError> {
    if records.is_empty() {
        return Err(BenchError::Empty);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut alphas: Vec<f64> = records.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let strategies: Vec<Strategy> = {
        let mut s: Vec<Strategy> = records.iter().map(|r| r.strategy).collect();
        s.sort();
        s.dedup();
        s
    };

    for metric in Metric::ALL {
        let stats = box_stats(records, metric);
        let path = dir.join(format!("boxstats_{}.csv", metric.name()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["strategy", "alpha", "alpha_index", "x", "n", "min", "q1", "median", "q3", "max"])?;
        for (si, s) in strategies.iter().enumerate() {
            for (ai, a) in alphas.iter().enumerate() {
                let Some(b) = stats.get(&(*s, a.to_bits())) else { continue };
                // boxes of one α sit side by side around its slot
                let x = ai as f64 + (si as f64 - (strategies.len() as f64 - 1.0) / 2.0) * 0.25;
                w.write_record([
                    s.name().to_string(),
                    a.to_string(),
                    ai.to_string(),
                    x.to_string(),
                    b.n.to_string(),
                    b.min.to_string(),
                    b.q1.to_string(),
                    b.median.to_string(),
                    b.q3.to_string(),
                    b.max.to_string(),
                ])?;
            }
        }
        w.flush().map_err(io_err(&path))?;
    }

    let path = dir.join("plots.gp");
    let mut gp = Vec::new();
    let tics: Vec<String> = alphas.iter().enumerate().map(|(i, a)| format!("\"{a}\" {i}")).collect();
    writeln!(gp, "set datafile separator ','").ok();
    writeln!(gp, "set terminal pngcairo size 900,600").ok();
    writeln!(gp, "set boxwidth 0.2").ok();
    writeln!(gp, "set style fill solid 0.4").ok();
    writeln!(gp, "set xlabel 'alpha'").ok();
    writeln!(gp, "set xtics ({})", tics.join(", ")).ok();
    writeln!(gp, "set xrange [-0.6:{}]", alphas.len() as f64 - 0.4).ok();
    for metric in Metric::ALL {
        let m = metric.name();
        writeln!(gp, "\nset output '{m}.png'\nset ylabel '{m}'").ok();
        let plots: Vec<String> = strategies
            .iter()
            .map(|s| {
                format!(
                    "'boxstats_{m}.csv' using ((strcol(1) eq '{0}') ? $4 : NaN):7:6:10:9 \
                     every ::1 with candlesticks whiskerbars title '{0}', \
                     '' using ((strcol(1) eq '{0}') ? $4 : NaN):8:8:8:8 every ::1 with candlesticks lt -1 notitle",
                    s.name()
                )
            })
            .collect();
        writeln!(gp, "plot {}", plots.join(", \\\n     ")).ok();
    }
    fs::write(&path, gp).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_rounding() {
        let f = generate_fruits(&GenSpec::default()).unwrap();
        assert_eq!((f.left.len(), f.right.len()), (50, 50));
        let q = GenSpec { alpha: 0.25, ..GenSpec::default() };
        assert_eq!(q.m_right(), 13);
        assert_eq!(GenSpec { alpha: 0.4, ..q }.m_right(), 20);
        assert_eq!(GenSpec { alpha: 4.0, ..q }.m_right(), 200);
    }

    #[test]
    fn generation_is_deterministic_and_in_bounds() {
        let spec = GenSpec { seed: 17, alpha: 2.5, ..GenSpec::default() };
        let a = generate_fruits(&spec).unwrap();
        assert_eq!(a, generate_fruits(&spec).unwrap());
        a.validate().unwrap();
        for f in &a.right {
            assert!(f.x >= 0.35 && f.x <= 0.5 && f.z >= 0.4 && f.z <= 0.8);
        }
        for f in &a.left {
            assert!(f.x <= -0.35 && f.x >= -0.5);
        }
        assert_ne!(a, generate_fruits(&GenSpec { seed: 18, ..spec }).unwrap());
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&[5.0], 0.75), 5.0);
        let b = BoxStats::from_values(&[3.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (3.0, 3.0, 3.0, 3.0, 3.0));
    }

    #[test]
    fn tiny_instances_are_small_and_feasible() {
        for seed in 0..200 {
            let i = tiny_instance(seed);
            assert!(i.n_fruits() >= 1 && i.n_fruits() <= 6);
            assert!(i.n_stops() >= 1 && i.n_stops() <= 8);
            assert!(i.infeasible_fruits().is_empty());
        }
    }

    #[test]
    fn cell_seeds_distinct() {
        let mut seen = std::collections::BTreeSet::new();
        for a in 0..5 {
            for r in 0..10 {
                assert!(seen.insert(cell_seed(a, r)));
            }
        }
    }
}
