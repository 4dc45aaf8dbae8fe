use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use harvestplan::costmap::{build_cost_table, build_layout_tables, yaw_samples_deg, GridSpec};
use harvestplan::installation::{optimize_installation, InstallSearchSpace, StepRange};
use harvestplan::kinematics::{JointConfig, JointLimits, ScaraGeometry};
use harvestplan::layout::{Side, VehicleLayout};
use harvestplan::simbench::{run_benchmark, BenchParams, GenSpec, Strategy};
use harvestplan::solver::SolverConfig;
use harvestplan::Parallelism;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn table_build(c: &mut Criterion) {
    let g = ScaraGeometry::harvester();
    let l = JointLimits::harvester();
    let layout = VehicleLayout::default();
    let mut spec = GridSpec::for_fpa(&layout.fpa, Side::Right, 0.3);
    spec.psi_values = yaw_samples_deg(-45.0, 45.0, 15.0);
    let mut group = c.benchmark_group("cost_table");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                build_cost_table(&g, &l, &layout.mount(Side::Right), &JointConfig::collection_pose(), spec.clone(), mode)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn installation_scan(c: &mut Criterion) {
    let g = ScaraGeometry::harvester();
    let l = JointLimits::harvester();
    let space = InstallSearchSpace {
        offset: StepRange::new(0.0, 0.5, 0.05),
        theta: StepRange::new(-90f64.to_radians(), 90f64.to_radians(), 10f64.to_radians()),
        resolution: 0.02,
        ..InstallSearchSpace::default()
    };
    let mut group = c.benchmark_group("installation");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| optimize_installation(&g, &l, &JointConfig::collection_pose(), &space, mode).unwrap())
        });
    }
    group.finish();
}

fn benchmark_cells(c: &mut Criterion) {
    let g = ScaraGeometry::harvester();
    let l = JointLimits::harvester();
    let (tl, tr) =
        build_layout_tables(&g, &l, &VehicleLayout::default(), &JointConfig::collection_pose(), Parallelism::Parallel)
            .unwrap();
    let params = BenchParams {
        gen: GenSpec { m_left: 10, ..GenSpec::default() },
        solver: SolverConfig { time_limit: 5.0, gap_tolerance: 0.01, node_limit: Some(200), seed: 0 },
        ..BenchParams::default()
    };
    let strategies = [Strategy::Fov, Strategy::Serial, Strategy::Milp];
    let mut group = c.benchmark_group("bench_cells");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_benchmark(&[0.5, 1.0, 2.0], 2, &strategies, &params, &tl, &tr, mode))
        });
    }
    group.finish();
}

criterion_group!(benches, table_build, installation_scan, benchmark_cells);
criterion_main!(benches);
