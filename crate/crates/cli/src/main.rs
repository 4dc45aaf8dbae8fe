use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use harvestplan::baselines::{fov_plan, serial_plan, FovParams, DEFAULT_FOV_WIDTH};
use harvestplan::costmap::{
    build_cost_table, classify_coverage, read_table, write_table, CoverageClass, CrossSection, GridSpec,
    DEFAULT_ALONG_HALF,
};
use harvestplan::installation::{optimize_installation, InstallResult, InstallSearchSpace};
use harvestplan::kinematics::{JointConfig, JointLimits, ScaraConfig, ScaraGeometry};
use harvestplan::layout::{FpaBox, Side, VehicleLayout, DEFAULT_ALONG};
use harvestplan::model::{build_instance, export_mps, FruitMap, HarvestPlan, InstanceParams, SchedulingInstance};
use harvestplan::simbench::{emit_plots, run_benchmark, write_records, BenchParams, GenSpec, Strategy};
use harvestplan::solver::{solve_with_warm_starts, SolveReport, SolverConfig};
use harvestplan::Parallelism;

#[derive(Parser)]
#[command(name = "harvestplan", version, about = "Stop placement and dual-arm fruit assignment")]
struct Cli {
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick-time lookup tables.
    Costmap {
        #[command(subcommand)]
        action: CostmapCmd,
    },
    /// Arm base placement.
    Install {
        #[command(subcommand)]
        action: InstallCmd,
    },
    /// Plan stops and assignments for one row.
    Plan(PlanArgs),
    /// Run the strategy comparison over generated rows.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum CostmapCmd {
    /// Build one arm's table over its side of the canopy.
    Build {
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SideArg::Right)]
        side: SideArg,
        /// `install.json` from `install optimize`; defaults to the built-in layout.
        #[arg(long)]
        install: Option<PathBuf>,
    },
    /// Coverage-class counts over a horizontal cross-section of the arm workspace.
    Stats {
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Also summarize a built table.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Section height in the arm-base frame.
        #[arg(long, default_value_t = 0.2)]
        z: f64,
        /// Print the section as a character map.
        #[arg(long)]
        slice: bool,
    },
}

#[derive(Subcommand)]
enum InstallCmd {
    /// Exhaustive scan over base offset and heading.
    Optimize {
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long)]
        fpa: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        offset_step: f64,
        #[arg(long, default_value_t = 5.0)]
        theta_step_deg: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Fov,
    Serial,
    Milp,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    table_left: PathBuf,
    #[arg(long)]
    table_right: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    speed: f64,
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    export_mps: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Milp)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = DEFAULT_FOV_WIDTH)]
    fov_width: f64,
    #[arg(long)]
    fov_stop_empty: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.4,1.0,2.5,4.0")]
    alphas: Vec<f64>,
    /// Replicates per α.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, value_delimiter = ',', default_value = "fov,serial,milp")]
    strategies: Vec<Strategy>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long)]
    install: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    m_left: usize,
    #[arg(long, default_value_t = 5.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    speed: f64,
    #[arg(long, default_value_t = 0.01)]
    gap: f64,
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 2000)]
    node_limit: u64,
    #[arg(long, default_value_t = DEFAULT_FOV_WIDTH)]
    fov_width: f64,
    #[arg(long)]
    fov_stop_empty: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mode = if cli.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    };
    match cli.command {
        Command::Costmap { action } => match action {
            CostmapCmd::Build { geometry, out, side, install } => costmap_build(geometry, &out, side.into(), install, mode),
            CostmapCmd::Stats { geometry, table, z, slice } => costmap_stats(geometry, table, z, slice),
        },
        Command::Install { action } => match action {
            InstallCmd::Optimize { geometry, fpa, out, offset_step, theta_step_deg } => {
                install_optimize(geometry, fpa, &out, offset_step, theta_step_deg, mode)
            }
        },
        Command::Plan(args) => plan(args, mode),
        Command::Bench(args) => bench(args, mode),
    }
}

fn load_arm(path: Option<PathBuf>) -> Result<(ScaraGeometry, JointLimits)> {
    let config = match path {
        Some(p) => ScaraConfig::load(&p).with_context(|| format!("reading {}", p.display()))?,
        None => ScaraConfig::harvester(),
    };
    Ok(config.resolve()?)
}

#[derive(Serialize, serde::Deserialize)]
struct InstallFile {
    result: InstallResult,
    space: InstallSearchSpace,
}

fn load_layout(path: Option<PathBuf>) -> Result<VehicleLayout> {
    let Some(p) = path else { return Ok(VehicleLayout::default()) };
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    let f: InstallFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
    Ok(VehicleLayout {
        fpa: f.space.fpa,
        offset: f.result.offset,
        theta_left: f.result.theta_left,
        theta_right: f.result.theta_right,
        along: DEFAULT_ALONG,
        base_height: f.space.base_height,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn costmap_build(
    geometry: Option<PathBuf>,
    out: &Path,
    side: Side,
    install: Option<PathBuf>,
    mode: Parallelism,
) -> Result<()> {
    let (geom, limits) = load_arm(geometry)?;
    let layout = load_layout(install)?;
    let spec = GridSpec::for_fpa(&layout.fpa, side, DEFAULT_ALONG_HALF);
    let table = build_cost_table(&geom, &limits, &layout.mount(side), &JointConfig::collection_pose(), spec, mode)?;
    write_table(&table, out)?;
    println!(
        "{} table: {} cells, {} reachable -> {}",
        side.name(),
        table.values().len(),
        table.reachable_cells(),
        out.display()
    );
    Ok(())
}

fn class_char(c: CoverageClass) -> char {
    match c {
        CoverageClass::Unreachable => '.',
        CoverageClass::PositionOnly => 'p',
        CoverageClass::SomeYawInRange => 's',
        CoverageClass::ZeroYaw => 'z',
        CoverageClass::AllYawInRange => '#',
    }
}

fn costmap_stats(geometry: Option<PathBuf>, table: Option<PathBuf>, z: f64, slice: bool) -> Result<()> {
    let (geom, limits) = load_arm(geometry)?;
    let section = CrossSection { z, ..CrossSection::default() };
    let map = classify_coverage(&geom, &limits, &section);
    let c = map.counts;
    println!("cross-section z={z} ({} x {} cells)", map.nx, map.ny);
    println!("unreachable        {}", c.unreachable);
    println!("position_only      {}", c.position_only);
    println!("some_yaw_in_range  {}", c.some_yaw_in_range);
    println!("zero_yaw           {}", c.zero_yaw);
    println!("all_yaw_in_range   {}", c.all_yaw_in_range);
    if slice {
        println!("legend: . unreachable, p position only, s some yaw, z zero yaw, # all yaws; rows +y to -y");
        for iy in (0..map.ny).rev() {
            let line: String = (0..map.nx).map(|ix| class_char(map.class_at(ix, iy))).collect();
            println!("{line}");
        }
    }
    if let Some(p) = table {
        let t = read_table(&p).with_context(|| format!("reading {}", p.display()))?;
        let finite: Vec<f64> = t.values().iter().copied().filter(|v| v.is_finite()).collect();
        println!("table {}: shape {:?}, {} reachable of {}", p.display(), t.spec.shape(), finite.len(), t.values().len());
        if !finite.is_empty() {
            let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let max = finite.iter().copied().fold(0.0, f64::max);
            let mean = finite.iter().sum::<f64>() / finite.len() as f64;
            println!("pick time: min {min:.4} s, mean {mean:.4} s, max {max:.4} s");
        }
    }
    Ok(())
}

fn install_optimize(
    geometry: Option<PathBuf>,
    fpa: Option<PathBuf>,
    out: &Path,
    offset_step: f64,
    theta_step_deg: f64,
    mode: Parallelism,
) -> Result<()> {
    let (geom, limits) = load_arm(geometry)?;
    let fpa = match fpa {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<FpaBox>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FpaBox::default(),
    };
    let mut space = InstallSearchSpace { fpa, ..InstallSearchSpace::default() };
    space.offset.step = offset_step;
    space.theta.step = theta_step_deg.to_radians();
    let result = optimize_installation(&geom, &limits, &JointConfig::collection_pose(), &space, mode)?;
    println!(
        "offset {:.3} m, theta left {:.1} deg, right {:.1} deg, reachable {}/{}",
        result.offset,
        result.theta_left.to_degrees(),
        result.theta_right.to_degrees(),
        result.reachable_count,
        result.total_count
    );
    write_json(out, &InstallFile { result, space })
}

#[derive(Serialize)]
struct StopOut {
    index: usize,
    position: f64,
    c_left: f64,
    c_right: f64,
    c: f64,
}

#[derive(Serialize)]
struct AssignOut {
    fruit: u32,
    side: Side,
    stop: usize,
    position: f64,
}

#[derive(Serialize)]
struct PlanOut {
    strategy: &'static str,
    total_time: f64,
    status: String,
    gap: Option<f64>,
    best_bound: Option<f64>,
    solver_runtime: f64,
    stops: Vec<StopOut>,
    assignment: Vec<AssignOut>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    passes: Vec<PlanOut>,
}

fn plan_out(strategy: &'static str, inst: &SchedulingInstance, plan: &HarvestPlan) -> PlanOut {
    let pos = inst.stops();
    PlanOut {
        strategy,
        total_time: plan.objective,
        status: "heuristic".into(),
        gap: None,
        best_bound: None,
        solver_runtime: 0.0,
        stops: plan
            .loads
            .iter()
            .map(|l| StopOut {
                index: l.stop,
                position: pos[l.stop],
                c_left: l.left,
                c_right: l.right,
                c: l.duration,
            })
            .collect(),
        assignment: plan
            .assignment
            .iter()
            .enumerate()
            .map(|(f, &p)| AssignOut {
                fruit: inst.fruit_id(f),
                side: inst.side(f),
                stop: p,
                position: pos[p],
            })
            .collect(),
        passes: Vec::new(),
    }
}

fn plan(args: PlanArgs, mode: Parallelism) -> Result<()> {
    let fruits = FruitMap::load(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let tl = read_table(&args.table_left).with_context(|| format!("reading {}", args.table_left.display()))?;
    let tr = read_table(&args.table_right).with_context(|| format!("reading {}", args.table_right.display()))?;
    let params = InstanceParams { tau: args.tau, speed: args.speed, ..InstanceParams::default() };
    let inst = build_instance(&fruits, &tl, &tr, &params, mode)?;
    let bad = inst.infeasible_fruits();
    if !bad.is_empty() {
        bail!("fruits reachable from no stop: {bad:?}");
    }
    if let Some(p) = &args.export_mps {
        fs::write(p, export_mps(&inst)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let config = SolverConfig {
        time_limit: args.time_limit,
        gap_tolerance: args.gap,
        node_limit: None,
        seed: args.seed,
    };
    let fov = FovParams { fov_width: args.fov_width, stop_empty: args.fov_stop_empty };
    let out = match args.strategy {
        StrategyArg::Fov => plan_out("fov", &inst, &fov_plan(&fruits, &inst, &fov)?),
        StrategyArg::Milp => {
            let report = solve_with_warm_starts(&inst, &config, &[])?;
            PlanOut {
                status: report.status.name().into(),
                gap: Some(report.gap),
                best_bound: Some(report.best_bound),
                solver_runtime: report.wall_time,
                ..plan_out("milp", &inst, &report.plan)
            }
        }
        StrategyArg::Serial => {
            let s = serial_plan(&inst, &config)?;
            let pass = |side: Side, r: &SolveReport| {
                let sub = inst.side_only(side);
                PlanOut {
                    status: r.status.name().into(),
                    gap: Some(r.gap),
                    best_bound: Some(r.best_bound),
                    solver_runtime: r.wall_time,
                    ..plan_out(side.name(), &sub, &r.plan)
                }
            };
            let passes = vec![pass(Side::Left, &s.left), pass(Side::Right, &s.right)];
                        PlanOut {
                strategy: "serial",
                total_time: s.total_time,
                status: if s.left.status == s.right.status { s.left.status.name() } else { "mixed" }.into(),
                gap: Some(s.left.gap.max(s.right.gap)),
                best_bound: None,
                solver_runtime: s.solver_time(),
                stops: Vec::new(),
                assignment: Vec::new(),
                passes,
            }
        }
    };
    println!(
        "{}: T = {:.3} s, {} stops, status {}",
        out.strategy,
        out.total_time,
        if out.passes.is_empty() { out.stops.len() } else { out.passes.iter().map(|p| p.stops.len()).sum() },
        out.status
    );
    write_json(&args.out, &out)
}

fn bench(args: BenchArgs, mode: Parallelism) -> Result<()> {
    if args.alphas.is_empty() || args.strategies.is_empty() || args.seeds == 0 {
        bail!("need at least one alpha, one strategy and one seed");
    }
    let (geom, limits) = load_arm(args.geometry)?;
    let layout = load_layout(args.install)?;
    let start = JointConfig::collection_pose();
    let side_table = |side| {
        let spec = GridSpec::for_fpa(&layout.fpa, side, DEFAULT_ALONG_HALF);
        build_cost_table(&geom, &limits, &layout.mount(side), &start, spec, mode)
    };
    let (tl, tr) = (side_table(Side::Left)?, side_table(Side::Right)?);
    let defaults = BenchParams::default();
    let params = BenchParams {
        gen: GenSpec {
            m_left: args.m_left,
            row_length: layout.fpa.row_length,
            row_width: 2.0 * layout.fpa.face,
            canopy_depth: layout.fpa.depth,
            canopy_height: layout.fpa.height,
            canopy_base: layout.fpa.z_min,
            ..defaults.gen
        },
        instance: InstanceParams { tau: args.tau, speed: args.speed, ..defaults.instance },
        fov: FovParams { fov_width: args.fov_width, stop_empty: args.fov_stop_empty },
        solver: SolverConfig {
            time_limit: args.time_limit,
            gap_tolerance: args.gap,
            node_limit: Some(args.node_limit),
            ..defaults.solver
        },
    };
    let records = run_benchmark(&args.alphas, args.seeds, &args.strategies, &params, &tl, &tr, mode);
    let failed = records.iter().filter(|r| r.status == "error").count();
    write_records(&records, &args.out)?;
    emit_plots(&records, &args.out)?;
    println!("{} records ({} failed) -> {}", records.len(), failed, args.out.display());
    Ok(())
}
